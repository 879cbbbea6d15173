import shutil

import pytest

from shallowgen.pack import PackError, bundled_pack_dir, lint_pack, load_pack, read_manifest


@pytest.fixture
def pack_copy(tmp_path):
    """Writable copy of the bundled pack tree; returns the EN pack dir."""
    root = tmp_path / "packs"
    shutil.copytree(bundled_pack_dir("en").parent, root)
    return root / "en"


def test_manifest_fields():
    m = read_manifest(bundled_pack_dir("fr"))
    assert m.language == "FR" and m.name == "airquality-fr"
    assert [g.name for g in m.grammars] == ["common.tgl", "fr.tgl"]
    assert all(p.exists() for p in m.files())


@pytest.mark.parametrize("lang", ["fr", "en", "de"])
def test_bundled_packs_lint_clean(packs, lang):
    rep = lint_pack(packs[lang])
    assert not rep.findings, str(rep)
    assert packs[lang].language == lang.upper()


def test_missing_manifest_is_io(tmp_path):
    with pytest.raises(PackError) as e:
        load_pack(tmp_path)
    assert e.value.io


def test_missing_grammar_file_is_io(pack_copy):
    (pack_copy / "en.tgl").unlink()
    with pytest.raises(PackError) as e:
        load_pack(pack_copy)
    assert e.value.io


@pytest.mark.parametrize(
    "line, message",
    [
        ("colour = red", "unknown key"),
        ("language = FR", "duplicate key"),
        ("garbage", "expected key = value"),
    ],
)
def test_manifest_errors(pack_copy, line, message):
    path = pack_copy / "pack.manifest"
    path.write_text(path.read_text(encoding="utf-8") + line + "\n", encoding="utf-8")
    with pytest.raises(PackError, match=message) as e:
        read_manifest(pack_copy)
    assert not e.value.io


def test_manifest_missing_key(pack_copy):
    path = pack_copy / "pack.manifest"
    text = "\n".join(ln for ln in path.read_text(encoding="utf-8").splitlines() if not ln.startswith("schema"))
    path.write_text(text, encoding="utf-8")
    with pytest.raises(PackError, match="missing keys schema"):
        read_manifest(pack_copy)


def test_grammar_syntax_error_names_file(pack_copy):
    (pack_copy / "en.tgl").write_text("(defproduction", encoding="utf-8")
    with pytest.raises(PackError, match="en.tgl") as e:
        load_pack(pack_copy)
    assert not e.value.io


def test_duplicate_rule_across_files(pack_copy):
    common = (pack_copy.parent / "common" / "common.tgl").read_text(encoding="utf-8")
    en = pack_copy / "en.tgl"
    en.write_text(en.read_text(encoding="utf-8") + "\n" + common, encoding="utf-8")
    with pytest.raises(PackError):
        load_pack(pack_copy)


def test_lint_aggregation_undefined_path(pack_copy):
    agg = pack_copy.parent / "common" / "aggregation.sx"
    agg.write_text(
        agg.read_text(encoding="utf-8")
        + "\n(AGGREGATION bogus :WHEN ((present NOWHERE)) :EDITS ((delete NOWHERE.DEEP)))\n",
        encoding="utf-8",
    )
    rep = lint_pack(load_pack(pack_copy))
    assert any(f.path == "aggregation bogus" for f in rep.errors)


def test_lint_aggregation_deletes_required(pack_copy):
    agg = pack_copy.parent / "common" / "aggregation.sx"
    agg.write_text(
        agg.read_text(encoding="utf-8") + "\n(AGGREGATION drop-lang :WHEN ((present LANGUAGE)) :EDITS ((delete LANGUAGE)))\n",
        encoding="utf-8",
    )
    rep = lint_pack(load_pack(pack_copy))
    assert any("required slot LANGUAGE" in f.message for f in rep.errors)


def test_aggregation_may_not_touch_coop(pack_copy):
    agg = pack_copy.parent / "common" / "aggregation.sx"
    agg.write_text(
        agg.read_text(encoding="utf-8") + "\n(AGGREGATION drop-coop :WHEN ((present COOP)) :EDITS ((delete COOP)))\n",
        encoding="utf-8",
    )
    with pytest.raises(PackError, match="drop-coop edits COOP"):
        load_pack(pack_copy)


def test_lint_skeleton_unknown_binding_and_type(pack_copy):
    sk = pack_copy.parent / "common" / "skeletons.sx"
    text = sk.read_text(encoding="utf-8")
    text = text.replace("(OUTCOME EXCEEDANCE))", "(OUTCOME WEATHER))", 1)
    text = text.replace(":TYPE CONFIRMATION", ":TYPE APOLOGY", 1)
    sk.write_text(text, encoding="utf-8")
    msgs = [f.message for f in lint_pack(load_pack(pack_copy)).errors]
    assert any("weather" in m for m in msgs)
    assert any("APOLOGY" in m for m in msgs)
