"""Acceptance criteria 1-8.  Each test records its outcome in ``ACCEPTANCE``
before asserting, and prints one PASS/FAIL line."""

import io
import random
import statistics
import time
from datetime import date

import numpy as np

import test_properties as props
from conftest import ACCEPTANCE, AUDIT, CORPUS, FIXTURES
from oracles import oracle_derive, oracle_derive_all, oracle_exceedances, random_grammar, random_input
from shallowgen.airquality import MeasurementSeries, Period, ThresholdSpec, exceedances
from shallowgen.cli import enumerate_corpus, main
from shallowgen.engine import DerivationError, derive, derive_all
from shallowgen.pack import bundled_data_dir, bundled_pack_dir


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out, err)
    return code, out.getvalue()


def _timed(argv, runs):
    times, outs = [], set()
    for _ in range(runs):
        t = time.perf_counter()
        code, out = _cli(*argv)
        times.append((time.perf_counter() - t) * 1000)
        outs.add((code, out))
    return statistics.median(times), max(times), outs


def test_criterion_1_figure1_fr():
    argv = ("realize", "--pack", bundled_pack_dir("fr"), "--ir", FIXTURES / "figure1.ir")
    want = (FIXTURES / "figure1.fr.txt").read_text(encoding="utf-8")
    med, worst, outs = _timed(argv, 10)
    ok = outs == {(0, want)} and med < 100
    record(1, ok, f"byte-exact={outs == {(0, want)}} median={med:.1f}ms max={worst:.1f}ms (limit 100ms)")


def test_criterion_2_report_en():
    data = bundled_data_dir()
    code, out = _cli("report", "--pack", bundled_pack_dir("en"), "--data", data, "--request", data / "sample.request")
    want = (FIXTURES / "sample_report.en.txt").read_text(encoding="utf-8")
    sentences = out.strip().count(". ") + 1
    record(2, code == 0 and out == want, f"byte-exact={out == want} sentences={sentences}")


def test_criterion_3_memo_transparency():
    grammars, irs, discrepancies, succeeded = 0, 0, [], 0
    for seed in range(120):
        rng = random.Random(seed)
        g = random_grammar(rng)
        grammars += 1
        for _ in range(12):
            inp = random_input(rng)
            irs += 1
            want_one, failed_one = oracle_derive(g, "C0", inp, None)
            try:
                got_one = derive(g, "C0", inp).key()
            except DerivationError:
                got_one = None
            if failed_one != (got_one is None) or (not failed_one and got_one != want_one):
                discrepancies.append(("derive", seed, inp))
            want_all, failed_all = oracle_derive_all(g, "C0", inp, None)
            try:
                got_all = [r.key() for r in derive_all(g, "C0", inp)]
                raised = False
            except DerivationError:
                got_all, raised = None, True
            if failed_all != raised or (not raised and got_all != want_all):
                discrepancies.append(("derive_all", seed, inp))
            succeeded += got_one is not None
    ok = grammars >= 100 and irs >= 10 * grammars and not discrepancies
    record(3, ok, f"grammars={grammars} irs={irs} successful={succeeded} discrepancies={len(discrepancies)}")


def test_criterion_4_constraint_soundness():
    # a fresh batch over every pack and corpus file, on top of the whole run
    for lang in ("fr", "en", "de"):
        enumerate_corpus(props.PACKS[lang], CORPUS, lang.upper())
    ok = AUDIT.checked > 0 and not AUDIT.violations
    record(4, ok, f"derivations checked={AUDIT.checked} violations={len(AUDIT.violations)}")


def test_criterion_5_exceedance_oracle():
    th = ThresholdSpec("DE", "L", "T", "P", 600, "U", 3)
    period = Period.interval(date(1990, 1, 1), date(2030, 1, 1))
    rng = np.random.default_rng(5)
    t0 = np.datetime64("1997-01-01T00:00:00", "s")
    mismatches, series_n, max_len, skipped = 0, 0, 0, 0
    while series_n < 1000:
        n = int(np.exp(rng.uniform(0, np.log(10_000))))
        cadence = int(rng.choice([900, 1800, 3600]))
        hours = int(rng.integers(1, 5))
        steps = rng.choice([1] * 8 + [2, 5], size=n).astype(np.int64)
        times = t0 + (np.cumsum(steps) * cadence).astype("timedelta64[s]")
        values = rng.integers(5900, 6101, size=n) / 10
        s = MeasurementSeries("S", "P", times, values, "U")
        if hours * 3600 % s.cadence:
            skipped += 1
            continue
        series_n += 1
        max_len = max(max_len, n)
        spec = ThresholdSpec(th.country, th.law, th.threshold_type, th.pollutant, th.amount, th.unit, hours)
        res = exceedances(s, spec, period)
        secs = [int(x) for x in (times - t0).astype(np.int64)]
        mismatches += (res.status, res.times) != oracle_exceedances(secs, values.tolist(), 600, hours)
    hourly = t0 + (np.arange(16) * 3600).astype("timedelta64[s]")
    two = exceedances(MeasurementSeries("S", "P", hourly, np.array([650.0] * 3 + [100.0] * 10 + [650.0] * 3), "U"),
                      th, period)
    fig1 = props.DATASOURCE.exceedance("VOELKLINGEN-CITY", "SULFUR-DIOXIDE",
                                        props.DATASOURCE.metadata.threshold("DE", "SULFUR-DIOXIDE"),
                                        Period.season_of("winter", 1996))
    ok = mismatches == 0 and (two.status, two.times) == ("YES", 2) and (fig1.status, fig1.times) == ("NO", 0)
    record(5, ok, f"series={series_n} longest={max_len} mismatches={mismatches} hand-built={two.status},{two.times} "
                  f"figure1={fig1.status},{fig1.times} skipped-cadence={skipped}")


def test_criterion_6_enumeration():
    counts = {}
    for lang in ("fr", "en", "de"):
        code, out = _cli("enumerate", "--pack", bundled_pack_dir(lang), "--corpus", CORPUS)
        counts[lang] = int(out.splitlines()[-1].split("\t")[1]) if code == 0 else -1
    record(6, all(c >= 48 for c in counts.values()), f"distinct per pack={counts} (minimum 48)")


def test_criterion_7_report_latency():
    data = bundled_data_dir()
    argv = ("report", "--pack", bundled_pack_dir("en"), "--data", data, "--request", data / "sample.request")
    med, worst, outs = _timed(argv, 20)
    record(7, med < 250 and len(outs) == 1, f"median={med:.1f}ms max={worst:.1f}ms over 20 runs (limit 250ms)")


SUITES = {
    "ir round-trip": props.test_ir_round_trip,
    "path algebra": props.test_path_algebra,
    "postprocess idempotence": props.test_postprocess_idempotent,
    "aggregation safety": props.test_aggregation_safety,
    "OptRule neutrality": props.test_optrule_neutrality,
    "preference argmax-invariance": props.test_preference_argmax_invariance,
}


def test_criterion_8_property_suites():
    failures = []
    for name, fn in SUITES.items():
        if props.CASES[name] < 1000:
            # property module did not run in this session; run the suite here
            try:
                fn()
            except Exception as e:  # noqa: BLE001
                failures.append(f"{name}: {type(e).__name__}")
    counts = {name: props.CASES[name] for name in SUITES}
    ok = not failures and all(c >= 1000 for c in counts.values())
    record(8, ok, " ".join(f"{k}={v}" for k, v in counts.items()) + (f" failures={failures}" if failures else ""))
