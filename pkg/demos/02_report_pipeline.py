"""From a user request to a paragraph: planning, aggregation, realization.

Run with ``python3 demos/02_report_pipeline.py``.
"""

# %%
# A request names the report type, station, pollutant and periods.
from shallowgen.airquality import load_datasource, parse_request
from shallowgen.pack import bundled_data_dir, bundled_pack_dir, load_pack
from shallowgen.report import generate_report

data = bundled_data_dir()
request = parse_request((data / "sample.request").read_text(encoding="utf-8"))
print(request)

# %%
# The datasource answers the request from measurements and metadata.  Each
# binding is either an IR value or a NoData marker.
ds = load_datasource(data)
for key, value in ds.bindings(request).items():
    print(f"{key:20} {value}")

# %%
# The plan keeps the pre-aggregation statement as its basis.  Comments list
# the aggregation edits applied to it.
pack = load_pack(bundled_pack_dir("en"))
plan, text = generate_report(pack, ds, request)
print(plan.format())

# %%
# The realized paragraph: the second statement drops the site already
# mentioned, and the third gains "either" from the correspondence marker.
print(text)

# %%
# A period without measurements falls back to a NO-DATA statement.
empty = parse_request((data / "empty.request").read_text(encoding="utf-8"))
print(generate_report(pack, ds, empty)[1])

# %%
# The French pack realizes the same plan; the request language only tags
# the IR, while the grammar language comes from the pack.
print(generate_report(load_pack(bundled_pack_dir("fr")), ds, request)[1])
