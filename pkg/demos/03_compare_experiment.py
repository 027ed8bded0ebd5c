# %% [markdown]
# # A small comparison experiment
#
# The `compare` command runs SISSO and RF-SISSO on the same random splits for
# each training size and writes CSV/JSON reports. This script drives it from
# Python with a reduced budget so it finishes in well under a minute. The
# command-line equivalent is
#
#     rfsisso synth --formula "y = (f1*f2)/f3^2" --n 80 --features 10 --low 1 --high 2 --out synth
#     rfsisso compare --data synth/data.csv --schema synth/schema.yaml \
#         --sizes 60,30 --repeats 3 --rf-trees 50 --rf-repeats 10 --rung 2 --select topk:5 --out results

# %%
import json
from pathlib import Path

from rfsisso import generate_synthetic
from rfsisso.pipeline import cmd_compare, emit_report, load_config

ds = generate_synthetic("y = (f1*f2)/f3^2", n=80, seed=3, n_features=10, low=1.0, high=2.0, noise=0.01)
cfg = load_config().override(
    sizes="60,30",
    repeats=3,
    seed=0,
    selection="topk:5",
    **{"rf.n_trees": 50, "rf.repeats": 10},
)

# %%
report = cmd_compare(cfg, ds)
out = Path("results_demo")
emit_report(report, out)

for r in report.records:
    print(f"size {r.size:3d} rep {r.repeat}  {r.method:8s}  test rmse {r.test_metric:.4f}  {r.models[-1].labels}")

# %% [markdown]
# `summary.json` holds the accuracy aggregates. Timings are kept apart in
# `timing_summary.json` because they change from run to run.

# %%
timing = json.loads((out / "timing_summary.json").read_text())
for e in timing["sizes"]:
    print(f"size {e['size']}: SIS+SO time ratio {e['time_ratio']:.1f}")
print("files:", sorted(p.name for p in out.iterdir()))
