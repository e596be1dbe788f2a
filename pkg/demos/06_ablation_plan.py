"""
A small multi-seed ablation plan
================================

The same plan format the CLI reads, run in process.  Every method row is
trained on the same seeded streams; the summary holds mean and spread over
seeds.  Output goes to a temporary directory.
"""

import tempfile

from uillab import parse_plan, run_plan

PLAN = """
[plan]
seeds=0,1
preset=ablation

[scenario]
classes=6
domains=4
tasks=8

[data]
profile=geometric(160,0.5)

[train]
epochs=5
w_floor=0.5
"""

with tempfile.TemporaryDirectory() as root:
    result = run_plan(parse_plan(PLAN), root, jobs=2)
    print(f"{'method':<12} runs  avg acc        forgetting")
    for row in result.rows:
        print(f"{row['method']:<12} {row['n_runs']:>4}  {row['avg_acc_mean']:.3f}±{row['avg_acc_std']:.3f}"
              f"  {row['forgetting_mean']:.3f}±{row['forgetting_std']:.3f}")
