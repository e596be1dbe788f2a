"""
Training a head over an imbalanced stream
=========================================

Synthesize a 6 x 4 universal stream with a geometric class imbalance,
train the plain cross-entropy baseline and the recalibrated method, and
compare accuracy matrices.
"""

import numpy as np

from uillab import (GridSpec, Profile, RecalConfig, Regime, SyntheticConfig, TrainConfig, accuracy_matrix,
                    avg_acc, forgetting, generate_scenario, synthesize, train_stream, weighted_acc)

spec = generate_scenario(GridSpec(6, 4), Regime("uil"), 8, seed=1)
tasks = synthesize(spec, SyntheticConfig(profile=Profile("geometric", 160, 0.5), seed=1))
print("train samples per task:", [len(t.train) for t in tasks])

configs = {
    "baseline": TrainConfig(method="baseline_ce", seed=1),
    "recalibrated": TrainConfig(recal=RecalConfig(w_floor=0.5), seed=1),
}
np.set_printoptions(precision=2, suppress=True)
for name, cfg in configs.items():
    record = train_stream(tasks, cfg)
    R = accuracy_matrix(record, tasks)
    k = R.num_tasks - 1
    print(f"\n{name}")
    print(R.R)
    print(f"avg {avg_acc(R, k):.4f}  weighted {weighted_acc(R, k):.4f}  forgetting {forgetting(R, k):.4f}")
