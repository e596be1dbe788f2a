"""
Prediction entropy and per-class gradient size
==============================================

After training, bin test predictions by entropy to see that confident
predictions are the accurate ones, then relate each class's average
gradient size to its final accuracy.
"""

import numpy as np

from uillab import (GridSpec, Profile, Regime, SyntheticConfig, TrainConfig, class_gradient_profile,
                    class_histogram, entropy_profile, generate_scenario, per_class_accuracy, synthesize,
                    train_stream)

spec = generate_scenario(GridSpec(6, 4), Regime("uil"), 8, seed=2)
tasks = synthesize(spec, SyntheticConfig(profile=Profile("geometric", 160, 0.5), seed=2))
record = train_stream(tasks, TrainConfig(method="baseline_ce", seed=2))
state = record.checkpoints[-1]

X = np.concatenate([t.test.features for t in tasks])
y = np.concatenate([t.test.class_ids for t in tasks])

prof = entropy_profile(state, X, y, num_intervals=6)
print("entropy interval   share   accuracy")
for lo, hi, share, acc in zip(prof.edges[:-1], prof.edges[1:], prof.ratio, prof.mean_acc):
    print(f"[{lo:.2f}, {hi:.2f})   {share:6.3f}   {acc:.3f}")
print(f"mean entropy {prof.entropy_mean:.3f}, variance {prof.entropy_var:.3f}")

hist = {}
for t in tasks:
    for c, n in class_histogram(t).items():
        hist[c] = hist.get(c, 0) + n
cls = class_gradient_profile(record.diagnostics, per_class_accuracy(state, X, y), hist)
print("\nclass  train  mean |g|  accuracy")
for row in zip(cls.class_ids, cls.n_train, cls.mean_mag, cls.final_acc):
    print("%5d  %5d  %8.4f  %8.3f" % row)
print("spearman(mean |g|, accuracy):", cls.spearman)
