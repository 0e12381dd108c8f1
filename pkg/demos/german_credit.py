"""German credit: BuDRO against the plain baseline on a few train/test splits.

Age is protected.  The fair metric ignores the age coordinate and the
direction of a ridge model that predicts age from everything else.
Status consistency asks whether the prediction survives swapping the
personal_status category (which mixes gender and marital status).
"""
import sys

import numpy as np

from budro.dataio import split
from budro.datasets import german_age_group, german_metric, german_scale_pos_weight, german_status_levels, load_german
from budro.evaluation import balanced_accuracy, certify_drf, consistency, group_gaps
from budro.gbdt import BoostConfig
from budro.training import BuDROConfig, train_baseline, train_budro

splits = int(sys.argv[1]) if len(sys.argv) > 1 else 3
data = load_german()
rows = []
for seed in range(splits):
    train, test = split(data, 0.2, seed)
    metric = german_metric(train)
    boost = BoostConfig(max_depth=4, reg_lambda=1.0, min_child_weight=1 / 80, eta=0.005,
                        scale_pos_weight=german_scale_pos_weight(train))
    fair, _ = train_budro(train, metric, BuDROConfig(epsilon=1.0, steps=90, boost_cfg=boost))
    base, _ = train_baseline(train, boost, 90)
    for name, model in (("baseline", base), ("budro", fair)):
        pred = model.predict_label(test.features)
        rows.append((name, balanced_accuracy(pred, test.labels),
                     consistency(model, test, "personal_status", german_status_levels(test)).consistency,
                     group_gaps(pred, test.labels, german_age_group(test)).gap_rms,
                     certify_drf(model, test, metric, 0.1).gap))

for name in ("baseline", "budro"):
    values = np.array([r[1:] for r in rows if r[0] == name])
    bacc, scons, gap_rms, cert = values.mean(axis=0)
    print(f"{name:<9} bacc {bacc:.3f}  S-cons {scons:.3f}  age Gap_RMS {gap_rms:.3f}  certificate gap@0.1 {cert:.3f}")
