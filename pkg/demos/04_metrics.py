"""Score-based metrics: accuracy at a threshold, ranking AUC, and EER.

Builds two overlapping score distributions and reports the three numbers
the evaluation pipeline emits, plus the ROC crossing point behind EER.
"""

import numpy as np

from dgfd.metrics import accuracy, auc, eer, evaluate_scores
from dgfd.rng import stream

rng = stream(0, "demo", "metrics")

n = 400
labels = np.r_[np.zeros(n), np.ones(n)].astype(int)
scores = np.r_[rng.normal(0.35, 0.15, n), rng.normal(0.65, 0.15, n)].clip(0, 1)

print(f"accuracy @0.5 : {accuracy(scores, labels):.4f}")
print(f"AUC           : {auc(scores, labels):.4f}")
result = eer(scores, labels)
print(f"EER           : {result.eer:.4f} at threshold {result.threshold:.4f}")

# At the EER threshold the two error rates meet.
pred = scores >= result.threshold
fpr = float(pred[labels == 0].mean())
fnr = float((~pred[labels == 1]).mean())
print(f"check: FPR {fpr:.4f} vs FNR {fnr:.4f} at that threshold")

print("\nevaluate_scores bundles all three:")
print({k: round(v, 4) for k, v in evaluate_scores(scores, labels).items()})

# Separation sweep: AUC rises from 0.5 (chance) toward 1.0 as the class
# means move apart, EER falls toward 0.
print("\nseparation   AUC     EER")
for gap in (0.0, 0.1, 0.2, 0.4, 0.8):
    s = np.r_[rng.normal(0.5 - gap / 2, 0.15, n), rng.normal(0.5 + gap / 2, 0.15, n)]
    print(f"   {gap:.1f}     {auc(s, labels):.4f}  {eer(s, labels).eer:.4f}")
