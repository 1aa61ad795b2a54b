# Losses on a toy 6x6 binary problem: values, gradients and how they combine.

#cell 1
import numpy as np

from segens import compute_loss, one_hot
from segens.gradcheck import numerical_gradient, relative_error
from segens.losses import LOSSES

rng = np.random.default_rng(0)
mask = np.zeros((6, 6), dtype=int)
mask[1:4, 2:5] = 1  # a 3x3 square "lesion"
target = one_hot(mask, 2)

#cell 2
# a soft prediction that is roughly right
z = 2.0 * (target - 0.5) + rng.normal(0, 0.8, target.shape)
pred = np.exp(z) / np.exp(z).sum(axis=2, keepdims=True)

for kind in LOSSES:
    print(f"{kind:>10s}  perfect {compute_loss(kind, target, target).value:8.5f}"
          f"  noisy {compute_loss(kind, pred, target).value:8.5f}")

#cell 3
# every loss returns its gradient with respect to the prediction; check one by central differences
res = compute_loss("comb2", pred, target)
num = numerical_gradient(lambda y: compute_loss("comb2", y, target).value, pred)
print("comb2 max relative gradient error:", relative_error(res.grad, num).max())

#cell 4
# comb3 is the SSIM loss plus generalized Dice
parts = compute_loss("ssim", pred, target).value + compute_loss("gd", pred, target).value
print("comb3", compute_loss("comb3", pred, target).value, "= ssim + gd", parts)
