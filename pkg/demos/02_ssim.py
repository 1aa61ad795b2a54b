# Structural similarity between images, and the SSIM loss on probability maps.

#cell 1
import numpy as np

from segens import SsimParams, ssim_index
from segens.raster import one_hot
from segens.ssim import ssim_loss

rng = np.random.default_rng(1)
x = rng.random((32, 32))

#cell 2
print("ssim(x, x)        ", ssim_index(x, x)[0])
print("ssim(x, x + noise)", ssim_index(x, np.clip(x + rng.normal(0, 0.1, x.shape), 0, 1))[0])
print("ssim(x, 1 - x)    ", ssim_index(x, 1 - x)[0])

#cell 3
# the local map shows where two images disagree
y = x.copy()
y[8:16, 8:16] = 0.5
mean, smap = ssim_index(x, y)
print("mean", round(mean, 4), "inside patch", round(smap[10:14, 10:14].mean(), 4),
      "far corner", round(smap[-4:, -4:].mean(), 4))

#cell 4
# a smaller window sees finer structure
print("3x3 window:", ssim_index(x, y, SsimParams(window_size=3, window_sigma=0.8))[0])

#cell 5
mask = (rng.random((16, 16)) > 0.7).astype(int)
t = one_hot(mask, 2)
blurred = 0.7 * t + 0.3 * t.mean(axis=(0, 1))
print("ssim loss, perfect:", ssim_loss(t, t).value, " blurred:", ssim_loss(blurred, t).value)
