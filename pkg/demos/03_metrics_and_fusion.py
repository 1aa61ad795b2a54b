# Scoring masks, and fusing several probability maps with the weighted sum rule.

#cell 1
import numpy as np

from segens import ConfusionCounts, binarize, dice, evaluate_dataset, fuse, iou

c = ConfusionCounts(tp=2, fp=1, fn=1)
# the identity holds exactly for the ratios; in floats it can be off by one rounding step
print("dice", dice(c), "iou", iou(c), "iou from dice", dice(c) / (2 - dice(c)))

#cell 2
# per-image averaging versus pooled counts
truth = np.array([[1, 1, 0, 0]])
small_good = (truth, truth)
big = np.array([[1, 1, 1, 0, 0, 0, 1, 0]])
big_bad = (np.array([[1, 0, 0, 1, 1, 0, 1, 0]]), big)
for mode in ("mean_per_image", "pixel_level"):
    print(mode, evaluate_dataset([small_good, big_bad], mode).aggregate_dice)

#cell 3
# two members disagree on a pixel: 0.8 and 0.4 foreground
a = np.array([[[0.2, 0.8]]])
b = np.array([[[0.6, 0.4]]])
print("equal weights ", fuse([a, b])[0, 0, 1], "->", binarize(fuse([a, b]))[0, 0])
print("weights 1:10  ", fuse([a, b], [1, 10])[0, 0, 1], "->", binarize(fuse([a, b], [1, 10]))[0, 0])

#cell 4
# scaling every weight by the same exact factor changes nothing, bit for bit
rng = np.random.default_rng(2)
maps = [rng.dirichlet([1, 1], size=(8, 8)) for _ in range(4)]
print(np.array_equal(fuse(maps, [1, 2, 3, 4]), fuse(maps, [10, 20, 30, 40])))
