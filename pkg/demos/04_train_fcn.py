# Train the small FCN on synthetic "polyps" and watch the loss and Dice move.
# About a minute on one core.

#cell 1
import numpy as np

from segens import binarize, evaluate_dataset
from segens.nnet import Activation, FcnModel, TrainConfig, synth_dataset, train

data = synth_dataset(50, 32, 32, seed=3)
trainset, testset = data[:40], data[40:]
image, mask = trainset[0]
print("image", image.shape, "range", image.min().round(3), image.max().round(3),
      "foreground fraction", mask.mean().round(3))

#cell 2
def test_dice(model):
    return evaluate_dataset([(binarize(model(im)), m) for im, m in testset]).aggregate_dice


model = FcnModel(seed=0)
print("untrained test dice", round(test_dice(model), 4))

#cell 3
cfg = TrainConfig(epochs=10, drop_every=4, loss="gd", seed=0)
model, hist = train(model, trainset, cfg, val=testset)
for epoch, (lr, loss, d) in enumerate(zip(hist.lr, hist.train_loss, hist.val_dice), start=1):
    print(f"epoch {epoch:2d}  lr {lr:.1e}  loss {loss:.4f}  val dice {d:.4f}")

#cell 4
# same architecture, different activations and loss
other = FcnModel(activations=[Activation("elu"), Activation("srelu")], seed=1)
other, _ = train(other, trainset, TrainConfig(epochs=10, drop_every=4, loss="comb1", seed=1))
print("elu/srelu + comb1 test dice", round(test_dice(other), 4))
print("learned srelu right knot, first channels:", other.weights["act2.t_r"][:4].round(3))
