"""A short end-to-end training run on a desk-sized configuration.

Uses the full pipeline — synthetic corpus, LD-RPMNet assembly, AdamW with
decoupled weight decay, best-validation checkpointing — but with a small
input length and few epochs so it finishes in about a minute.  Raise
``EPOCHS`` (the protocol default is 50) to reach the >= 95% regime.
"""

import numpy as np

from ldrpmnet import dataset
from ldrpmnet.model import ModelConfig, build_preset
from ldrpmnet.train import TrainConfig, evaluate, train

EPOCHS = 5

config = ModelConfig(input_length=2048, stem=(8, 7, 2),
                     stages=((16, (3, 5, 7), 4), (32, (3, 5, 7), 4),
                             (32, (3, 5, 7), 4)),
                     encoder=(2, 32, 2, 4))

samples = dataset.split(dataset.generate(seed=0, input_length=2048), seed=0)
net = build_preset("ld-rpmnet", base=config, seed=0)
print(f"ld-rpmnet, {net.param_count()} params, "
      f"{len(samples.indices('train'))} training samples, {EPOCHS} epochs\n")

net, trace = train(net, samples, TrainConfig(epochs=EPOCHS, seed=0))

print("epoch  train loss  val acc")
for epoch, loss, acc in trace:
    print(f"{epoch:>5} {loss:>11.4f} {acc:>8.3f}")

report = evaluate(net, samples)
print(f"\ntest accuracy {report.accuracy:.3f}, macro F1 {report.f1:.3f}, "
      f"median inference {1e3 * report.inference_seconds:.1f} ms/sample")
print("confusion matrix (rows = true class):")
print(np.array2string(report.confusion))
