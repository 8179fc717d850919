#!/usr/bin/env python3
"""Desk-scale extractor training demo.

Renders a synthetic 10-class shape corpus, runs it through the full
augmentation pipeline (4 subsets of flip/scale/rotate/shift-crop), trains
the convolutional extractor from scratch, reports per-epoch loss and final
training accuracy, and writes a reusable checkpoint.
"""

import argparse
import time

import numpy as np

from terranav import augment, network, synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus-size", type=int, default=1000)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="shapes.ckpt")
    args = ap.parse_args()

    t0 = time.perf_counter()
    images, labels = synthetic.make_shape_corpus(args.corpus_size, seed=args.seed)
    base = [augment.scale_to_base(img) for img in images]
    mean = network.compute_mean_rgb(base, seed=args.seed)
    print(f"corpus: {len(images)} images, mean rgb {np.round(mean, 4)}")

    data, data_labels = augment.build_training_set(
        base, labels, augment.AugmentPolicy(), seed=args.seed, fill_rgb=mean)
    data = network.preprocess(data, mean)
    print(f"augmented training set: {data.shape} "
          f"({time.perf_counter() - t0:.0f}s)")

    spec = network.NetworkSpec(output_classes=synthetic.SHAPE_CLASSES)
    params = network.build_network(spec, seed=args.seed)
    config = network.TrainingConfig(num_epochs=args.epochs)
    history = network.train(params, data, data_labels, config, spec,
                            seed=args.seed, log_every=20)
    for epoch, loss in enumerate(history):
        print(f"epoch {epoch}: mean loss {loss:.4f}")

    correct = 0
    for s in range(0, len(data), 256):
        logits = network.forward(params, data[s:s + 256], spec)
        correct += int((np.argmax(logits, -1) == data_labels[s:s + 256]).sum())
    print(f"training accuracy: {correct / len(data):.3f}")

    network.save_checkpoint(params, mean, args.out, spec)
    print(f"checkpoint written to {args.out} "
          f"({time.perf_counter() - t0:.0f}s total)")


if __name__ == "__main__":
    main()
