"""Train one desk-scale classifier and compare its temporal weights with the motion prior.

Both vectors are positive and close to constant, so their cosine is near 1
from the start and the motion loss is small throughout. The Pearson
correlation shows how far the shapes agree; with a short schedule the
weights move toward the prior only weakly.

    python3 demos/attention_weights.py
"""

import numpy as np

from usvideo.classifier import DESK, ClassifierModel, ClassifierTrainConfig, build_clipset, forward, train_classifier
from usvideo.data import SyntheticConfig, generate_samples


def mean_cosine(v_temp, v_motion):
    num = np.sum(v_temp * v_motion, axis=1)
    return float(np.mean(num / (np.linalg.norm(v_temp, axis=1) * np.linalg.norm(v_motion, axis=1))))


def mean_correlation(v_temp, v_motion):
    return float(np.mean([np.corrcoef(a, b)[0, 1] for a, b in zip(v_temp, v_motion)]))


def main():
    videos = generate_samples(SyntheticConfig(n_videos=40, n_frames=48, height=96, width=96, clip_length=16), seed=2)
    data = build_clipset(videos, DESK)
    model = ClassifierModel(DESK, np.random.default_rng(2))
    before = forward(model, data.clips).v_temp
    res = train_classifier(model, data, ClassifierTrainConfig(epochs_high=10, epochs_low=2, batch_size=8, seed=2))
    after = forward(model, data.clips).v_temp
    for e in res.epochs:
        print(f"epoch {e.epoch:2d} lr {e.lr:g} l_cls {e.l_cls:.4f} l_motion {e.l_motion:.5f}")
    print(f"mean corr(v_temp, v_motion): before {mean_correlation(before, data.v_motion):+.3f}, "
          f"after {mean_correlation(after, data.v_motion):+.3f}")
    print(f"mean cos(v_temp, v_motion):  before {mean_cosine(before, data.v_motion):.4f}, "
          f"after {mean_cosine(after, data.v_motion):.4f}")
    print("v_motion of clip 0:", np.round(data.v_motion[0], 3))
    print("v_temp   of clip 0:", np.round(after[0], 3))


if __name__ == "__main__":
    main()
