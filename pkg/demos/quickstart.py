"""Generate a small synthetic set, locate key-frames, then cross-validate the classifier.

Runs in a few minutes on one CPU using the desk-scale geometry:

    python3 demos/quickstart.py
"""

import numpy as np

from usvideo.classifier import DESK, ClassifierTrainConfig, build_clipset, cross_validate
from usvideo.data import SyntheticConfig, generate_samples, holdout_split
from usvideo.localizer import LocalizerModel, LocalizerTrainConfig, accuracy_curve, predict_all, train_localizer


def main():
    videos = generate_samples(SyntheticConfig(n_videos=80, n_frames=48, height=96, width=96, clip_length=16), seed=1)
    by_id = {v.video_id: v for v in videos}
    train, test = holdout_split(list(by_id), 0.2, seed=1)

    localizer = LocalizerModel(rng=np.random.default_rng(1))
    train_localizer(localizer, [by_id[i] for i in train], LocalizerTrainConfig(lr=0.003, epochs=20, batch_size=16, seed=1))
    pred = predict_all(localizer, videos)
    curve = accuracy_curve([pred[i] for i in test], [by_id[i].key_frame_index for i in test])
    print("held-out accuracy@D:", {d: round(a, 2) for d, a in curve if d in (0, 2, 5, 10, 15)})

    clips = build_clipset(videos, DESK, "keyframe", key_frames=pred)
    config = ClassifierTrainConfig(epochs_high=10, epochs_low=2, batch_size=8, seed=1)
    result = cross_validate(clips, DESK, config, k=4)
    for fold in result.folds:
        print(f"fold {fold.fold}: accuracy {fold.metrics.accuracy:.3f}")
    print("mean:", {k: round(v, 3) for k, v in result.mean.items()})


if __name__ == "__main__":
    main()
