from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from usvideo.errors import ConfigurationError


@dataclass(frozen=True)
class FoldSplit:
    k: int
    assignments: dict[str, int]

    def test_ids(self, fold: int) -> list[str]:
        return [v for v, f in self.assignments.items() if f == fold]

    def train_ids(self, fold: int) -> list[str]:
        return [v for v, f in self.assignments.items() if f != fold]

    def sizes(self) -> list[int]:
        return [len(self.test_ids(f)) for f in range(self.k)]


def kfold_split(video_ids, k: int = 5, seed: int = 0, labels=None) -> FoldSplit:
    """Stratified k-fold assignment.

    Each class is shuffled and dealt round-robin, the dealing position
    carrying over from one class to the next, so fold sizes differ by at
    most one and each fold's class counts are within one of proportional.
    """
    ids = list(video_ids)
    if k < 2 or k > len(ids):
        raise ConfigurationError(f"cannot split {len(ids)} videos into {k} folds")
    if len(set(ids)) != len(ids):
        raise ConfigurationError("video ids must be unique")
    labels = [0] * len(ids) if labels is None else list(labels)
    rng = np.random.default_rng(seed)
    assignments: dict[str, int] = {}
    position = 0
    for cls in sorted(set(labels)):
        members = [v for v, y in zip(ids, labels) if y == cls]
        for v in (members[i] for i in rng.permutation(len(members))):
            assignments[v] = position % k
            position += 1
    return FoldSplit(k, {v: assignments[v] for v in ids})


def holdout_split(video_ids, test_fraction: float = 0.2, seed: int = 0) -> tuple[list[str], list[str]]:
    """Seeded random train/test partition (the localizer's 80/20 split)."""
    ids = list(video_ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    n_test = int(round(test_fraction * len(ids)))
    test = {ids[i] for i in order[:n_test]}
    return [v for v in ids if v not in test], [v for v in ids if v in test]
