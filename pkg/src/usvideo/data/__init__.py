"""Video containers, the synthetic generator, clip extraction and fold splits."""

from usvideo.data.containers import Roi, VideoSample, load_dataset, write_dataset
from usvideo.data.clips import Clip, extract_keyframe_window, keyframe_window, uniform_window
from usvideo.data.folds import FoldSplit, holdout_split, kfold_split
from usvideo.data.synthetic import SyntheticConfig, generate_samples, generate_synthetic

__all__ = [
    "Clip", "FoldSplit", "Roi", "SyntheticConfig", "VideoSample", "extract_keyframe_window",
    "generate_samples", "generate_synthetic", "holdout_split", "keyframe_window", "kfold_split",
    "load_dataset", "uniform_window", "write_dataset",
]
