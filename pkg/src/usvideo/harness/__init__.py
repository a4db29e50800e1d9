"""Configuration, checkpoints, reports and the command-line interface."""

from usvideo.harness.checkpoint import (
    CheckpointData,
    decode,
    encode,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    write_checkpoint,
)
from usvideo.harness.config import ExperimentConfig, apply_preset, load_config_file, update
from usvideo.harness.gradsuite import SuiteEntry, run_gradient_suite
from usvideo.harness.report import accuracy_svg, emit_report
from usvideo.harness.runs import directory_digest, run_lock, write_run_record

__all__ = [
    "CheckpointData", "ExperimentConfig", "SuiteEntry", "accuracy_svg", "apply_preset", "decode",
    "directory_digest", "emit_report", "encode", "load_checkpoint", "load_config_file", "read_checkpoint",
    "run_gradient_suite", "run_lock", "save_checkpoint", "update", "write_checkpoint", "write_run_record",
]
