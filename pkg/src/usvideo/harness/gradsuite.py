"""The full finite-difference suite: every kernel plus both end-to-end models."""

from __future__ import annotations

import time
from dataclasses import dataclass

from usvideo.classifier.gradcheck import classifier_grad_check
from usvideo.kernels import precision
from usvideo.kernels.gradcheck import GradCheckReport
from usvideo.kernels.suite import KERNEL_CASES, check_kernel
from usvideo.localizer import localizer_grad_check

MODEL_CASES = ("localizer", "classifier")


@dataclass
class SuiteEntry:
    name: str
    seed: int
    report: GradCheckReport
    seconds: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.report.passed


def run_gradient_suite(
    seeds=range(5),
    h: float = 1e-5,
    tolerance: float = 1e-4,
    models: bool = True,
    max_coords: int | None = None,
) -> list[SuiteEntry]:
    """Run all checks in 64-bit mode; ``max_coords`` subsamples the model checks only."""
    out = []
    with precision("f64"):
        for name in KERNEL_CASES:
            for s in seeds:
                t = time.perf_counter()
                rep = check_kernel(name, s, h, tolerance)
                out.append(SuiteEntry(name, s, rep, time.perf_counter() - t))
        if not models:
            return out
        for s in seeds:
            t = time.perf_counter()
            rep = localizer_grad_check(s, h=h, tolerance=tolerance, max_coords=max_coords)
            out.append(SuiteEntry("localizer", s, rep, time.perf_counter() - t))
        for s in seeds:
            t = time.perf_counter()
            res = classifier_grad_check(s, h=h, tolerance=tolerance, max_coords=max_coords)
            note = f"{res.switched_evaluations}/{res.evaluations} evaluations would switch a gate"
            out.append(SuiteEntry("classifier", s, res.report, time.perf_counter() - t, note))
    return out
