"""End-to-end finite-difference check of L = L_cls + L_motion.

ReLU and max-pooling make the loss piecewise smooth; a central difference
whose stencil straddles a kink is not a derivative estimate at all. The
check therefore replays the gate pattern (ReLU masks, pooling maxima,
dropout mask) recorded at the base point in every perturbed evaluation,
which leaves the loss smooth around that point and its derivative equal
to the one the analytic backward pass computes. The number of
evaluations in which some unit would have switched is reported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from usvideo.classifier.model import REDUCED, ClassifierArch, ClassifierModel, Gates
from usvideo.classifier.training import batch_loss, loss_and_grads
from usvideo.kernels import GradCheckReport, grad_check, precision


@dataclass
class ModelGradCheck:
    report: GradCheckReport
    evaluations: int
    switched_evaluations: int


def perturbed_model(arch: ClassifierArch, rng: np.random.Generator) -> ClassifierModel:
    """Freshly initialized model with jittered batch-norm affine parameters."""
    model = ClassifierModel(arch, rng)
    for name, p in model.params.items():
        p += rng.normal(0.0, 0.1 if name.startswith("bn") else 0.05, p.shape)
    return model


def classifier_grad_check(
    seed: int,
    arch: ClassifierArch = REDUCED,
    batch: int = 2,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    max_coords: int | None = None,
) -> ModelGradCheck:
    with precision("f64"):
        rng = np.random.default_rng([seed, 0xC1A5])
        model = perturbed_model(arch, rng)
        x = rng.random((batch, 1, arch.clip_length, arch.clip_size, arch.clip_size))
        y = (np.arange(batch) % 2).astype(float)
        vm = rng.random((batch, arch.temporal_windows))
        drop_seed = int(rng.integers(2**32))
        _, grads, base = loss_and_grads(model, x, y, vm, rng=np.random.default_rng(drop_seed), update_stats=False)
        counts = [0, 0]

        def loss() -> float:
            gates = Gates(base.gates.trace)
            value = batch_loss(model, x, y, vm, rng=np.random.default_rng(drop_seed), gates=gates)
            counts[0] += 1
            counts[1] += gates.switched > 0
            return value

        report = grad_check(loss, model.params, grads, h=h, tolerance=tolerance, max_coords=max_coords,
                            rng=np.random.default_rng(seed))
    return ModelGradCheck(report, counts[0], counts[1])
