from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from usvideo.errors import ConfigurationError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam; weight decay enters as ``g + wd * param``.

    Parameters are updated in place, so models can hold on to their arrays.
    """

    def __init__(self, params: dict[str, np.ndarray], lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = params
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)
        for name, p in params.items():
            self.state.first_moment[name] = np.zeros_like(p)
            self.state.second_moment[name] = np.zeros_like(p)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = float(value)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        st = self.state
        st.step_count += 1
        t = st.step_count
        c1 = 1.0 - st.beta1**t
        c2 = 1.0 - st.beta2**t
        for name, p in self.params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ConfigurationError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
            if st.weight_decay:
                g = g + st.weight_decay * p
            m = st.first_moment[name]
            v = st.second_moment[name]
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * g * g
            p -= st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)
