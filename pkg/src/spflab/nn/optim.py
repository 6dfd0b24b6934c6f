"""Adam and exponential-moving-average parameter updates.

Adam rebinds every parameter to a view of one flat buffer at construction,
so the moment arithmetic and the update run as a handful of whole-vector
operations instead of hundreds of per-parameter ones.
"""

from __future__ import annotations

import numpy as np

from .autodiff import ParamTree


class Adam:
    """Standard Adam with bias correction over a ParamTree."""

    def __init__(self, params: ParamTree, lr: float = 3e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.names = params.names()
        sizes = [params[n].data.size for n in self.names]
        total = int(np.sum(sizes)) if sizes else 0
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.flat = np.empty(total)
        for name, start, stop in zip(self.names, self.offsets[:-1], self.offsets[1:]):
            p = params[name]
            self.flat[start:stop] = p.data.ravel()
            p.data = self.flat[start:stop].reshape(p.data.shape)
        self.m = np.zeros(total)
        self.v = np.zeros(total)
        self._grad = np.zeros(total)
        self._work = np.zeros(total)

    def step(self) -> None:
        b1, b2 = self.betas
        self.step_count += 1
        g = self._grad
        for name, start, stop in zip(self.names, self.offsets[:-1], self.offsets[1:]):
            grad = self.params[name].grad
            if grad is None:
                g[start:stop] = 0.0
            else:
                g[start:stop] = grad.ravel()
        work = self._work
        self.m *= b1
        np.multiply(g, 1.0 - b1, out=work)
        self.m += work
        self.v *= b2
        np.multiply(g, g, out=work)
        work *= 1.0 - b2
        self.v += work
        correct1 = 1.0 - b1**self.step_count
        correct2 = 1.0 - b2**self.step_count
        # flat -= lr/c1 * m / (sqrt(v)/sqrt(c2) + eps), all in place
        np.sqrt(self.v, out=work)
        work += self.eps * np.sqrt(correct2)
        np.divide(self.m, work, out=work)
        work *= self.lr * np.sqrt(correct2) / correct1
        self.flat -= work

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}/m": self.m, f"{prefix}/v": self.v}

    def load_state_arrays(self, prefix: str, arrays: dict[str, np.ndarray],
                          step_count: int) -> None:
        self.m[...] = arrays[f"{prefix}/m"]
        self.v[...] = arrays[f"{prefix}/v"]
        self.step_count = int(step_count)


class Sgd:
    """Plain gradient descent; used where constant-magnitude Adam steps would
    keep scale-free losses from settling."""

    def __init__(self, params: ParamTree, lr: float):
        self.params = params
        self.lr = lr

    def step(self) -> None:
        for name in self.params.names():
            p = self.params[name]
            if p.grad is not None:
                p.data -= self.lr * p.grad


def ema_update(online: ParamTree, target: ParamTree, tau: float) -> None:
    """In-place target <- tau * online + (1 - tau) * target, matched by name."""
    if not online.same_structure(target):
        raise ValueError("online and target trees differ in structure")
    for name, p in online.items():
        t = target[name]
        t.data *= 1.0 - tau
        t.data += tau * p.data
