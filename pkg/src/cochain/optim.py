"""Fixed-step gradient descent and a central-difference gradient checker."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DivergenceError

__all__ = ["Objective", "TrainConfig", "gradient_descent", "finite_difference_check"]

DIVERGENCE_THRESHOLD = 1e12


@dataclass
class Objective:
    """Scalar loss over an array of parameters, plus its gradient."""

    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    dim: int | None = None


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.0
    max_iter: int = 1000
    tol: float = 0.0
    seed: int = 0

    def __post_init__(self):
        # lr == 0 is allowed: it freezes the parameters, useful as a control run
        if not np.isfinite(self.lr) or self.lr < 0:
            raise ValueError(f"lr must be a non-negative finite number, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        if "max_iter" in kw:
            kw["max_iter"] = int(kw["max_iter"])
        if "seed" in kw:
            kw["seed"] = int(kw["seed"])
        return cls(**kw)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


def _checked(loss) -> float:
    loss = float(loss)
    if not np.isfinite(loss) or abs(loss) > DIVERGENCE_THRESHOLD:
        raise DivergenceError(f"loss diverged ({loss})")
    return loss


def gradient_descent(obj: Objective, init, cfg: TrainConfig, callback=None):
    """Minimize ``obj`` with heavy-ball gradient descent.

    Stops after ``cfg.max_iter`` steps or as soon as one step changes the loss
    by less than ``cfg.tol``. Returns the final parameters and the loss
    history, whose length is the number of steps taken plus one.
    """
    x = np.array(init, dtype=float, copy=True)
    v = np.zeros_like(x)
    history = [_checked(obj.eval(x))]
    for it in range(cfg.max_iter):
        g = np.asarray(obj.grad(x), dtype=float)
        if g.shape != x.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {x.shape}")
        v = cfg.momentum * v - cfg.lr * g
        x = x + v
        history.append(_checked(obj.eval(x)))
        if callback is not None:
            callback(it, x, history[-1])
        if abs(history[-1] - history[-2]) < cfg.tol:
            break
    return x, history


def finite_difference_check(obj: Objective, point, h: float = 1e-5, abs_floor: float = 1e-8) -> float:
    """Largest discrepancy between ``obj.grad`` and central differences.

    Relative error per coordinate, except where the finite difference is
    below ``abs_floor`` in magnitude; there the absolute error is used.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(point, dtype=float)
    g = np.asarray(obj.grad(x.copy()), dtype=float).ravel()
    flat = x.ravel()
    fd = np.empty_like(flat)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        fd[i] = (obj.eval(xp.reshape(x.shape)) - obj.eval(xm.reshape(x.shape))) / (2 * h)
    err = np.abs(g - fd)
    big = np.abs(fd) >= abs_floor
    err[big] /= np.abs(fd[big])
    return float(err.max()) if err.size else 0.0
