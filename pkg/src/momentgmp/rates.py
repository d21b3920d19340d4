"""Closed-form convergence-rate constants of the moment-SoS hierarchy.

All bounds are of the form kappa * ell^(-theta).  The Positivstellensatz
constant gamma has no closed form for any of the presets, so it is always a
user input; with the default gamma = 1 the numbers describe the shape of the
bound up to that constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .poly import monomials_upto


class Preset(str, Enum):
    BALL = "ball"
    BOX1 = "box1"
    BOX2 = "box2"
    GENERIC = "generic"


@dataclass(frozen=True)
class PsatzConstants:
    """Effective Positivstellensatz constants: deg-d positive f has an SoS
    certificate error bounded by gamma * ell^(-theta) for ell >= ell0."""

    gamma: float
    theta: float
    ell0: float = 0.0
    preset: Preset = Preset.GENERIC

    def __post_init__(self):
        if self.gamma <= 0 or self.theta <= 0:
            raise ValueError("gamma and theta must be positive")
        if self.ell0 < 0:
            raise ValueError("ell0 must be nonnegative")
        object.__setattr__(self, "preset", Preset(self.preset))

    @classmethod
    def ball(cls, n: int, deg: int, gamma: float = 1.0) -> "PsatzConstants":
        return cls(gamma, 2.0, 2.0 * n * deg ** 1.5, Preset.BALL)

    @classmethod
    def box1(cls, n: int, deg: int, gamma: float = 1.0) -> "PsatzConstants":
        return cls(gamma, 1.0, math.pi * n * math.sqrt(2 * n) * deg, Preset.BOX1)

    @classmethod
    def box2(cls, n: int, deg: int, gamma: float = 1.0) -> "PsatzConstants":
        return cls(gamma, 2.0, math.pi * n * math.sqrt(2 * n) * deg, Preset.BOX2)

    @classmethod
    def generic(cls, theta: float, gamma: float = 1.0, ell0: float = 0.0) -> "PsatzConstants":
        return cls(gamma, theta, ell0, Preset.GENERIC)

    @classmethod
    def from_preset(cls, preset: Preset | str, n: int | None = None, deg: int | None = None,
                    gamma: float = 1.0, theta: float | None = None, ell0: float = 0.0):
        preset = Preset(preset)
        if preset == Preset.GENERIC:
            if theta is None:
                raise ValueError("the generic preset needs theta")
            return cls.generic(theta, gamma, ell0)
        if n is None or deg is None:
            raise ValueError(f"preset {preset.value} needs n and deg")
        return {Preset.BALL: cls.ball, Preset.BOX1: cls.box1, Preset.BOX2: cls.box2}[preset](n, deg, gamma)


@dataclass(frozen=True)
class SlotRate:
    """Per-measure quantities: max of f_i on S_i, max of the active h_ij on
    S_i, and the minimum of the witness polynomial sum_j w_j h_ij on S_i."""

    f_max: float
    h_star_max: float
    hw_min: float
    psatz: PsatzConstants
    c_s: float = 1.0
    h_max: float | None = None


@dataclass(frozen=True)
class RateInputs:
    slots: tuple[SlotRate, ...]
    t_dot_w: float
    v1: float = 0.0  # l1 norm of an optimal dual multiplier
    active_degrees: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        if not self.slots:
            raise ValueError("at least one slot is required")
        for s in self.slots:
            if s.hw_min <= 0:
                raise ValueError("witness minimum must be positive (S-fullness)")
        if self.t_dot_w <= 0:
            raise ValueError("<t, w> must be positive")
        if self.v1 < 0:
            raise ValueError("||v*||_1 must be nonnegative")


def kappa_theta(inputs: RateInputs) -> tuple[float, float]:
    kappa = max(
        inputs.t_dot_w / s.hw_min * s.psatz.gamma ** s.psatz.theta
        * (2.0 * s.f_max + inputs.v1 * s.h_star_max)
        for s in inputs.slots
    )
    theta = min(s.psatz.theta for s in inputs.slots)
    return kappa, theta


def hausdorff_kappa(inputs: RateInputs) -> float:
    """Constant of the ell^(-theta) bound on the Hausdorff distance between
    truncated moment sets (objective-independent version of kappa)."""
    return max(
        inputs.t_dot_w / s.hw_min * s.psatz.gamma ** s.psatz.theta
        * (2.0 * s.c_s + inputs.v1 * (s.h_star_max if s.h_max is None else s.h_max))
        for s in inputs.slots
    )


def c_s_ball() -> float:
    """sup_alpha max_{|x| <= 1} |x^alpha| / alpha!, attained at alpha = 0."""
    return 1.0


def gap_bound(ell: float, kappa: float, theta: float) -> float:
    if ell <= 0:
        raise ValueError("ell must be positive")
    return kappa * ell ** (-theta)


def ell_threshold(ell0_list: Sequence[float], active_degrees: Sequence[int]) -> float:
    """Order from which the bounds hold."""
    return float(max(list(ell0_list) + list(active_degrees), default=0.0))


def tensor_rate(mode: str, gamma: float, psi_max: float, v1: float,
                u: float = 0.0, L: float = 1.0) -> float:
    """kappa of the tensor-decomposition GMPs (theta = 2 on the ball).

    Positive: gamma (2 Psi_max + v1).  Signed: gamma L (2 Psi_max + v1 + u).
    """
    mode = str(getattr(mode, "value", mode)).lower()
    if mode == "positive":
        return gamma * (2.0 * psi_max + v1)
    if mode == "signed":
        return gamma * L * (2.0 * psi_max + v1 + u)
    raise ValueError(f"unknown mode {mode!r}")


def psi_max_ball(n: int, dprime: int, grid: int | None = None) -> float:
    """max over the unit ball of sum_{|alpha| <= d'} x^(2 alpha).

    Every term is even and nondecreasing in |x_i|, so the maximum sits on the
    sphere in the positive orthant; a deterministic grid on that orthant
    patch is followed by a local polish.
    """
    E = 2 * np.array(monomials_upto(n, dprime), dtype=float).reshape(-1, n)

    def psi(x):
        return float(np.sum(np.prod(np.abs(x)[None, :] ** E, axis=1)))

    if n == 1:
        return psi(np.ones(1))
    # grid on the positive orthant of the sphere via normalized lattice points
    grid = grid or max(8, int(math.ceil(20000 ** (1.0 / n))))
    axes = np.linspace(0.0, 1.0, grid)
    mesh = np.stack(np.meshgrid(*([axes] * n), indexing="ij"), -1).reshape(-1, n)
    mesh = mesh[np.linalg.norm(mesh, axis=1) > 0]
    mesh = mesh / np.linalg.norm(mesh, axis=1, keepdims=True)
    vals = np.sum(np.prod(mesh[:, None, :] ** E[None, :, :], axis=2), axis=1)
    x0 = mesh[int(np.argmax(vals))]
    res = minimize(lambda x: -psi(x), x0, method="SLSQP",
                   constraints=[{"type": "ineq", "fun": lambda x: 1.0 - x @ x}],
                   bounds=[(0.0, 1.0)] * n, options={"ftol": 1e-15, "maxiter": 500})
    best = max(float(vals.max()), -float(res.fun) if res.success and res.x @ res.x <= 1 + 1e-12 else -np.inf)
    return best


def rate_table(kappa: float, theta: float, start: float, max_order: int, step: int = 2):
    """Rows (ell, kappa ell^-theta) for ell = ceil(start), ceil(start)+step, ..."""
    first = max(int(math.ceil(start)), 1)
    return [(ell, gap_bound(ell, kappa, theta)) for ell in range(first, max_order + 1, step)]
