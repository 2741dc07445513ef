"""
Singular constraining drift and multiplicative noise amplitude.

Outside the core ``|w| > c0`` the forms saturate the growth bounds::

    f(w)     = -sign(w) K (1 - |w|)^-beta
    sigma(w) =          C (1 - |w|)^-gamma

Inside the core ``f`` is the odd cubic ``a w + b w^3`` matching value and slope
of the outer branch at ``c0``; ``sigma`` is held at ``sigma(c0)``.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np


@dataclass(frozen=True)
class ForcingSpec:
    beta: float
    gamma: float = 0.0
    c0: float = 0.5
    C: float = 1.0
    K: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if not 0 < self.c0 < 1:
            raise ValueError(f"c0 must lie in (0, 1), got {self.c0}")
        if not (self.C > 0 and self.K > 0):
            raise ValueError("C and K must be positive")

    @property
    def core_coefficients(self):
        """``(a, b)`` of the core cubic ``a w + b w^3``."""
        c0, beta, K = self.c0, self.beta, self.K
        value = -K * (1 - c0) ** -beta
        slope = -K * beta * (1 - c0) ** (-beta - 1)
        # a c0 + b c0^3 = value,  a + 3 b c0^2 = slope
        b = (slope - value / c0) / (2 * c0 ** 2)
        a = value / c0 - b * c0 ** 2
        return a, b

    def to_dict(self):
        return asdict(self)


def _check_domain(w):
    if np.any(np.abs(w) >= 1):
        raise ValueError("forcing is undefined for |w| >= 1")


def _drift(spec, w):
    aw = np.abs(w)
    a, b = spec.core_coefficients
    with np.errstate(divide="ignore"):
        outer = -np.sign(w) * spec.K * (1.0 - aw) ** -spec.beta
    return np.where(aw > spec.c0, outer, a * w + b * w ** 3)


def _sigma(spec, w):
    aw = np.maximum(np.abs(w), spec.c0)
    return spec.C * (1.0 - aw) ** -spec.gamma


def drift(spec, w):
    """Constraining drift ``f(w)`` for ``|w| < 1``."""
    w = np.asarray(w, dtype=float)
    _check_domain(w)
    out = _drift(spec, w)
    return out[()] if out.ndim == 0 else out


def sigma(spec, w):
    """Noise amplitude ``sigma(w)`` for ``|w| < 1``."""
    w = np.asarray(w, dtype=float)
    _check_domain(w)
    out = _sigma(spec, w)
    return out[()] if out.ndim == 0 else out


def cutoff_level(n):
    """Clamp radius ``1 - 3^-n`` for cutoff level ``n``."""
    return 1.0 - 3.0 ** -n


class Cutoff:
    """Globally Lipschitz truncations ``f_n, sigma_n`` defined on all of R."""

    def __init__(self, spec, n):
        if n < 1:
            raise ValueError(f"cutoff level must be >= 1, got {n}")
        self.spec = spec
        self.n = n
        self.radius = cutoff_level(n)

    def clamp(self, w):
        return np.clip(w, -self.radius, self.radius)

    def f(self, w):
        return _drift(self.spec, self.clamp(np.asarray(w, dtype=float)))

    def sigma(self, w):
        return _sigma(self.spec, self.clamp(np.asarray(w, dtype=float)))


def cutoff(spec, n):
    """Return ``(f_n, sigma_n)`` as callables."""
    c = Cutoff(spec, n)
    return c.f, c.sigma


def check_condition(beta, gamma, eta):
    """Test ``gamma + 1 < (1 - eta)(beta + 1)/2``.

    Returns ``(holds, margin)`` with ``margin = (1 - eta)(beta + 1)/2 - (gamma + 1)``.
    The inequality is strict, so a zero margin does not hold.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not gamma >= 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    if not 0 <= eta < 1:
        raise ValueError(f"eta must lie in [0, 1), got {eta}")
    margin = (1 - eta) * (beta + 1) / 2 - (gamma + 1)
    return margin > 0, margin
