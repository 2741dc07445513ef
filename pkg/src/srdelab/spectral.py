"""
Dirichlet eigenstructure of the Laplacian on the unit interval.

The basis lives on ``M`` equispaced interior points ``x_i = i / (M + 1)``.
Modal coefficients are discrete L2 inner products against
``e_k(x) = sqrt(2) sin(k pi x)``, which on this grid is exactly a type-I
discrete sine transform, so band-limited fields round-trip to machine
precision.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft


@dataclass(frozen=True)
class SpectralBasis:
    """Eigenpairs ``alpha_k = (k pi)^2``, ``e_k = sqrt(2) sin(k pi x)`` for k = 1..J.

    Parameters
    ----------
    mode_count : int
        Number of retained modes ``J``.
    grid_size : int
        Number of interior grid points ``M``.
    transform : {"dst", "direct"}
        ``"dst"`` uses scipy's type-I sine transform, ``"direct"`` uses the
        explicit ``J x M`` sine matrix. Both give the same coefficients.
    """

    mode_count: int
    grid_size: int
    transform: str = "direct"
    eigenvalues: np.ndarray = field(init=False, repr=False)
    grid: np.ndarray = field(init=False, repr=False)
    _modes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        J, M = self.mode_count, self.grid_size
        if J < 1:
            raise ValueError(f"mode_count must be >= 1, got {J}")
        if M < 2 * J:
            raise ValueError(
                f"grid_size={M} < 2*mode_count={2 * J}: modes would alias on the grid")
        if self.transform not in ("dst", "direct"):
            raise ValueError(f"unknown transform {self.transform!r}")
        k = np.arange(1, J + 1)
        x = np.arange(1, M + 1) / (M + 1)
        modes = np.sqrt(2.0) * np.sin(np.pi * np.outer(k, x))
        for name, value in (("eigenvalues", (np.pi * k) ** 2), ("grid", x), ("_modes", modes)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def h(self) -> float:
        """Grid spacing, also the trapezoid weight (boundary values vanish)."""
        return 1.0 / (self.grid_size + 1)

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(1, self.mode_count + 1)

    @property
    def sup_norms(self) -> np.ndarray:
        """``|e_k|_inf``, equal to sqrt(2) for every mode."""
        return np.full(self.mode_count, np.sqrt(2.0))

    def eigenfunction(self, k, x):
        """Evaluate ``e_k`` at arbitrary points of [0, 1]."""
        x = np.asarray(x, dtype=float)
        return np.sqrt(2.0) * np.sin(k * np.pi * x)

    def to_modes(self, values):
        """Project grid values (last axis of length M) onto the first J modes."""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.grid_size:
            raise ValueError(
                f"expected last axis of length {self.grid_size}, got {values.shape[-1]}")
        if self.transform == "direct":
            return self.h * values @ self._modes.T
        full = sfft.dst(values, type=1, axis=-1)
        return (self.h / np.sqrt(2.0)) * full[..., :self.mode_count]

    def to_grid(self, coeffs):
        """Synthesize grid values from modal coefficients (last axis of length J)."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.mode_count:
            raise ValueError(
                f"expected last axis of length {self.mode_count}, got {coeffs.shape[-1]}")
        if self.transform == "direct":
            return coeffs @ self._modes
        padded = np.zeros(coeffs.shape[:-1] + (self.grid_size,))
        padded[..., :self.mode_count] = coeffs
        # DST-I is its own inverse up to the factor 2(M+1).
        return sfft.dst(padded, type=1, axis=-1) / np.sqrt(2.0)

    def evaluate(self, coeffs, x):
        """Evaluate a modal expansion at arbitrary points ``x`` (off-grid allowed)."""
        coeffs = np.asarray(coeffs, dtype=float)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        table = np.sqrt(2.0) * np.sin(np.pi * np.outer(self.wavenumbers, x))
        return coeffs @ table

    def decay(self, t):
        """Modal multipliers ``exp(-alpha_k t)``."""
        return np.exp(-self.eigenvalues * t)

    def integrate(self, values):
        """Composite trapezoid over [0, 1] with zero boundary values."""
        return self.h * np.sum(values, axis=-1)


def build_basis(mode_count, grid_size, transform="direct"):
    """Build the Dirichlet sine basis; rejects grids that would alias the modes."""
    return SpectralBasis(int(mode_count), int(grid_size), transform=transform)


def apply_semigroup(basis, v, t):
    """Heat semigroup ``S(t) v`` on grid values ``v`` (any leading batch shape).

    For ``t = 0`` this is the projection of ``v`` onto the first J modes.
    """
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return basis.to_grid(basis.to_modes(v) * basis.decay(t))


def kernel_value(basis, t, x, y):
    """Truncated heat kernel ``sum_k exp(-alpha_k t) e_k(x) e_k(y)``.

    ``x`` and ``y`` broadcast against each other.
    """
    if t <= 0:
        raise ValueError(f"kernel is only defined for t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = basis.wavenumbers.reshape((-1,) + (1,) * np.broadcast(x, y).ndim)
    terms = basis.decay(t).reshape(k.shape) * 2.0 * np.sin(k * np.pi * x) * np.sin(k * np.pi * y)
    return terms.sum(axis=0)
