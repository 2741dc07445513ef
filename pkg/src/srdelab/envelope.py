"""
Deterministic growth envelope for the distance to the boundary and its audit.

While ``|Z|_inf <= e/3`` and ``e <= 3^-N`` hold on ``[0, T]``::

    e(t) >= 3/4 (e0^(beta+1) + K (2/5)^beta (1+beta) t)^(1/(beta+1))

``audit`` scans a trajectory for maximal windows where both hypotheses hold
and checks the envelope in each, re-based at the window start.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .solver import ladder_base


@dataclass(frozen=True)
class EnvelopeSpec:
    e0: float
    beta: float
    K: float = 1.0
    c0: float = 0.5
    N: int = field(init=False)

    def __post_init__(self):
        if not 0 < self.e0 <= 1:
            raise ValueError(f"e0 must lie in (0, 1], got {self.e0}")
        if not (self.beta > 0 and self.K > 0):
            raise ValueError("beta and K must be positive")
        object.__setattr__(self, "N", ladder_base(self.c0))

    @property
    def rate(self):
        """``K (2/5)^beta (1 + beta)``."""
        return self.K * 0.4 ** self.beta * (1.0 + self.beta)

    @property
    def k_beta(self):
        """Constant of the ``t^(1/(beta+1))`` lower bound."""
        return 0.75 * self.rate ** (1.0 / (self.beta + 1.0))

    def rebased(self, e0):
        return EnvelopeSpec(e0, self.beta, self.K, self.c0)


def envelope(spec, t):
    """Lower envelope for ``e(t)``; vectorized over ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    p = spec.beta + 1.0
    out = 0.75 * (spec.e0 ** p + spec.rate * t) ** (1.0 / p)
    return out[()] if out.ndim == 0 else out


@dataclass
class AuditReport:
    windows: list
    violations: list
    samples_checked: int

    @property
    def passed(self):
        return not self.violations

    @property
    def vacuous(self):
        return not self.windows

    @property
    def worst_margin(self):
        """Smallest ``e - envelope`` over checked samples (``inf`` if none)."""
        margins = [w["min_margin"] for w in self.windows]
        return min(margins) if margins else float("inf")

    def summary(self):
        if self.vacuous:
            return "no qualifying window"
        state = "pass" if self.passed else f"{len(self.violations)} violations"
        return f"{len(self.windows)} windows, {self.samples_checked} samples, {state}"


def audit(times, e_values, z_sup, spec):
    """Check the envelope on every maximal window where its hypotheses hold.

    Parameters
    ----------
    times, e_values, z_sup : array_like
        Samples of time, ``e(t)`` and ``|Z(t)|_inf``.
    spec : EnvelopeSpec
        Supplies ``beta``, ``K`` and the level ``N``; its ``e0`` is ignored
        because each window is re-based at its first sample.

    Windows shorter than two samples are skipped.
    """
    times = np.asarray(times, dtype=float)
    e_values = np.asarray(e_values, dtype=float)
    z_sup = np.asarray(z_sup, dtype=float)
    ok = (z_sup <= e_values / 3.0) & (e_values <= 3.0 ** -spec.N) & (e_values > 0)
    windows, violations = [], []
    checked = 0
    edges = np.flatnonzero(np.diff(np.concatenate([[0], ok.astype(int), [0]])))
    for start, stop in zip(edges[::2], edges[1::2]):
        if stop - start < 2:
            continue
        local = spec.rebased(e_values[start])
        bound = envelope(local, times[start:stop] - times[start])
        margin = e_values[start:stop] - bound
        checked += stop - start
        windows.append({
            "start": float(times[start]),
            "stop": float(times[stop - 1]),
            "samples": int(stop - start),
            "min_margin": float(margin.min()),
        })
        for i in np.flatnonzero(margin < 0):
            violations.append({"time": float(times[start + i]), "margin": float(margin[i])})
    return AuditReport(windows, violations, checked)


def audit_record(record, spec):
    """Audit a :class:`~srdelab.solver.TrajectoryRecord` simulated with ``track_z``."""
    if record.z_sup is None:
        raise ValueError("record has no |Z| samples; simulate with track_z=True")
    return audit(record.times, record.e_values, record.z_sup, spec)
