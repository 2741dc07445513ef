"""
Gaussian noise diagonal in the Dirichlet eigenbasis.

``dW(t, x) = sum_j lambda_j e_j(x) dB_j(t)`` with i.i.d. Brownian motions
``B_j``. Regularity is summarized by exponents ``theta`` and ``rho`` and the
derived roughness ``eta = theta (rho - 2) / rho``; ``rho = math.inf`` is the
sup-bounded case where ``eta = theta``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

INF = math.inf

PRESETS = ("trace-class", "white", "custom")


def compute_eta(theta, rho):
    """Roughness ``theta (rho - 2) / rho`` (``theta`` when ``rho`` is infinite).

    Raises
    ------
    ValueError
        If ``theta <= 0``, ``rho < 2`` or the result is ``>= 1`` (solutions
        would not be function-valued).
    """
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    if not rho >= 2:
        raise ValueError(f"rho must be >= 2, got {rho}")
    eta = float(theta) if math.isinf(rho) else theta * (rho - 2) / rho
    if eta >= 1:
        raise ValueError(f"eta = {eta} >= 1: noise too rough for function-valued solutions")
    return eta


@dataclass(frozen=True)
class NoiseSpectrum:
    coefficients: np.ndarray
    theta: float
    rho: float
    preset: str = "custom"
    eta: float = field(init=False)

    def __post_init__(self):
        lam = np.array(self.coefficients, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("coefficients must be a non-empty 1-d sequence")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("coefficients must be finite and nonnegative")
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        lam.setflags(write=False)
        object.__setattr__(self, "coefficients", lam)
        object.__setattr__(self, "eta", compute_eta(self.theta, self.rho))

    @property
    def mode_count(self):
        return self.coefficients.size

    @classmethod
    def trace_class(cls, mode_count, theta=0.51):
        """``lambda_j = 1/j`` with ``rho = 2``, hence ``eta = 0``."""
        return cls(1.0 / np.arange(1, mode_count + 1), theta, 2.0, preset="trace-class")

    @classmethod
    def white(cls, mode_count, theta=0.51):
        """Space-time white noise: ``lambda_j = 1``, ``rho = inf``, ``eta = theta``."""
        return cls(np.ones(mode_count), theta, INF, preset="white")

    @classmethod
    def zero(cls, mode_count):
        return cls(np.zeros(mode_count), 0.51, 2.0)

    def scaled(self, factor):
        return NoiseSpectrum(self.coefficients * factor, self.theta, self.rho, self.preset)

    def to_dict(self):
        return {
            "preset": self.preset,
            "theta": self.theta,
            "rho": "inf" if math.isinf(self.rho) else self.rho,
            "coefficients": self.coefficients.tolist(),
        }

    @classmethod
    def from_dict(cls, d, mode_count=None):
        rho = d.get("rho", 2.0)
        rho = INF if rho in ("inf", "infinity", None) or (
            isinstance(rho, float) and math.isinf(rho)) else float(rho)
        preset = d.get("preset", "custom")
        theta = float(d.get("theta", 0.51))
        scale = float(d.get("scale", 1.0))
        if preset == "trace-class":
            spec = cls.trace_class(mode_count, theta)
        elif preset == "white":
            spec = cls.white(mode_count, theta)
        else:
            spec = cls(d["coefficients"], theta, rho, "custom")
        return spec.scaled(scale) if scale != 1.0 else spec


def _dyadic_ratio(terms):
    """Ratio of the last two dyadic blocks of a positive series.

    Blocks are ``[2^m, 2^(m+1))`` in 1-based index. A ratio below 1 means the
    blocks shrink geometrically, which is how power series ``k^-s`` with
    ``s > 1`` behave; ``s <= 1`` gives ratios ``>= 1``.
    """
    n = len(terms)
    m = int(math.floor(math.log2(n))) if n else 0
    if m < 2:
        return math.nan
    cums = np.concatenate([[0.0], np.cumsum(terms)])
    edges = [2 ** i - 1 for i in range(m + 1)]  # cumsum index of 2^i - 1 terms
    blocks = np.diff(cums[edges])
    if blocks[-2] == 0:
        return 0.0 if blocks[-1] == 0 else math.inf
    return float(blocks[-1] / blocks[-2])


def validate_spectrum(basis, spec):
    """Truncated regularity sums for a noise spectrum against a basis.

    Returns a dict with

    ``noise_sum``
        ``(sum_j lambda_j^rho |e_j|_inf^2)^(2/rho)``, or ``sup_j lambda_j`` for
        infinite ``rho``.
    ``eigen_sum``
        ``sum_k alpha_k^-theta |e_k|_inf^2``.
    ``*_ratio``
        dyadic block ratio of the partial sums; ``*_converges`` is
        ``ratio < 1``.
    """
    if basis.mode_count != spec.mode_count:
        raise ValueError(
            f"basis has {basis.mode_count} modes, spectrum has {spec.mode_count}")
    sup2 = basis.sup_norms ** 2
    lam = spec.coefficients
    if math.isinf(spec.rho):
        noise_sum = float(lam.max())
        noise_ratio = 0.0
    else:
        terms = lam ** spec.rho * sup2
        noise_sum = float(terms.sum() ** (2.0 / spec.rho))
        noise_ratio = _dyadic_ratio(terms)
    eig_terms = basis.eigenvalues ** (-spec.theta) * sup2
    eigen_ratio = _dyadic_ratio(eig_terms)
    report = {
        "noise_sum": noise_sum,
        "noise_ratio": noise_ratio,
        "noise_converges": bool(noise_ratio < 1),
        "eigen_sum": float(eig_terms.sum()),
        "eigen_ratio": eigen_ratio,
        "eigen_converges": bool(eigen_ratio < 1),
        "eta": spec.eta,
    }
    report["ok"] = report["noise_converges"] and report["eigen_converges"]
    return report


# --- counter-based random numbers -------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def derive_key(master_seed, *indices):
    """64-bit stream key from a master seed and indices (cell tag, trial, ...).

    Indices may be integers or strings; the key depends only on their values,
    never on how many other keys were derived before.
    """
    payload = ",".join(str(i) for i in (int(master_seed),) + indices).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(keys, counters):
    """Uniforms in (0, 1) addressed by (key, counter); SplitMix64 output function.

    ``keys`` and ``counters`` broadcast. Equal (key, counter) pairs always give
    the same value, independent of evaluation order or batch composition.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix64(keys + (counters + np.uint64(1)) * _GOLDEN)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


class NoiseStream:
    """Standard normals addressed by (trajectory key, step, mode).

    The value for a given step and mode never depends on how many other
    trajectories are simulated alongside, which keeps paired runs (same key,
    different cutoff level) on the same noise path.
    """

    def __init__(self, keys, mode_count):
        self.keys = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
        self.mode_count = int(mode_count)
        self.step = 0
        self._modes = np.arange(self.mode_count, dtype=np.uint64)

    @classmethod
    def from_seed(cls, seed, mode_count):
        return cls([derive_key(seed)], mode_count)

    def normals(self, step=None, rows=None):
        """Draw ``(n_keys, J)`` normals for ``step`` (defaults to the next step)."""
        if step is None:
            step = self.step
            self.step += 1
        keys = self.keys if rows is None else self.keys[rows]
        counters = np.uint64(step) * np.uint64(self.mode_count) + self._modes
        return ndtri(counter_uniforms(keys[:, None], counters[None, :]))


def sample_increment(spec, dt, rng_stream, step=None, rows=None):
    """Modal Brownian increments ``lambda_j sqrt(dt) Z_j``.

    ``dt`` may be a scalar or one value per stream key. Returns shape
    ``(n_keys, J)``.
    """
    dt = np.asarray(dt, dtype=float)
    if np.any(dt <= 0):
        raise ValueError("dt must be positive")
    z = rng_stream.normals(step, rows)
    scale = np.sqrt(dt)
    if scale.ndim:
        scale = scale[:, None]
    return spec.coefficients * scale * z
