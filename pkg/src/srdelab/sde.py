"""
Exit problem for the scalar diffusion ``dX = X^-beta dt + X^-gamma dB``.

``exit_prob_scale`` returns P(hit ``eps_low`` before ``b_high``) from the
scale function::

    s'(y) = exp(-2 Phi(y)),   Phi(y) = int_{x0}^{y} z^(2 gamma - beta) dz

    P = int_{x0}^{b} s' / int_{eps}^{b} s'.

``Phi`` is elementary, so the lower integral is computed in the variable
``psi = Phi(y) - Phi(eps)`` where ``s'`` decays like ``exp(-2 psi)``; this
keeps the quadrature well-conditioned when ``s'`` spans hundreds of orders of
magnitude near ``eps``. ``exit_prob_mc`` is the Euler-Maruyama check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import expit

from .noise import derive_key


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SdeProblem:
    beta: float
    gamma: float
    x0: float
    eps_low: float
    b_high: float = 1.0

    def __post_init__(self):
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be nonnegative")
        if not 0 < self.eps_low < self.x0 < self.b_high:
            raise ValueError(
                f"need 0 < eps_low < x0 < b_high, got {self.eps_low}, {self.x0}, {self.b_high}")

    @property
    def power(self):
        return 2.0 * self.gamma - self.beta

    def phi(self, y):
        """``int_{x0}^{y} z^p dz`` with ``p = 2 gamma - beta``."""
        p, x0 = self.power, self.x0
        y = np.asarray(y, dtype=float)
        if p == -1.0:
            return np.log(y / x0)
        return (y ** (p + 1) - x0 ** (p + 1)) / (p + 1)

    def phi_inverse(self, value):
        p, x0 = self.power, self.x0
        value = np.asarray(value, dtype=float)
        if p == -1.0:
            return x0 * np.exp(value)
        base = x0 ** (p + 1) + (p + 1) * value
        return np.maximum(base, 0.0) ** (1.0 / (p + 1))

    def condition_holds(self):
        """``gamma + 1 < (beta + 1) / 2``: hitting 0 is impossible."""
        return self.gamma + 1 < (self.beta + 1) / 2


def _quad(func, a, b, what, points=None):
    with np.errstate(over="ignore", under="ignore"):
        val, err, info = integrate.quad(func, a, b, points=points, limit=500,
                                        epsabs=0.0, epsrel=1e-10, full_output=1)[:3]
    if not np.isfinite(val) or (val > 0 and err > 1e-6 * val + 1e-300):
        raise QuadratureError(f"quadrature for {what} did not converge: value={val}, error={err}")
    return val


def _log_lower_integral(problem):
    """``log int_{eps}^{x0} exp(-2 Phi(y)) dy``."""
    phi_eps = float(problem.phi(problem.eps_low))  # <= 0
    span = -phi_eps
    p = problem.power

    def integrand(psi):
        y = problem.phi_inverse(phi_eps + psi)
        # dy = dpsi / y^p
        return np.exp(-2.0 * psi) * y ** (-p)

    # mass sits within a few units of psi = 0; past the cap the exponential
    # factor has beaten any growth of y^-p on [eps, x0]
    cap = min(span, 40.0 + abs(p) * math.log(problem.x0 / problem.eps_low))
    breaks = [c for c in (0.5, 2.0, 8.0, 20.0) if c < cap]
    head = _quad(integrand, 0.0, cap, "lower scale integral", points=breaks or None)
    tail = 0.0
    if span > cap:
        y_cap = float(problem.phi_inverse(phi_eps + cap))
        tail = _quad(lambda y: np.exp(-2.0 * (problem.phi(y) - phi_eps)), y_cap, problem.x0,
                     "lower scale tail")
    total = head + tail
    if total <= 0:
        raise QuadratureError("lower scale integral vanished")
    return -2.0 * phi_eps + math.log(total)


def _log_upper_integral(problem):
    """``log int_{x0}^{b} exp(-2 Phi(y)) dy`` (integrand <= 1)."""
    val = _quad(lambda y: np.exp(-2.0 * problem.phi(y)), problem.x0, problem.b_high,
                "upper scale integral")
    return math.log(val) if val > 0 else -math.inf


def exit_prob_scale(problem):
    """Probability of reaching ``eps_low`` before ``b_high`` from ``x0``."""
    log_upper = _log_upper_integral(problem)
    log_lower = _log_lower_integral(problem)
    if log_upper == -math.inf:
        return 1.0
    # P = U / (U + L)
    return float(expit(log_upper - log_lower))


@dataclass
class McEstimate:
    probability: float
    stderr: float
    trials: int
    hits_low: int
    hits_high: int
    unfinished: int

    def within(self, value, n_se=3.0):
        se = max(self.stderr, 1.0 / self.trials)
        return abs(self.probability - value) <= n_se * se


def exit_prob_mc(problem, dt, trials, seed=0, kappa=1e-3, max_steps=2_000_000,
                 bridge=True, noise=True):
    """Euler-Maruyama estimate with absorption at both barriers.

    The step for each path is ``min(dt, kappa * X^max(beta, 2 gamma + 1))``
    (the same clamp the PDE solver's power rule uses). With ``bridge`` the
    probability that the interpolating Brownian bridge touched a barrier
    inside a step is accounted for. ``noise=False`` switches off the
    diffusion term. Paths still alive after ``max_steps`` are reported as
    ``unfinished`` and left out of the estimate.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if not dt > 0:
        raise ValueError("dt must be positive")
    rng = np.random.Generator(np.random.Philox(key=derive_key(seed, "sde")))
    beta, gamma = problem.beta, problem.gamma
    lo, hi = problem.eps_low, problem.b_high
    exponent = max(beta, 2.0 * gamma + 1.0)

    x = np.full(trials, problem.x0)
    alive = np.arange(trials)
    outcome = np.zeros(trials, dtype=np.int8)  # -1 low, +1 high, 0 running
    for _ in range(max_steps):
        if alive.size == 0:
            break
        xa = x[alive]
        h = np.minimum(dt, kappa * xa ** exponent)
        sig = xa ** -gamma if noise else np.zeros_like(xa)
        xn = xa + xa ** -beta * h + sig * np.sqrt(h) * rng.standard_normal(alive.size)
        low = xn <= lo
        high = xn >= hi
        if bridge and noise:
            var = sig ** 2 * h
            u = rng.random(alive.size)
            inside = ~(low | high)
            with np.errstate(over="ignore", divide="ignore"):
                p_low = np.exp(-2.0 * (xa - lo) * (xn - lo) / var)
                p_high = np.exp(-2.0 * (hi - xa) * (hi - xn) / var)
            # the bridge can touch at most one barrier in practice; test low first
            touch_low = inside & (u < p_low)
            touch_high = inside & ~touch_low & (u >= p_low) & (u < p_low + p_high)
            low |= touch_low
            high |= touch_high
        outcome[alive[low]] = -1
        outcome[alive[high & ~low]] = 1
        x[alive] = xn
        alive = alive[~(low | high)]
    hits_low = int((outcome == -1).sum())
    hits_high = int((outcome == 1).sum())
    done = hits_low + hits_high
    p = hits_low / done if done else math.nan
    se = math.sqrt(p * (1 - p) / done) if done else math.nan
    return McEstimate(p, se, done, hits_low, hits_high, trials - done)
