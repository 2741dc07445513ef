"""
Stochastic convolution ``Z(t) = int_0^t S(t-s) sigma(u(s)) dW(s)`` on a frozen path.

Two independent discretizations over the same stored increments:

* :func:`stochastic_convolution_direct` sums the semigroup-propagated
  increments, ``Z_k(t_n) = sum_{j<n} exp(-alpha_k (t_n - t_j)) G_jk``.
* :func:`stochastic_convolution_factorized` first builds the fractional
  process ``Z_a(s) = sum_{t_j < s} (s - t_j)^-a S(s - t_j) G_j`` at cell
  midpoints, then integrates ``sin(pi a)/pi (t - s)^(a-1) S(t - s) Z_a(s)``
  with the kernel integrated exactly over each cell.

Here ``G_j`` is the modal projection of ``sigma(u(t_j)) dW_j``.
"""
from __future__ import annotations

import math

import numpy as np


def _forcing_modes(path, basis, noise):
    dW = basis.to_grid(noise.coefficients * path.increments)
    return basis.to_modes(path.sigma_values * dW)


def stochastic_convolution_direct(path, basis, noise, modal=False):
    """Direct discrete sum; returns ``(n_steps + 1, M)`` grid values (or modes)."""
    G = _forcing_modes(path, basis, noise)
    times = path.times
    Z = np.zeros((len(times), basis.mode_count))
    for n in range(1, len(times)):
        Z[n] = (Z[n - 1] + G[n - 1]) * basis.decay(times[n] - times[n - 1])
    return Z if modal else basis.to_grid(Z)


def stochastic_convolution_factorized(path, basis, noise, alpha, modal=False):
    """Factorization route with exponent ``alpha`` in ``(0, (1 - eta)/2)``."""
    upper = (1.0 - noise.eta) / 2.0
    if not 0 < alpha < upper:
        raise ValueError(f"alpha must lie in (0, {upper:g}), got {alpha}")
    G = _forcing_modes(path, basis, noise)
    t = path.times
    n = len(t) - 1
    lam = basis.eigenvalues
    mid = 0.5 * (t[:-1] + t[1:])

    # Z_a at cell midpoints: increments j <= m contribute.
    Za = np.empty((n, basis.mode_count))
    for m in range(n):
        lag = mid[m] - t[:m + 1]
        w = lag[:, None] ** -alpha * np.exp(-np.outer(lag, lam))
        Za[m] = (w * G[:m + 1]).sum(axis=0)

    Z = np.zeros((n + 1, basis.mode_count))
    scale = math.sin(math.pi * alpha) / math.pi
    for k in range(1, n + 1):
        tk = t[k]
        # exact integral of (tk - s)^(alpha - 1) over each cell [t_m, t_{m+1}]
        left, right = tk - t[:k], tk - t[1:k + 1]
        weights = (left ** alpha - right ** alpha) / alpha
        prop = np.exp(-np.outer(tk - mid[:k], lam))
        Z[k] = scale * (weights[:, None] * prop * Za[:k]).sum(axis=0)
    return Z if modal else basis.to_grid(Z)


def sup_discrepancy(a, b):
    """Space-time sup-norm of ``a - b``."""
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
