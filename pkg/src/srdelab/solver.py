"""
Exponential-Euler integration of the mild form with cutoff forcing.

One step is ``u <- S(dt) [u + f_n(u) dt + sigma_n(u) dW]``: the nonlinearity
is evaluated on the grid and the semigroup is applied in modal space.
Trajectories are advanced in batches; every row carries its own time and
adaptive step, and its noise is addressed by (row key, step, mode) so results
per row do not depend on what else is in the batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .forcing import Cutoff
from .noise import NoiseStream, derive_key

COMPLETED = "completed"
BLEW_UP = "blew_up"
CUTOFF_SATURATED = "cutoff_saturated"
BUDGET_EXHAUSTED = "budget_exhausted"
ABORTED = "aborted"

BLOWUP_STATUSES = (BLEW_UP, CUTOFF_SATURATED)


def ladder_base(c0):
    """Smallest ``N >= 1`` with ``2 * 3^-N < 1 - c0``."""
    n = 1
    while 2.0 * 3.0 ** -n >= 1.0 - c0:
        n += 1
    return n


@dataclass
class FieldState:
    """Solution on the grid at one time, with its modal coefficients."""

    t: float
    values: np.ndarray
    coeffs: np.ndarray

    @classmethod
    def from_values(cls, basis, values, t=0.0):
        coeffs = basis.to_modes(values)
        return cls(t, basis.to_grid(coeffs), coeffs)

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    @property
    def e(self):
        return 1.0 - self.sup_norm


@dataclass(frozen=True)
class SolverSettings:
    """Time-stepping controls.

    With ``dt_rule="relative"`` (default) the step is::

        dt = min(dt_base, drift_kappa * eb^(beta+1) / K,
                 kappa * (e * eb^gamma / (C * s_W))^2)

    where ``eb = min(e, 1 - c0)`` and ``s_W`` is the grid sup of the noise
    field's standard deviation per unit time. The drift term bounds the drift
    increment by ``drift_kappa * e`` (and keeps explicit stepping stable in the
    bounded core), the noise term bounds the increment's standard deviation
    by ``sqrt(kappa) * e``. ``dt_rule="power"`` uses
    ``min(dt_base, kappa * e^p)`` with ``p = step_exponent`` (default
    ``max(beta, 2 gamma + 1)``).

    ``sample_dt = 0`` records every step.
    """

    t_end: float = 5.0
    dt_base: float = 1e-3
    kappa: float = 2.5e-3
    drift_kappa: float = 0.05
    n_max: int = 12
    sample_dt: float = 0.0
    adaptive: bool = True
    max_steps: int = 5_000_000
    track_z: bool = False
    dt_rule: str = "relative"
    step_exponent: float | None = None

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not (self.dt_base > 0 and self.kappa > 0):
            raise ValueError("dt_base and kappa must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.dt_rule not in ("relative", "power"):
            raise ValueError(f"unknown dt_rule {self.dt_rule!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrajectoryRecord:
    """Sampled ``e(t)``, crossing times ``T_n`` and ladder events of one run.

    ``crossing_times[n - 1]`` is ``T_n`` (NaN if never crossed). Ladder events
    are ``(time, level, e, direction)`` with nominal value ``3^-level``.
    """

    seed: int
    times: np.ndarray
    e_values: np.ndarray
    crossing_times: np.ndarray
    ladder: list
    status: str
    steps: int
    final_time: float
    min_e: float
    ladder_base: int
    z_sup: np.ndarray | None = None
    config_digest: str = ""
    diagnostic: str = ""

    @property
    def blew_up(self):
        return self.status in BLOWUP_STATUSES

    def crossing(self, n):
        return float(self.crossing_times[n - 1])

    def first_crossing(self):
        """Smallest ``n`` with a recorded ``T_n`` (0 if none)."""
        hit = np.flatnonzero(np.isfinite(self.crossing_times))
        return int(hit[0]) + 1 if hit.size else 0

    def to_row(self):
        row = {
            "seed": self.seed,
            "status": self.status,
            "steps": self.steps,
            "final_time": self.final_time,
            "min_e": self.min_e,
            "ladder_events": len(self.ladder),
        }
        for n, tn in enumerate(self.crossing_times, start=1):
            row[f"T_{n}"] = None if math.isnan(tn) else float(tn)
        row["config_digest"] = self.config_digest
        return row


@dataclass
class FrozenPath:
    """Stored Brownian increments and sigma-evaluations along a solution.

    ``increments[j]`` are the raw modal increments ``dB_k`` over
    ``[times[j], times[j+1]]``; ``sigma_values[j]`` is ``sigma(u(times[j]))``
    on the grid.
    """

    times: np.ndarray
    increments: np.ndarray
    sigma_values: np.ndarray

    @property
    def n_steps(self):
        return len(self.times) - 1

    def coarsen(self):
        """Merge consecutive step pairs (left-point sigma, summed increments)."""
        if self.n_steps % 2:
            raise ValueError("coarsening needs an even number of steps")
        return FrozenPath(
            self.times[::2].copy(),
            self.increments[0::2] + self.increments[1::2],
            self.sigma_values[0::2].copy(),
        )


def noise_scale(basis, noise):
    """``max_x sqrt(sum_k lambda_k^2 e_k(x)^2)`` over the grid."""
    return float(np.sqrt((noise.coefficients[:, None] ** 2 * basis._modes ** 2).sum(axis=0)).max())


def adaptive_dt(e, forcing, settings, s_w):
    """Step sizes for distances ``e`` (array) under ``settings.dt_rule``."""
    e = np.maximum(e, 0.0)
    dt = np.full(e.shape, settings.dt_base)
    if not settings.adaptive:
        return dt
    if settings.dt_rule == "power":
        p = settings.step_exponent
        if p is None:
            p = max(forcing.beta, 2.0 * forcing.gamma + 1.0)
        return np.minimum(dt, settings.kappa * e ** p)
    eb = np.minimum(e, 1.0 - forcing.c0)
    dt = np.minimum(dt, settings.drift_kappa * eb ** (forcing.beta + 1.0) / forcing.K)
    if s_w > 0:
        dt = np.minimum(dt, settings.kappa * (e * eb ** forcing.gamma / (forcing.C * s_w)) ** 2)
    return dt


def _forcing_terms(basis, cut, noise, values, dt, dB):
    """Modal coefficients of ``f_n(u) dt`` and ``sigma_n(u) dW``.

    ``dB`` holds raw Brownian increments per mode; ``dW`` pairs them with
    ``lambda_k e_k``.
    """
    drift_modes = basis.to_modes(cut.f(values) * _col(dt))
    if dB is None:
        return drift_modes, None, None
    dW = basis.to_grid(noise.coefficients * dB)
    sig = cut.sigma(values)
    return drift_modes, basis.to_modes(sig * dW), sig


def _col(a):
    a = np.asarray(a)
    return a[..., None] if a.ndim else a


def step(state, cutoff, noise, basis, dt, rng):
    """Advance one exponential-Euler step of size ``dt``.

    ``cutoff`` is a :class:`~srdelab.forcing.Cutoff`; ``rng`` a
    :class:`~srdelab.noise.NoiseStream` with a single key.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    dB = rng.normals()[0] * math.sqrt(dt) if np.any(noise.coefficients) else None
    drift_modes, noise_modes, _ = _forcing_terms(basis, cutoff, noise, state.values, dt, dB)
    total = state.coeffs + drift_modes
    if noise_modes is not None:
        total = total + noise_modes
    coeffs = total * basis.decay(dt)
    values = basis.to_grid(coeffs)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"non-finite state after step at t={state.t}")
    return FieldState(state.t + dt, values, coeffs)


def simulate_batch(basis, forcing, noise, u0, keys, settings, record_path=False,
                   config_digest=""):
    """Integrate one trajectory per key from the common initial grid values ``u0``.

    Returns a list of :class:`TrajectoryRecord` (and a list of
    :class:`FrozenPath` when ``record_path``).
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (basis.grid_size,):
        raise ValueError(f"u0 must have shape ({basis.grid_size},)")
    if np.max(np.abs(u0)) >= 1:
        raise ValueError("initial data must satisfy sup|u0| < 1")
    if noise.mode_count != basis.mode_count:
        raise ValueError("noise and basis mode counts differ")

    keys = np.asarray(keys, dtype=np.uint64)
    B = keys.size
    n_max = settings.n_max
    cut = Cutoff(forcing, n_max)
    stream = NoiseStream(keys, basis.mode_count)
    noisy = bool(np.any(noise.coefficients))
    s_w = noise_scale(basis, noise)
    floor = 3.0 ** -n_max
    thresholds = 3.0 ** -np.arange(1, n_max + 1)
    N = ladder_base(forcing.c0)

    coeffs = np.tile(basis.to_modes(u0), (B, 1))
    values = basis.to_grid(coeffs)
    z_coeffs = np.zeros_like(coeffs) if settings.track_z else None
    t = np.zeros(B)
    e = 1.0 - np.abs(values).max(axis=1)

    status = np.array([COMPLETED] * B, dtype=object)
    steps = np.zeros(B, dtype=np.int64)
    min_e = e.copy()
    crossing = np.full((B, n_max), np.nan)
    deepest = np.zeros(B, dtype=np.int64)
    ladder_level = np.full(B, -1, dtype=np.int64)
    ladder = [[] for _ in range(B)]
    diagnostics = [""] * B

    samples_t = [[0.0] for _ in range(B)]
    samples_e = [[float(e[i])] for i in range(B)]
    samples_z = [[0.0] for _ in range(B)] if settings.track_z else None
    next_sample = np.full(B, settings.sample_dt)
    paths = [dict(t=[0.0], dB=[], sig=[]) for _ in range(B)] if record_path else None

    def update_events(rows, t_now, e_now):
        # crossing times T_n: first time e < 3^-n
        depth = (e_now[:, None] < thresholds[None, :]).sum(axis=1)
        for i, r in enumerate(rows):
            if depth[i] > deepest[r]:
                crossing[r, deepest[r]:depth[i]] = t_now[i]
                deepest[r] = depth[i]
        # ladder of factor-3 levels below 3^-N
        for i, r in enumerate(rows):
            ev = e_now[i]
            lvl = ladder_level[r]
            if lvl < 0:
                if ev <= 3.0 ** -N:
                    lvl = N
                    ladder[r].append((t_now[i], lvl, ev, "start"))
                    while lvl < n_max and ev <= 3.0 ** -(lvl + 1):
                        lvl += 1
                        ladder[r].append((t_now[i], lvl, ev, "down"))
                    ladder_level[r] = lvl
                continue
            moved = False
            while lvl < n_max and ev <= 3.0 ** -(lvl + 1):
                lvl += 1
                ladder[r].append((t_now[i], lvl, ev, "down"))
                moved = True
            if not moved:
                while lvl >= N + 1 and ev >= 3.0 ** -(lvl - 1):
                    lvl -= 1
                    ladder[r].append((t_now[i], lvl, ev, "up"))
            ladder_level[r] = lvl

    all_rows = np.arange(B)
    update_events(all_rows, t, e)
    active = e > floor
    status[~active] = BLEW_UP
    iteration = 0

    while True:
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        over = steps[rows] >= settings.max_steps
        if np.any(over):
            status[rows[over]] = BUDGET_EXHAUSTED
            active[rows[over]] = False
            rows = rows[~over]
            if rows.size == 0:
                break
        er = e[rows]
        dt = adaptive_dt(er, forcing, settings, s_w)
        dt = np.minimum(dt, settings.t_end - t[rows])
        dt = np.maximum(dt, 1e-300)

        vals = values[rows]
        dB = None
        if noisy:
            dB = stream.normals(iteration, rows) * np.sqrt(dt)[:, None]
        drift_modes, noise_modes, sig = _forcing_terms(basis, cut, noise, vals, dt, dB)
        decay = np.exp(-np.outer(dt, basis.eigenvalues))
        new_coeffs = coeffs[rows] + drift_modes
        if noise_modes is not None:
            new_coeffs += noise_modes
        new_coeffs *= decay
        new_values = basis.to_grid(new_coeffs)
        if record_path:
            for i, r in enumerate(rows):
                paths[r]["dB"].append(dB[i] if dB is not None else np.zeros(basis.mode_count))
                paths[r]["sig"].append(
                    sig[i] if sig is not None else cut.sigma(vals[i]))
        if settings.track_z:
            zc = z_coeffs[rows]
            if noise_modes is not None:
                zc = zc + noise_modes
            z_coeffs[rows] = zc * decay

        t_new = t[rows] + dt
        # land exactly on the horizon
        t_new = np.where(settings.t_end - t_new <= 1e-12 * settings.t_end, settings.t_end, t_new)
        finite = np.all(np.isfinite(new_values), axis=1)
        coeffs[rows] = new_coeffs
        values[rows] = new_values
        t[rows] = t_new
        steps[rows] += 1
        e_new = 1.0 - np.abs(new_values).max(axis=1)
        e[rows] = e_new
        min_e[rows] = np.minimum(min_e[rows], e_new)

        update_events(rows, t_new, e_new)

        if record_path:
            for i, r in enumerate(rows):
                paths[r]["t"].append(float(t_new[i]))

        sample = t_new >= next_sample[rows] - 1e-15
        done_blow = e_new <= floor
        done_time = t_new >= settings.t_end
        sample |= done_blow | done_time | ~finite
        if np.any(sample):
            zsup = None
            if settings.track_z:
                zsup = np.abs(basis.to_grid(z_coeffs[rows[sample]])).max(axis=1)
            for j, i in enumerate(np.flatnonzero(sample)):
                r = rows[i]
                samples_t[r].append(float(t_new[i]))
                samples_e[r].append(float(e_new[i]))
                if zsup is not None:
                    samples_z[r].append(float(zsup[j]))
                if settings.sample_dt > 0:
                    next_sample[r] = (math.floor(t_new[i] / settings.sample_dt) + 1) * settings.sample_dt

        for i in np.flatnonzero(~finite):
            r = rows[i]
            status[r] = ABORTED
            diagnostics[r] = f"non-finite state at t={t_new[i]:.6g}, step {steps[r]}"
            active[r] = False
        ok = finite
        blow = ok & done_blow
        status[rows[blow & (e_new <= 0)]] = CUTOFF_SATURATED
        status[rows[blow & (e_new > 0)]] = BLEW_UP
        active[rows[blow]] = False
        active[rows[ok & ~done_blow & done_time]] = False
        iteration += 1

    records = []
    for r in range(B):
        records.append(TrajectoryRecord(
            seed=int(keys[r]),
            times=np.array(samples_t[r]),
            e_values=np.array(samples_e[r]),
            crossing_times=crossing[r].copy(),
            ladder=ladder[r],
            status=str(status[r]),
            steps=int(steps[r]),
            final_time=float(t[r]),
            min_e=float(min_e[r]),
            ladder_base=N,
            z_sup=np.array(samples_z[r]) if settings.track_z else None,
            config_digest=config_digest,
            diagnostic=diagnostics[r],
        ))
    if record_path:
        frozen = [FrozenPath(np.array(p["t"]), np.array(p["dB"]).reshape(-1, basis.mode_count),
                             np.array(p["sig"]).reshape(-1, basis.grid_size)) for p in paths]
        return records, frozen
    return records


def run_trajectory(basis, forcing, noise, u0, settings, rng_seed, config_digest=""):
    """Single trajectory with stream key derived from ``rng_seed``."""
    key = derive_key(rng_seed)
    return simulate_batch(basis, forcing, noise, u0, [key], settings,
                          config_digest=config_digest)[0]
