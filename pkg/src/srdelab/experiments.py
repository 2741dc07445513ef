"""
Experiment drivers behind the CLI.

Every driver returns plain rows (dicts) with a fixed column list so tables
are byte-stable. Trajectory seeds are derived from the master seed and a
cell tag built from the cell's parameters, so removing or reordering cells
never changes another cell's numbers.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.stats import binomtest

from .convolution import (stochastic_convolution_direct,
                          stochastic_convolution_factorized, sup_discrepancy)
from .envelope import EnvelopeSpec, audit, envelope
from .forcing import check_condition
from .noise import NoiseSpectrum, derive_key
from .sde import SdeProblem, exit_prob_mc, exit_prob_scale, log_exit_prob_scale
from .solver import (ABORTED, BLEW_UP, BLOWUP_STATUSES, BUDGET_EXHAUSTED, COMPLETED,
                     CUTOFF_SATURATED, ladder_base, simulate_batch)
from .spectral import build_basis

CHUNK = 100
PROTOCOL_NOTE = "sweep design and thresholds are this tool's own choices"


def cell_tag(cell):
    return "beta={beta!r};gamma={gamma!r};theta={theta!r}".format(**cell)


def wilson(successes, trials, level=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return math.nan, math.nan
    ci = binomtest(int(successes), int(trials)).proportion_ci(level, method="wilson")
    return float(ci.low), float(ci.high)


def _quantile(values, q):
    return float(np.quantile(values, q)) if len(values) else math.nan


def _mean(values):
    return float(np.mean(values)) if len(values) else math.nan


# --- trajectory batches ------------------------------------------------------

def _run_chunk(job):
    config, cell, start, stop = job
    basis = config.basis()
    noise = config.noise(basis, theta=cell["theta"])
    forcing = config.forcing(beta=cell["beta"], gamma=cell["gamma"])
    settings = config.settings()
    tag = cell_tag(cell)
    keys = [derive_key(config["seed"], tag, i) for i in range(start, stop)]
    return simulate_batch(basis, forcing, noise, config.initial_values(basis), keys,
                          settings, config_digest=config.digest())


def run_cell(config, cell, threads=1):
    """All ``trials`` trajectories of one cell, in trial order."""
    trials = int(config["trials"])
    jobs = [(config, cell, s, min(s + CHUNK, trials)) for s in range(0, trials, CHUNK)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_chunk, jobs))
    else:
        chunks = [_run_chunk(job) for job in jobs]
    return [rec for chunk in chunks for rec in chunk]


# --- sweep -------------------------------------------------------------------

def sweep_columns(n_max):
    cols = ["beta", "gamma", "theta", "eta", "margin", "condition_holds", "trials",
            "blowups", "completed", "budget_exhausted", "aborted", "freq", "se",
            "ci_low", "ci_high", "min_e_mean", "min_e_q10", "min_e_q50", "min_e_q90"]
    cols += [f"mean_T_{n}" for n in range(1, n_max + 1)]
    return cols + ["error"]


def summarize_cell(cell, eta, records):
    """Aggregate one cell's records; order-independent apart from float sums."""
    holds, margin = check_condition(cell["beta"], cell["gamma"], eta)
    statuses = [r.status for r in records]
    trials = len(records)
    blowups = sum(s in BLOWUP_STATUSES for s in statuses)
    aborted = statuses.count(ABORTED)
    finished = trials - aborted
    freq = blowups / finished if finished else math.nan
    se = math.sqrt(freq * (1 - freq) / finished) if finished else math.nan
    lo, hi = wilson(blowups, finished)
    min_e = sorted(r.min_e for r in records if r.status != ABORTED)
    row = dict(cell, eta=eta, margin=margin, condition_holds=holds, trials=trials,
               blowups=blowups, completed=statuses.count(COMPLETED),
               budget_exhausted=statuses.count(BUDGET_EXHAUSTED), aborted=aborted,
               freq=freq, se=se, ci_low=lo, ci_high=hi,
               min_e_mean=_mean(min_e), min_e_q10=_quantile(min_e, 0.1),
               min_e_q50=_quantile(min_e, 0.5), min_e_q90=_quantile(min_e, 0.9), error="")
    if records:
        crossings = np.array([r.crossing_times for r in records])
        for n in range(1, crossings.shape[1] + 1):
            hit = np.sort(crossings[:, n - 1][np.isfinite(crossings[:, n - 1])])
            row[f"mean_T_{n}"] = _mean(hit)
    return row


def run_sweep(config, threads=1, traces=False):
    """Blow-up statistics for every cell of the sweep grid.

    Returns ``(rows, columns, trace_rows, runtimes)``. A cell that raises is
    reported with its ``error`` column filled; the sweep continues.
    """
    n_max = config["solver"]["n_max"]
    basis = config.basis()
    rows, trace_rows, runtimes = [], [], {}
    for cell in config.cells():
        tag = cell_tag(cell)
        start = time.perf_counter()
        eta = config.noise(basis, theta=cell["theta"]).eta
        try:
            records = run_cell(config, cell, threads)
        except Exception as exc:  # keep sweeping, record the failure
            row = dict(cell, eta=eta, trials=0, error=f"{type(exc).__name__}: {exc}")
            row["margin"] = check_condition(cell["beta"], cell["gamma"], eta)[1]
            rows.append(row)
            runtimes[tag] = time.perf_counter() - start
            continue
        rows.append(summarize_cell(cell, eta, records))
        if traces:
            for trial, rec in enumerate(records):
                for t, e in zip(rec.times, rec.e_values):
                    trace_rows.append(dict(cell, trial=trial, time=t, e=e))
        runtimes[tag] = time.perf_counter() - start
    return rows, sweep_columns(n_max), trace_rows, runtimes


TRACE_COLUMNS = ["beta", "gamma", "theta", "trial", "time", "e"]


# --- single trajectory -------------------------------------------------------

def simulate_one(config, trial=0):
    """One trajectory of the first sweep cell with every sample kept.

    Returns ``(summary_rows, summary_columns, trace_rows, trace_columns)``.
    """
    cell = config.cells()[0]
    basis = config.basis()
    noise = config.noise(basis, theta=cell["theta"])
    forcing = config.forcing(beta=cell["beta"], gamma=cell["gamma"])
    settings = config.settings(track_z=True)
    key = derive_key(config["seed"], cell_tag(cell), trial)
    rec = simulate_batch(basis, forcing, noise, config.initial_values(basis), [key],
                         settings, config_digest=config.digest())[0]
    summary = dict(cell, trial=trial, **rec.to_row())
    summary["diagnostic"] = rec.diagnostic
    trace = [{"time": t, "e": e, "z_sup": z}
             for t, e, z in zip(rec.times, rec.e_values, rec.z_sup)]
    return [summary], list(summary), trace, ["time", "e", "z_sup"]


# --- ladder probe ------------------------------------------------------------

LADDER_COLUMNS = ["beta", "gamma", "theta", "level", "eps", "events", "drops", "freq",
                  "ci_low", "ci_high", "status", "slope", "slope_consistent"]


def ladder_events(records, level):
    """``(drop, duration)`` for every arrival at ``3^-level``.

    An event's successor is the next ladder move of the same trajectory; it
    is a drop when it goes one level down. Arrivals with no later move are
    censored and count as no drop (``duration = inf``).
    """
    out = []
    for rec in records:
        moves = rec.ladder
        for i, (t, lvl, _, _) in enumerate(moves):
            if lvl != level:
                continue
            if i + 1 < len(moves):
                t_next, lvl_next = moves[i + 1][0], moves[i + 1][1]
                out.append((lvl_next == level + 1, t_next - t))
            else:
                out.append((False, math.inf))
    return out


def log_log_slope(eps, freq):
    """Least-squares slope of ``log freq`` against ``log eps`` over positive frequencies."""
    eps, freq = np.asarray(eps, float), np.asarray(freq, float)
    keep = freq > 0
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(eps[keep]), np.log(freq[keep]), 1)[0])


def ladder_decay_probe(config, level=None, eps=None, threads=1):
    """Frequency of a one-level drop within time ``eps`` after arriving at ``3^-level``."""
    level = int(config["ladder"]["level"] if level is None else level)
    eps = sorted(float(x) for x in (config["ladder"]["eps"] if eps is None else eps))
    N = ladder_base(config["forcing"]["c0"])
    if level < N + 1:
        raise ValueError(f"level must be >= {N + 1}")
    if level >= config["solver"]["n_max"]:
        raise ValueError("level must be below n_max")
    thresholds = config["thresholds"]
    rows = []
    for cell in config.cells():
        records = run_cell(config, cell, threads)
        events = ladder_events(records, level)
        cell_rows = []
        for e in eps:
            drops = sum(d and dur < e for d, dur in events)
            n = len(events)
            lo, hi = wilson(drops, n)
            cell_rows.append(dict(cell, level=level, eps=e, events=n, drops=drops,
                                  freq=drops / n if n else math.nan, ci_low=lo, ci_high=hi,
                                  status="ok" if n >= thresholds["min_events"] else "inconclusive"))
        conclusive = [r for r in cell_rows if r["status"] == "ok"]
        slope = log_log_slope([r["eps"] for r in conclusive], [r["freq"] for r in conclusive])
        for r in cell_rows:
            r["slope"] = slope
            r["slope_consistent"] = bool(slope > thresholds["slope"]) if not math.isnan(slope) else ""
        rows.extend(cell_rows)
    return rows, LADDER_COLUMNS


# --- envelope verification ---------------------------------------------------

LEMMA_COLUMNS = ["beta", "noise_scale", "e0", "samples", "min_e", "floor", "min_margin",
                 "envelope_ok", "floor_ok", "audit_windows", "audit_samples",
                 "audit_violations", "audit_worst_margin"]


def verify_lemma(config):
    """Envelope checks from ``e(0) = 3^-N`` with the first-eigenfunction profile.

    For each ``beta`` and noise scale, one trajectory is sampled at every
    step. ``min_margin`` compares all samples with the envelope started at
    ``e(0)``; the audit columns re-check only windows where the envelope's
    hypotheses hold.
    """
    lem = config["lemma"]
    basis = config.basis()
    c0 = config["forcing"]["c0"]
    N = ladder_base(c0)
    shape = np.sin(np.pi * basis.grid)
    u0 = (1.0 - 3.0 ** -N) * shape / shape.max()
    rows = []
    for beta in lem["beta"]:
        forcing = config.forcing(beta=float(beta))
        for scale in lem["noise_scales"]:
            scale = float(scale)
            noise = (NoiseSpectrum.zero(basis.mode_count) if scale == 0
                     else config.noise(basis).scaled(scale))
            settings = config.settings(t_end=lem["t_end"], dt_base=lem["dt_base"],
                                       sample_dt=0.0, track_z=True)
            key = derive_key(config["seed"], "lemma", repr(float(beta)), repr(scale))
            rec = simulate_batch(basis, forcing, noise, u0, [key], settings)[0]
            spec = EnvelopeSpec(float(rec.e_values[0]), float(beta), forcing.K, c0)
            margin = rec.e_values - envelope(spec, rec.times)
            report = audit(rec.times, rec.e_values, rec.z_sup, spec)
            floor = 3.0 ** -(N + 1)
            rows.append({
                "beta": float(beta), "noise_scale": scale, "e0": float(rec.e_values[0]),
                "samples": len(rec.times), "min_e": float(rec.e_values.min()), "floor": floor,
                "min_margin": float(margin.min()), "envelope_ok": bool(margin.min() >= 0),
                "floor_ok": bool(rec.e_values.min() > floor),
                "audit_windows": len(report.windows), "audit_samples": report.samples_checked,
                "audit_violations": len(report.violations),
                "audit_worst_margin": report.worst_margin,
            })
    return rows, LEMMA_COLUMNS


# --- factorization -----------------------------------------------------------

FACTOR_COLUMNS = ["seed", "steps", "dt", "alpha", "discrepancy", "z_sup", "decreasing"]


def factorization_check(config):
    """Direct vs factorized stochastic convolution on frozen paths.

    For each seed a path is simulated with ``steps * 2^(levels-1)`` fixed
    steps and coarsened pairwise; each level is compared on the same noise.
    """
    fc = config["factorization"]
    basis = build_basis(fc["mode_count"], fc["grid_size"])
    noise = NoiseSpectrum.from_dict(config["noise"], basis.mode_count)
    forcing = config.forcing()
    levels = int(fc["levels"])
    fine = int(fc["steps"]) * 2 ** (levels - 1)
    settings = config.settings(t_end=fc["t_end"], dt_base=fc["t_end"] / fine,
                               adaptive=False, sample_dt=0.0)
    shape = np.sin(np.pi * basis.grid)
    u0 = config["u0"].get("amplitude", 0.5) * shape / shape.max()
    rows = []
    for seed in range(int(fc["seeds"])):
        key = derive_key(config["seed"], "factorization", seed)
        recs, paths = simulate_batch(basis, forcing, noise, u0, [key], settings,
                                     record_path=True)
        path = paths[0]
        if recs[0].status != COMPLETED:
            raise RuntimeError(f"factorization path {seed} ended early: {recs[0].status}")
        level_rows = []
        for _ in range(levels):
            zd = stochastic_convolution_direct(path, basis, noise)
            zf = stochastic_convolution_factorized(path, basis, noise, fc["alpha"])
            level_rows.append({"seed": seed, "steps": path.n_steps,
                               "dt": fc["t_end"] / path.n_steps, "alpha": fc["alpha"],
                               "discrepancy": sup_discrepancy(zd, zf),
                               "z_sup": float(np.abs(zd).max())})
            if path.n_steps % 2:
                break
            path = path.coarsen()
        level_rows.sort(key=lambda r: r["steps"])
        for coarse, finer in zip(level_rows[:-1], level_rows[1:]):
            finer["decreasing"] = finer["discrepancy"] < coarse["discrepancy"]
        level_rows[0]["decreasing"] = ""
        rows.extend(level_rows)
    return rows, FACTOR_COLUMNS


# --- scalar SDE --------------------------------------------------------------

SDE_COLUMNS = ["beta", "gamma", "eps_low", "x0", "b_high", "p_scale", "log_p_scale",
               "p_mc", "se_mc", "trials", "unfinished", "z_score", "within"]


def sde_exit(config):
    """Scale-function and Monte Carlo exit probabilities on the configured grid."""
    sd = config["sde"]
    n_se = config["thresholds"]["n_se"]
    rows = []
    for beta in sd["beta"]:
        for gamma in sd["gamma"]:
            for eps in sd["eps_low"]:
                prob = SdeProblem(float(beta), float(gamma), float(sd["x0"]), float(eps),
                                  float(sd["b_high"]))
                p = exit_prob_scale(prob)
                row = {"beta": prob.beta, "gamma": prob.gamma, "eps_low": prob.eps_low,
                       "x0": prob.x0, "b_high": prob.b_high, "p_scale": p,
                       "log_p_scale": log_exit_prob_scale(prob)}
                trials = int(sd["trials"])
                if trials > 0:
                    seed = derive_key(config["seed"], "sde", repr(prob.beta), repr(prob.gamma),
                                      repr(prob.eps_low))
                    mc = exit_prob_mc(prob, sd["dt"], trials, seed, kappa=sd["kappa"])
                    z = (mc.probability - p) / mc.std_error if mc.std_error > 0 else math.nan
                    row.update(p_mc=mc.probability, se_mc=mc.std_error, trials=trials,
                               unfinished=mc.unfinished, z_score=z,
                               within=mc.within(p, n_se))
                rows.append(row)
    return rows, SDE_COLUMNS


# --- condition table ---------------------------------------------------------

CONDITION_COLUMNS = ["beta", "gamma", "eta", "margin", "holds"]


def condition_table(config):
    cc = config["condition"]
    rows = []
    for beta in cc["beta"]:
        for gamma in cc["gamma"]:
            for eta in cc["eta"]:
                holds, margin = check_condition(float(beta), float(gamma), float(eta))
                rows.append({"beta": float(beta), "gamma": float(gamma), "eta": float(eta),
                             "margin": margin, "holds": holds})
    return rows, CONDITION_COLUMNS


__all__ = [
    "PROTOCOL_NOTE", "cell_tag", "wilson", "run_cell", "run_sweep", "summarize_cell",
    "simulate_one", "ladder_events", "ladder_decay_probe", "log_log_slope", "verify_lemma",
    "factorization_check", "sde_exit", "condition_table", "BLEW_UP", "CUTOFF_SATURATED",
]
