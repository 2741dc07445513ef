"""Experiment configuration: loading, validation, digests, and object builders."""
from __future__ import annotations

import copy
import hashlib
import itertools
import json
import math
from pathlib import Path

import numpy as np
import yaml

from .forcing import ForcingSpec, check_condition
from .noise import NoiseSpectrum
from .solver import SolverSettings
from .spectral import build_basis


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 1)."""


DEFAULTS = {
    "basis": {"mode_count": 64, "grid_size": 255, "transform": "direct"},
    "noise": {"preset": "trace-class", "theta": 0.51, "scale": 1.0},
    "forcing": {"beta": 4.0, "gamma": 0.25, "c0": 0.5, "C": 1.0, "K": 1.0},
    "u0": {"profile": "eigenfunction", "amplitude": 0.5},
    "solver": {"t_end": 5.0, "dt_base": 1e-3, "kappa": 2.5e-3, "drift_kappa": 0.05,
               "dt_rule": "relative", "n_max": 12, "sample_dt": 0.01,
               "max_steps": 5_000_000},
    "sweep": {"beta": None, "gamma": None, "theta": None},
    "trials": 200,
    "seed": 0,
    "thresholds": {"n_se": 3.0, "slope": 1.0, "min_events": 5},
    "ladder": {"level": 3, "eps": [0.001, 0.003, 0.01, 0.03, 0.1]},
    "lemma": {"beta": [1.0, 2.0, 3.0], "t_end": 0.1, "dt_base": 1e-4,
              "noise_scales": [0.0, 1e-3]},
    "factorization": {"mode_count": 8, "grid_size": 32, "t_end": 0.1, "steps": 2000,
                      "alpha": 0.3, "levels": 2, "seeds": 3},
    "sde": {"beta": [0.0, 1.0, 2.0], "gamma": [0.0, 0.5, 1.0], "eps_low": [0.2],
            "x0": 0.5, "b_high": 1.0, "dt": 2e-5, "kappa": 0.01, "trials": 10000},
    "condition": {"beta": [0.5, 1.0, 2.0, 3.0, 4.0], "gamma": [0.0, 0.25, 0.5],
                  "eta": [0.0, 0.5]},
    "output": {"dir": "results", "format": "csv", "traces": False},
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _jsonable(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


class ExperimentConfig:
    """Nested experiment settings over :data:`DEFAULTS`.

    Sections are plain dicts (``cfg["solver"]["t_end"]``) so configs round-trip
    through JSON/YAML unchanged.
    """

    def __init__(self, data=None):
        self.data = _merge(DEFAULTS, data or {})
        self.validate()

    def __getitem__(self, key):
        return self.data[key]

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            if path.suffix in (".yaml", ".yml"):
                data = yaml.safe_load(text)
            else:
                data = json.loads(text)
        except (ValueError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls(data)

    def updated(self, **sections):
        return ExperimentConfig(_merge(self.data, sections))

    def to_dict(self):
        return _jsonable(copy.deepcopy(self.data))

    def digest(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    # --- builders -----------------------------------------------------------

    def basis(self):
        b = self.data["basis"]
        return build_basis(b["mode_count"], b["grid_size"], b.get("transform", "direct"))

    def noise(self, basis=None, theta=None):
        basis = basis or self.basis()
        d = dict(self.data["noise"])
        if theta is not None:
            d["theta"] = theta
        return NoiseSpectrum.from_dict(d, basis.mode_count)

    def forcing(self, **override):
        return ForcingSpec(**{**self.data["forcing"], **override})

    def settings(self, **override):
        return SolverSettings(**{**self.data["solver"], **override})

    def initial_values(self, basis=None):
        basis = basis or self.basis()
        return initial_profile(basis, self.data["u0"])

    def cells(self):
        """Parameter cells ``{"beta", "gamma", "theta"}`` of the sweep grid."""
        sweep = self.data["sweep"]
        betas = sweep.get("beta") or [self.data["forcing"]["beta"]]
        gammas = sweep.get("gamma") or [self.data["forcing"]["gamma"]]
        thetas = sweep.get("theta") or [self.data["noise"].get("theta", 0.51)]
        return [{"beta": float(b), "gamma": float(g), "theta": float(th)}
                for b, g, th in itertools.product(betas, gammas, thetas)]

    def validate(self):
        """Build every object once so bad configs fail before any simulation."""
        try:
            basis = self.basis()
            self.settings()
            u0 = self.initial_values(basis)
            if np.max(np.abs(u0)) >= 1:
                raise ConfigError("initial data must satisfy sup|u0| < 1")
            for cell in self.cells():
                noise = self.noise(basis, theta=cell["theta"])
                self.forcing(beta=cell["beta"], gamma=cell["gamma"])
                check_condition(cell["beta"], cell["gamma"], noise.eta)
            if int(self.data["trials"]) < 1:
                raise ConfigError("trials must be >= 1")
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from None


def initial_profile(basis, spec):
    """Initial grid values from a named profile.

    ``eigenfunction``: ``amplitude * e_1 / max_grid(e_1)``, so the grid sup-norm
    equals ``amplitude``. ``plateau``: a smooth bump flat near the centre with
    height ``amplitude``. ``grid``: explicit ``values``.
    """
    profile = spec.get("profile", "eigenfunction")
    x = basis.grid
    if profile == "eigenfunction":
        shape = np.sin(np.pi * x)
    elif profile == "plateau":
        width = float(spec.get("width", 0.15))
        shape = np.minimum(1.0, np.minimum(x, 1.0 - x) / width)
        shape = 0.5 - 0.5 * np.cos(np.pi * shape)
    elif profile == "grid":
        values = np.asarray(spec["values"], dtype=float)
        if values.shape != x.shape:
            raise ConfigError(f"u0 values must have {x.size} entries")
        return values
    else:
        raise ConfigError(f"unknown u0 profile {profile!r}")
    return float(spec.get("amplitude", 0.5)) * shape / shape.max()
