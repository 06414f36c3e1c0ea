"""Run-configuration parsing and validation.

Configs are YAML (JSON is a subset) with five sections: model, schedule,
ensemble, engine and output.  Every key is validated against the schema of
the selected model kind; unknown keys are rejected by name, defaults are
filled in explicitly and echoed into the artifact so a run can be reproduced
from its own metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml


class ConfigError(ValueError):
    """Malformed or out-of-range run configuration."""


MODEL_KINDS = (
    "kerr",
    "bose-hubbard-pp",
    "bose-hubbard-wigner",
    "collision",
    "fermi-hubbard",
    "oracle-kerr",
    "oracle-bose-hubbard",
    "oracle-fermi-hubbard",
)

_SCHEDULE_DEFAULTS = {"dt": None, "span": None, "record_stride": 1}
_ENSEMBLE_DEFAULTS = {"trajectory_count": None, "master_seed": None, "n_sub": 10}
_ENGINE_DEFAULTS = {"stepper": "midpoint", "divergence_threshold": 1.0e6,
                    "abort_floor": 0.9, "noise_refine": 1}
_OUTPUT_DEFAULTS = {"path": None, "format": "csv"}

_MODEL_FIELDS = {
    "kerr": {"omega": 0.0, "n_mean": None, "gauge": "none"},
    "bose-hubbard-pp": {"sites": None, "hopping": None, "chi": None,
                        "on_site": 0.0, "periodic": False, "alpha0": None,
                        "omega_matrix": None},
    "bose-hubbard-wigner": {"sites": None, "hopping": None, "chi": None,
                            "on_site": 0.0, "periodic": False, "alpha0": None,
                            "omega_matrix": None},
    "collision": {"sites": 64, "interaction": None, "atom_number": None,
                  "trap_curvature": 0.002, "v_bragg": None, "v_seed": None,
                  "seed_fraction": 0.02, "g2_pairs": None},
    "fermi-hubbard": {"lattice": "chain", "sites": None, "t": 1.0, "U": None,
                      "mu": None, "periodic": False},
}
_MODEL_FIELDS["oracle-kerr"] = _MODEL_FIELDS["kerr"]
_MODEL_FIELDS["oracle-bose-hubbard"] = _MODEL_FIELDS["bose-hubbard-pp"]
_MODEL_FIELDS["oracle-fermi-hubbard"] = _MODEL_FIELDS["fermi-hubbard"]


@dataclass
class RunConfig:
    """Validated run description with all defaults made explicit."""

    kind: str
    model: dict
    schedule: dict
    ensemble: dict
    engine: dict
    output: dict
    n_steps: int = field(init=False)

    def __post_init__(self):
        n_float = self.schedule["span"] / self.schedule["dt"]
        self.n_steps = int(round(n_float))

    def effective(self):
        """Full config echo, sufficient to reproduce the run bit-exactly."""
        return {
            "model": dict(self.model, kind=self.kind),
            "schedule": dict(self.schedule),
            "ensemble": dict(self.ensemble),
            "engine": dict(self.engine),
            "output": dict(self.output),
        }


def _merge_section(name, raw, defaults):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    out = dict(defaults)
    for key, value in raw.items():
        if key not in defaults:
            raise ConfigError(f"unknown key '{key}' in section '{name}'")
        out[key] = value
    missing = [k for k, v in out.items() if v is None and defaults[k] is None
               and k not in _OPTIONAL_NONE.get(name, ())]
    if missing:
        raise ConfigError(f"section '{name}' is missing required key(s): "
                          + ", ".join(sorted(missing)))
    return out


_OPTIONAL_NONE = {
    "model": ("alpha0", "omega_matrix", "sites", "hopping", "g2_pairs"),
}


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def parse_config(text):
    """Parse and validate a YAML run configuration into a RunConfig."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping of sections")
    known_sections = {"model", "schedule", "ensemble", "engine", "output"}
    for key in raw:
        if key not in known_sections:
            raise ConfigError(f"unknown section '{key}'")

    model_raw = raw.get("model")
    if not isinstance(model_raw, dict) or "kind" not in model_raw:
        raise ConfigError("section 'model' must define 'kind'")
    kind = model_raw["kind"]
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind '{kind}'")
    model_raw = {k: v for k, v in model_raw.items() if k != "kind"}
    model = _merge_section("model", model_raw, _MODEL_FIELDS[kind])
    schedule = _merge_section("schedule", raw.get("schedule"), _SCHEDULE_DEFAULTS)
    ensemble = _merge_section("ensemble", raw.get("ensemble"), _ENSEMBLE_DEFAULTS)
    engine = _merge_section("engine", raw.get("engine"), _ENGINE_DEFAULTS)
    output = _merge_section("output", raw.get("output"), _OUTPUT_DEFAULTS)

    _require(schedule["dt"] > 0, "schedule.dt must be positive")
    _require(schedule["span"] >= 0, "schedule.span must be non-negative")
    n_float = schedule["span"] / schedule["dt"]
    _require(abs(n_float - round(n_float)) < 1e-9,
             "schedule.dt must divide schedule.span")
    _require(int(schedule["record_stride"]) >= 1,
             "schedule.record_stride must be >= 1")
    schedule["record_stride"] = int(schedule["record_stride"])
    n_steps = int(round(n_float))
    _require(n_steps % schedule["record_stride"] == 0,
             "schedule.record_stride must divide the step count")

    _require(int(ensemble["trajectory_count"]) >= 1,
             "ensemble.trajectory_count must be >= 1")
    _require(int(ensemble["n_sub"]) >= 2, "ensemble.n_sub must be >= 2")
    _require(ensemble["master_seed"] is not None and int(ensemble["master_seed"]) >= 0,
             "ensemble.master_seed must be a non-negative integer")
    ensemble["trajectory_count"] = int(ensemble["trajectory_count"])
    ensemble["master_seed"] = int(ensemble["master_seed"])
    ensemble["n_sub"] = int(ensemble["n_sub"])
    _require(ensemble["trajectory_count"] >= ensemble["n_sub"],
             "ensemble.trajectory_count must be >= n_sub")

    _require(engine["stepper"] in ("euler", "midpoint"),
             "engine.stepper must be 'euler' or 'midpoint'")
    _require(engine["divergence_threshold"] > 0,
             "engine.divergence_threshold must be positive")
    _require(0.0 <= engine["abort_floor"] <= 1.0,
             "engine.abort_floor must lie in [0, 1]")
    _require(int(engine["noise_refine"]) >= 1,
             "engine.noise_refine must be >= 1")
    engine["noise_refine"] = int(engine["noise_refine"])

    _require(output["format"] in ("csv", "json"),
             "output.format must be 'csv' or 'json'")
    _require(isinstance(output["path"], str) and output["path"],
             "output.path must be a non-empty string")

    _validate_model(kind, model)
    return RunConfig(kind=kind, model=model, schedule=schedule,
                     ensemble=ensemble, engine=engine, output=output)


def _validate_model(kind, model):
    if kind in ("kerr", "oracle-kerr"):
        _require(model["n_mean"] > 0, "model.n_mean must be positive")
        _require(model["gauge"] in ("none", "drift-stabilizing"),
                 "model.gauge must be 'none' or 'drift-stabilizing'")
    elif kind in ("bose-hubbard-pp", "bose-hubbard-wigner",
                  "oracle-bose-hubbard"):
        if model["omega_matrix"] is None:
            _require(model["sites"] is not None and model["hopping"] is not None,
                     "model needs either omega_matrix or sites+hopping")
            _require(int(model["sites"]) >= 1, "model.sites must be >= 1")
        _require(model["chi"] is not None, "model.chi is required")
        _require(model["alpha0"] is not None, "model.alpha0 is required")
    elif kind == "collision":
        _require(int(model["sites"]) >= 4, "model.sites must be >= 4")
        _require(model["interaction"] is not None and model["interaction"] >= 0,
                 "model.interaction must be non-negative")
        _require(model["atom_number"] is not None and model["atom_number"] > 0,
                 "model.atom_number must be positive")
        _require(model["v_bragg"] is not None and model["v_seed"] is not None,
                 "model.v_bragg and model.v_seed are required")
        _require(0.0 <= model["seed_fraction"] < 1.0,
                 "model.seed_fraction must lie in [0, 1)")
        for key in ("v_bragg", "v_seed"):
            _require(abs(model[key]) <= np.pi,
                     f"model.{key} exceeds the lattice Nyquist limit pi")
    elif kind in ("fermi-hubbard", "oracle-fermi-hubbard"):
        _require(model["lattice"] in ("chain", "rectangle"),
                 "model.lattice must be 'chain' or 'rectangle'")
        if model["lattice"] == "chain":
            _require(isinstance(model["sites"], int) and model["sites"] >= 1,
                     "model.sites must be a positive integer for a chain")
        else:
            ok = (isinstance(model["sites"], (list, tuple))
                  and len(model["sites"]) == 2
                  and all(isinstance(s, int) and s >= 1 for s in model["sites"]))
            _require(ok, "model.sites must be [nx, ny] for a rectangle")
        _require(model["U"] is not None and model["U"] >= 0,
                 "model.U must be non-negative")
        _require(model["mu"] is not None, "model.mu is required")


def as_complex_vector(values, name="alpha0"):
    """Accept [x, ...] reals or [[re, im], ...] pairs as a complex vector."""
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ConfigError(f"{name} entries must be numbers or [re, im] pairs")
            out.append(complex(v[0], v[1]))
        else:
            out.append(complex(v))
    return np.array(out, dtype=complex)
