"""Batch front end: parse a config, run the model, persist series + metadata.

Subcommand per model family with a shared --config flag; series tables go to
CSV (one row per record time, every observable column paired with its error
column), run metadata and the full effective config to a JSON wrapper.
Exit codes: 0 success, 2 config error, 3 abort-floor breach, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, as_complex_vector, parse_config
from .engine import StepSchedule, diagnostic_estimate, evolve
from .ensemble import ObservableEstimate, coherent_ensemble, weighted_mean
from . import bosons, fermions, oracle


def _chain_omega(sites, hopping, on_site, periodic):
    omega = np.zeros((sites, sites), dtype=complex)
    np.fill_diagonal(omega, on_site)
    for j in range(sites - 1):
        omega[j, j + 1] = omega[j + 1, j] = hopping
    if periodic and sites > 2:
        omega[0, sites - 1] = omega[sites - 1, 0] = hopping
    return omega


def _bose_model(model_cfg):
    if model_cfg["omega_matrix"] is not None:
        omega = np.array(model_cfg["omega_matrix"], dtype=complex)
    else:
        omega = _chain_omega(int(model_cfg["sites"]), model_cfg["hopping"],
                             model_cfg["on_site"], model_cfg["periodic"])
    return bosons.BoseLatticeModel(omega, model_cfg["chi"])


def _fermi_model(model_cfg):
    if model_cfg["lattice"] == "chain":
        return fermions.FermiHubbardModel.chain(
            int(model_cfg["sites"]), t=model_cfg["t"], U=model_cfg["U"],
            mu=model_cfg["mu"], periodic=model_cfg["periodic"])
    nx, ny = model_cfg["sites"]
    return fermions.FermiHubbardModel.rectangle(
        nx, ny, t=model_cfg["t"], U=model_cfg["U"], mu=model_cfg["mu"],
        periodic=model_cfg["periodic"])


def _split_complex(name, estimate):
    return {
        f"{name}_re": ObservableEstimate(estimate.mean.real, estimate.std_error,
                                         estimate.n_subensembles, estimate.n_alive),
        f"{name}_im": ObservableEstimate(estimate.mean.imag, estimate.std_error,
                                         estimate.n_subensembles, estimate.n_alive),
    }


def _kerr_recorder(n_sub):
    def record(ens):
        out = {}
        out.update(_split_complex("a", bosons.estimate_field(ens, 0, n_sub)))
        out["n"] = bosons.estimate_number(ens, 0, n_sub)
        var_x, var_y = bosons.estimate_quadrature_variances(ens, 0, n_sub)
        out["var_x"] = var_x
        out["var_y"] = var_y
        return out

    return record


def _lattice_recorder(n_modes, n_sub, with_g2):
    def record(ens):
        out = {}
        for j in range(n_modes):
            out[f"n{j}"] = bosons.estimate_number(ens, j, n_sub)
        out["n_total"] = bosons.estimate_total_number(ens, n_sub)
        if with_g2:
            for j in range(n_modes):
                out[f"g2_{j}{j}"] = bosons.estimate_g2(ens, j, j, n_sub)
        return out

    return record


def _collision_pairs(model_cfg, n_sites):
    pairs = model_cfg["g2_pairs"]
    if pairs is None:
        # default: the Bragg bins and their opposite-momentum partners
        kq = int(round(model_cfg["v_bragg"] * n_sites / (2 * np.pi))) % n_sites
        pairs = [[kq, kq], [kq, (n_sites - kq) % n_sites]]
    return [(int(a), int(b)) for a, b in pairs]


def _collision_recorder(model_cfg, n_sites, n_sub):
    pairs = _collision_pairs(model_cfg, n_sites)

    def record(ens):
        kens = bosons.to_momentum_space(ens)
        out = {}
        for k in range(n_sites):
            out[f"nk{k}"] = bosons.estimate_number(kens, k, n_sub)
        for k1, k2 in pairs:
            out[f"g2_{k1}_{k2}"] = bosons.estimate_g2(kens, k1, k2, n_sub)
            g1 = bosons.estimate_g1(kens, k1, k2, n_sub)
            out[f"absg1_{k1}_{k2}"] = ObservableEstimate(
                abs(g1.mean), g1.std_error, g1.n_subensembles, g1.n_alive,
                g1.unreliable)
        return out

    return record


def _build_run(cfg: RunConfig):
    kind = cfg.kind
    ens_cfg = cfg.ensemble
    n_traj, seed, n_sub = (ens_cfg["trajectory_count"], ens_cfg["master_seed"],
                           ens_cfg["n_sub"])
    if kind == "kerr":
        gauge = (bosons.KerrGaugeConfig.drift_stabilizing()
                 if cfg.model["gauge"] == "drift-stabilizing"
                 else bosons.KerrGaugeConfig.none())
        problem = bosons.kerr_problem(cfg.model["omega"], cfg.model["n_mean"], gauge)
        ensemble = bosons.kerr_initial_ensemble(cfg.model["n_mean"], n_traj, seed)
        recorder = _kerr_recorder(n_sub)
    elif kind == "bose-hubbard-pp":
        model = _bose_model(cfg.model)
        problem = bosons.bose_hubbard_positive_p(model)
        alpha0 = as_complex_vector(cfg.model["alpha0"])
        if alpha0.size != model.n_modes:
            raise ConfigError("model.alpha0 length must match the mode count")
        ensemble = coherent_ensemble(alpha0, n_traj, seed)
        recorder = _lattice_recorder(model.n_modes, n_sub, with_g2=True)
    elif kind == "bose-hubbard-wigner":
        model = _bose_model(cfg.model)
        problem = bosons.bose_hubbard_wigner(model)
        alpha0 = as_complex_vector(cfg.model["alpha0"])
        if alpha0.size != model.n_modes:
            raise ConfigError("model.alpha0 length must match the mode count")
        ensemble = bosons.init_wigner(alpha0, n_traj, seed)
        recorder = _lattice_recorder(model.n_modes, n_sub, with_g2=False)
    elif kind == "collision":
        sites = int(cfg.model["sites"])
        model = bosons.collision_model(sites, cfg.model["interaction"])
        profile = bosons.gp_ground_profile(sites, cfg.model["trap_curvature"],
                                           cfg.model["interaction"],
                                           cfg.model["atom_number"])
        ensemble = bosons.init_collision_state(
            model, profile, cfg.model["v_bragg"], cfg.model["v_seed"],
            cfg.model["seed_fraction"], n_traj, seed)
        problem = bosons.bose_hubbard_positive_p(model)
        recorder = _collision_recorder(cfg.model, sites, n_sub)
    elif kind == "fermi-hubbard":
        model = _fermi_model(cfg.model)
        problem = fermions.fermi_hubbard_problem(model)
        ensemble = fermions.init_infinite_temperature(model, n_traj, seed)
        recorder = fermions.thermal_recorder(model, n_sub)
    else:
        raise ConfigError(f"model kind '{kind}' is not a simulation")
    return problem, ensemble, recorder


def _series_rows(cfg, series):
    """Column-ordered rows: time (plus T for thermal runs), value/error pairs."""
    thermal = cfg.kind.endswith("fermi-hubbard")
    names = list(series.columns.keys())
    header = ["tau" if thermal else "time"]
    if thermal:
        header.append("T")
    for name in names:
        header += [name, f"{name}_err"]
    header.append("n_alive")
    rows = []
    for idx, t in enumerate(series.times):
        row = [t]
        if thermal:
            row.append(np.inf if t == 0 else 1.0 / t)
        for name in names:
            est = series.columns[name][idx]
            row += [est.mean.real, est.std_error]
        row.append(series.n_alive[idx])
        rows.append(row)
    return header, rows


def _format_value(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def write_artifact(cfg, series, metadata):
    header, rows = _series_rows(cfg, series)
    base = cfg.output["path"]
    wrapper = {
        "config": cfg.effective(),
        "metadata": metadata,
        "columns": header,
    }
    paths = {}
    if cfg.output["format"] == "csv":
        csv_path = base + ".csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_format_value(v) for v in row])
        paths["series"] = csv_path
    else:
        wrapper["rows"] = [[_format_value(v) for v in row] for row in rows]
    json_path = base + ".json"
    with open(json_path, "w") as fh:
        json.dump(wrapper, fh, indent=1, sort_keys=True)
        fh.write("\n")
    paths["metadata"] = json_path
    return paths


def run(cfg: RunConfig):
    """Execute a validated config.  Returns (exit_code, artifact_paths)."""
    if cfg.kind.startswith("oracle-"):
        return _run_oracle(cfg)
    problem, ensemble, recorder = _build_run(cfg)
    schedule = StepSchedule(dt=cfg.schedule["dt"], n_steps=cfg.n_steps,
                            record_stride=cfg.schedule["record_stride"])
    started = time.perf_counter()
    result = evolve(ensemble, problem, schedule, recorder=recorder,
                    stepper=cfg.engine["stepper"],
                    divergence_threshold=cfg.engine["divergence_threshold"],
                    abort_floor=cfg.engine["abort_floor"],
                    noise_refine=cfg.engine["noise_refine"])
    wall = time.perf_counter() - started
    metadata = {
        "code_version": __version__,
        "wall_time_s": wall,
        "scheme": cfg.engine["stepper"],
        "aborted": result.aborted,
        "abort_step": result.abort_step,
        "dead_trajectories": result.dead_count,
        "alive_fraction": result.alive_fraction,
        "midpoint_fallbacks": result.midpoint_fallbacks,
    }
    paths = write_artifact(cfg, result.series, metadata)
    return (3 if result.aborted else 0), paths


def _estimate_rows(names_values):
    return {name: diagnostic_estimate(value) for name, value in names_values}


def _run_oracle(cfg: RunConfig):
    """Exact-diagonalization run emitting the simulation series schema."""
    from .engine import MomentSeries

    times = [k * cfg.schedule["dt"] * cfg.schedule["record_stride"]
             for k in range(cfg.n_steps // cfg.schedule["record_stride"] + 1)]
    series = MomentSeries()
    started = time.perf_counter()
    if cfg.kind == "oracle-kerr":
        model = bosons.BoseLatticeModel(
            np.array([[cfg.model["omega"]]], dtype=complex), bosons.KERR_CHI)
        alpha0 = np.array([np.sqrt(cfg.model["n_mean"])], dtype=complex)
        ed = oracle.ed_bose_evolve(model, alpha0, times)
        for idx, t in enumerate(times):
            a = ed["a"][idx, 0]
            a2 = ed["a2"][idx, 0]
            n = ed["nmat"][idx, 0, 0].real
            var_x = 2 * a2.real + 2 * n + 1 - (2 * a.real) ** 2
            var_y = -2 * a2.real + 2 * n + 1 - (2 * a.imag) ** 2
            series.append(t, _estimate_rows([
                ("a_re", a.real), ("a_im", a.imag), ("n", n.real),
                ("var_x", var_x), ("var_y", var_y)]), 0)
    elif cfg.kind == "oracle-bose-hubbard":
        model = _bose_model(cfg.model)
        alpha0 = as_complex_vector(cfg.model["alpha0"])
        ed = oracle.ed_bose_evolve(model, alpha0, times)
        for idx, t in enumerate(times):
            cells = [(f"n{j}", ed["nmat"][idx, j, j].real)
                     for j in range(model.n_modes)]
            cells.append(("n_total", np.trace(ed["nmat"][idx]).real))
            cells += [(f"g2_{j}{j}", ed["g2"][idx, j, j])
                      for j in range(model.n_modes)]
            series.append(t, _estimate_rows(cells), 0)
    elif cfg.kind == "oracle-fermi-hubbard":
        model = _fermi_model(cfg.model)
        ed = oracle.ed_fermi_thermal(model, times)
        for idx, t in enumerate(times):
            series.append(t, _estimate_rows([
                ("n_up", ed["n_up"][idx].mean()),
                ("n_down", ed["n_down"][idx].mean()),
                ("double_occ", ed["double_occ"][idx]),
                ("energy", ed["energy"][idx]),
                ("imag_drift", 0.0), ("min_log_weight", 0.0)]), 0)
    else:
        raise ConfigError(f"unknown oracle kind '{cfg.kind}'")
    metadata = {
        "code_version": __version__,
        "wall_time_s": time.perf_counter() - started,
        "scheme": "exact-diagonalization",
        "aborted": False,
        "abort_step": None,
        "dead_trajectories": 0,
        "alive_fraction": 1.0,
        "midpoint_fallbacks": 0,
    }
    paths = write_artifact(cfg, series, metadata)
    return 0, paths


_SUBCOMMAND_KINDS = {
    "kerr": ("kerr",),
    "bose-hubbard": ("bose-hubbard-pp", "bose-hubbard-wigner"),
    "collision": ("collision",),
    "fermi-hubbard": ("fermi-hubbard",),
    "oracle": ("oracle-kerr", "oracle-bose-hubbard", "oracle-fermi-hubbard"),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="phasesim",
        description="Stochastic phase-space simulation of quantum many-body models")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_KINDS:
        p = sub.add_parser(name, help=f"run a {name} configuration")
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override ensemble.master_seed")
        p.add_argument("--trajectories", type=int, default=None,
                       help="override ensemble.trajectory_count")
        p.add_argument("--output", default=None, help="override output.path")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 4
    try:
        cfg = parse_config(text)
        if cfg.kind not in _SUBCOMMAND_KINDS[args.command]:
            raise ConfigError(
                f"model kind '{cfg.kind}' does not match subcommand '{args.command}'")
        if args.seed is not None:
            cfg.ensemble["master_seed"] = int(args.seed)
        if args.trajectories is not None:
            if args.trajectories < cfg.ensemble["n_sub"]:
                raise ConfigError("trajectory override below n_sub")
            cfg.ensemble["trajectory_count"] = int(args.trajectories)
        if args.output is not None:
            cfg.output["path"] = args.output
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        status, paths = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    for role, path in paths.items():
        print(f"{role}: {path}")
    if status == 3:
        print("run aborted: alive fraction fell below the configured floor",
              file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
