"""Command-line front end: run configuration, experiment drivers for the paper
figures' data, and deterministic CSV + manifest output.

Exit codes: 0 ok, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import closed, dimer, ensemble, hsr, lattice, output

try:
    from importlib.metadata import version as _pkg_version
    VERSION = _pkg_version("latdiff")
except Exception:  # pragma: no cover - not installed
    VERSION = "0.1.0"


class ConfigError(Exception):
    """Bad configuration value; carries a line/field diagnostic."""


CONFIG_SCHEMA = {
    "n_sites": int,
    "coupling": float,
    "sigma": float,
    "gamma": float,
    "realizations": int,
    "seed": int,
    "t_max": float,
    "dt": float,
    "initial_state": str,
    "width_w": float,
    "experiment": str,
    "workers": int,
}

DEFAULTS = {
    "n_sites": 201,
    "coupling": 1.0,
    "sigma": 1.0,
    "gamma": 0.0,
    "realizations": 100,
    "seed": 2024,
    "t_max": 20.0,
    "dt": 0.01,
    "initial_state": "site",
    "width_w": None,
    "experiment": "closed_diffusivity",
    "workers": 1,
}

# per-subcommand default adjustments (fine grid near the turnover, etc.)
SUBCOMMAND_DEFAULTS = {
    "turnover": {"t_max": 0.4, "dt": 0.002, "n_sites": 21, "sigma": 20.0,
                 "realizations": 2000},
    "dimer": {"sigma": 20.0},
    "diffuse-closed": {"n_sites": 21, "sigma": 20.0},
    "diffuse-open": {"n_sites": 21, "sigma": 20.0, "gamma": 0.1, "dt": 0.05},
    "eigens": {"sigma": 20.0, "realizations": 500},
}


def parse_config_file(path) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = CONFIG_SCHEMA[key](value)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: field {key!r} expects "
                f"{CONFIG_SCHEMA[key].__name__}, got {value!r}"
            ) from None
    return values


def resolve_config(args, subcommand: str) -> dict:
    """defaults < subcommand defaults < config file < command-line flags."""
    cfg = dict(DEFAULTS)
    cfg.update(SUBCOMMAND_DEFAULTS.get(subcommand, {}))
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key in CONFIG_SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    if cfg["initial_state"] not in ("site", "gaussian"):
        raise ConfigError(f"field 'initial_state' must be site or gaussian, got {cfg['initial_state']!r}")
    if cfg["initial_state"] == "gaussian" and not cfg["width_w"]:
        raise ConfigError("field 'width_w' is required for a gaussian initial state")
    if cfg["experiment"] not in ensemble.EXPERIMENTS:
        raise ConfigError(f"field 'experiment' must be one of {ensemble.EXPERIMENTS}")
    return cfg


def make_spec(cfg) -> lattice.LatticeSpec:
    try:
        return lattice.LatticeSpec(n_sites=cfg["n_sites"], coupling=cfg["coupling"],
                                   disorder_sigma=cfg["sigma"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def make_ensemble_config(cfg, experiment: str, **overrides) -> ensemble.EnsembleConfig:
    base = dict(
        spec=make_spec(cfg),
        n_realizations=cfg["realizations"],
        master_seed=cfg["seed"],
        experiment=experiment,
        gamma=cfg["gamma"],
        initial_state=cfg["initial_state"],
        width_w=cfg["width_w"],
        t_max=cfg["t_max"],
        dt=cfg["dt"],
        n_workers=cfg["workers"],
    )
    base.update(overrides)
    try:
        return ensemble.EnsembleConfig(**base)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def refine_extremum(t: np.ndarray, y: np.ndarray, index: int) -> tuple[float, float]:
    """Parabolic refinement of a grid extremum at `index`."""
    if index == 0 or index == t.size - 1:
        return float(t[index]), float(y[index])
    t0, t1, t2 = t[index - 1:index + 2]
    y0, y1, y2 = y[index - 1:index + 2]
    denom = (y0 - 2 * y1 + y2)
    if denom == 0:
        return float(t1), float(y1)
    h = t1 - t0
    shift = 0.5 * h * (y0 - y2) / denom
    t_star = t1 + shift
    y_star = y1 - 0.125 * (y0 - y2) ** 2 / denom
    return float(t_star), float(y_star)


def first_minimum_after_peak(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    peak = int(np.argmax(y))
    for i in range(peak + 1, t.size - 1):
        if y[i] <= y[i - 1] and y[i] <= y[i + 1]:
            return refine_extremum(t, y, i)
    i = int(np.argmin(y[peak:])) + peak
    return refine_extremum(t, y, i)


# ---------------------------------------------------------------------------
# subcommand drivers: each returns {filename: columns}
# ---------------------------------------------------------------------------

def run_dimer(cfg, progress) -> dict:
    params = dimer.DimerParams(coupling=cfg["coupling"], sigma=cfg["sigma"])
    t = np.arange(cfg["dt"], cfg["t_max"] + 0.5 * cfg["dt"], cfg["dt"])
    cols = {
        "t_invJ": t,
        "D_exact_a2J": dimer.dimer_diffusivity_exact(params, t),
        "D_asym_a2J": dimer.dimer_diffusivity_asymptotic(params, t),
        "D_turnover_a2J": dimer.turnover_diffusivity(params, t),
    }
    if cfg["gamma"] > 0:
        total, base, osc = hsr.hsr_dimer_asymptotic(cfg["coupling"], cfg["sigma"],
                                                    cfg["gamma"], t)
        cols["D_hsr_exact_a2J"] = hsr.hsr_dimer_exact(cfg["coupling"], cfg["sigma"],
                                                      cfg["gamma"], t)
        cols["D_hsr_asym_a2J"] = total
        cols["D_hsr_baseline_a2J"] = base
    return {"dimer.csv": cols}


def run_eigens(cfg, progress) -> dict:
    ecfg = make_ensemble_config(cfg, "eigen_widths")
    stats = ensemble.run_ensemble(ecfg, progress=progress)
    edges = np.asarray(ecfg.bin_edges)
    widths_per_real = cfg["n_sites"]
    bin_w = np.diff(edges)
    density = stats.mean / (widths_per_real * bin_w)
    return {"eigens.csv": {
        "w_a": stats.times,
        "bin_left_a": edges[:-1],
        "bin_right_a": edges[1:],
        "count_mean": stats.mean,
        "count_stderr": stats.stderr,
        "density_per_a": density,
        "sigma_J": np.full(stats.times.size, cfg["sigma"]),
    }}


def run_stationary(cfg, progress) -> dict:
    spec = make_spec(cfg)
    ecfg = make_ensemble_config(cfg, "stationary_distribution")
    stats = ensemble.run_ensemble(ecfg, progress=progress)
    half = spec.n_sites // 4
    center = spec.center
    # single-realization average over bulk initial sites
    index = 0
    while True:
        realization = lattice.sample_disorder(spec, cfg["seed"], index)
        es = lattice.diagonalize(lattice.build_hamiltonian(spec, realization))
        if not lattice.degenerate(es):
            break
        index += 1
    u2 = es.eigenvectors**2
    gram = u2.T @ u2     # gram[n0, n] = sum_k |U_{k,n0}|^2 |U_{k,n}|^2
    offsets = np.arange(-half, half + 1)
    n0_range = np.arange(half, spec.n_sites - half)
    site_avg = np.array([
        np.mean(gram[n0_range, n0_range + m]) for m in offsets
    ])
    sel = (stats.times >= -half) & (stats.times <= half)
    return {"stationary.csv": {
        "m_a": offsets.astype(float),
        "P_eps": stats.mean[sel],
        "P_eps_stderr": stats.stderr[sel],
        "P_site_avg": site_avg,
    }}


def run_diffuse_closed(cfg, progress) -> dict:
    ecfg = make_ensemble_config(cfg, "closed_diffusivity")
    stats = ensemble.run_ensemble(ecfg, progress=progress)
    return {"diffuse_closed.csv": {
        "t_invJ": stats.times,
        "D_mean_a2J": stats.mean,
        "D_stderr_a2J": stats.stderr,
    }}


def run_diffuse_open(cfg, progress) -> dict:
    open_cfg = make_ensemble_config(cfg, "open_diffusivity")
    secular_cfg = make_ensemble_config(cfg, "secular_diffusivity")
    open_stats = ensemble.run_ensemble(open_cfg, progress=progress)
    secular_stats = ensemble.run_ensemble(secular_cfg, progress=progress)
    return {"diffuse_open.csv": {
        "t_invJ": open_stats.times,
        "D_full_mean_a2J": open_stats.mean,
        "D_full_stderr_a2J": open_stats.stderr,
        "D_secular_mean_a2J": secular_stats.mean,
        "D_secular_stderr_a2J": secular_stats.stderr,
    }}


def run_turnover(cfg, progress, sigmas) -> dict:
    rows = {name: [] for name in (
        "sigma_J", "tp_chain_invJ", "Dp_chain_a2J", "tp_dimer_invJ",
        "Dp_dimer_a2J", "tp_formula_invJ", "Dp_formula_a2J")}
    for k, sigma in enumerate(sigmas):
        sub_cfg = dict(cfg)
        sub_cfg["sigma"] = float(sigma)
        seed = ensemble.derive_sweep_seed(cfg["seed"], k)
        sub_cfg["seed"] = seed
        ecfg = make_ensemble_config(sub_cfg, "closed_diffusivity")
        stats = ensemble.run_ensemble(ecfg, progress=progress)
        tp_chain, dp_chain = refine_extremum(stats.times, stats.mean,
                                             int(np.argmax(stats.mean)))
        params = dimer.DimerParams(coupling=cfg["coupling"], sigma=float(sigma))
        t = ecfg.times()[1:]
        d_dimer = dimer.dimer_diffusivity_exact(params, t)
        tp_dimer, dp_dimer = refine_extremum(t, d_dimer, int(np.argmax(d_dimer)))
        tp_formula = dimer.turnover_time(params)
        dp_formula = float(dimer.turnover_diffusivity(params, tp_formula))
        for name, value in zip(rows, (sigma, tp_chain, dp_chain, tp_dimer,
                                      dp_dimer, tp_formula, dp_formula)):
            rows[name].append(value)
    return {"turnover.csv": {name: np.array(vals) for name, vals in rows.items()}}


def run_sweep(cfg, progress, parameter, values) -> dict:
    ecfg = make_ensemble_config(cfg, cfg["experiment"])
    results = ensemble.sweep(ecfg, parameter, values)
    value_col = {"sigma": "sigma_J", "gamma": "gamma_J", "width_w": "width_a"}[parameter]
    files = {}
    summary = {value_col: np.asarray(values, dtype=float)}
    if cfg["experiment"] == "stationary_distribution":
        w_values = [closed.stationary_width(st.mean) for st in results]
        summary["W_a"] = np.array(w_values)
        curve_cols = ("m_a", "P_mean", "P_stderr")
    elif cfg["experiment"] == "eigen_widths":
        curve_cols = ("w_a", "count_mean", "count_stderr")
    else:
        peaks, dpeaks, tmins, dmins = [], [], [], []
        for st in results:
            tp, dp = refine_extremum(st.times, st.mean, int(np.argmax(st.mean)))
            tm, dm = first_minimum_after_peak(st.times, st.mean)
            peaks.append(tp), dpeaks.append(dp), tmins.append(tm), dmins.append(dm)
        summary["tp_invJ"] = np.array(peaks)
        summary["Dp_a2J"] = np.array(dpeaks)
        summary["tmin_invJ"] = np.array(tmins)
        summary["Dmin_a2J"] = np.array(dmins)
        curve_cols = ("t_invJ", "D_mean_a2J", "D_stderr_a2J")
    files["sweep_summary.csv"] = summary
    for k, st in enumerate(results):
        files[f"sweep_value_{k:03d}.csv"] = {
            curve_cols[0]: st.times,
            curve_cols[1]: st.mean,
            curve_cols[2]: st.stderr,
        }
    return files


# ---------------------------------------------------------------------------
# argument parsing and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latdiff",
        description="Transport in strongly disordered 1D quantum lattices",
    )
    parser.add_argument("--version", action="version", version=f"latdiff {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="output directory (default runs/<stamp>-<hash>)")
        p.add_argument("--n", dest="n_sites", type=int, help="number of lattice sites")
        p.add_argument("--coupling", type=float, help="hopping J in |J|")
        p.add_argument("--sigma", type=float, help="disorder strength in |J|")
        p.add_argument("--gamma", type=float, help="dephasing rate in |J|")
        p.add_argument("--realizations", type=int, help="ensemble size M")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--t-max", dest="t_max", type=float, help="time grid end, 1/|J|")
        p.add_argument("--dt", type=float, help="time grid step, 1/|J|")
        p.add_argument("--initial-state", dest="initial_state",
                       choices=("site", "gaussian"))
        p.add_argument("--width-w", dest="width_w", type=float,
                       help="gaussian initial state width in a")
        p.add_argument("--workers", type=int, help="parallel worker processes")
        p.add_argument("--quiet", action="store_true", help="suppress progress counter")

    descriptions = {
        "eigens": "eigenstate width statistics and histogram",
        "stationary": "time-averaged stationary distribution (disorder and site averages)",
        "diffuse-closed": "ensemble-averaged closed-system diffusivity D(t)",
        "turnover": "turnover time and height: chain vs dimer vs closed forms",
        "diffuse-open": "dephasing-lattice diffusivity, full Lindblad vs secular",
        "dimer": "analytic random-dimer curves (exact, asymptotic, turnover)",
        "sweep": "parameter sweep of an ensemble experiment",
    }
    parsers = {}
    for name, desc in descriptions.items():
        p = sub.add_parser(name, help=desc, description=desc)
        add_common(p)
        parsers[name] = p
    parsers["turnover"].add_argument(
        "--sigmas", default="15,20,30",
        help="comma-separated disorder strengths (default 15,20,30)")
    parsers["sweep"].add_argument(
        "--param", required=True, choices=ensemble.SWEEP_PARAMETERS)
    parsers["sweep"].add_argument(
        "--values", required=True, help="comma-separated parameter values")
    parsers["sweep"].add_argument(
        "--experiment", choices=ensemble.EXPERIMENTS,
        help="ensemble experiment to sweep")
    return parser


def output_directory(args, cfg, command: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        digest = hashlib.sha256(
            json.dumps({**cfg, "command": command}, sort_keys=True).encode()
        ).hexdigest()[:8]
        out = Path("runs") / f"{stamp}-{digest}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args, args.command)
        extra = {}
        if args.command == "turnover":
            extra["sigmas"] = [float(s) for s in args.sigmas.split(",") if s]
            if not extra["sigmas"]:
                raise ConfigError("--sigmas must list at least one value")
        if args.command == "sweep":
            if args.experiment:
                cfg["experiment"] = args.experiment
            extra["parameter"] = args.param
            try:
                extra["values"] = [float(s) for s in args.values.split(",") if s]
            except ValueError:
                raise ConfigError(f"--values expects numbers, got {args.values!r}") from None
            if not extra["values"]:
                raise ConfigError("--values must list at least one value")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    progress = not args.quiet
    started = datetime.now(timezone.utc).isoformat()
    try:
        if args.command == "dimer":
            files = run_dimer(cfg, progress)
        elif args.command == "eigens":
            files = run_eigens(cfg, progress)
        elif args.command == "stationary":
            files = run_stationary(cfg, progress)
        elif args.command == "diffuse-closed":
            files = run_diffuse_closed(cfg, progress)
        elif args.command == "diffuse-open":
            files = run_diffuse_open(cfg, progress)
        elif args.command == "turnover":
            files = run_turnover(cfg, progress, extra["sigmas"])
        else:
            files = run_sweep(cfg, progress, extra["parameter"], extra["values"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out_dir = output_directory(args, cfg, args.command)
    manifest = output.RunManifest(
        tool="latdiff", version=VERSION, command=args.command,
        config={**cfg, **extra}, master_seed=cfg["seed"], started_utc=started,
    )
    try:
        for filename, columns in files.items():
            digest = output.write_csv(columns, out_dir / filename)
            manifest.add_output(out_dir / filename, digest)
        manifest.finished_utc = datetime.now(timezone.utc).isoformat()
        manifest.save(out_dir / "manifest.json")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out_dir)
    return 0


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
