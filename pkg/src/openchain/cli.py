"""Command-line entry point.

    openchain relax    single-oscillator relaxation: master equation vs Langevin
    openchain chain    actions and current of the L-site chain for several g
    openchain spectra  stationary spectral densities per site
    openchain scaling  stationary current against chain length
    openchain oracle   exact stationary correlation matrix of the linear chain
    openchain replay   re-run a command from its manifest.json

Every command writes CSV files plus ``manifest.json`` holding all resolved
parameters; ``openchain replay manifest.json`` reproduces the CSV files
byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import subprocess
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from .ensemble import DEFAULT_BATCH, default_threads, fit_inverse_length, run_ensemble
from .errors import ConfigError, CutoffTooSmall, IntegrationDiverged, OpenChainError, WindowTooShort
from .langevin import IntegratorConfig
from .linear_oracle import (
    relaxation_rate,
    stationary_action_formula,
    stationary_current_formula,
    stationary_spdm,
)
from .model import ChainParams, SingleSiteParams, eigenfrequencies, transport_regime
from .quantum_oracle import OscillatorQuantumParams, evolve_master, mean_number
from .spectral import spectral_centroid

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

COMMANDS = ("relax", "chain", "spectra", "scaling", "oracle")

# key -> (type, help); list-valued keys are comma separated
KEYS = {
    "length": (int, "chain length L"),
    "hopping": (float, "hopping amplitude J"),
    "omega": (float, "on-site frequency"),
    "g": (float, "nonlinearity g = U*nbar"),
    "interaction": (float, "interaction constant U"),
    "nbar": (float, "reservoir density scale"),
    "gamma1": (float, "friction at site 1"),
    "gammaL": (float, "friction at site L"),
    "d1": (float, "diffusion at site 1"),
    "dL": (float, "diffusion at site L"),
    "gamma": (float, "single-oscillator friction"),
    "d": (float, "single-oscillator diffusion"),
    "dt": (float, "time step"),
    "t_final": (float, "final time"),
    "transient": (float, "time discarded before stationary averages"),
    "stride": (int, "record every stride-th step"),
    "realizations": (int, "number of trajectories M"),
    "seed": (int, "master seed"),
    "threads": (int, "worker processes"),
    "batch_size": (int, "trajectories per work unit (fixes the summation order)"),
    "g_values": ("floats", "comma-separated list of g"),
    "lengths": ("ints", "comma-separated list of chain lengths"),
    "initial": (str, "rest or warm"),
    "single_site": ("bool", "single oscillator instead of a chain"),
    "estimator": (str, "spectral estimator: periodogram or correlogram"),
}

BASE_DEFAULTS = {
    "length": 5, "hopping": 1.0, "omega": 1.0, "nbar": 10.0,
    "gamma1": 0.5, "gammaL": 0.5, "d1": 0.5, "dL": 0.25,
    "gamma": 0.5, "d": 0.5, "dt": 0.005, "stride": 20,
    "realizations": 4000, "seed": 0, "batch_size": DEFAULT_BATCH,
    "single_site": False,
}

COMMAND_DEFAULTS = {
    "relax": {"t_final": 10.0, "interaction": 0.0},
    "chain": {"g_values": [0.0, 2.0], "initial": "rest"},
    "spectra": {"g_values": [0.0, 2.0], "initial": "warm", "estimator": "periodogram"},
    "scaling": {"g": 2.0, "lengths": [10, 20, 40], "initial": "warm", "stride": 200},
    "oracle": {"g": 0.0},
}


def _convert(key, raw):
    kind = KEYS[key][0]
    try:
        if kind == "floats":
            return [float(x) for x in str(raw).split(",") if x.strip()]
        if kind == "ints":
            return [int(x) for x in str(raw).split(",") if x.strip()]
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            if str(raw).lower() in ("1", "true", "yes", "on"):
                return True
            if str(raw).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        value = kind(raw)
        if kind is float and not math.isfinite(value):
            raise ValueError(raw)
        return value
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse {key}={raw!r}", key) from None


ALIASES = {"U": "interaction", "L": "length", "J": "hopping", "D1": "d1", "DL": "dL", "M": "realizations",
           "D": "d", "t-final": "t_final", "batch-size": "batch_size"}


def _canonical(key: str) -> str:
    key = key.strip().lstrip("-")
    key = ALIASES.get(key, key).replace("-", "_")
    if key not in KEYS:
        raise ConfigError(f"unknown key {key!r}", key)
    return key


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, raw = (s.strip() for s in line.split("=", 1))
            key = _canonical(key)
            values[key] = _convert(key, raw)
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="openchain", description="Pseudoclassical open Bose-Hubbard chain.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        for key, (kind, help_text) in KEYS.items():
            flag = "--" + key.replace("_", "-")
            if key == "interaction":
                flag = "--interaction"
            if kind == "bool":
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=help_text)
            else:
                p.add_argument(flag, dest=key, default=None, help=help_text)
        p.add_argument("--config", default=None, help="key = value configuration file")
        p.add_argument("--output-dir", default=".", help="directory for CSV and manifest files")
    rp = sub.add_parser("replay", help="re-run a command from its manifest")
    rp.add_argument("manifest")
    rp.add_argument("--output-dir", default=None)
    rp.add_argument("--threads", default=None)
    return parser


def parse_config(command: str, flags: dict, config_path=None) -> dict:
    """Resolve parameters: command-line flag > config-file key > built-in default."""
    resolved = dict(BASE_DEFAULTS)
    resolved.update(COMMAND_DEFAULTS.get(command, {}))
    file_values = read_config_file(config_path) if config_path else {}
    explicit = dict(file_values)
    for key, raw in flags.items():
        if raw is not None:
            explicit[key] = _convert(key, raw)
    resolved.update(explicit)

    U = explicit.get("interaction")
    if U is not None:
        g_from_U = U * resolved["nbar"]
        if "g" in explicit and not math.isclose(explicit["g"], g_from_U, rel_tol=1e-12, abs_tol=1e-12):
            raise ConfigError(f"g={explicit['g']} inconsistent with interaction*nbar={g_from_U}", "g")
        resolved["g"] = g_from_U
    if command in ("chain", "spectra") and "g_values" not in explicit and "g" in resolved and (
        "g" in explicit or "interaction" in explicit
    ):
        resolved["g_values"] = [resolved["g"]]
    if "threads" not in explicit:
        resolved["threads"] = default_threads()
    _validate(command, resolved)
    return resolved


def _validate(command, r):
    if r["realizations"] < 2:
        raise ConfigError("realizations must be >= 2", "realizations")
    if r["threads"] < 1:
        raise ConfigError("threads must be >= 1", "threads")
    if r.get("initial") not in (None, "rest", "warm"):
        raise ConfigError("initial must be 'rest' or 'warm'", "initial")
    if r.get("estimator") not in (None, "periodogram", "correlogram"):
        raise ConfigError("estimator must be 'periodogram' or 'correlogram'", "estimator")
    if command == "scaling" and any(L < 2 for L in r["lengths"]):
        raise ConfigError("every chain length must be >= 2", "lengths")


def _chain_params(r, g=None, L=None) -> ChainParams:
    return ChainParams(
        L=r["length"] if L is None else L, J=r["hopping"], omega=r["omega"],
        g=r.get("g", 0.0) if g is None else g, gamma1=r["gamma1"], gammaL=r["gammaL"],
        D1=r["d1"], DL=r["dL"], nbar=r["nbar"],
    )


def _single_params(r, g) -> SingleSiteParams:
    return SingleSiteParams(omega=r["omega"], g=g, gamma=r["gamma"], D=r["d"])


def _round_up(t, quantum):
    return round(math.ceil(t / quantum - 1e-9) * quantum, 9)


def _stationary_config(r, params, window_relaxations=30.0) -> IntegratorConfig:
    """Integrator settings; unset transient/t_final follow the slowest linear relaxation."""
    quantum = r["dt"] * r["stride"]
    gamma = params.gamma_min
    if not gamma > 0:
        raise ConfigError("stationary runs need positive friction", "gamma1")
    transient = r.get("transient")
    if transient is None:
        slow = relaxation_rate(params) if isinstance(params, ChainParams) else gamma
        if r.get("initial") == "warm":
            transient = 10.0 / gamma
        else:
            transient = max(10.0 / gamma, 8.0 / slow)
        transient = _round_up(transient, quantum)
    t_final = r.get("t_final")
    if t_final is None:
        t_final = _round_up(transient + window_relaxations / gamma, quantum)
    return IntegratorConfig(dt=r["dt"], t_final=t_final, sample_stride=r["stride"], transient=transient)


def diffusive_transient(L: int) -> float:
    """Transient for g > 0 chains: about three diffusive relaxation times L^2 / (pi^2 * 0.13)."""
    return max(200.0, 2.5 * L**2)


def _scaling_config(r, params) -> IntegratorConfig:
    if params.g == 0:
        return _stationary_config(r, params)
    quantum = r["dt"] * r["stride"]
    transient = r.get("transient")
    if transient is None:
        transient = _round_up(diffusive_transient(params.L), quantum)
    t_final = r.get("t_final")
    if t_final is None:
        t_final = _round_up(transient + 200.0 / params.gamma_min, quantum)
    return IntegratorConfig(dt=r["dt"], t_final=t_final, sample_stride=r["stride"], transient=transient)


def _initial(r):
    return "warm" if r.get("initial") == "warm" else None


def _ensemble(params, config, r, **kwargs):
    return run_ensemble(
        params, config, M=r["realizations"], master_seed=r["seed"], threads=r["threads"],
        batch_size=r["batch_size"], initial=_initial(r), **kwargs,
    )


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if not math.isfinite(x):
        raise FloatingPointError("refusing to write a non-finite value")
    return format(x, ".12g")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def version_string() -> str:
    try:
        base = metadata.version("openchain")
    except metadata.PackageNotFoundError:
        base = "0+unknown"
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{base}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


def _config_dict(config: IntegratorConfig) -> dict:
    return {"dt": config.dt, "t_final": config.t_final, "sample_stride": config.sample_stride,
            "transient": config.transient}


# commands ----------------------------------------------------------------


def cmd_relax(r, out: Path) -> dict:
    U = r.get("interaction", 0.0) or 0.0
    g = U * r["nbar"]
    config = IntegratorConfig(dt=r["dt"], t_final=r["t_final"], sample_stride=r["stride"], transient=0.0)
    S = config.n_samples
    lindblad = OscillatorQuantumParams(omega=r["omega"], U=U, nbar=r["nbar"], gamma=r["gamma"])
    diffusion = OscillatorQuantumParams(omega=r["omega"], U=U, nbar=r["nbar"], gamma=0.0, D=r["d"], mode="split")
    quantum = [mean_number(x) / r["nbar"] for x in evolve_master(lindblad, None, config.t_final, S)]
    diffusive = [mean_number(x) / r["nbar"] for x in evolve_master(diffusion, None, config.t_final, S)]
    stats = _ensemble(SingleSiteParams(omega=r["omega"], g=g, gamma=r["gamma"], D=r["d"]), config, r)
    rows = zip(config.times, quantum, diffusive, stats.actions[:, 0], stats.actions_se[:, 0])
    write_csv(out / "relax.csv", ["t", "N_quantum_over_nbar", "N_diffusion_only_over_nbar", "I_classical", "I_se"], rows)
    return {"integrator": _config_dict(config), "outputs": ["relax.csv"]}


def cmd_chain(r, out: Path) -> dict:
    action_rows, current_rows, stationary_rows = [], [], []
    results = {}
    config = None
    for g in r["g_values"]:
        params = _chain_params(r, g=g)
        config = config or _stationary_config(r, params)
        stats = _ensemble(params, config, r)
        oracle = stationary_spdm(params).actions if g == 0 else None
        L = params.L
        for k, t in enumerate(stats.times):
            action_rows.append([g, t, *stats.actions[k], *stats.actions_se[k]])
            current_rows.append([g, t, stats.current[k], stats.current_se[k]])
        for l in range(L):
            stationary_rows.append([g, l + 1, stats.stationary_actions[l], stats.stationary_actions_se[l],
                                    "" if oracle is None else oracle[l]])
        entry = {"stationary_current": stats.stationary_current,
                 "stationary_current_se": stats.stationary_current_se,
                 "regime": transport_regime(stats.stationary_actions, params).value}
        if g == 0:
            entry["oracle_current"] = float(stationary_spdm(params).bond_currents(params.J).mean())
        results[_fmt(g)] = entry
    L = r["length"]
    write_csv(out / "actions.csv", ["g", "t"] + [f"I_{l}" for l in range(1, L + 1)]
              + [f"se_{l}" for l in range(1, L + 1)], action_rows)
    write_csv(out / "current.csv", ["g", "t", "j", "j_se"], current_rows)
    write_csv(out / "stationary.csv", ["g", "site", "I", "se", "I_oracle"], stationary_rows)
    return {"integrator": _config_dict(config), "results": results,
            "outputs": ["actions.csv", "current.csv", "stationary.csv"]}


def cmd_spectra(r, out: Path) -> dict:
    rows, results = [], {}
    single = bool(r.get("single_site"))
    config = None
    L = 1 if single else r["length"]
    for g in r["g_values"]:
        params = _single_params(r, g) if single else _chain_params(r, g=g)
        if config is None:
            config = _stationary_config(r, params, window_relaxations=40.0)
        stats = _ensemble(params, config, r, spectrum=r["estimator"])
        sp = stats.spectrum
        for k, nu in enumerate(sp.frequencies):
            rows.append([g, nu, *sp.densities[:, k], *sp.standard_errors[:, k]])
        results[_fmt(g)] = {
            "sum_rule": sp.sum_rule().tolist(),
            "stationary_actions": stats.stationary_actions.tolist(),
            "centroids": [spectral_centroid(sp, l) for l in range(L)],
            "window_length": sp.window_length,
        }
    if not single:
        results["band"] = eigenfrequencies(_chain_params(r, g=0.0)).tolist()
    write_csv(out / "spectrum.csv", ["g", "nu"] + [f"P_{l}" for l in range(1, L + 1)]
              + [f"se_{l}" for l in range(1, L + 1)], rows)
    return {"integrator": _config_dict(config), "results": results, "outputs": ["spectrum.csv"]}


def cmd_scaling(r, out: Path) -> dict:
    rows, profile, results = [], None, {}
    largest = max(r["lengths"])
    config = None
    for L in r["lengths"]:
        params = _chain_params(r, L=L)
        config = _scaling_config(r, params)
        try:
            stats = _ensemble(params, config, r)
        except OpenChainError as exc:
            raise type(exc)(f"chain length L={L}: {exc}") from exc
        rows.append([L, 1.0 / L, stats.stationary_current, stats.stationary_current_se])
        results[str(L)] = {"regime": transport_regime(stats.stationary_actions, params).value,
                           "integrator": _config_dict(config)}
        if L == largest:
            profile = [[l + 1, stats.stationary_actions[l], stats.stationary_actions_se[l]] for l in range(L)]
    write_csv(out / "scaling.csv", ["L", "inv_L", "j", "j_se"], rows)
    write_csv(out / "profile.csv", ["site", "I", "se"], profile)
    if len(rows) >= 2:
        data = np.array(rows, dtype=float)
        results["fit_proportional"] = fit_inverse_length(data[:, 0], data[:, 2], data[:, 3], intercept=False)
        if len(rows) >= 3:
            results["fit_affine"] = fit_inverse_length(data[:, 0], data[:, 2], data[:, 3], intercept=True)
    return {"integrator": _config_dict(config), "results": results, "outputs": ["scaling.csv", "profile.csv"]}


def cmd_oracle(r, out: Path) -> dict:
    params = _chain_params(r, g=0.0)
    rho = stationary_spdm(params).entries
    rows = [[l + 1, m + 1, rho[l, m].real, rho[l, m].imag] for l in range(params.L) for m in range(params.L)]
    write_csv(out / "oracle.csv", ["l", "m", "re", "im"], rows)
    results = {"bond_currents": stationary_spdm(params).bond_currents(params.J).tolist()}
    if params.gamma1 == params.gammaL and params.gamma1 > 0:
        results["current_formula"] = stationary_current_formula(params)
        results["action_formula"] = stationary_action_formula(params)
    return {"results": results, "outputs": ["oracle.csv"]}


HANDLERS = {"relax": cmd_relax, "chain": cmd_chain, "spectra": cmd_spectra,
            "scaling": cmd_scaling, "oracle": cmd_oracle}


def run_command(command: str, resolved: dict, output_dir) -> dict:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    info = HANDLERS[command](resolved, out)
    manifest = {
        "command": command,
        "parameters": {k: v for k, v in sorted(resolved.items()) if k != "threads"},
        "master_seed": resolved["seed"],
        "realizations": resolved["realizations"],
        "threads": resolved["threads"],
        "version": version_string(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        **info,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def replay(manifest_path, output_dir=None, threads=None) -> dict:
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    command = manifest["command"]
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r} in manifest", "command")
    resolved = {}
    for key, value in manifest["parameters"].items():
        resolved[_canonical(key)] = value
    resolved["threads"] = int(threads) if threads is not None else default_threads()
    _validate(command, resolved)
    out = output_dir if output_dir is not None else Path(manifest_path).parent
    return run_command(command, resolved, out)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            replay(args.manifest, args.output_dir, args.threads)
        else:
            flags = {k: getattr(args, k) for k in KEYS}
            resolved = parse_config(args.command, flags, args.config)
            run_command(args.command, resolved, args.output_dir)
    except (ConfigError, WindowTooShort) as exc:
        key = getattr(exc, "key", None)
        print(f"openchain: error: {exc}" + (f" [key: {key}]" if key else ""), file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationDiverged, CutoffTooSmall, FloatingPointError) as exc:
        print(f"openchain: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"openchain: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
