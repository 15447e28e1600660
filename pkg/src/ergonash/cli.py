"""Command line entry point.

Runs are driven by one INI file with flat sections; ``section.key=value`` arguments
override single entries. Every run writes its artifacts plus ``manifest.json`` into the
output directory.

Exit status: 0 success, 2 invalid configuration, 3 solver did not converge (artifacts
are still written).
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .catalog import COUPLING_KINDS, LAGRANGIAN_KINDS, CouplingSpec, LagrangianSpec
from .errors import ConfigurationError, SolverError, VelocityGridTooSmall
from .grids import TorusGrid, VelocityGrid

log = logging.getLogger("ergonash")

SUBCOMMANDS = ("weakkam", "mather", "nash", "pure", "mfg", "nsweep", "hewitt-savage", "validate")
EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 2, 3

DEFAULTS = {
    "grid": {"d": "1", "n": "64", "m": "33", "R": "3.0"},
    "model": {
        "kind": "quadratic",
        "amplitude": "0.0",
        "phase": "0.0",
        "freq": "1",
        "offset": "0.0",
        "anisotropy": "",
        "quartic": "0.0",
    },
    "game": {
        "N": "2",
        "coupling": "zero",
        "coupling_amplitude": "0.0",
        "coupling_phase": "0.0",
        "coupling_shift": "0.0",
        "symmetric": "true",
    },
    "solver": {
        "schedule": "0.1, 0.05, 0.025",
        "dt": "",
        "theta": "0.5",
        "tol": "1e-3",
        "mfg_tol": "1e-7",
        "max_iter": "200",
        "seed": "0",
        "samples": "100000",
        "Ns": "2, 4, 8, 16, 32",
        "horizon": "100.0",
        "flow_dt": "0.01",
    },
    "output": {"dir": "out"},
}

MODEL_KEYS = tuple(DEFAULTS["model"])


def _floats(text):
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    d: int
    n: int
    m: int
    R: float
    models: list  # one LagrangianSpec per player (entry 0 is the representative player)
    N: int
    coupling: CouplingSpec
    symmetric: bool
    schedule: tuple
    dt: float | None
    theta: float
    tol: float
    mfg_tol: float
    max_iter: int
    seed: int
    samples: int
    Ns: tuple
    horizon: float
    flow_dt: float
    out_dir: Path
    raw: dict = field(default_factory=dict)

    @property
    def xgrid(self) -> TorusGrid:
        return TorusGrid(self.d, self.n)

    @property
    def vgrid(self) -> VelocityGrid:
        return VelocityGrid(self.R, self.m, self.d)

    def game(self):
        from .game import GameSpec

        return GameSpec(
            self.N,
            tuple(self.models),
            (self.coupling,) * self.N,
            self.xgrid,
            self.vgrid,
            self.symmetric,
            self.schedule,
            self.dt,
        )

    def mean_field_game(self):
        from .meanfield import MeanFieldGame

        return MeanFieldGame(self.models[0], self.coupling, self.xgrid, self.vgrid, self.schedule, self.dt)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def _get(raw, section, key, conv, name=None):
    text = raw[section][key]
    try:
        return conv(text)
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"{name or section + '.' + key}: cannot parse {text!r} ({exc})") from None


def read_config(path=None, overrides=()) -> dict:
    """Merge defaults, the INI file and key=value overrides into a plain nested dict."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (N, R, Ns)
    cp.read_dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"config file not found: {p}")
        try:
            cp.read(p)
        except configparser.Error as exc:
            raise ConfigurationError(f"config does not parse: {exc}") from None
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key.strip(), value.strip())
    return {s: dict(cp.items(s)) for s in cp.sections()}


def _model(raw, section, base) -> LagrangianSpec:
    vals = {**base, **raw.get(section, {})}
    unknown = set(vals) - set(MODEL_KEYS)
    if unknown:
        raise ConfigurationError(f"{section}: unknown keys {sorted(unknown)}")
    kind = vals["kind"].strip()
    if kind not in LAGRANGIAN_KINDS:
        raise ConfigurationError(f"{section}.kind: unknown Lagrangian tag {kind!r}; expected one of {LAGRANGIAN_KINDS}")
    tmp = {section: vals}
    aniso = _get(tmp, section, "anisotropy", _floats)
    d = int(raw["grid"]["d"])
    if kind == "anisotropic":
        if len(aniso) != d * d:
            raise ConfigurationError(f"{section}.anisotropy: need {d * d} entries (row-major d x d matrix)")
        aniso = tuple(tuple(aniso[r * d:(r + 1) * d]) for r in range(d))
    else:
        aniso = ()
    return LagrangianSpec(
        kind=kind,
        d=d,
        amplitude=_get(tmp, section, "amplitude", float),
        phase=_get(tmp, section, "phase", float),
        freq=_get(tmp, section, "freq", int),
        offset=_get(tmp, section, "offset", float),
        anisotropy=aniso,
        quartic=_get(tmp, section, "quartic", float),
    )


def build_config(raw: dict) -> ExperimentConfig:
    """Validate a merged config dict and turn it into typed objects."""
    d = _get(raw, "grid", "d", int)
    n = _get(raw, "grid", "n", int)
    m = _get(raw, "grid", "m", int)
    R = _get(raw, "grid", "R", float)
    if d not in (1, 2):
        raise ConfigurationError(f"grid.d: dimension must be 1 or 2, got {d}")
    if n < 8:
        raise ConfigurationError(f"grid.n: need n >= 8, got {n}")
    if m < 9 or m % 2 == 0:
        raise ConfigurationError(f"grid.m: velocity points must be odd and >= 9, got {m}")
    if R <= 0:
        raise ConfigurationError(f"grid.R: velocity radius must be positive, got {R}")
    theta = _get(raw, "solver", "theta", float)
    if not 0.0 < theta <= 1.0:
        raise ConfigurationError(f"solver.theta: damping must lie in (0, 1], got {theta}")
    N = _get(raw, "game", "N", int)
    if N < 2:
        raise ConfigurationError(f"game.N: need at least 2 players, got {N}")
    base = raw["model"]
    models = [_model(raw, f"player{i + 1}", base) if f"player{i + 1}" in raw else _model(raw, "model", {}) for i in range(N)]
    kind = raw["game"]["coupling"].strip()
    if kind not in COUPLING_KINDS:
        raise ConfigurationError(f"game.coupling: unknown coupling tag {kind!r}; expected one of {COUPLING_KINDS}")
    coupling = CouplingSpec(
        kind,
        _get(raw, "game", "coupling_amplitude", float),
        _get(raw, "game", "coupling_phase", float),
        _get(raw, "game", "coupling_shift", float),
    )
    symmetric = _get(raw, "game", "symmetric", _bool)
    if symmetric and len(set(models)) != 1:
        raise ConfigurationError("game.symmetric: players have different models; set symmetric = false")
    schedule = tuple(_get(raw, "solver", "schedule", _floats))
    if len(schedule) < 3 or any(b >= a for a, b in zip(schedule, schedule[1:])) or schedule[-1] <= 0:
        raise ConfigurationError("solver.schedule: need >= 3 strictly decreasing positive discounts")
    dt_text = raw["solver"]["dt"].strip()
    dt = None if not dt_text else _get(raw, "solver", "dt", float)
    tol = _get(raw, "solver", "tol", float)
    mfg_tol = _get(raw, "solver", "mfg_tol", float)
    if tol <= 0 or mfg_tol <= 0:
        raise ConfigurationError("solver.tol and solver.mfg_tol must be positive")
    max_iter = _get(raw, "solver", "max_iter", int)
    if max_iter < 1:
        raise ConfigurationError("solver.max_iter must be >= 1")
    samples = _get(raw, "solver", "samples", int)
    if samples < 1000:
        raise ConfigurationError(f"solver.samples: need at least 1000 Monte Carlo draws, got {samples}")
    Ns = tuple(_get(raw, "solver", "Ns", _ints))
    if not Ns or Ns[0] < 2 or any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ConfigurationError("solver.Ns: need a strictly increasing list of player counts >= 2")
    horizon = _get(raw, "solver", "horizon", float)
    flow_dt = _get(raw, "solver", "flow_dt", float)
    if not 0 < flow_dt <= 0.1:
        raise ConfigurationError(f"solver.flow_dt must lie in (0, 0.1], got {flow_dt}")
    return ExperimentConfig(
        d=d, n=n, m=m, R=R, models=models, N=N, coupling=coupling, symmetric=symmetric,
        schedule=schedule, dt=dt, theta=theta, tol=tol, mfg_tol=mfg_tol, max_iter=max_iter,
        seed=_get(raw, "solver", "seed", int), samples=samples, Ns=Ns, horizon=horizon,
        flow_dt=flow_dt, out_dir=Path(raw["output"]["dir"]), raw=raw,
    )


def _dump(path: Path, doc):
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _single_potential(cfg: ExperimentConfig):
    """Potential seen by a lone player: the separable coupling if any, else zero."""
    c = cfg.coupling
    if c.kind in ("zero", "separable"):
        return c.mean_field(cfg.xgrid, np.full(cfg.xgrid.size, 1.0 / cfg.xgrid.size))
    return None


def _run_weakkam(cfg, out, threads):
    from .weakkam import ergodic_constant

    sol = ergodic_constant(cfg.models[0], _single_potential(cfg), cfg.schedule, cfg.xgrid, cfg.vgrid, cfg.dt)
    _dump(out / "weakkam.json", sol.to_dict())
    print(f"lambda = {sol.lam:.10g}")
    return True, ["weakkam.json"]


def _run_mather(cfg, out, threads):
    from .mather import solve_mather

    res = solve_mather(cfg.models[0], _single_potential(cfg), cfg.xgrid, cfg.vgrid, detect_multiplicity=True)
    _dump(out / "mather.json", res.to_dict())
    print(f"value = {res.value:.10g}, atoms = {len(res.support_nodes)}, unique = {res.unique}")
    return True, ["mather.json"]


def _run_nash(cfg, out, threads):
    from .game import solve_nash_mixed

    res = solve_nash_mixed(cfg.game(), cfg.theta, cfg.tol, cfg.max_iter, threads=threads)
    _dump(out / "nash.json", res.to_dict())
    res.trace_to_csv(out / "nash_trace.csv")
    print(f"converged = {res.converged} after {res.iterations} iterations, max gap = {max(res.deviation_gaps):.3g}")
    return res.converged, ["nash.json", "nash_trace.csv"]


def _run_pure(cfg, out, threads):
    from .game import pure_strategy_game

    rep = pure_strategy_game(cfg.game(), T=cfg.horizon, dt=cfg.flow_dt, seed=cfg.seed)
    _dump(out / "pure.json", rep.to_dict())
    names = ["pure.json"]
    for i, tr in enumerate(rep.trajectories):
        name = f"trajectory_player{i + 1}.csv"
        tr.to_csv(out / name)
        names.append(name)
    print(f"averages = {rep.averages}, lambdas = {rep.lambdas}, passed = {rep.passed}")
    return True, names


def _run_mfg(cfg, out, threads):
    from .meanfield import solve_ergodic_mfg

    sol = solve_ergodic_mfg(cfg.mean_field_game(), cfg.mfg_tol, cfg.theta, cfg.max_iter)
    _dump(out / "mfg.json", sol.to_dict())
    print(f"lambda_bar = {sol.lambda_bar:.10g} (weak KAM {sol.lambda_pde:.10g}), converged = {sol.converged}")
    return sol.converged, ["mfg.json"]


def _run_nsweep(cfg, out, threads):
    from .meanfield import nsweep

    # the limit problem is solved at the members' tolerance so the distances compare like with like
    rec = nsweep(cfg.mean_field_game(), cfg.Ns, cfg.tol, cfg.theta, cfg.samples, cfg.seed, None, threads)
    rec.to_csv(out / "nsweep.csv")
    _dump(out / "nsweep.json", rec.to_dict())
    for r in rec.rows:
        print(f"N={r['N']:3d}  lambda_N={r['lambda_N']:.8g}  dist_lambda={r['dist_lambda']:.3g}  "
              f"dist_v={r['dist_v_sup']:.3g}  dist_m={r['dist_m_W1']:.3g}")
    ok = rec.mfg.converged and all(r.get("converged", False) for r in rec.rows)
    return ok, ["nsweep.csv", "nsweep.json"]


def _run_hewitt_savage(cfg, out, threads):
    from .meanfield import hewitt_savage_check, hewitt_savage_to_csv
    from .measures import StateMeasure

    rows = hewitt_savage_check(StateMeasure.uniform(cfg.xgrid), cfg.coupling, cfg.Ns, cfg.samples, cfg.seed)
    hewitt_savage_to_csv(rows, out / "hewitt_savage.csv")
    _dump(out / "hewitt_savage.json", rows)
    for r in rows:
        print(f"N={r['N']:3d}  estimate={r['estimate']:.6g} +- {r['stderr']:.2g}  limit={r['limit']:.6g}")
    return True, ["hewitt_savage.csv", "hewitt_savage.json"]


def _run_validate(cfg, out, threads):
    cfg.game()  # catches player-count and symmetry issues the flat checks cannot see
    print("configuration OK")
    return True, []


RUNNERS = {
    "weakkam": _run_weakkam,
    "mather": _run_mather,
    "nash": _run_nash,
    "pure": _run_pure,
    "mfg": _run_mfg,
    "nsweep": _run_nsweep,
    "hewitt-savage": _run_hewitt_savage,
    "validate": _run_validate,
}


def _manifest(cfg, sub, status, artifacts, wall, threads, message=None):
    return {
        "subcommand": sub,
        "exit_status": status,
        "config": cfg.raw,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "threads": threads,
        "artifacts": artifacts,
        "versions": {
            "ergonash": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": wall,
        "message": message,
    }


def run(subcommand: str, config_path=None, overrides=(), threads: int = 1) -> int:
    """Execute one subcommand; returns the process exit status."""
    if subcommand not in RUNNERS:
        print(f"error: unknown subcommand {subcommand!r}", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = build_config(read_config(config_path, overrides))
        if subcommand == "validate":
            RUNNERS[subcommand](cfg, None, threads)
            return EXIT_OK
    except ConfigurationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if threads < 1:
        print("invalid configuration: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    log.info("running %s with config hash %s", subcommand, cfg.config_hash()[:12])
    t0 = time.perf_counter()
    artifacts, message = [], None
    try:
        ok, artifacts = RUNNERS[subcommand](cfg, out, threads)
        status = EXIT_OK if ok else EXIT_NOT_CONVERGED
        if not ok:
            message = "solver did not reach the requested tolerance"
    except (ConfigurationError, VelocityGridTooSmall) as exc:
        status, message = EXIT_INVALID, str(exc)
    except SolverError as exc:
        status, message = EXIT_NOT_CONVERGED, f"{exc} (residual {exc.residual})"
    if message:
        print(f"{subcommand}: {message}", file=sys.stderr)
    _dump(out / "manifest.json", _manifest(cfg, subcommand, status, artifacts, time.perf_counter() - t0, threads, message))
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ergonash", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", nargs="?", help="INI configuration file")
        s.add_argument("overrides", nargs="*", help="section.key=value overrides")
        s.add_argument("--threads", type=int, default=1, help="cap on concurrent per-player / per-N solves")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    # overrides given after an option land in ``extra``
    bad = [e for e in extra if "=" not in e]
    if bad:
        parser.error(f"unrecognized arguments: {' '.join(bad)}")
    args.overrides = list(args.overrides) + extra
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    config, overrides = args.config, list(args.overrides)
    if config is not None and "=" in config:  # no config file, overrides only
        config, overrides = None, [config] + overrides
    return run(args.subcommand, config, overrides, args.threads)


if __name__ == "__main__":
    sys.exit(main())
