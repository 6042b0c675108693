"""``uavsim`` command line: scenario generation, coverage maps, training,
evaluation, comparison and the self-check suite.

Settings come from built-in defaults, then a JSON ``--config`` file, then
the ``UAVSIM_SEED`` environment variable (seed only), then explicit flags.
Relative paths are resolved against ``--out``. Every run records its
resolved settings, seed and output hashes in ``<out>/manifest.json``.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__

log = logging.getLogger("uavsim")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

DEFAULTS = {
    "gen-scenario": {"preset": "synthetic", "seed": 0, "name": "scenario.json", "params": {}},
    "coverage": {"scenario": None, "altitudes": [30.0, 60.0, 100.0], "cell": 10.0, "formats": ["csv", "pgm"]},
    "train": {"scenario": None, "agent": "dupac", "total_steps": 200_000, "n_envs": 4, "seed": 0,
              "hidden_sizes": [128, 128], "checkpoint": "checkpoint.bin", "env": {"endpoints": "random"},
              "ppo": {}},
    "eval": {"scenario": None, "agent": "dupac", "checkpoint": None, "distances": [200.0, 400.0, 600.0, 800.0],
             "episodes": 50, "seed": 0, "stochastic": False, "traces": True, "env": None},
    "compare": {"a": None, "b": None, "name": "compare.csv"},
    "validate": {},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON settings file (a previous manifest.json also works)")
    common.add_argument("--out", default=".", help="output directory; relative paths resolve against it")
    common.add_argument("--workers", type=int, default=None, help="parallel workers (default: CPU count)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="uavsim", description="Connectivity-aware UAV path planning simulator.")
    p.add_argument("--version", action="version", version=f"uavsim {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-scenario", parents=[common], help="write a scenario JSON")
    g.add_argument("--preset", choices=["synthetic", "desk", "dense", "corridor"])
    g.add_argument("--seed", type=int)
    g.add_argument("--name", help="output file name (default scenario.json)")
    g.add_argument("--n-buildings", type=int, dest="n_buildings")
    g.add_argument("--n-gbs", type=int, dest="n_gbs")
    g.add_argument("--area", type=_floats, help="W,H in meters")

    c = sub.add_parser("coverage", parents=[common], help="RSRP heatmaps at several altitudes")
    c.add_argument("--scenario")
    c.add_argument("--altitudes", type=_floats, help="comma-separated altitudes in meters")
    c.add_argument("--cell", type=float, help="cell size in meters")
    c.add_argument("--formats", type=lambda s: [t for t in s.split(",") if t], help="csv,pgm")

    t = sub.add_parser("train", parents=[common], help="train a PPO agent")
    t.add_argument("--scenario")
    t.add_argument("--agent", choices=["dupac", "baseline"])
    t.add_argument("--total-steps", type=int, dest="total_steps")
    t.add_argument("--n-envs", type=int, dest="n_envs")
    t.add_argument("--seed", type=int)
    t.add_argument("--hidden-sizes", type=_ints, dest="hidden_sizes")
    t.add_argument("--checkpoint", help="output checkpoint name (default checkpoint.bin)")

    e = sub.add_parser("eval", parents=[common], help="distance sweep evaluation")
    e.add_argument("--scenario")
    e.add_argument("--agent", choices=["dupac", "baseline", "random"])
    e.add_argument("--checkpoint")
    e.add_argument("--distances", type=_floats)
    e.add_argument("--episodes", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--stochastic", action="store_true", default=None, help="sample actions instead of modes")
    e.add_argument("--no-traces", action="store_false", dest="traces", default=None)

    m = sub.add_parser("compare", parents=[common], help="per-distance deltas of two result tables")
    m.add_argument("--a", help="results.csv of the first agent")
    m.add_argument("--b", help="results.csv of the second agent")
    m.add_argument("--name", help="output file name (default compare.csv)")

    sub.add_parser("validate", parents=[common], help="run the oracle self-checks")
    return p


_COMMON = {"command", "config", "out", "workers", "verbose"}


def resolve_settings(args: argparse.Namespace, environ=None) -> dict:
    """Defaults, then config file, then ``UAVSIM_SEED``, then flags."""
    environ = os.environ if environ is None else environ
    settings = copy.deepcopy(DEFAULTS[args.command])
    if args.config:
        path = Path(args.config)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        if "runs" in data and isinstance(data["runs"], dict):  # a manifest
            data = data["runs"].get(args.command, {}).get("settings", {})
        unknown = set(data) - set(settings) - {"workers"}
        if unknown:
            raise UsageError(f"unknown {args.command} settings in {path}: {sorted(unknown)}")
        settings.update(data)
    if "seed" in settings and environ.get("UAVSIM_SEED"):
        try:
            settings["seed"] = int(environ["UAVSIM_SEED"])
        except ValueError:
            raise UsageError(f"UAVSIM_SEED must be an integer, got {environ['UAVSIM_SEED']!r}") from None
    for k, v in vars(args).items():
        if k in _COMMON or v is None:
            continue
        if args.command == "gen-scenario" and k in ("n_buildings", "n_gbs", "area"):
            settings["params"] = {**settings.get("params", {}), ("area_size" if k == "area" else k): v}
        else:
            settings[k] = v
    workers = args.workers if args.workers is not None else settings.pop("workers", None)
    settings.pop("workers", None)
    settings["workers"] = int(workers) if workers is not None else (os.cpu_count() or 1)
    return settings


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, argv: list[str], settings: dict, artifacts: list[Path]) -> Path:
    """Merge this run into ``<out>/manifest.json`` under its subcommand."""
    path = out / "manifest.json"
    manifest = {"tool": "uavsim", "version": __version__, "runs": {}}
    if path.is_file():
        try:
            manifest = json.loads(path.read_text())
        except json.JSONDecodeError:
            pass
    manifest.setdefault("runs", {})[command] = {
        "argv": argv,
        "settings": settings,
        "seed": settings.get("seed"),
        "artifacts": {str(p.relative_to(out)) if p.is_relative_to(out) else str(p): _sha256(p)
                      for p in sorted(artifacts)},
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _in_out(out: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else out / p


def _require(settings: dict, *keys):
    missing = [k for k in keys if settings.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


# -- subcommands -----------------------------------------------------------

def cmd_gen_scenario(s: dict, out: Path) -> list[Path]:
    from .scenario import DENSE_PARAMS, DESK_PARAMS, ScenarioParams, corridor_scenario, generate_synthetic_scenario, save_scenario
    params = dict(s.get("params") or {})
    if "area_size" in params:
        params["area_size"] = tuple(params["area_size"])
    for k in ("height_range", "footprint_range"):
        if k in params:
            params[k] = tuple(params[k])
    unknown = set(params) - set(ScenarioParams.__dataclass_fields__)
    if unknown:
        raise UsageError(f"unknown scenario params: {sorted(unknown)}")
    if s["preset"] == "corridor":
        if params:
            raise UsageError("the corridor preset takes no generator parameters")
        sc = corridor_scenario()
    elif s["preset"] in ("desk", "dense"):
        base = DESK_PARAMS if s["preset"] == "desk" else DENSE_PARAMS
        sc = generate_synthetic_scenario(base, seed=s["seed"], **params)
    else:
        sc = generate_synthetic_scenario(None, seed=s["seed"], **params)
    path = _in_out(out, s["name"])
    save_scenario(sc, path)
    print(f"wrote {path} ({len(sc.buildings)} buildings, {len(sc.gbs_list)} GBSs)")
    return [path]


def cmd_coverage(s: dict, out: Path) -> list[Path]:
    from .coverage import compute_coverage_grid, export_grid
    from .scenario import load_scenario
    _require(s, "scenario")
    bad = set(s["formats"]) - {"csv", "pgm"}
    if bad:
        raise UsageError(f"unknown coverage formats: {sorted(bad)}")
    if not s["altitudes"]:
        raise UsageError("--altitudes needs at least one value")
    sc = load_scenario(_in_out(out, s["scenario"]))
    paths = []
    for alt in s["altitudes"]:
        grid = compute_coverage_grid(sc, float(alt), float(s["cell"]))
        for fmt in s["formats"]:
            p = out / f"coverage_{float(alt):g}m.{fmt}"
            export_grid(grid, p, fmt)
            paths.append(p)
        print(f"altitude {float(alt):g} m: mean RSRP {grid.free_mean():.2f} dBm over free cells")
    return paths


def cmd_train(s: dict, out: Path) -> list[Path]:
    from .agent.estimator import PPOAgent, save_checkpoint
    from .agent.ppo import PpoConfig
    from .env import EnvConfig
    from .scenario import load_scenario
    _require(s, "scenario")
    sc = load_scenario(_in_out(out, s["scenario"]))
    handover = "agent" if s["agent"] == "dupac" else "a3"
    env_cfg = EnvConfig.from_json({**(s.get("env") or {}), "handover": handover})
    ppo = dict(s.get("ppo") or {})
    unknown = set(ppo) - set(PpoConfig.__dataclass_fields__)
    if unknown:
        raise UsageError(f"unknown ppo settings: {sorted(unknown)}")
    agent = PPOAgent(hidden_sizes=tuple(s["hidden_sizes"]), total_steps=int(s["total_steps"]),
                     n_envs=int(s["n_envs"]), handover=handover, random_state=int(s["seed"]), **ppo)
    log_path = out / "training_log.jsonl"
    with open(log_path, "w") as fh:
        def record(r):
            fh.write(json.dumps(r, sort_keys=True) + "\n")
            log.info("iteration %d steps %d reach_rate %s", r["iteration"], r["steps"], r["reach_rate"])
        agent.fit(sc, env_cfg, callback=record)
    ck = _in_out(out, s["checkpoint"])
    save_checkpoint(agent, ck)
    print(f"wrote {ck} after {len(agent.training_log_)} updates")
    return [ck, log_path]


def cmd_eval(s: dict, out: Path) -> list[Path]:
    from .env import EnvConfig
    from .harness import ExperimentConfig, evaluate_sweep, load_agent
    from .scenario import load_scenario
    _require(s, "scenario")
    if s["agent"] != "random":
        _require(s, "checkpoint")
    cfg = ExperimentConfig(
        scenario_path=str(_in_out(out, s["scenario"])),
        agent=s["agent"],
        checkpoint=str(_in_out(out, s["checkpoint"])) if s.get("checkpoint") else None,
        distances=tuple(s["distances"]),
        episodes=int(s["episodes"]),
        seed=int(s["seed"]),
        out_dir=str(out),
        deterministic=not s["stochastic"],
        workers=int(s["workers"]),
        write_traces=bool(s["traces"]),
    )
    sc = load_scenario(cfg.scenario_path)
    agent = load_agent(cfg.agent, cfg.checkpoint, sc, cfg.seed)
    env_cfg = None
    if s.get("env"):
        base = getattr(agent, "env_config_", None) or EnvConfig(handover="agent")
        env_cfg = EnvConfig.from_json({**base.to_json(), **s["env"]})
    res = evaluate_sweep(cfg, sc, agent, env_cfg)
    for r in res.rows:
        print(f"{r['distance_m']:g} m: reach {r['reach_rate']:.2f}, extra distance "
              f"{r['mean_extra_distance_ratio']:.3f}, excellent {r['mean_excellent_frac']:.3f}, "
              f"mean RSRP {r['mean_rsrp_dbm']:.2f} dBm")
    return [Path(p) for p in res.paths.values()]


def cmd_compare(s: dict, out: Path) -> list[Path]:
    from .harness import COMPARE_COLUMNS, compare, read_results_csv, write_csv
    _require(s, "a", "b")
    rows = compare(read_results_csv(_in_out(out, s["a"])), read_results_csv(_in_out(out, s["b"])))
    path = _in_out(out, s["name"])
    write_csv(path, COMPARE_COLUMNS, rows)
    for r in rows:
        print(f"{r['distance_m']:g} m: d_extra {r['delta_mean_extra_distance_ratio']:+.3f}, "
              f"d_excellent {r['delta_mean_excellent_frac']:+.3f}, d_rsrp {r['delta_mean_rsrp_dbm']:+.2f} dB")
    return [path]


def cmd_validate(s: dict, out: Path) -> list[Path]:
    from .validate import run_checks
    results = run_checks()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail} ({r.seconds:.2f} s)")
    path = out / "validate.json"
    path.write_text(json.dumps([r._asdict() | {"seconds": None} for r in results], indent=2) + "\n")
    if not all(r.passed for r in results):
        raise RuntimeError("self-checks failed")
    return [path]


COMMANDS = {
    "gen-scenario": cmd_gen_scenario,
    "coverage": cmd_coverage,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, usage errors exit 1
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        settings = resolve_settings(args)
        out.mkdir(parents=True, exist_ok=True)
        artifacts = COMMANDS[args.command](settings, out)
        write_manifest(out, args.command, argv, settings, artifacts)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"uavsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"uavsim {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
