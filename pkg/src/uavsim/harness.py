"""Evaluation runs: per-episode metrics, distance sweeps and table comparison."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .env import Band, EnvConfig, TerminalKind, UavEnv, classify_rsrp
from .geometry import as_vec3, distance_3d, inside_any

log = logging.getLogger(__name__)

AGENT_KINDS = ("dupac", "baseline", "random")
RESULT_COLUMNS = [
    "distance_m", "agent", "episodes", "reach_rate", "mean_extra_distance_ratio",
    "mean_excellent_frac", "mean_mediocre_frac", "mean_poor_frac", "mean_rsrp_dbm", "mean_handovers",
]
EPISODE_COLUMNS = [
    "distance_m", "agent", "episode", "seed", "outcome", "steps", "path_length", "straight_line",
    "extra_distance_ratio", "excellent_frac", "mediocre_frac", "poor_frac", "mean_rsrp_dbm", "handovers",
]
METRIC_FIELDS = ["path_length", "straight_line", "extra_distance_ratio", "excellent_frac", "mediocre_frac",
                 "poor_frac", "mean_rsrp", "handovers", "steps", "reached"]


@dataclass
class EpisodeMetrics:
    path_length: float
    straight_line: float
    extra_distance_ratio: float
    excellent_frac: float
    mediocre_frac: float
    poor_frac: float
    mean_rsrp: float
    handovers: int
    outcome: TerminalKind
    steps: int

    @property
    def band_occupancy(self) -> dict:
        return {Band.EXCELLENT: self.excellent_frac, Band.MEDIOCRE: self.mediocre_frac, Band.POOR: self.poor_frac}

    @property
    def reached(self) -> bool:
        return self.outcome is TerminalKind.REACHED


def metrics_from_trace(trace: list[dict], reward_cfg=None) -> EpisodeMetrics:
    """Recompute every metric from a step trace (first record is the reset)."""
    pos = np.array([r["position"] for r in trace], dtype=float)
    moves = trace[1:]
    if not moves:
        raise ValueError("trace has no steps")
    path = float(np.linalg.norm(np.diff(pos, axis=0), axis=1).sum())
    straight = distance_3d(trace[0]["position"], trace[0]["destination"])
    levels = np.array([r["rsrp"] for r in moves])
    bands = [classify_rsrp(v, reward_cfg) if reward_cfg else classify_rsrp(v) for v in levels]
    n = len(moves)
    return EpisodeMetrics(
        path_length=path,
        straight_line=straight,
        extra_distance_ratio=path / straight - 1.0,
        excellent_frac=sum(b is Band.EXCELLENT for b in bands) / n,
        mediocre_frac=sum(b is Band.MEDIOCRE for b in bands) / n,
        poor_frac=sum(b is Band.POOR for b in bands) / n,
        mean_rsrp=float(levels.mean()),
        handovers=sum(bool(r["handover"]) for r in moves),
        outcome=TerminalKind(moves[-1]["outcome"]),
        steps=n,
    )


def _env_for(scenario, agent, env_config):
    if env_config is None:
        env_config = getattr(agent, "env_config_", None) or EnvConfig(handover=getattr(agent, "handover", "agent"))
    return UavEnv(scenario, env_config)


def run_episode(scenario, agent, seed: int, deterministic: bool = True, env_config: EnvConfig | None = None,
                source=None, destination=None):
    """Fly one episode; returns ``(EpisodeMetrics, trace)``.

    ``agent`` needs ``act(obs, rng, deterministic)``. The trace holds the
    reset state followed by one record per step with position, serving
    GBS, RSRP, reward, band and handover flag.
    """
    env = _env_for(scenario, agent, env_config)
    gbs_ids = getattr(agent, "gbs_ids_", None)
    if gbs_ids is not None and list(gbs_ids) != env.gbs_ids:
        raise ValueError(f"agent was trained for GBS ids {list(gbs_ids)}, scenario has {env.gbs_ids}")
    rng = np.random.default_rng(seed)
    state = env.reset(int(rng.integers(0, 2**31 - 1)), source=source, destination=destination)
    trace = [{
        "step": 0,
        "position": state.position.tolist(),
        "destination": env.destination.tolist(),
        "serving_gbs": int(state.serving_gbs),
        "rsrp": float(state.serving_rsrp),
        "reward": None,
        "band": classify_rsrp(state.serving_rsrp, env.config.reward).value,
        "handover": False,
        "outcome": TerminalKind.NONE.value,
    }]
    done = False
    while not done:
        cmd = agent.act(env.observe(), rng=rng, deterministic=deterministic)
        res = env.step(cmd)
        s = res.next_state
        trace.append({
            "step": s.step_index,
            "position": s.position.tolist(),
            "serving_gbs": int(s.serving_gbs),
            "rsrp": float(s.serving_rsrp),
            "reward": res.reward,
            "band": classify_rsrp(s.serving_rsrp, env.config.reward).value,
            "handover": bool(res.handover_occurred),
            "outcome": res.terminal_kind.value,
        })
        done = res.done
    return metrics_from_trace(trace, env.config.reward), trace


# -- sweeps --------------------------------------------------------------

@dataclass
class ExperimentConfig:
    scenario_path: str | None = None
    agent: str = "dupac"
    checkpoint: str | None = None
    distances: tuple[float, ...] = (200.0, 400.0, 600.0, 800.0)
    episodes: int = 50
    seed: int = 0
    out_dir: str = "results"
    deterministic: bool = True
    workers: int = 1
    write_traces: bool = True

    def __post_init__(self):
        if self.agent not in AGENT_KINDS:
            raise ValueError(f"agent must be one of {AGENT_KINDS}, got {self.agent!r}")
        if int(self.episodes) < 1:
            raise ValueError("episodes must be >= 1")
        if not self.distances or any(d <= 0 for d in self.distances):
            raise ValueError("distances must be a non-empty list of positive values")
        self.distances = tuple(float(d) for d in self.distances)

    def to_json(self) -> dict:
        out = asdict(self)
        out["distances"] = list(self.distances)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**data)


def load_agent(kind: str, checkpoint=None, scenario=None, seed: int = 0):
    """Agent for ``kind``; trained kinds load ``checkpoint`` and check its handover mode."""
    from .agent.estimator import RandomAgent, load_checkpoint
    if kind == "random":
        return RandomAgent(random_state=seed).fit(scenario)
    if checkpoint is None or not Path(checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
    agent = load_checkpoint(checkpoint)
    want = "agent" if kind == "dupac" else "a3"
    if agent.handover != want:
        raise ValueError(f"checkpoint {checkpoint} uses handover={agent.handover!r}, {kind} needs {want!r}")
    return agent


def place_destination(scenario, source, distance: float, rng, max_tries: int = 2000) -> np.ndarray:
    """Free point at horizontal range ``distance`` from ``source`` and the
    same altitude, at a random azimuth."""
    src = as_vec3(source)
    for _ in range(max_tries):
        az = rng.uniform(0.0, 2 * math.pi)
        dst = src + np.array([distance * math.cos(az), distance * math.sin(az), 0.0])
        if scenario.in_area(dst) and not inside_any(scenario, dst[None])[0]:
            return dst
    raise ValueError(f"no free destination at {distance} m from {src.tolist()}")


def episode_seed(seed: int, distance_index: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, distance_index, episode]).generate_state(1)[0])


def _sweep_task(args):
    scenario, agent, env_config, distance, d_idx, ep, seed, deterministic = args
    s = episode_seed(seed, d_idx, ep)
    rng = np.random.default_rng([s, 1])
    dst = place_destination(scenario, scenario.source, distance, rng)
    m, trace = run_episode(scenario, agent, s, deterministic, env_config,
                           source=scenario.source, destination=dst)
    return d_idx, ep, s, m, trace


def _mean(values):
    return float(np.mean(values)) if len(values) else float("nan")


def _std(values):
    return float(np.std(values)) if len(values) else float("nan")


def aggregate(distance: float, agent: str, metrics: list[EpisodeMetrics]) -> dict:
    """One results row. Extra distance is averaged over reached episodes
    only; everything else over all episodes."""
    reached = [m for m in metrics if m.reached]
    return {
        "distance_m": float(distance),
        "agent": agent,
        "episodes": len(metrics),
        "reach_rate": len(reached) / len(metrics),
        "mean_extra_distance_ratio": _mean([m.extra_distance_ratio for m in reached]),
        "mean_excellent_frac": _mean([m.excellent_frac for m in metrics]),
        "mean_mediocre_frac": _mean([m.mediocre_frac for m in metrics]),
        "mean_poor_frac": _mean([m.poor_frac for m in metrics]),
        "mean_rsrp_dbm": _mean([m.mean_rsrp for m in metrics]),
        "mean_handovers": _mean([m.handovers for m in metrics]),
    }


def summary_stats(metrics: list[EpisodeMetrics]) -> dict:
    out = {}
    for f in METRIC_FIELDS:
        vals = [float(getattr(m, f)) for m in metrics]
        if f == "extra_distance_ratio":
            vals = [float(m.extra_distance_ratio) for m in metrics if m.reached]
        out[f] = {"mean": _mean(vals), "std": _std(vals)}
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


@dataclass
class SweepResult:
    rows: list[dict]
    episodes: list[dict] = field(default_factory=list)
    paths: dict = field(default_factory=dict)


def evaluate_sweep(cfg: ExperimentConfig, scenario=None, agent=None, env_config: EnvConfig | None = None) -> SweepResult:
    """Run ``cfg.episodes`` episodes per distance and write
    ``results.csv``, ``results.json``, ``episodes.csv`` and (optionally)
    ``traces.jsonl`` under ``cfg.out_dir``.

    The source is the scenario's; each episode draws its own destination
    azimuth. Results are sorted by (distance, episode) before writing, so
    the files do not depend on ``cfg.workers``.
    """
    from .scenario import load_scenario
    if scenario is None:
        if cfg.scenario_path is None:
            raise ValueError("no scenario given")
        scenario = load_scenario(cfg.scenario_path)
    if agent is None:
        agent = load_agent(cfg.agent, cfg.checkpoint, scenario, cfg.seed)
    tasks = [(scenario, agent, env_config, d, i, ep, cfg.seed, cfg.deterministic)
             for i, d in enumerate(cfg.distances) for ep in range(int(cfg.episodes))]
    workers = max(1, int(cfg.workers))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_sweep_task(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, ep_rows, stats = [], [], {}
    for i, d in enumerate(cfg.distances):
        group = [r for r in results if r[0] == i]
        metrics = [r[3] for r in group]
        rows.append(aggregate(d, cfg.agent, metrics))
        stats[repr(d)] = summary_stats(metrics)
        for _, ep, s, m, _ in group:
            ep_rows.append({
                "distance_m": d, "agent": cfg.agent, "episode": ep, "seed": s, "outcome": m.outcome.value,
                "steps": m.steps, "path_length": m.path_length, "straight_line": m.straight_line,
                "extra_distance_ratio": m.extra_distance_ratio, "excellent_frac": m.excellent_frac,
                "mediocre_frac": m.mediocre_frac, "poor_frac": m.poor_frac, "mean_rsrp_dbm": m.mean_rsrp,
                "handovers": m.handovers,
            })
    paths = {
        "results_csv": out / "results.csv",
        "results_json": out / "results.json",
        "episodes_csv": out / "episodes.csv",
    }
    write_csv(paths["results_csv"], RESULT_COLUMNS, rows)
    write_csv(paths["episodes_csv"], EPISODE_COLUMNS, ep_rows)
    paths["results_json"].write_text(json.dumps(
        {"config": cfg.to_json(), "agent": cfg.agent, "per_distance": stats}, indent=2, sort_keys=True) + "\n")
    if cfg.write_traces:
        paths["traces_jsonl"] = out / "traces.jsonl"
        with open(paths["traces_jsonl"], "w") as fh:
            for d_idx, ep, s, _, trace in results:
                for rec in trace:
                    line = {"distance_m": cfg.distances[d_idx], "episode": ep, "seed": s, **rec}
                    fh.write(json.dumps(line, sort_keys=True) + "\n")
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return SweepResult(rows, ep_rows, {k: str(v) for k, v in paths.items()})


# -- comparison ------------------------------------------------------------

COMPARE_FIELDS = ["reach_rate", "mean_extra_distance_ratio", "mean_excellent_frac", "mean_mediocre_frac",
                  "mean_poor_frac", "mean_rsrp_dbm", "mean_handovers"]


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in RESULT_COLUMNS:
            if k == "agent":
                continue
            r[k] = int(r[k]) if k == "episodes" else float(r[k])
    return rows


def compare(table_a: list[dict], table_b: list[dict]) -> list[dict]:
    """Per-distance ``a - b`` deltas. The two tables must cover the same
    distances."""
    grid_a = [float(r["distance_m"]) for r in table_a]
    grid_b = [float(r["distance_m"]) for r in table_b]
    if sorted(grid_a) != sorted(grid_b) or len(set(grid_a)) != len(grid_a):
        raise ValueError(f"sweep grids differ: {grid_a} vs {grid_b}")
    by_b = {float(r["distance_m"]): r for r in table_b}
    out = []
    for ra in sorted(table_a, key=lambda r: float(r["distance_m"])):
        rb = by_b[float(ra["distance_m"])]
        row = {"distance_m": float(ra["distance_m"]), "agent_a": ra["agent"], "agent_b": rb["agent"]}
        for f in COMPARE_FIELDS:
            row[f"delta_{f}"] = float(ra[f]) - float(rb[f])
        out.append(row)
    return out


COMPARE_COLUMNS = ["distance_m", "agent_a", "agent_b"] + [f"delta_{f}" for f in COMPARE_FIELDS]


def default_workers() -> int:
    return os.cpu_count() or 1
