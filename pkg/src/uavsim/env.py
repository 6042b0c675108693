"""Gym-style UAV flight environment with the banded connectivity reward."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from .geometry import ObstacleReading, as_vec3, distance_3d, inside_any, nearest_obstacle, segments_hit_boxes
from .radio import all_rsrp, best_gbs, rsrp
from .agent.baseline import BaselineState, baseline_select_gbs

STEP_SCALE = 75.0 / 3.6  # 75 km/h at one decision per second


class Band(str, Enum):
    EXCELLENT = "excellent"
    MEDIOCRE = "mediocre"
    POOR = "poor"


class TerminalKind(str, Enum):
    NONE = "none"
    REACHED = "reached"
    COLLIDED = "collided"
    OUT_OF_BOUNDS = "out_of_bounds"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class RewardConfig:
    mu1: float = 10.0
    mu2: float = 0.01
    mu3: float = 0.1
    excellent_threshold: float = -80.0
    mediocre_threshold: float = -100.0
    terminal_bonus: float = 200.0
    collision_penalty: float = -200.0

    def __post_init__(self):
        if not self.mediocre_threshold < self.excellent_threshold:
            raise ValueError("mediocre_threshold must be below excellent_threshold")


@dataclass(frozen=True)
class EnvConfig:
    step_scale: float = STEP_SCALE
    arrival_radius: float = 10.0
    max_range: float = 50.0
    n_rays: int = 16
    reward: RewardConfig = field(default_factory=RewardConfig)
    handover: str = "agent"  # "agent": GBS id comes from the action; "a3": rule-based
    hysteresis_db: float = 3.0
    time_to_trigger: int = 3
    # Episode endpoints: "fixed" uses the scenario's source/destination,
    # "random" draws both per reset with separation in endpoint_distance.
    endpoints: str = "fixed"
    endpoint_distance: tuple[float, float] = (150.0, 400.0)
    endpoint_altitude: tuple[float, float] | None = None
    source_jitter: float = 0.0

    def __post_init__(self):
        if self.handover not in ("agent", "a3"):
            raise ValueError(f"handover must be 'agent' or 'a3', got {self.handover!r}")
        if self.endpoints not in ("fixed", "random"):
            raise ValueError(f"endpoints must be 'fixed' or 'random', got {self.endpoints!r}")

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "reward"}
        out["endpoint_distance"] = list(self.endpoint_distance)
        if self.endpoint_altitude is not None:
            out["endpoint_altitude"] = list(self.endpoint_altitude)
        out["reward"] = dict(vars(self.reward))
        return out

    @classmethod
    def from_json(cls, data: dict) -> "EnvConfig":
        data = dict(data)
        reward = RewardConfig(**data.pop("reward", {}))
        for k in ("endpoint_distance", "endpoint_altitude"):
            if data.get(k) is not None:
                data[k] = tuple(data[k])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown env keys: {sorted(unknown)}")
        return cls(reward=reward, **data)


@dataclass
class EnvState:
    position: np.ndarray
    velocity: np.ndarray
    obstacle: ObstacleReading
    serving_gbs: int
    step_index: int
    dist_to_dest: float
    serving_rsrp: float


class ActionCommand(NamedTuple):
    delta: np.ndarray
    next_gbs: int


@dataclass
class StepOutcome:
    next_state: EnvState
    reward: float
    done: bool
    terminal_kind: TerminalKind
    handover_occurred: bool


def classify_rsrp(value: float, cfg: RewardConfig = RewardConfig()) -> Band:
    if value >= cfg.excellent_threshold:
        return Band.EXCELLENT
    if value >= cfg.mediocre_threshold:
        return Band.MEDIOCRE
    return Band.POOR


def reward(d_prev: float, d_next: float, rsrp_next: float, cfg: RewardConfig = RewardConfig()) -> float:
    band = classify_rsrp(rsrp_next, cfg)
    if band is Band.EXCELLENT:
        return cfg.mu1 * (d_prev - d_next)
    if band is Band.MEDIOCRE:
        return cfg.mu1 * (d_prev - d_next) + cfg.mu2 * rsrp_next
    return cfg.mu3 * rsrp_next


class EpisodeDone(RuntimeError):
    """Raised by ``step`` after the episode has terminated."""


class UavEnv:
    """One UAV flight in a fixed scenario.

    ``reset`` places the UAV at the source, ``step`` applies an
    :class:`ActionCommand`, ``observe`` returns the normalized feature vector.
    """

    def __init__(self, scenario, config: EnvConfig | None = None):
        self.scenario = scenario
        self.config = config or EnvConfig()
        self.gbs_ids = list(scenario.gbs_ids)
        if not self.gbs_ids:
            raise ValueError("scenario has no GBS")
        self._index = {g: i for i, g in enumerate(self.gbs_ids)}
        self.state: EnvState | None = None
        self.done = True
        self.source = np.array(scenario.source)
        self.destination = np.array(scenario.destination)
        self._baseline: BaselineState | None = None

    @property
    def n_gbs(self) -> int:
        return len(self.gbs_ids)

    @property
    def obs_dim(self) -> int:
        return 3 + 3 + 1 + 3 + self.n_gbs + 3

    # -- episode control -------------------------------------------------

    def reset(self, seed: int | None = None, source=None, destination=None) -> EnvState:
        cfg = self.config
        rng = np.random.default_rng(seed)
        if source is None and destination is None and cfg.endpoints == "random":
            source, destination = self._sample_endpoints(rng)
        src = as_vec3(self.scenario.source if source is None else source)
        dst = as_vec3(self.scenario.destination if destination is None else destination)
        if cfg.source_jitter > 0 and source is None:
            src = self._jitter(src, rng)
        if inside_any(self.scenario, src[None])[0]:
            raise ValueError(f"source {src.tolist()} is inside a building")
        self.source, self.destination = src, dst
        self.initial_distance = max(distance_3d(src, dst), 1e-9)
        serving, level = best_gbs(self.scenario, src)
        self._baseline = BaselineState(serving, cfg.hysteresis_db, cfg.time_to_trigger)
        self.state = EnvState(
            position=src.copy(),
            velocity=np.zeros(3),
            obstacle=nearest_obstacle(self.scenario, src, cfg.max_range, cfg.n_rays),
            serving_gbs=serving,
            step_index=0,
            dist_to_dest=distance_3d(src, dst),
            serving_rsrp=level,
        )
        self.done = False
        return self.state

    def _altitude_range(self) -> tuple[float, float]:
        if self.config.endpoint_altitude is not None:
            return self.config.endpoint_altitude
        z = float(np.clip(self.scenario.source[2], self.scenario.z_min, self.scenario.z_max))
        return (z, z)

    def _free(self, p) -> bool:
        return self.scenario.in_area(p) and not inside_any(self.scenario, p[None])[0] and \
            nearest_obstacle(self.scenario, p, 5.0, 6).distance >= 5.0

    def _sample_endpoints(self, rng):
        w, h = self.scenario.area
        zlo, zhi = self._altitude_range()
        dmin, dmax = self.config.endpoint_distance
        for _ in range(10_000):
            src = np.array([rng.uniform(0, w), rng.uniform(0, h), rng.uniform(zlo, zhi)])
            if not self._free(src):
                continue
            r = rng.uniform(dmin, dmax)
            az = rng.uniform(0, 2 * np.pi)
            dst = src + np.array([r * np.cos(az), r * np.sin(az), 0.0])
            dst[2] = rng.uniform(zlo, zhi)
            if self._free(dst):
                return src, dst
        raise RuntimeError("could not sample free endpoints")

    def _jitter(self, src, rng):
        for _ in range(1000):
            p = src + np.append(rng.uniform(-1, 1, 2) * self.config.source_jitter, 0.0)
            if self._free(p):
                return p
        return src

    # -- dynamics --------------------------------------------------------

    def step(self, action: ActionCommand) -> StepOutcome:
        if self.done or self.state is None:
            raise EpisodeDone("step() called on a terminated episode; call reset()")
        cfg, sc, s = self.config, self.scenario, self.state
        delta = np.clip(np.asarray(action.delta, dtype=float).reshape(3), -1.0, 1.0)
        raw = s.position + delta * cfg.step_scale
        lo = np.array([0.0, 0.0, sc.z_min])
        hi = np.array([sc.area[0], sc.area[1], sc.z_max])
        excursion = np.max(np.maximum(lo - raw, raw - hi))
        new = np.clip(raw, lo, hi)

        kind = TerminalKind.NONE
        lo_b, hi_b = sc.building_bounds
        collided = lo_b.shape[0] > 0 and (
            segments_hit_boxes(s.position, new, lo_b, hi_b).any() or inside_any(sc, new[None])[0]
        )
        if collided:
            new = s.position.copy()
            kind = TerminalKind.COLLIDED
        elif distance_3d(new, self.destination) <= cfg.arrival_radius:
            new = self.destination.copy()
            kind = TerminalKind.REACHED
        elif excursion > cfg.step_scale:
            kind = TerminalKind.OUT_OF_BOUNDS
        elif s.step_index + 1 >= sc.time_limit_steps:
            kind = TerminalKind.TIMEOUT

        if cfg.handover == "a3":
            serving = baseline_select_gbs(self._baseline, dict(all_rsrp(sc, new)))
        else:
            serving = int(action.next_gbs)
            if serving not in self._index:
                raise ValueError(f"unknown GBS id {serving}")
        level = rsrp(sc.gbs(serving), sc, new)
        d_next = distance_3d(new, self.destination)
        r = reward(s.dist_to_dest, d_next, level, cfg.reward)
        if kind is TerminalKind.REACHED:
            r += cfg.reward.terminal_bonus
        elif kind is TerminalKind.COLLIDED:
            r += cfg.reward.collision_penalty

        obstacle = nearest_obstacle(sc, new, cfg.max_range, cfg.n_rays)
        nxt = EnvState(
            position=new,
            velocity=new - s.position,
            obstacle=obstacle,
            serving_gbs=serving,
            step_index=s.step_index + 1,
            dist_to_dest=d_next,
            serving_rsrp=level,
        )
        handover = serving != s.serving_gbs
        self.state = nxt
        self.done = kind is not TerminalKind.NONE
        return StepOutcome(nxt, float(r), self.done, kind, handover)

    # -- observation -----------------------------------------------------

    def observe(self, state: EnvState | None = None) -> np.ndarray:
        """Position, velocity, obstacle range and bearing, serving one-hot,
        offset to the destination; every entry lies in [-1, 1]."""
        s = state or self.state
        cfg, sc = self.config, self.scenario
        w, h = sc.area
        pos = np.array([2 * s.position[0] / w - 1, 2 * s.position[1] / h - 1, 2 * s.position[2] / sc.z_max - 1])
        onehot = np.zeros(self.n_gbs)
        onehot[self._index[s.serving_gbs]] = 1.0
        obs = np.concatenate([
            pos,
            s.velocity / cfg.step_scale,
            [s.obstacle.distance / cfg.max_range],
            s.obstacle.direction,
            onehot,
            (self.destination - s.position) / self.initial_distance,
        ])
        return np.clip(obs, -1.0, 1.0)

    def gbs_index(self, gbs_id: int) -> int:
        return self._index[gbs_id]

    def with_config(self, **changes) -> "UavEnv":
        return UavEnv(self.scenario, replace(self.config, **changes))
