"""Scenario description, JSON I/O and the synthetic city generator."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .geometry import Building, building_arrays, inside_any
from .radio import GbsClass, GbsConfig, RadioConfig


class ScenarioError(ValueError):
    """Malformed scenario file or violated scenario invariant."""


@dataclass(frozen=True)
class Scenario:
    buildings: tuple[Building, ...]
    gbs_list: tuple[GbsConfig, ...]
    source: tuple[float, float, float]
    destination: tuple[float, float, float]
    area: tuple[float, float]
    z_min: float = 10.0
    z_max: float = 120.0
    time_limit_steps: int = 100
    seed: int = 0
    radio: RadioConfig = field(default_factory=RadioConfig)

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(self.buildings))
        object.__setattr__(self, "gbs_list", tuple(sorted(self.gbs_list, key=lambda g: g.id)))
        object.__setattr__(self, "source", tuple(float(c) for c in self.source))
        object.__setattr__(self, "destination", tuple(float(c) for c in self.destination))
        object.__setattr__(self, "area", tuple(float(c) for c in self.area))
        self.validate()

    def validate(self) -> None:
        if len(self.area) != 2 or min(self.area) <= 0:
            raise ScenarioError(f"area extents must be two positive numbers, got {self.area}")
        if not self.z_min < self.z_max:
            raise ScenarioError(f"z_min ({self.z_min}) must be below z_max ({self.z_max})")
        if int(self.time_limit_steps) <= 0:
            raise ScenarioError("time_limit_steps must be positive")
        ids = [g.id for g in self.gbs_list]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"duplicate GBS ids: {ids}")
        for name in ("source", "destination"):
            p = np.array(getattr(self, name))
            if not self.in_area(p):
                raise ScenarioError(f"{name} {p.tolist()} lies outside the area")
            if inside_any(self.buildings, p[None])[0]:
                raise ScenarioError(f"{name} {p.tolist()} lies inside a building")

    def in_area(self, p) -> bool:
        return bool(0.0 <= p[0] <= self.area[0] and 0.0 <= p[1] <= self.area[1])

    @cached_property
    def building_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return building_arrays(self.buildings)

    @property
    def gbs_ids(self) -> list[int]:
        return [g.id for g in self.gbs_list]

    def gbs(self, gbs_id: int) -> GbsConfig:
        for g in self.gbs_list:
            if g.id == gbs_id:
                return g
        raise KeyError(f"no GBS with id {gbs_id}")

    def with_endpoints(self, source=None, destination=None) -> "Scenario":
        return Scenario(
            buildings=self.buildings,
            gbs_list=self.gbs_list,
            source=self.source if source is None else tuple(source),
            destination=self.destination if destination is None else tuple(destination),
            area=self.area,
            z_min=self.z_min,
            z_max=self.z_max,
            time_limit_steps=self.time_limit_steps,
            seed=self.seed,
            radio=self.radio,
        )

    def to_json(self) -> dict:
        out = {
            "area": list(self.area),
            "z_min": self.z_min,
            "z_max": self.z_max,
            "time_limit_steps": int(self.time_limit_steps),
            "source": list(self.source),
            "destination": list(self.destination),
            "buildings": [{"min": list(b.min_corner), "max": list(b.max_corner)} for b in self.buildings],
            "gbs": [],
            "seed": int(self.seed),
            "radio": self.radio.to_json(),
        }
        for g in self.gbs_list:
            entry = {
                "id": g.id,
                "position": list(g.position),
                "class": g.gbs_class.value,
                "sector_azimuths": list(g.sector_azimuths),
            }
            if g.radio != self.radio:
                entry["radio"] = g.radio.to_json()
            out["gbs"].append(entry)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario document must be a JSON object")
        required = ("area", "z_min", "z_max", "time_limit_steps", "source", "destination", "buildings", "gbs")
        missing = [k for k in required if k not in data]
        if missing:
            raise ScenarioError(f"scenario is missing required keys: {missing}")
        try:
            radio = RadioConfig.from_json(data.get("radio", {}))
            buildings = [Building(tuple(b["min"]), tuple(b["max"])) for b in data["buildings"]]
            gbs = []
            for g in data["gbs"]:
                g_radio = RadioConfig.from_json(g["radio"]) if "radio" in g else radio
                gbs.append(
                    GbsConfig(
                        id=int(g["id"]),
                        position=tuple(g["position"]),
                        gbs_class=GbsClass(g["class"]),
                        sector_azimuths=tuple(g.get("sector_azimuths", (0.0, 120.0, 240.0))),
                        radio=g_radio,
                    )
                )
            return cls(
                buildings=tuple(buildings),
                gbs_list=tuple(gbs),
                source=tuple(data["source"]),
                destination=tuple(data["destination"]),
                area=tuple(data["area"]),
                z_min=float(data["z_min"]),
                z_max=float(data["z_max"]),
                time_limit_steps=int(data["time_limit_steps"]),
                seed=int(data.get("seed", 0)),
                radio=radio,
            )
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid scenario: {exc}") from exc


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_json(), indent=2) + "\n")


def load_scenario(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
    return Scenario.from_json(data)


@dataclass
class ScenarioParams:
    area_size: tuple[float, float] = (1400.0, 1400.0)
    n_buildings: int = 60
    height_range: tuple[float, float] = (15.0, 90.0)
    footprint_range: tuple[float, float] = (30.0, 80.0)
    n_gbs: int = 30
    micro_fraction: float = 0.5
    z_min: float = 10.0
    z_max: float = 120.0
    flight_altitude: float = 40.0
    min_separation: float = 200.0
    time_limit_steps: int = 100
    building_gap: float = 10.0
    macro_mast: float = 3.0
    micro_height: float = 10.0
    max_tries: int = 5000


def _free_point(rng, params, buildings, z, margin=5.0):
    w, h = params.area_size
    for _ in range(params.max_tries):
        p = np.array([rng.uniform(margin, w - margin), rng.uniform(margin, h - margin), z])
        if not inside_any(buildings, p[None], )[0] and not _near_building(buildings, p, margin):
            return p
    raise ScenarioError("could not place a free-space point")


def _near_building(buildings, p, margin) -> bool:
    for b in buildings:
        lo, hi = np.array(b.min_corner), np.array(b.max_corner)
        if np.all(p >= lo - margin) and np.all(p <= hi + margin):
            return True
    return False


def generate_synthetic_scenario(params: ScenarioParams | None = None, seed: int = 0, **overrides) -> Scenario:
    """Random city block layout with rooftop macro and facade micro cells.

    Deterministic for a fixed ``seed``. Raises ``ScenarioError`` when the
    requested buildings or GBSs cannot be placed within ``max_tries``.
    """
    params = dataclasses.replace(params or ScenarioParams(), **overrides)
    if params.n_buildings < 0 or params.n_gbs < 0 or min(params.area_size) <= 0:
        raise ScenarioError("scenario parameters must be non-negative with a positive area")
    rng = np.random.default_rng(seed)
    w, h = params.area_size
    fmin, fmax = params.footprint_range
    hmin, hmax = params.height_range

    buildings: list[Building] = []
    tries = 0
    while len(buildings) < params.n_buildings:
        tries += 1
        if tries > params.max_tries:
            raise ScenarioError(f"placed only {len(buildings)} of {params.n_buildings} buildings")
        bw, bd = rng.uniform(fmin, fmax, size=2)
        x0, y0 = rng.uniform(0, w - bw), rng.uniform(0, h - bd)
        cand = (x0, y0, x0 + bw, y0 + bd)
        g = params.building_gap
        if any(
            cand[0] < b.max_corner[0] + g and b.min_corner[0] < cand[2] + g
            and cand[1] < b.max_corner[1] + g and b.min_corner[1] < cand[3] + g
            for b in buildings
        ):
            continue
        buildings.append(Building((x0, y0, 0.0), (x0 + bw, y0 + bd, rng.uniform(hmin, hmax))))

    n_micro = int(round(params.n_gbs * params.micro_fraction))
    classes = [GbsClass.MICRO] * n_micro + [GbsClass.MACRO] * (params.n_gbs - n_micro)
    rng.shuffle(classes)
    tall = [b for b in buildings if b.height > params.micro_height + 1.0]
    used: set[int] = set()
    gbs: list[GbsConfig] = []
    for gid, cls in enumerate(classes):
        pos = None
        for _ in range(params.max_tries):
            if cls is GbsClass.MACRO and buildings:
                i = int(rng.integers(len(buildings)))
                if i in used:
                    continue
                b = buildings[i]
                pos = ((b.min_corner[0] + b.max_corner[0]) / 2, (b.min_corner[1] + b.max_corner[1]) / 2,
                       b.height + params.macro_mast)
                used.add(i)
            elif cls is GbsClass.MICRO and tall:
                b = tall[int(rng.integers(len(tall)))]
                pos = _facade_point(rng, b, params)
                if pos is None or inside_any(buildings, np.array(pos)[None])[0]:
                    pos = None
                    continue
            else:
                mast = params.micro_height if cls is GbsClass.MICRO else max(
                    params.micro_height + 15.0, hmax + params.macro_mast)
                p = _free_point(rng, params, buildings, mast)
                pos = tuple(p)
            break
        if pos is None:
            raise ScenarioError(f"could not place GBS {gid} ({cls.value})")
        rot = float(rng.uniform(0.0, 120.0))
        gbs.append(GbsConfig(gid, pos, cls, (rot, rot + 120.0, rot + 240.0)))

    z = min(max(params.flight_altitude, params.z_min), params.z_max)
    src = dst = None
    for _ in range(params.max_tries):
        src = _free_point(rng, params, buildings, z)
        dst = _free_point(rng, params, buildings, z)
        if np.linalg.norm(src - dst) >= params.min_separation:
            break
    else:
        raise ScenarioError("could not place source/destination with the requested separation")

    return Scenario(
        buildings=tuple(buildings),
        gbs_list=tuple(gbs),
        source=tuple(src),
        destination=tuple(dst),
        area=(float(w), float(h)),
        z_min=params.z_min,
        z_max=params.z_max,
        time_limit_steps=params.time_limit_steps,
        seed=int(seed),
    )


def _facade_point(rng, b: Building, params: ScenarioParams):
    # 0.5 m outside a random wall, at micro mounting height
    x0, y0, _ = b.min_corner
    x1, y1, _ = b.max_corner
    side = int(rng.integers(4))
    off = 0.5
    if side == 0:
        p = (x0 - off, rng.uniform(y0, y1))
    elif side == 1:
        p = (x1 + off, rng.uniform(y0, y1))
    elif side == 2:
        p = (rng.uniform(x0, x1), y0 - off)
    else:
        p = (rng.uniform(x0, x1), y1 + off)
    w, h = params.area_size
    if not (0 <= p[0] <= w and 0 <= p[1] <= h):
        return None
    return (float(p[0]), float(p[1]), float(params.micro_height))


DESK_PARAMS = ScenarioParams(
    area_size=(500.0, 500.0),
    n_buildings=5,
    height_range=(20.0, 60.0),
    footprint_range=(30.0, 70.0),
    n_gbs=4,
    micro_fraction=0.5,
    z_min=10.0,
    z_max=100.0,
    flight_altitude=30.0,
    min_separation=250.0,
    time_limit_steps=60,
)


def desk_scenario(seed: int = 0) -> Scenario:
    """500 x 500 m block with 5 buildings and 4 GBSs."""
    return generate_synthetic_scenario(DESK_PARAMS, seed=seed)


DENSE_PARAMS = ScenarioParams(
    n_buildings=200,
    height_range=(30.0, 120.0),
    footprint_range=(40.0, 70.0),
    building_gap=8.0,
)


def dense_scenario(seed: int = 0) -> Scenario:
    """1400 x 1400 m high-rise district: about 30 % built footprint and 30 GBSs."""
    return generate_synthetic_scenario(DENSE_PARAMS, seed=seed)


def corridor_scenario() -> Scenario:
    """Hand-built 500 x 500 m layout whose straight source-destination line
    runs between two tall slabs that shadow every GBS.

    At 30 m the middle of the line is in the poor band; open ground south
    and north of the slabs is excellent, and climbing to 40 m or more turns
    the corridor mediocre.
    """
    buildings = (
        Building((110.0, 185.0, 0.0), (390.0, 215.0, 80.0)),
        Building((110.0, 285.0, 0.0), (390.0, 315.0, 80.0)),
        Building((40.0, 400.0, 0.0), (100.0, 460.0, 35.0)),
        Building((400.0, 400.0, 0.0), (460.0, 460.0, 35.0)),
        Building((200.0, 380.0, 0.0), (300.0, 400.0, 30.0)),
    )
    gbs = (
        GbsConfig(0, (60.0, 110.0, 10.0), GbsClass.MICRO, (0.0, 120.0, 240.0)),
        GbsConfig(1, (440.0, 110.0, 10.0), GbsClass.MICRO, (60.0, 180.0, 300.0)),
        GbsConfig(2, (250.3, 9.7, 10.0), GbsClass.MICRO, (90.0, 210.0, 330.0)),
        GbsConfig(3, (250.3, 490.3, 10.0), GbsClass.MICRO, (30.0, 150.0, 270.0)),
    )
    return Scenario(
        buildings=buildings,
        gbs_list=gbs,
        source=(40.0, 250.0, 30.0),
        destination=(460.0, 250.0, 30.0),
        area=(500.0, 500.0),
        z_min=10.0,
        z_max=60.0,
        time_limit_steps=60,
        seed=0,
    )


def straight_line_distance(scenario: Scenario) -> float:
    return math.dist(scenario.source, scenario.destination)
