import csv
import json

import numpy as np
import pytest

from uavsim.agent import RandomAgent
from uavsim.env import STEP_SCALE, ActionCommand, EnvConfig, TerminalKind
from uavsim.harness import (
    EPISODE_COLUMNS, RESULT_COLUMNS, ExperimentConfig, compare, evaluate_sweep, load_agent,
    metrics_from_trace, place_destination, read_results_csv, run_episode,
)
from uavsim.radio import GbsClass, GbsConfig
from uavsim.scenario import Scenario, generate_synthetic_scenario


def _open_field(time_limit=80):
    gbs = (GbsConfig(0, (100.3, 100.7, 10.0), GbsClass.MICRO, (0.0, 120.0, 240.0)),
           GbsConfig(1, (800.3, 700.7, 25.0), GbsClass.MACRO, (0.0, 120.0, 240.0)))
    return Scenario(buildings=(), gbs_list=gbs, source=(450.0, 450.0, 40.0), destination=(700.0, 450.0, 40.0),
                    area=(900.0, 900.0), z_min=10.0, z_max=100.0, time_limit_steps=time_limit)


class Homing:
    """Flies straight at the destination; needs the initial distance to undo
    the observation scaling."""

    handover = "agent"

    def __init__(self, initial_distance):
        self.initial_distance = initial_distance

    def act(self, obs, rng=None, deterministic=True):
        offset = np.asarray(obs[-3:]) * self.initial_distance
        return ActionCommand(np.clip(offset / STEP_SCALE, -1, 1) if np.max(np.abs(offset)) <= STEP_SCALE
                             else offset / np.max(np.abs(offset)), 0)


@pytest.fixture(scope="module")
def small():
    return generate_synthetic_scenario(seed=2, area_size=(600.0, 600.0), n_buildings=5, n_gbs=4,
                                       time_limit_steps=25)


def test_straight_flight_has_tiny_extra_distance():
    sc = _open_field()
    for dst in ([700.0, 450.0, 40.0], [620.0, 700.0, 40.0], [130.0, 200.0, 40.0]):
        straight = float(np.linalg.norm(np.subtract(dst, sc.source)))
        m, trace = run_episode(sc, Homing(straight), 0, source=sc.source, destination=dst)
        assert m.outcome is TerminalKind.REACHED
        assert -1e-9 <= m.extra_distance_ratio <= STEP_SCALE / straight
        assert m.straight_line == pytest.approx(straight)


def test_metrics_recompute_from_trace(small):
    m, trace = run_episode(small, RandomAgent(random_state=0).fit(small), 3, deterministic=False)
    pos = np.array([r["position"] for r in trace])
    assert m.path_length == pytest.approx(np.sum(np.linalg.norm(np.diff(pos, axis=0), axis=1)))
    assert m.excellent_frac + m.mediocre_frac + m.poor_frac == pytest.approx(1.0)
    assert m.steps == len(trace) - 1
    assert m.mean_rsrp == pytest.approx(np.mean([r["rsrp"] for r in trace[1:]]))
    assert m.handovers == sum(r["serving_gbs"] != p["serving_gbs"] for p, r in zip(trace, trace[1:]))
    assert m == metrics_from_trace(json.loads(json.dumps(trace)))
    with pytest.raises(ValueError):
        metrics_from_trace(trace[:1])


def test_random_agent_in_open_field_never_crashes():
    sc = _open_field(time_limit=30)
    ag = RandomAgent(random_state=1).fit(sc)
    for s in range(10):
        m, _ = run_episode(sc, ag, s, deterministic=False)
        assert m.outcome in (TerminalKind.TIMEOUT, TerminalKind.REACHED, TerminalKind.OUT_OF_BOUNDS)


def test_episode_is_seed_deterministic(small):
    ag = RandomAgent().fit(small)
    a = run_episode(small, ag, 5, deterministic=False)[1]
    b = run_episode(small, ag, 5, deterministic=False)[1]
    assert a == b


def test_sweep_single_distance(small, tmp_path):
    cfg = ExperimentConfig(agent="random", distances=(200.0,), episodes=1, out_dir=str(tmp_path))
    res = evaluate_sweep(cfg, scenario=small)
    assert len(res.rows) == 1 and len(res.episodes) == 1
    with open(tmp_path / "results.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == RESULT_COLUMNS and len(rows) == 2
    with open(tmp_path / "episodes.csv") as fh:
        assert next(csv.reader(fh)) == EPISODE_COLUMNS
    traces = [json.loads(line) for line in (tmp_path / "traces.jsonl").read_text().splitlines()]
    assert len(traces) == res.episodes[0]["steps"] + 1


def test_aggregates_match_episode_rows(small, tmp_path):
    cfg = ExperimentConfig(agent="random", distances=(150.0, 250.0), episodes=6, seed=4, out_dir=str(tmp_path))
    evaluate_sweep(cfg, scenario=small)
    table = read_results_csv(tmp_path / "results.csv")
    with open(tmp_path / "episodes.csv") as fh:
        eps = list(csv.DictReader(fh))
    for row in table:
        mine = [e for e in eps if float(e["distance_m"]) == row["distance_m"]]
        assert len(mine) == row["episodes"] == 6
        reached = [e for e in mine if e["outcome"] == "reached"]
        assert row["reach_rate"] == len(reached) / 6
        for col, src in [("mean_excellent_frac", "excellent_frac"), ("mean_rsrp_dbm", "mean_rsrp_dbm"),
                         ("mean_handovers", "handovers")]:
            assert row[col] == pytest.approx(np.mean([float(e[src]) for e in mine]), abs=1e-12)
        if reached:
            want = np.mean([float(e["extra_distance_ratio"]) for e in reached])
            assert row["mean_extra_distance_ratio"] == pytest.approx(want, abs=1e-12)
        else:
            assert np.isnan(row["mean_extra_distance_ratio"])
        for e in mine:
            assert float(e["straight_line"]) == pytest.approx(row["distance_m"])


def test_workers_do_not_change_outputs(small, tmp_path):
    outs = []
    for w in (1, 2):
        d = tmp_path / f"w{w}"
        evaluate_sweep(ExperimentConfig(agent="random", distances=(150.0, 300.0), episodes=3, seed=9,
                                        out_dir=str(d), workers=w), scenario=small)
        outs.append({n: (d / n).read_bytes() for n in ("results.csv", "episodes.csv", "traces.jsonl")})
    assert outs[0] == outs[1]


def test_compare_deltas():
    def row(d, **kw):
        base = {"distance_m": d, "agent": "x", "episodes": 1, "reach_rate": 0.5, "mean_extra_distance_ratio": 0.1,
                "mean_excellent_frac": 0.4, "mean_mediocre_frac": 0.3, "mean_poor_frac": 0.3,
                "mean_rsrp_dbm": -85.0, "mean_handovers": 2.0}
        base.update(kw)
        return base
    a = [row(200.0), row(400.0)]
    assert all(v == 0 for r in compare(a, a) for k, v in r.items() if k.startswith("delta_"))
    b = [row(400.0, reach_rate=0.25, mean_rsrp_dbm=-90.0), row(200.0)]
    out = compare(a, b)
    assert [r["distance_m"] for r in out] == [200.0, 400.0]
    assert out[1]["delta_reach_rate"] == 0.25 and out[1]["delta_mean_rsrp_dbm"] == 5.0
    with pytest.raises(ValueError):
        compare(a, [row(200.0), row(600.0)])


def test_place_destination(small):
    rng = np.random.default_rng(0)
    src = np.array(small.source)
    for d in (100.0, 300.0):
        dst = place_destination(small, src, d, rng)
        assert np.hypot(*(dst - src)[:2]) == pytest.approx(d) and dst[2] == src[2]
    with pytest.raises(ValueError):
        place_destination(small, src, 5000.0, rng, max_tries=50)


def test_config_validation_and_loading(small, tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(agent="nope")
    with pytest.raises(ValueError):
        ExperimentConfig(episodes=0)
    with pytest.raises(ValueError):
        ExperimentConfig(distances=(100.0, -1.0))
    cfg = ExperimentConfig(distances=(100.0,), episodes=3)
    assert ExperimentConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg
    with pytest.raises(FileNotFoundError):
        load_agent("dupac", tmp_path / "none.bin", small)


def test_checkpoint_kind_must_match(small, tmp_path):
    from uavsim.agent import PPOAgent, save_checkpoint
    ag = PPOAgent(hidden_sizes=(8,), total_steps=0, handover="a3").fit(small)
    save_checkpoint(ag, tmp_path / "b.bin")
    assert load_agent("baseline", tmp_path / "b.bin").handover == "a3"
    with pytest.raises(ValueError):
        load_agent("dupac", tmp_path / "b.bin")


def test_mismatched_gbs_ids_are_rejected(small):
    ag = RandomAgent().fit(small)
    ag.gbs_ids_ = [7, 8]
    with pytest.raises(ValueError):
        run_episode(small, ag, 0, env_config=EnvConfig())
