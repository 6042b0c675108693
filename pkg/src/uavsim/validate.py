"""Self-check suite run by ``uavsim validate``.

Each check recomputes a quantity by an independent route (scalar math,
dense sampling, finite differences, Monte-Carlo returns) and compares it
with the library's value.
"""
from __future__ import annotations

import math
import time
from typing import NamedTuple

import numpy as np

from .env import RewardConfig, classify_rsrp, reward
from .geometry import Building, is_los
from .radio import (
    AnglePair, RadioConfig, array_factor, element_gain, fspl, path_loss_los, path_loss_nlos,
)


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str
    seconds: float


def _radio_hand_values():
    lg2 = math.log10(2.0)
    cfg = RadioConfig()
    pairs = [
        (fspl(100, 2), 32.4 + 40 + 20 * lg2),
        (fspl(1, 1), 32.4),
        (path_loss_los("micro", 100, 10, 2), 32.4 + 42 + 20 * lg2),
        (path_loss_los("macro", 1000, 10, 2), 32.4 + 60 + 20 * lg2),
        (path_loss_los("macro", 500, 100, 2), 28 + 22 * math.log10(500) + 20 * lg2),
        (path_loss_nlos("micro", 100, 10, 2), 22.4 + 70.6 + 21.3 * lg2 - 0.3 * 8.5),
        (path_loss_nlos("macro", 100, 10, 2), 13.54 + 78.16 + 20 * lg2 - 0.6 * 8.5),
        (element_gain(AnglePair(90, 0), cfg), 8.0),
        (element_gain(AnglePair(90, 65), cfg), -4.0),
        (element_gain(AnglePair(90, 180), cfg), -22.0),
        (array_factor(AnglePair(100, 0), cfg), 10 * math.log10(8)),
    ]
    worst = max(abs(float(a) - b) for a, b in pairs)
    # bracket selection at the split altitude
    lo = path_loss_los("micro", 300, 22.5, 2)
    hi = path_loss_los("micro", 300, 22.5 + 1e-9, 2)
    split_ok = abs(lo - (32.4 + 21 * math.log10(300) + 20 * lg2)) < 1e-9 and abs(lo - hi) > 1e-3
    return worst <= 1e-6 and split_ok, f"max |error| {worst:.2e} dB, split ok={split_ok}"


def _guard_properties(n=20_000, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.uniform(1, 3000, n)
    z = rng.uniform(1.5, 300, n)
    bad = 0
    for cls in ("micro", "macro"):
        los = path_loss_los(cls, d, z, 2.0)
        nlos = path_loss_nlos(cls, d, z, 2.0)
        guarded = z <= 22.5 if cls == "macro" else np.ones(n, bool)
        bad += int(np.sum(nlos[guarded] < los[guarded] - 1e-12))
    cfg = RadioConfig()
    g = element_gain(AnglePair(rng.uniform(0, 180, n), rng.uniform(-180, 180, n)), cfg)
    bad += int(np.sum((g < 8 - 30 - 1e-12) | (g > 8 + 1e-12)))
    return bad == 0, f"{bad} violations on {n} samples"


def _los_sampling(n_segments=300, seed=0):
    rng = np.random.default_rng(seed)
    disagree = 0
    for s in range(3):
        buildings = []
        for _ in range(4):
            lo = rng.uniform(0, 80, 2)
            size = rng.uniform(5, 20, 2)
            buildings.append(Building((lo[0], lo[1], 0.0), (lo[0] + size[0], lo[1] + size[1], rng.uniform(5, 40))))
        lo_b = np.array([b.min_corner for b in buildings])
        hi_b = np.array([b.max_corner for b in buildings])
        for _ in range(n_segments // 3):
            a = rng.uniform([0, 0, 0.5], [100, 100, 45])
            b = rng.uniform([0, 0, 0.5], [100, 100, 45])
            k = max(int(np.ceil(np.linalg.norm(b - a) / 0.01)), 1)
            t = (np.arange(1, k) / k)[:, None]
            pts = a + t * (b - a)
            inside = np.any(np.all((pts[:, None, :] > lo_b) & (pts[:, None, :] < hi_b), axis=2))
            disagree += int(is_los(buildings, a, b) == bool(inside))
    return disagree == 0, f"{disagree} disagreements on {n_segments // 3 * 3} segments"


def _reward_examples():
    cfg = RewardConfig()
    ok = (
        math.isclose(reward(500, 480, -70, cfg), 200.0, abs_tol=1e-12)
        and math.isclose(reward(500, 480, -90, cfg), 199.1, abs_tol=1e-12)
        and math.isclose(reward(123, 456, -110, cfg), -11.0, abs_tol=1e-12)
        and classify_rsrp(-80.0).value == "excellent"
        and classify_rsrp(-100.0).value == "mediocre"
        and classify_rsrp(-100.01).value == "poor"
    )
    return ok, "three hand examples and band boundaries"


def _learning_math(seed=0):
    from .agent.nn import Mlp, backprop, mlp_forward
    from .agent.ppo import Trajectory, compute_gae
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        net = Mlp.init([3, 4, 2], rng)
        x, g = rng.normal(size=(4, 3)), rng.normal(size=(4, 2))
        for p, gp in zip(net.params(), backprop(net, x, g)):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + 1e-6
                up = float(np.sum(mlp_forward(net, x) * g))
                p[idx] = old - 1e-6
                dn = float(np.sum(mlp_forward(net, x) * g))
                p[idx] = old
                fd = (up - dn) / 2e-6
                worst = max(worst, abs(fd - gp[idx]) / max(abs(fd), 1e-6))
    gae_err = 0.0
    for _ in range(20):
        n = 15
        tr = Trajectory()
        tr.reward, tr.value = list(rng.normal(size=n)), list(rng.normal(size=n))
        tr.done = list(rng.random(n) < 0.2)
        adv, _ = compute_gae(tr, 0.95, 1.0, 0.0)
        for t in range(n):
            g, disc = 0.0, 1.0
            for k in range(t, n):
                g += disc * tr.reward[k]
                if tr.done[k]:
                    break
                disc *= 0.95
            gae_err = max(gae_err, abs(g - tr.value[t] - adv[t]))
    return worst <= 1e-4 and gae_err <= 1e-10, f"backprop rel err {worst:.1e}, GAE err {gae_err:.1e}"


CHECKS = [
    ("radio hand values", _radio_hand_values),
    ("path-loss guards and gain bounds", _guard_properties),
    ("LoS vs 1 cm sampling", _los_sampling),
    ("reward examples", _reward_examples),
    ("backprop and GAE oracles", _learning_math),
]


def run_checks() -> list[CheckResult]:
    out = []
    for name, fn in CHECKS:
        t = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t))
    return out
