"""Rule-based A3 handover: hysteresis margin plus time-to-trigger."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping


@dataclass
class BaselineState:
    serving: int
    hysteresis: float = 3.0
    time_to_trigger: int = 3
    counters: dict[int, int] = field(default_factory=dict)


def baseline_select_gbs(state: BaselineState, rsrps: Mapping[int, float]) -> int:
    """Advance the A3 trigger counters by one measurement and return the serving id.

    A candidate whose RSRP exceeds the serving RSRP by more than the
    hysteresis for ``time_to_trigger`` consecutive calls takes over. When
    several candidates trigger together the strongest wins, lowest id on ties.
    ``state`` is updated in place.
    """
    if state.serving not in rsrps:
        # serving cell vanished from the measurement report: fall back to the strongest
        state.serving = min(rsrps, key=lambda g: (-rsrps[g], g))
        state.counters.clear()
        return state.serving
    serving_level = rsrps[state.serving]
    for gid, level in rsrps.items():
        if gid != state.serving and level > serving_level + state.hysteresis:
            state.counters[gid] = min(state.counters.get(gid, 0) + 1, state.time_to_trigger)
        else:
            state.counters.pop(gid, None)
    ready = [g for g, c in state.counters.items() if c >= state.time_to_trigger]
    if ready:
        state.serving = min(ready, key=lambda g: (-rsrps[g], g))
        state.counters.clear()
    return state.serving
