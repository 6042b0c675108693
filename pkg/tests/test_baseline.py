from hypothesis import given, settings, strategies as st

from uavsim.agent.baseline import BaselineState, baseline_select_gbs


def test_handover_on_the_trigger_step():
    st_ = BaselineState(serving=0, hysteresis=3.0, time_to_trigger=3)
    picks = [baseline_select_gbs(st_, {0: -90.0, 1: -80.0}) for _ in range(3)]
    assert picks == [0, 0, 1]


def test_below_hysteresis_never_switches():
    st_ = BaselineState(serving=0)
    assert all(baseline_select_gbs(st_, {0: -90.0, 1: -88.0}) == 0 for _ in range(100))


def test_equal_levels_keep_serving():
    st_ = BaselineState(serving=2)
    assert all(baseline_select_gbs(st_, {1: -70.0, 2: -70.0}) == 2 for _ in range(10))


def test_interrupted_trigger_restarts():
    st_ = BaselineState(serving=0)
    good, bad = {0: -90.0, 1: -80.0}, {0: -90.0, 1: -89.0}
    picks = [baseline_select_gbs(st_, m) for m in (good, good, bad, good, good, good)]
    assert picks == [0, 0, 0, 0, 0, 1]


def test_simultaneous_triggers_pick_strongest_then_lowest_id():
    st_ = BaselineState(serving=0, time_to_trigger=1)
    assert baseline_select_gbs(st_, {0: -100.0, 3: -80.0, 2: -80.0, 1: -85.0}) == 2


def test_missing_serving_falls_back_to_strongest():
    st_ = BaselineState(serving=9)
    assert baseline_select_gbs(st_, {1: -80.0, 2: -70.0}) == 2


@settings(max_examples=300, deadline=None)
@given(st.lists(st.dictionaries(st.integers(0, 5), st.floats(-140, -40), min_size=1, max_size=6),
                min_size=1, max_size=30),
       st.integers(1, 5), st.floats(0, 10))
def test_returns_a_reported_id_and_counters_stay_bounded(reports, ttt, hyst):
    st_ = BaselineState(serving=next(iter(reports[0])), hysteresis=hyst, time_to_trigger=ttt)
    for rep in reports:
        gid = baseline_select_gbs(st_, rep)
        assert gid in rep
        assert all(c <= ttt for c in st_.counters.values())
