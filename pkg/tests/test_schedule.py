import json

import numpy as np
import pytest

from core.errors import ConfigurationError
from training.paramspace import assign_offsets, partition
from training.schedule import build_calendar, calendar_for, peak_bandwidth_reduction


def _random_configs(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        L = int(rng.integers(1, 25))
        divisors = [d for d in range(1, L + 1) if L % d == 0]
        fs = int(rng.choice(divisors))
        P = L // fs
        H = int(rng.integers(P, P + 40))
        M = int(rng.integers(1, 4))
        taus = [int(t) for t in rng.integers(0, H, size=M)]
        T = int(rng.integers(1, 5 * H + 2))
        pattern = "strided" if rng.random() < 0.5 else "sequential"
        yield L, fs, pattern, H, taus, T


def test_calendar_invariants_over_random_configs():
    for L, fs, pattern, H, taus, T in _random_configs(200):
        spec, cal = calendar_for(L, fs, pattern, T, H, taus)
        offsets = spec.offsets
        assert all(0 <= o < H for o in offsets)
        assert list(offsets) == sorted(set(offsets))

        for p in range(spec.num_fragments):
            steps = cal.send_steps(p)
            expected = list(range(H + offsets[p], T + 1, H))
            assert steps == expected
            assert all(b - a == H for a, b in zip(steps, steps[1:]))

        for m, tau in enumerate(taus):
            received = sorted(
                (frag, sent, t) for t, events in cal.receive_events[m].items() for frag, sent in events
            )
            sent = sorted((frag, t) for t, frags in cal.send_events.items() for frag in frags)
            # every send reaches every replica exactly once, never after T
            assert [(f, s) for f, s, _ in received] == sent
            for frag, send_step, at in received:
                assert at == min(send_step + tau, T)
                assert at <= T


def test_first_fragment_syncs_after_one_period():
    spec, cal = calendar_for(12, 3, "strided", 400, 100, [1])
    assert spec.offsets == (0, 25, 50, 75)
    assert cal.sends_at(100) == (0,)
    assert cal.sends_at(125) == (1,)
    assert cal.receives_at(0, 101) == ((0, 100),)
    assert cal.send_steps(3) == [175, 275, 375]
    assert cal.num_send_events == 4 + 3 + 3 + 3


def test_late_receives_flush_at_last_step():
    _, cal = calendar_for(4, 2, "sequential", 58, 30, [10, 0])
    # fragment 1 is sent at 45; replica 0 would receive at 55, replica 1 at 45
    assert cal.receives_at(0, 55) == ((1, 45),)
    _, cal = calendar_for(4, 2, "sequential", 50, 30, [10, 0])
    assert cal.receives_at(0, 50) == ((1, 45),)
    assert cal.last_receive_step(1, 45) == 50


@pytest.mark.parametrize("taus", [[30], [0, 31], [-1]])
def test_overlap_delay_must_stay_below_period(taus):
    spec = assign_offsets(partition(6, 3, "strided"), 30)
    with pytest.raises(ConfigurationError):
        build_calendar(spec, 100, 30, taus)


def test_calendar_needs_matching_offsets():
    spec = assign_offsets(partition(6, 3, "strided"), 30)
    with pytest.raises(ConfigurationError):
        build_calendar(spec, 100, 20, [0])
    with pytest.raises(ConfigurationError):
        build_calendar(partition(6, 3, "strided"), 100, 30, [0])


def test_short_run_has_no_sends():
    _, cal = calendar_for(6, 3, "strided", 10, 30, [1])
    assert cal.num_send_events == 0
    assert cal.next_send_fragment(1) == 0


def test_next_send_fragment_follows_the_calendar():
    _, cal = calendar_for(12, 3, "strided", 200, 30, [1])
    # offsets 0, 7, 15, 22
    assert cal.next_send_fragment(1) == 0
    assert cal.next_send_fragment(31) == 1
    assert cal.next_send_fragment(38) == 2
    assert cal.next_send_fragment(45) == 2
    assert cal.next_send_fragment(46) == 3


def test_calendar_json_shape():
    _, cal = calendar_for(4, 2, "strided", 40, 10, [1, 2])
    data = json.loads(cal.to_json())
    assert data["H"] == 10 and data["taus"] == [1, 2]
    assert data["sends"]["10"] == [0]
    assert data["receives"][1]["17"] == [[1, 15]]


def test_peak_bandwidth_reduction():
    assert peak_bandwidth_reduction(12, 3) == 4
    assert peak_bandwidth_reduction(108, 3) == 36
    with pytest.raises(ConfigurationError):
        peak_bandwidth_reduction(10, 3)


def test_next_send_fragment_agrees_with_a_full_scan():
    for L, fs, pattern, H, taus, T in _random_configs(30, seed=3):
        _, cal = calendar_for(L, fs, pattern, T, H, taus)
        events = sorted((t, p) for t, frags in cal.send_events.items() for p in frags)
        for step in range(1, T + 2):
            upcoming = [p for t, p in events if t >= step]
            if upcoming:
                expected = upcoming[0]
            else:
                expected = events[-1][1] if events else 0
            assert cal.next_send_fragment(step) == expected
        for p in range(cal.num_fragments):
            assert cal.send_steps(p) == [t for t, q in events if q == p]
