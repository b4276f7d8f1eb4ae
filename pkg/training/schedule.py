"""
SYNC CALENDAR
Which fragment is sent at which step, and when every replica receives it.

Steps are 1-based. Fragment p is sent at every t >= H with (t - t_p) mod H == 0
and received by replica m at t + tau_m. Receives that would land after the last
step are flushed at step T.
"""

import json
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from core.errors import ConfigurationError
from .paramspace import FragmentSpec, assign_offsets, partition

Receive = Tuple[int, int]  # (fragment, send_step)


@dataclass(frozen=True)
class SyncCalendar:
    total_steps: int
    period: int
    taus: Tuple[int, ...]
    send_events: Dict[int, Tuple[int, ...]]
    receive_events: Tuple[Dict[int, Tuple[Receive, ...]], ...]
    num_fragments: int
    # (send_step, fragment) in calendar order
    send_order: Tuple[Tuple[int, int], ...] = field(init=False, repr=False, compare=False)
    fragment_sends: Tuple[Tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        order = tuple((t, p) for t, frags in sorted(self.send_events.items()) for p in frags)
        per_fragment = tuple(
            tuple(t for t, q in order if q == p) for p in range(self.num_fragments)
        )
        object.__setattr__(self, "send_order", order)
        object.__setattr__(self, "fragment_sends", per_fragment)

    @property
    def num_replicas(self) -> int:
        return len(self.taus)

    def sends_at(self, step: int) -> Tuple[int, ...]:
        return self.send_events.get(step, ())

    def receives_at(self, replica: int, step: int) -> Tuple[Receive, ...]:
        return self.receive_events[replica].get(step, ())

    def send_steps(self, fragment: int) -> List[int]:
        return list(self.fragment_sends[fragment])

    @property
    def num_send_events(self) -> int:
        return sum(len(frags) for frags in self.send_events.values())

    def last_receive_step(self, fragment: int, send_step: int) -> int:
        return max(
            self._receive_step(m, send_step) for m in range(self.num_replicas)
        )

    def _receive_step(self, replica: int, send_step: int) -> int:
        return min(send_step + self.taus[replica], self.total_steps)

    def next_send_fragment(self, step: int) -> int:
        """Fragment whose next send is the earliest at or after ``step``."""
        if not self.send_order:
            return 0
        i = bisect_left(self.send_order, (step, -1))
        if i == len(self.send_order):
            # past the final sync: keep training the fragment sent last
            return self.send_order[-1][1]
        return self.send_order[i][1]

    def to_dict(self) -> dict:
        return {
            "T": self.total_steps,
            "H": self.period,
            "taus": list(self.taus),
            "sends": {str(t): list(f) for t, f in sorted(self.send_events.items())},
            "receives": [
                {str(t): [list(r) for r in rs] for t, rs in sorted(events.items())}
                for events in self.receive_events
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def build_calendar(spec: FragmentSpec, T: int, H: int, taus: Sequence[int]) -> SyncCalendar:
    if spec.offsets is None or spec.period is None:
        raise ConfigurationError("fragment offsets must be assigned before building a calendar")
    if spec.period != H:
        raise ConfigurationError(f"fragment offsets were assigned for H={spec.period}, not H={H}")
    if T < 1:
        raise ConfigurationError(f"T must be >= 1, got {T}")
    if not taus:
        raise ConfigurationError("at least one replica overlap delay is required")
    for m, tau in enumerate(taus):
        if tau < 0 or tau >= H:
            raise ConfigurationError(
                f"overlap delay tau[{m}]={tau} violates 0 <= tau < H (H={H})"
            )

    sends: Dict[int, List[int]] = {}
    for p in range(spec.num_fragments):
        t = spec.first_send(p)
        while t <= T:
            sends.setdefault(t, []).append(p)
            t += H

    receives: List[Dict[int, List[Receive]]] = [dict() for _ in taus]
    for t in sorted(sends):
        for p in sends[t]:
            for m, tau in enumerate(taus):
                at = min(t + tau, T)
                receives[m].setdefault(at, []).append((p, t))

    return SyncCalendar(
        total_steps=T,
        period=H,
        taus=tuple(int(tau) for tau in taus),
        send_events={t: tuple(sorted(f)) for t, f in sorted(sends.items())},
        receive_events=tuple(
            {t: tuple(sorted(rs, key=lambda r: (r[1], r[0]))) for t, rs in sorted(ev.items())}
            for ev in receives
        ),
        num_fragments=spec.num_fragments,
    )


def calendar_for(
    num_blocks: int, fragment_size: int, pattern, T: int, H: int, taus: Sequence[int]
) -> Tuple[FragmentSpec, SyncCalendar]:
    spec = assign_offsets(partition(num_blocks, fragment_size, pattern), H)
    return spec, build_calendar(spec, T, H, taus)


def peak_bandwidth_reduction(num_blocks: int, fragment_size: int) -> float:
    """Peak per-step payload shrinks by L / |p| relative to a full-model sync."""
    partition(num_blocks, fragment_size, "sequential")
    return num_blocks / fragment_size
