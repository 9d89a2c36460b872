"""Leader-driven phase clock with parameter m.

Followers adopt the larger phase under circular comparison with window m/2;
the leader advances its phase (mod m) when its partner's phase equals its
own, and a wrap to phase 0 ends a round.  Calibrated so every round spans
Theta(n log n) interactions with high probability; round lengths are the
quantity of interest, collected by :class:`RoundLengthHook` or the fast
:func:`clock_round_lengths` kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import AgentState, Configuration, Identifier, InvalidParameter, ProtocolSpec
from ..sched import Hook, InteractionRecord, PairSampler

DEFAULT_M = 8


def phase_ahead(q: int, p: int, m: int) -> bool:
    """True iff phase q is ahead of phase p within the circular window m/2."""
    return 1 <= (q - p) % m <= m // 2


@dataclass(frozen=True)
class PhaseClockState:
    """Instrumented view of one agent's clock: phase, leader flag, and the
    round count (round lives in the harness, keeping the agent state set
    finite; only the leader's wrap increments it)."""

    phase: int
    is_leader: bool
    round: int = 0


def _tag(is_leader: bool, phase: int) -> str:
    return ("L" if is_leader else "F") + str(phase)


def _parse(tag: str) -> "tuple[bool, int]":
    return tag[0] == "L", int(tag[1:])


def phase_clock(m: int = DEFAULT_M) -> ProtocolSpec:
    if m < 2:
        raise InvalidParameter(f"phase clock needs m >= 2, got {m}")

    tags = frozenset(_tag(l, p) for l in (False, True) for p in range(m))

    def transition(q1: AgentState, q2: AgentState):
        l1, p1 = _parse(q1.base)
        l2, p2 = _parse(q2.base)
        n1, n2 = p1, p2
        if l1:
            if not l2:
                if p2 == p1:
                    n1 = (p1 + 1) % m
                if phase_ahead(p1, p2, m):
                    n2 = p1
        elif l2:
            if p1 == p2:
                n2 = (p2 + 1) % m
            if phase_ahead(p2, p1, m):
                n1 = p2
        else:
            if phase_ahead(p2, p1, m):
                n1 = p2
            if phase_ahead(p1, p2, m):
                n2 = p1
        if n1 == p1 and n2 == p2:
            return q1, q2
        r1 = q1 if n1 == p1 else AgentState(_tag(l1, n1), q1.own_id, q1.slots)
        r2 = q2 if n2 == p2 else AgentState(_tag(l2, n2), q2.own_id, q2.slots)
        return r1, r2

    def default_inputs(ids: Sequence[Identifier]) -> dict:
        lead = min(ids)
        return {i: (_tag(True, 0) if i == lead else _tag(False, 0)) for i in ids}

    def sample_state(rng: np.random.Generator, pool: Sequence[Identifier]) -> AgentState:
        return AgentState(_tag(bool(rng.integers(0, 2)), int(rng.integers(0, m))),
                          pool[0], ())

    return ProtocolSpec(
        name=f"phase_clock_m{m}",
        d=0,
        base_tags=tags,
        init=lambda sym, own: AgentState(sym, own, ()),
        transition=transition,
        output_map={t: True for t in tags},
        # The clock is infrastructure: it never converges on its own.
        convergence_oracle=lambda c: False,
        correctness_oracle=lambda c, truth: None,
        default_inputs=default_inputs,
        sample_state=sample_state,
    )


class RoundLengthHook(Hook):
    """Records the interaction count of each completed clock round by
    watching the leader's phase wrap to 0."""

    def __init__(self):
        self.round_lengths: list = []
        self._leader: Optional[Identifier] = None
        self._last_phase = 0
        self._last_wrap = 0

    def on_start(self, config: Configuration) -> None:
        for st in config.agents.values():
            if st.base.startswith("L"):
                self._leader = st.own_id
                self._last_phase = _parse(st.base)[1]
                return

    def on_step(self, config: Configuration, record: InteractionRecord) -> None:
        if self._leader not in (record.initiator, record.responder):
            return
        phase = _parse(config.agents[self._leader].base)[1]
        if phase == 0 and self._last_phase != 0:
            self.round_lengths.append(record.step_index - self._last_wrap)
            self._last_wrap = record.step_index
        self._last_phase = phase

    def metrics(self) -> dict:
        rl = self.round_lengths
        if not rl:
            return {"rounds": 0}
        return {"rounds": len(rl), "round_min": min(rl),
                "round_max": max(rl), "round_mean": sum(rl) / len(rl)}


def clock_round_lengths(n: int, m: int, max_rounds: int,
                        rng: np.random.Generator,
                        max_steps: Optional[int] = None) -> list:
    """Fast kernel for clock calibration: interaction counts of the first
    ``max_rounds`` completed rounds (leader at index 0)."""
    if m < 2:
        raise InvalidParameter(f"phase clock needs m >= 2, got {m}")
    if n < 2:
        return []
    half = m // 2
    phase = bytearray(n)
    lengths: list = []
    cap = max_steps if max_steps is not None else 64 * max_rounds * n * max(1, int(np.log2(n)))
    sampler = PairSampler(n, rng)
    t = 0
    last_wrap = 0
    while len(lengths) < max_rounds and t < cap:
        x, y = sampler.draw()
        t += 1
        if x == 0 or y == 0:
            other = y if x == 0 else x
            lp = phase[0]
            po = phase[other]
            if po == lp:
                lp2 = lp + 1
                if lp2 == m:
                    lp2 = 0
                    lengths.append(t - last_wrap)
                    last_wrap = t
                phase[0] = lp2
            if 1 <= (lp - po) % m <= half:
                phase[other] = lp
        else:
            p1 = phase[x]
            p2 = phase[y]
            if p1 != p2:
                d = (p2 - p1) % m
                if d <= half:
                    phase[x] = p2
                if (m - d) <= half:
                    phase[y] = p1
    return lengths
