"""Leader election by minimum identifier, d=1.

Every agent starts as a leader; the surviving leader is the agent with the
smallest identifier, and every demoted agent ends up storing that
identifier in its single slot.  Non-trivial rules (slot written as
subscript, guards on relative order only):

    L_a,_  L_b,_  ->  L_a,_  N_b,a     if a < b
    L_a,_  N_b,c  ->  L_a,_  N_b,a     if a < c
    L_a,_  N_b,c  ->  N_a,c  N_b,c     if c < a
    N_a,b  N_c,d  ->  N_a,b  N_c,b     if b < d

The rules are applied to the unordered pair, so the transition is total on
ordered pairs.  Completion is epidemic-like: the eventual leader spreads its
identifier, so the election takes Theta(n log n) interactions.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import AgentState, Configuration, EMPTY, Identifier, ProtocolSpec
from ..sched import PairSampler

LEADER = "L"
FOLLOWER = "N"


def _demote(q: AgentState, stored: Identifier) -> AgentState:
    return AgentState(FOLLOWER, q.own_id, (stored,))


def _transition(q1: AgentState, q2: AgentState):
    b1, b2 = q1.base, q2.base
    if b1 == LEADER:
        if b2 == LEADER:
            if q1.own_id < q2.own_id:
                return q1, _demote(q2, q1.own_id)
            return _demote(q1, q2.own_id), q2
        c = q2.slots[0]
        if q1.own_id < c:
            return q1, _demote(q2, q1.own_id)
        if c < q1.own_id:
            return _demote(q1, c), q2
        return q1, q2
    if b2 == LEADER:
        c = q1.slots[0]
        if q2.own_id < c:
            return _demote(q1, q2.own_id), q2
        if c < q2.own_id:
            return q1, _demote(q2, c)
        return q1, q2
    s1, s2 = q1.slots[0], q2.slots[0]
    if s1 < s2:
        return q1, _demote(q2, s1)
    if s2 < s1:
        return _demote(q1, s2), q2
    return q1, q2


def _converged(c: Configuration) -> bool:
    # Exactly one leader left, and every follower stores the minimum id.
    min_id = None
    for i in c.agents:
        if min_id is None or i < min_id:
            min_id = i
    leaders = 0
    for st in c.agents.values():
        if st.base == LEADER:
            leaders += 1
            if leaders > 1 or st.own_id != min_id:
                return False
        elif st.slots[0] != min_id:
            return False
    return leaders == 1


def _correct(c: Configuration, truth) -> bool:
    leaders = [st.own_id for st in c.agents.values() if st.base == LEADER]
    return leaders == [truth]


def _sample_state(rng: np.random.Generator, pool: Sequence[Identifier]) -> AgentState:
    own = pool[0]
    if rng.integers(0, 2):
        return AgentState(LEADER, own, (EMPTY,))
    # Reachable follower states store a leader candidate below their own id
    # when one exists in the pool.
    below = [i for i in pool[:16] if i < own]
    stored = min(below) if below and rng.integers(0, 2) else rng.choice(below) if below else own - 1
    return AgentState(FOLLOWER, own, (int(stored),))


def _fast_runner(c0: Configuration, rng: np.random.Generator, max_steps: int):
    """Array kernel with incremental convergence counters (leader count and
    number of followers already storing the minimum identifier)."""
    ids = list(c0.agents.keys())
    n = len(ids)
    min_id = min(ids)
    min_idx = ids.index(min_id)
    is_leader = bytearray(n)
    stored = [0] * n
    leaders = 0
    with_min = 0
    for k, i in enumerate(ids):
        st = c0.agents[i]
        if st.base == LEADER:
            is_leader[k] = 1
            leaders += 1
        else:
            stored[k] = st.slots[0]
            if st.slots[0] == min_id:
                with_min += 1

    def done() -> bool:
        return leaders == 1 and with_min == n - 1 and bool(is_leader[min_idx])

    if done():
        return 0, True, dict(c0.agents)
    if n < 2 or max_steps == 0:
        return 0, False, dict(c0.agents)

    own = ids  # index -> identifier
    sampler = PairSampler(n, rng)
    t = 0
    converged = False
    while t < max_steps:
        x, y = sampler.draw()
        t += 1
        lx, ly = is_leader[x], is_leader[y]
        if lx:
            if ly:
                if own[x] < own[y]:
                    loser, val = y, own[x]
                else:
                    loser, val = x, own[y]
                is_leader[loser] = 0
                leaders -= 1
                stored[loser] = val
                if val == min_id:
                    with_min += 1
            else:
                c = stored[y]
                if own[x] < c:
                    stored[y] = own[x]
                    if own[x] == min_id:
                        with_min += 1
                elif c < own[x]:
                    is_leader[x] = 0
                    leaders -= 1
                    stored[x] = c
                    if c == min_id:
                        with_min += 1
                else:
                    continue
        elif ly:
            c = stored[x]
            if own[y] < c:
                stored[x] = own[y]
                if own[y] == min_id:
                    with_min += 1
            elif c < own[y]:
                is_leader[y] = 0
                leaders -= 1
                stored[y] = c
                if c == min_id:
                    with_min += 1
            else:
                continue
        else:
            sx, sy = stored[x], stored[y]
            if sx < sy:
                stored[y] = sx
                if sx == min_id:
                    with_min += 1
            elif sy < sx:
                stored[x] = sy
                if sy == min_id:
                    with_min += 1
            else:
                continue
        if leaders == 1 and with_min == n - 1 and is_leader[min_idx]:
            converged = True
            break

    final = {}
    for k, i in enumerate(ids):
        if is_leader[k]:
            final[i] = AgentState(LEADER, i, (EMPTY,))
        else:
            final[i] = AgentState(FOLLOWER, i, (stored[k],))
    return t, converged, final


def leader_election() -> ProtocolSpec:
    return ProtocolSpec(
        name="leader_election",
        d=1,
        base_tags=frozenset({LEADER, FOLLOWER}),
        init=lambda sym, own: AgentState(LEADER, own, (EMPTY,)),
        transition=_transition,
        output_map={LEADER: True, FOLLOWER: True},
        convergence_oracle=_converged,
        correctness_oracle=_correct,
        default_inputs=lambda ids: {i: LEADER for i in ids},
        ground_truth=lambda c: min(c.agents.keys()),
        sample_state=_sample_state,
        fast_runner=_fast_runner,
    )
