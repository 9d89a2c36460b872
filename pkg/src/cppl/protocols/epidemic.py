"""One-rule epidemic: (1, 0) -> (1, 1), plus its exact finite-n time oracle.

The epidemic is the basic information-spreading unit; completing one takes
Theta(n log n) interactions in expectation.  The exact expectation for any
finite n follows from the absorbing birth chain on the infected count k,
which advances with probability k(n-k) / (n(n-1)/2) per interaction.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

from ..core import AgentState, Configuration, Identifier, ProtocolSpec
from ..sched import PairSampler

SUSCEPTIBLE = "0"
INFECTED = "1"


def _transition(q1: AgentState, q2: AgentState):
    if q1.base == INFECTED:
        if q2.base == SUSCEPTIBLE:
            return q1, AgentState(INFECTED, q2.own_id, q2.slots)
    elif q2.base == INFECTED:
        return AgentState(INFECTED, q1.own_id, q1.slots), q2
    return q1, q2


def _converged(c: Configuration) -> bool:
    return all(st.base == INFECTED for st in c.agents.values())


def _default_inputs(ids: Sequence[Identifier]) -> dict:
    # The spreader is the smallest identifier (in compositions the leader
    # starts epidemics); any single seed behaves identically by symmetry.
    src = min(ids)
    return {i: (INFECTED if i == src else SUSCEPTIBLE) for i in ids}


def _sample_state(rng: np.random.Generator, pool: Sequence[Identifier]) -> AgentState:
    return AgentState(INFECTED if rng.integers(0, 2) else SUSCEPTIBLE, pool[0], ())


def _fast_runner(c0: Configuration, rng: np.random.Generator, max_steps: int):
    """Bytearray kernel; tracks the infected count so convergence detection is
    O(1) and the recorded step is exact by construction."""
    ids = list(c0.agents.keys())
    n = len(ids)
    infected = bytearray(n)
    count = 0
    for k, i in enumerate(ids):
        if c0.agents[i].base == INFECTED:
            infected[k] = 1
            count += 1
    if count == n:
        return 0, True, dict(c0.agents)
    if n < 2 or max_steps == 0:
        return 0, False, dict(c0.agents)

    sampler = PairSampler(n, rng)
    t = 0
    converged = False
    while t < max_steps:
        x, y = sampler.draw()
        t += 1
        if infected[x]:
            if not infected[y]:
                infected[y] = 1
                count += 1
                if count == n:
                    converged = True
                    break
        elif infected[y]:
            infected[x] = 1
            count += 1
            if count == n:
                converged = True
                break
    final = {i: AgentState(INFECTED if infected[k] else SUSCEPTIBLE, i, ())
             for k, i in enumerate(ids)}
    return t, converged, final


def epidemic() -> ProtocolSpec:
    return ProtocolSpec(
        name="epidemic",
        d=0,
        base_tags=frozenset({SUSCEPTIBLE, INFECTED}),
        init=lambda sym, own: AgentState(sym, own, ()),
        transition=_transition,
        output_map={SUSCEPTIBLE: True, INFECTED: True},
        convergence_oracle=_converged,
        correctness_oracle=lambda c, truth: True,
        default_inputs=_default_inputs,
        ground_truth=lambda c: None,
        sample_state=_sample_state,
        fast_runner=_fast_runner,
    )


def expected_epidemic_time_exact(n: int) -> Fraction:
    """Exact expected interactions for one infected agent to infect all n-1
    others: sum over k of C(n,2) / (k (n-k))."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pairs = Fraction(n * (n - 1), 2)
    total = Fraction(0)
    for k in range(1, n):
        total += pairs / (k * (n - k))
    return total
