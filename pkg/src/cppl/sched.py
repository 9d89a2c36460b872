"""Uniform random pairwise scheduler, seeded streams, hooks, and the run loop.

Each step draws one ordered pair (initiator, responder) uniformly from the
n(n-1) ordered pairs and applies the protocol's transition.  A run is
strictly sequential; independent trials own their configuration and RNG
stream and may execute concurrently.

Determinism contract: (master_seed, trial_index, protocol, identifier set)
fully determines the interaction sequence and the RunResult, on any
platform, with or without hooks attached, and whether the generic engine or
a protocol's fast kernel executes the run.  Both engines draw index batches
from the stream in the same fixed-size blocks to guarantee this.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .core import (
    AgentState,
    Configuration,
    Identifier,
    PopulationTooSmall,
    ProtocolSpec,
)


def derive_trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent, reproducible stream for one trial.

    Seeds a PCG64 generator with the entropy tuple (master_seed, trial_index)
    through numpy's SeedSequence, whose expansion is documented and stable
    across platforms: identical inputs give bit-identical streams.
    """
    return np.random.default_rng((int(master_seed), int(trial_index)))


def batch_size(n: int) -> int:
    """Pair-index block size drawn per RNG refill; fixed per population size
    so the draw schedule (hence the run) is deterministic."""
    return 64 if n < 256 else 1024


class PairSampler:
    """Draws uniform ordered pairs of distinct indices in [0, n) in blocks."""

    def __init__(self, n: int, rng: np.random.Generator):
        if n < 2:
            raise PopulationTooSmall(f"need at least 2 agents, got {n}")
        self.n = n
        self.rng = rng
        self.block = batch_size(n)
        self._a: list = []
        self._b: list = []
        self._k = 0

    def refill(self) -> None:
        n, b = self.n, self.block
        aa = self.rng.integers(0, n, size=b)
        bb = self.rng.integers(0, n - 1, size=b)
        bb += bb >= aa
        self._a = aa.tolist()
        self._b = bb.tolist()
        self._k = 0

    def draw(self) -> "tuple[int, int]":
        if self._k >= len(self._a):
            self.refill()
        k = self._k
        self._k = k + 1
        return self._a[k], self._b[k]


@dataclass(frozen=True)
class InteractionRecord:
    """One applied interaction: 1-based step index and the ordered pair."""

    step_index: int
    initiator: Identifier
    responder: Identifier


@dataclass
class RunResult:
    """Per-trial outcome.

    ``interactions`` is the exact first step at which the convergence oracle
    held; a non-converged run reports ``interactions == max_steps``.
    ``correct`` is None when the protocol has no correctness notion.
    """

    interactions: int
    converged: bool
    correct: Optional[bool]
    hook_outputs: dict = field(default_factory=dict)
    final: Optional[Configuration] = None


class Hook:
    """Observer attached to a run; sees every applied interaction.

    Hooks must treat the configuration as read-only: runs with and without
    hooks produce identical core results under the same seed.
    """

    def on_start(self, config: Configuration) -> None:  # pragma: no cover - default
        pass

    def on_step(self, config: Configuration, record: InteractionRecord) -> None:
        raise NotImplementedError

    def metrics(self) -> dict:
        return {}


def step(c: Configuration, p: ProtocolSpec,
         rng: np.random.Generator) -> "tuple[Configuration, InteractionRecord]":
    """Apply one uniformly sampled interaction, returning a new configuration.

    Pure: the input configuration is not modified.  For long runs prefer
    :func:`run_until`, which draws pair indices in blocks (so its stream
    consumption differs from repeated single steps, though both are uniform
    and individually deterministic).
    """
    n = c.n
    if n < 2:
        raise PopulationTooSmall(f"need at least 2 agents, got {n}")
    ids = list(c.agents.keys())
    ia = int(rng.integers(0, n))
    ib = int(rng.integers(0, n - 1))
    if ib >= ia:
        ib += 1
    a, b = ids[ia], ids[ib]
    qa, qb = c.agents[a], c.agents[b]
    ra, rb = p.transition(qa, qb)
    agents = dict(c.agents)
    agents[a] = ra
    agents[b] = rb
    rec = InteractionRecord(step_index=c.step_count + 1, initiator=a, responder=b)
    return Configuration(agents=agents, step_count=c.step_count + 1), rec


def default_check_interval(n: int) -> int:
    """Convergence-oracle cadence: every interaction for small populations,
    every n interactions above (the window is refined afterwards, so the
    recorded step stays exact)."""
    return 1 if n <= 64 else n


def _replay(snapshot: dict, pairs: Sequence, p: ProtocolSpec, upto: int) -> dict:
    agents = dict(snapshot)
    transition = p.transition
    for a, b in pairs[:upto]:
        ra, rb = transition(agents[a], agents[b])
        agents[a] = ra
        agents[b] = rb
    return agents


def _refine_first_true(snapshot: dict, pairs: Sequence, p: ProtocolSpec,
                       base_step: int, oracle) -> "tuple[int, dict]":
    """Exact first step in (base_step, base_step+len(pairs)] where the oracle
    holds, by bisection over a replay of the recorded window; returns the
    step and the configuration state at that step.

    Assumes the oracle is absorbing along the window (once true it stays
    true), which holds for every shipped protocol: their converged
    configurations are output stable.
    """
    lo, hi = 0, len(pairs)  # oracle False after lo pairs, True after hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        agents = _replay(snapshot, pairs, p, mid)
        if oracle(Configuration(agents=agents, step_count=base_step + mid)):
            hi = mid
        else:
            lo = mid
    return base_step + hi, _replay(snapshot, pairs, p, hi)


def run_until(c0: Configuration, p: ProtocolSpec, max_steps: int,
              hooks: Iterable[Hook] = (), rng: Optional[np.random.Generator] = None,
              check_interval: Optional[int] = None,
              prefer_fast: bool = True) -> RunResult:
    """Iterate interactions until the convergence oracle holds or the step cap
    is reached.

    The oracle is evaluated on snapshots every ``check_interval`` steps (plus
    once before stepping); when it first holds at a checkpoint the exact
    first-true step is recovered by replaying the recorded window.  A run
    that hits ``max_steps`` is reported non-converged, never truncated
    silently.
    """
    if rng is None:
        rng = derive_trial_rng(0, 0)
    if max_steps < 0:
        raise ValueError("max_steps must be >= 0")
    if p.check_preconditions is not None:
        p.check_preconditions(c0)
    truth = p.ground_truth(c0)
    hooks = list(hooks)

    if p.fast_runner is not None and not hooks and prefer_fast:
        t, converged, final_agents = p.fast_runner(c0, rng, max_steps)
        final = Configuration(agents=final_agents, step_count=t if converged else max_steps)
        correct = p.correctness_oracle(final, truth) if converged else (False if truth is not None else None)
        return RunResult(interactions=t if converged else max_steps,
                         converged=converged, correct=correct, final=final)

    n = c0.n
    agents = dict(c0.agents)
    oracle = p.convergence_oracle

    view = Configuration(agents=agents, step_count=0)
    for h in hooks:
        h.on_start(view)
    if oracle(view):
        result = RunResult(interactions=0, converged=True,
                           correct=p.correctness_oracle(view, truth),
                           final=Configuration(agents=dict(agents), step_count=0))
        result.hook_outputs = _collect_metrics(hooks)
        return result
    if n < 2 or max_steps == 0:
        # A lone agent (or a zero budget) can never interact; the oracle was
        # already given its chance on the initial snapshot.
        final = Configuration(agents=dict(agents), step_count=0)
        result = RunResult(interactions=max_steps, converged=False,
                           correct=(False if truth is not None else None), final=final)
        result.hook_outputs = _collect_metrics(hooks)
        return result

    interval = default_check_interval(n) if check_interval is None else max(1, check_interval)
    sampler = PairSampler(n, rng)
    ids = list(agents.keys())

    t = 0
    converged = False
    window: list = []
    snapshot = dict(agents)
    snap_step = 0

    while t < max_steps:
        ia, ib = sampler.draw()
        a, b = ids[ia], ids[ib]
        qa, qb = agents[a], agents[b]
        ra, rb = p.transition(qa, qb)
        if ra is not qa:
            agents[a] = ra
        if rb is not qb:
            agents[b] = rb
        t += 1
        if interval > 1:
            window.append((a, b))
        if hooks:
            rec = InteractionRecord(step_index=t, initiator=a, responder=b)
            view = Configuration(agents=agents, step_count=t)
            for h in hooks:
                h.on_step(view, rec)
        if t % interval == 0 or t == max_steps:
            if oracle(Configuration(agents=agents, step_count=t)):
                if interval > 1 and len(window) > 1:
                    t, agents = _refine_first_true(snapshot, window, p, snap_step, oracle)
                converged = True
                break
            snapshot = dict(agents)
            snap_step = t
            window.clear()

    final = Configuration(agents=dict(agents), step_count=t)
    correct = p.correctness_oracle(final, truth) if converged else (
        False if truth is not None else None)
    result = RunResult(interactions=t if converged else max_steps,
                       converged=converged, correct=correct, final=final)
    result.hook_outputs = _collect_metrics(hooks)
    return result


def _collect_metrics(hooks: Iterable[Hook]) -> dict:
    out: dict = {}
    for h in hooks:
        out.update(h.metrics())
    return out


def run_trial(p: ProtocolSpec, ids: Sequence[Identifier], master_seed: int,
              trial_index: int, max_steps: Optional[int] = None,
              hooks: Iterable[Hook] = (), check_interval: Optional[int] = None,
              prefer_fast: bool = True) -> RunResult:
    """Build the initial configuration over ``ids`` and run one seeded trial."""
    rng = derive_trial_rng(master_seed, trial_index)
    c0 = p.initial_configuration(ids)
    cap = p.default_max_steps(len(ids)) if max_steps is None else max_steps
    return run_until(c0, p, cap, hooks=hooks, rng=rng,
                     check_interval=check_interval, prefer_fast=prefer_fast)
