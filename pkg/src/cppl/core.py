"""Object model for community protocols.

A community protocol is a population protocol whose agents carry a unique,
totally ordered identifier plus ``d`` slots that may hold identifiers of
other agents.  Transitions are restricted two ways:

1. no new identifiers: an output state may only mention identifiers that
   occurred in one of the two input states;
2. order invariance: relabeling the occurring identifiers through any
   strictly increasing map commutes with the transition, so rules may only
   compare identifiers, never inspect their absolute values.

This module holds the value types (``AgentState``, ``Configuration``,
``ProtocolSpec``) and the validators for the two restrictions.  Everything
here is immutable and pure; all mutable run state lives in the scheduler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

# Identifiers are opaque, totally ordered, non-negative integers.  The model
# never assumes contiguity; test populations deliberately use gaps.
Identifier = int

# Marker for an empty identifier slot.
EMPTY = None


class ProtocolError(Exception):
    """Base class for model-level errors."""


class UndefinedIdentifier(ProtocolError):
    """A relabeling map does not cover an identifier occurring in a state."""


class UnknownBaseTag(ProtocolError):
    """A configuration contains a base tag outside the protocol's tag set."""


class PopulationTooSmall(ProtocolError):
    """An interaction was requested on a population with fewer than 2 agents."""


class NoLeader(ProtocolError):
    """A leader-driven operation was started without a leader."""


class BadPrecondition(ProtocolError):
    """A composed protocol was started from a configuration that violates
    its entry preconditions (checked against the snapshot)."""


class InvalidParameter(ProtocolError):
    """A protocol parameter is outside its legal range."""


@dataclass(frozen=True)
class AgentState:
    """One agent's full state: base tag, own identifier, identifier slots.

    ``slots`` always has exactly ``d`` entries for the owning protocol;
    empty entries hold :data:`EMPTY`.  ``own_id`` is immutable across every
    transition (enforced by the scheduler and checked by the validators).
    """

    base: str
    own_id: Identifier
    slots: tuple

    def occurring_ids(self) -> tuple:
        """All identifiers occurring in this state, own_id included."""
        ids = [self.own_id]
        for s in self.slots:
            if s is not EMPTY:
                ids.append(s)
        return tuple(ids)


@dataclass(frozen=True)
class Configuration:
    """A full population: identifier-indexed agent states plus the number of
    interactions elapsed.

    The ``agents`` mapping is keyed by each agent's ``own_id``.  During a run
    the scheduler hands oracles and hooks configurations whose mapping aliases
    live run state; treat them as read-only snapshots and do not retain them.
    """

    agents: Mapping[Identifier, AgentState]
    step_count: int = 0

    @property
    def n(self) -> int:
        return len(self.agents)

    def ids(self) -> list:
        return list(self.agents.keys())

    def validate(self) -> None:
        """Check structural invariants (key == own_id, distinct ids, n >= 1)."""
        if len(self.agents) < 1:
            raise ProtocolError("population must contain at least one agent")
        for key, st in self.agents.items():
            if key != st.own_id:
                raise ProtocolError(f"agent keyed {key} has own_id {st.own_id}")

    @staticmethod
    def from_states(states: Iterable[AgentState], step_count: int = 0) -> "Configuration":
        agents = {st.own_id: st for st in states}
        c = Configuration(agents=agents, step_count=step_count)
        c.validate()
        return c


# Transition functions map an ordered (initiator, responder) state pair to a
# new state pair.  Symmetric protocols simply ignore the order.
Transition = Callable[[AgentState, AgentState], "tuple[AgentState, AgentState]"]


@dataclass(frozen=True)
class ProtocolSpec:
    """A named protocol plus the harness functions that make runs measurable.

    The convergence and correctness oracles are snapshot-level harness
    functions, not protocol state: output stability is generally not
    detectable from inside the protocol, so detecting it is the scheduler's
    job.  ``ground_truth`` derives whatever the correctness oracle needs
    (e.g. the minimum identifier) from the initial configuration.
    """

    name: str
    d: int
    base_tags: frozenset
    init: Callable[[str, Identifier], AgentState]
    transition: Transition
    output_map: Mapping[str, bool]
    convergence_oracle: Callable[[Configuration], bool]
    correctness_oracle: Callable[[Configuration, Any], Optional[bool]]
    default_inputs: Callable[[Sequence[Identifier]], "dict[Identifier, str]"]
    ground_truth: Callable[[Configuration], Any] = lambda c: None
    # Draws a plausible (reachable-shaped) agent state for restriction checks.
    sample_state: Optional[Callable[[np.random.Generator, Sequence[Identifier]], AgentState]] = None
    # Optional specialized engine; must consume the RNG exactly like the
    # generic loop so runs are bit-identical either way.
    fast_runner: Optional[Callable] = None
    # Builds a full starting configuration for composed protocols whose entry
    # point is not the (iota, empty-slots) initial state.
    build_initial: Optional[Callable[[Sequence[Identifier]], Configuration]] = None
    check_preconditions: Optional[Callable[[Configuration], None]] = None
    default_max_steps: Callable[[int], int] = lambda n: 64 * n * max(1, int(np.log2(max(n, 2)))) ** 6

    def initial_configuration(self, ids: Sequence[Identifier]) -> Configuration:
        """Initial configuration over ``ids`` using the default inputs."""
        if self.build_initial is not None:
            return self.build_initial(ids)
        inputs = self.default_inputs(ids)
        return Configuration.from_states(self.init(inputs[i], i) for i in ids)


def validate_no_new_ids(q1: AgentState, q2: AgentState,
                        q1p: AgentState, q2p: AgentState) -> bool:
    """True iff every identifier in the output pair occurs in the input pair."""
    seen = set(q1.occurring_ids())
    seen.update(q2.occurring_ids())
    for q in (q1p, q2p):
        for i in q.occurring_ids():
            if i not in seen:
                return False
    return True


def relabel(q: AgentState, rho: Mapping[Identifier, Identifier]) -> AgentState:
    """Apply a strictly increasing identifier map to every occurrence in ``q``.

    ``rho`` must be defined on every identifier occurring in ``q``; empty
    slots and the base tag pass through unchanged.
    """
    try:
        own = rho[q.own_id]
        slots = tuple(EMPTY if s is EMPTY else rho[s] for s in q.slots)
    except KeyError as exc:
        raise UndefinedIdentifier(f"relabeling undefined for identifier {exc.args[0]}")
    return AgentState(base=q.base, own_id=own, slots=slots)


@dataclass(frozen=True)
class Violation:
    """One observed restriction violation, kept as data for reporting."""

    kind: str  # "order_invariance" | "new_identifier" | "own_id_changed"
    inputs: tuple
    expected: tuple
    actual: tuple


@dataclass
class ValidationReport:
    samples: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _increasing_relabeling(occurring: Sequence[Identifier],
                           rng: np.random.Generator) -> "dict[Identifier, Identifier]":
    """Random strictly increasing map defined on ``occurring``."""
    k = len(occurring)
    hi = max(occurring) if occurring else 0
    # Sample fresh target values over a widened, shifted range so absolute
    # values and gaps both change.
    span = 4 * (hi + k + 4)
    targets = rng.choice(span, size=k, replace=False)
    targets.sort()
    offset = int(rng.integers(0, 3)) * span
    return {u: int(t) + offset for u, t in zip(sorted(occurring), targets)}


def check_order_invariance(p: ProtocolSpec, sample_count: int,
                           rng: np.random.Generator,
                           id_pool: Optional[Sequence[Identifier]] = None) -> ValidationReport:
    """Sample random state pairs and relabelings and check both restrictions.

    For each sample: draw two reachable-shaped states with distinct own
    identifiers, apply the transition, then verify (a) no new identifiers
    and (b) transition(rho q1, rho q2) == (rho q1', rho q2') element-wise,
    plus own_id immutability.  Violations are collected, not raised.
    """
    report = ValidationReport()
    if sample_count <= 0:
        return report
    if p.sample_state is None:
        raise ProtocolError(f"protocol {p.name!r} has no state sampler")
    pool = list(id_pool) if id_pool is not None else list(range(1, 4096, 3))

    for _ in range(sample_count):
        report.samples += 1
        i1, i2 = (int(x) for x in rng.choice(len(pool), size=2, replace=False))
        q1 = p.sample_state(rng, pool[i1:] + pool[:i1])
        q2 = p.sample_state(rng, pool[i2:] + pool[:i2])
        if q1.own_id == q2.own_id:
            continue
        q1p, q2p = p.transition(q1, q2)

        if q1p.own_id != q1.own_id or q2p.own_id != q2.own_id:
            report.violations.append(Violation(
                kind="own_id_changed", inputs=(q1, q2), expected=(q1.own_id, q2.own_id),
                actual=(q1p.own_id, q2p.own_id)))
            continue
        if not validate_no_new_ids(q1, q2, q1p, q2p):
            report.violations.append(Violation(
                kind="new_identifier", inputs=(q1, q2), expected=(), actual=(q1p, q2p)))
            continue

        occurring = set(q1.occurring_ids()) | set(q2.occurring_ids())
        occurring |= set(q1p.occurring_ids()) | set(q2p.occurring_ids())
        rho = _increasing_relabeling(sorted(occurring), rng)
        want = (relabel(q1p, rho), relabel(q2p, rho))
        got = p.transition(relabel(q1, rho), relabel(q2, rho))
        if got != want:
            report.violations.append(Violation(
                kind="order_invariance", inputs=(q1, q2, rho), expected=want, actual=got))
    return report


def output_of_configuration(c: Configuration, p: ProtocolSpec) -> Optional[bool]:
    """Unanimous output of a configuration: True/False, or None if mixed."""
    out = None
    for st in c.agents.values():
        if st.base not in p.output_map:
            raise UnknownBaseTag(f"base tag {st.base!r} not in protocol {p.name!r}")
        val = p.output_map[st.base]
        if out is None:
            out = val
        elif out != val:
            return None
    return out


def make_ids(n: int, rng: np.random.Generator, non_contiguous: bool = True) -> list:
    """Draw ``n`` distinct identifiers, sorted ascending.

    Non-contiguous sets exercise order invariance; the model never assumes
    identifiers form a range.
    """
    if n < 1:
        raise ValueError("population size must be >= 1")
    if not non_contiguous:
        return list(range(n))
    ids = rng.choice(8 * n, size=n, replace=False)
    ids.sort()
    return [int(i) for i in ids]
