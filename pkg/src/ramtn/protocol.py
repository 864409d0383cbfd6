"""Statement ledger domain model and the pure adjudication mathematics.

This module is the semantic heart of the engine: the three-way confidence
ledger (confirmed / conjectured / unknown), the per-statement adjudication
rules that decide how a statement's class moves after a challenge-defense
exchange, and the scalar confidence / compliance arithmetic built on top of
the ledger counts.

Everything here is pure: no I/O, no clocks, no randomness. Functions take
value-semantics inputs and return new values; a ledger is never mutated in
place by the adjudication entry points.

Adjudication in one table (initial class x challenge outcome -> final class):

    initial Unknown           -> Unknown, always (unknown is absorbing)
    not challenged            -> unchanged
    objected + defended fully + critic accepts      -> Confirmed
    objected + defended fully + critic maintains    -> Conjectured
    objected + partial defense                      -> Conjectured
    objected + no response / failed to prove        -> Unknown
    objected + voluntary downgrade to t             -> t  (t strictly lower)

A statement can reach Confirmed through exactly two doors: it started
Confirmed and nobody objected, or its defense fully succeeded AND the critic
accepted it afterwards. The engine's "confirmed gate" property tests pin
this down.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence


# =============================================================================
# Errors
# =============================================================================


class LedgerError(Exception):
    """Base class for ledger/adjudication errors."""


class ContractViolation(LedgerError):
    """An argument combination that the adjudication contract forbids."""


class UnknownStatementError(LedgerError):
    """A verdict/defense/stance/ruling references an id not in the ledger."""


class DuplicateEntryError(LedgerError):
    """More than one verdict/defense/stance/ruling for the same statement."""


class EmptyLedgerError(LedgerError):
    """Confidence is undefined on a ledger with zero statements."""


class StatementValidationError(LedgerError):
    """Raw statement input failed validation (carries the offending index)."""

    def __init__(self, index: int, message: str):
        super().__init__(f"statement {index}: {message}")
        self.index = index


# =============================================================================
# Statement classes and transition causes
# =============================================================================


class StatementClass(Enum):
    """The three confidence classes. Total order: Confirmed > Conjectured > Unknown."""

    CONFIRMED = "confirmed"
    CONJECTURED = "conjectured"
    UNKNOWN = "unknown"

    @property
    def rank(self) -> int:
        return _CLASS_RANK[self]

    def __lt__(self, other: "StatementClass") -> bool:
        if not isinstance(other, StatementClass):
            return NotImplemented
        return self.rank < other.rank

    def __le__(self, other: "StatementClass") -> bool:
        if not isinstance(other, StatementClass):
            return NotImplemented
        return self.rank <= other.rank

    def __gt__(self, other: "StatementClass") -> bool:
        if not isinstance(other, StatementClass):
            return NotImplemented
        return self.rank > other.rank

    def __ge__(self, other: "StatementClass") -> bool:
        if not isinstance(other, StatementClass):
            return NotImplemented
        return self.rank >= other.rank


_CLASS_RANK = {
    StatementClass.UNKNOWN: 0,
    StatementClass.CONJECTURED: 1,
    StatementClass.CONFIRMED: 2,
}


class TransitionCause(Enum):
    """Closed set of causes a history entry may carry."""

    INITIAL = "initial"
    CRITIC_ACCEPTED = "critic-accepted"
    DEFENSE_SUCCEEDED = "defense-succeeded"
    DEFENSE_PARTIAL = "defense-partial"
    VOLUNTARY_DOWNGRADE = "voluntary-downgrade"
    NO_RESPONSE = "no-response"
    FAILED_TO_PROVE = "failed-to-prove"
    OBSERVER_OVERRIDE = "observer-override"
    PARSE_FAILURE = "parse-failure"


class Role(Enum):
    """The four protocol roles."""

    CONSTRUCTOR = "constructor"
    CRITIC = "critic"
    RESPONDER = "responder"
    OBSERVER = "observer"


# =============================================================================
# Statement and exchange records
# =============================================================================


@dataclass(frozen=True)
class Origin:
    """Where a statement was born: layer/round coordinates plus producing role."""

    layer: int = 1
    round: int = 1
    role: Role = Role.CONSTRUCTOR


@dataclass(frozen=True)
class Transition:
    """One history entry: a class move (possibly from == to) and its cause."""

    from_class: StatementClass
    to_class: StatementClass
    cause: TransitionCause
    round: int


@dataclass
class Statement:
    """A single claim with class, provenance and append-only transition history."""

    id: str
    text: str
    klass: StatementClass
    origin: Origin = field(default_factory=Origin)
    support: str | None = None
    principle_ref: str | None = None
    history: list[Transition] = field(default_factory=list)

    def append_transition(self, to_class: StatementClass, cause: TransitionCause, round_index: int) -> None:
        self.history.append(Transition(self.klass, to_class, cause, round_index))
        self.klass = to_class


class VerdictStance(Enum):
    ACCEPT = "accept"
    OBJECT = "object"


class ObjectionCategory(Enum):
    FACTUAL = "factual"
    LOGICAL = "logical"
    COMPLETENESS = "completeness"


@dataclass(frozen=True)
class CriticVerdict:
    """The critic's stance on one statement. Object carries category + reason."""

    statement_id: str
    stance: VerdictStance
    category: ObjectionCategory | None = None
    reason: str | None = None

    def __post_init__(self) -> None:
        if self.stance is VerdictStance.OBJECT:
            if self.category is None or not self.reason:
                raise ContractViolation(
                    f"objection against {self.statement_id} must carry a category and a reason"
                )
        else:
            if self.category is not None or self.reason is not None:
                raise ContractViolation(
                    f"acceptance of {self.statement_id} must not carry a category or reason"
                )


class DefenseKind(Enum):
    DEFENDED_SUCCESS = "defended-success"
    EFFECTIVE_PARTIAL = "effective-partial"
    VOLUNTARY_DOWNGRADE = "voluntary-downgrade"
    NO_RESPONSE = "no-response"
    FAILED_TO_PROVE = "failed-to-prove"


@dataclass(frozen=True)
class DefenseOutcome:
    """How the constructor answered an objection against one statement."""

    statement_id: str
    kind: DefenseKind
    argument: str | None = None
    downgrade_target: StatementClass | None = None

    def __post_init__(self) -> None:
        if self.kind is DefenseKind.VOLUNTARY_DOWNGRADE and self.downgrade_target is None:
            raise ContractViolation(f"downgrade of {self.statement_id} must carry a target class")
        if self.kind is not DefenseKind.VOLUNTARY_DOWNGRADE and self.downgrade_target is not None:
            raise ContractViolation(f"{self.kind.value} for {self.statement_id} must not carry a target")


class PostDefenseStanceKind(Enum):
    ACCEPT = "accept"
    MAINTAIN_OBJECTION = "maintain"


@dataclass(frozen=True)
class PostDefenseStance:
    """The critic's final word after seeing a defense."""

    statement_id: str
    stance: PostDefenseStanceKind


@dataclass(frozen=True)
class ObserverRuling:
    """The observer's recalibration of one statement's final class."""

    statement_id: str
    final_class: StatementClass
    justification: str
    overrides_mechanical: bool = False


# =============================================================================
# Ledger
# =============================================================================


@dataclass
class TripleLedger:
    """Partition of all statements into confirmed/conjectured/unknown id sets.

    Invariant: the three sets are pairwise disjoint, their union is exactly
    the key set of `statements`, and each statement's own class agrees with
    the set holding its id. `check_partition` asserts this; the adjudication
    entry points preserve it.
    """

    statements: dict[str, Statement] = field(default_factory=dict)

    @property
    def confirmed(self) -> set[str]:
        return {s.id for s in self.statements.values() if s.klass is StatementClass.CONFIRMED}

    @property
    def conjectured(self) -> set[str]:
        return {s.id for s in self.statements.values() if s.klass is StatementClass.CONJECTURED}

    @property
    def unknown(self) -> set[str]:
        return {s.id for s in self.statements.values() if s.klass is StatementClass.UNKNOWN}

    def counts(self) -> tuple[int, int, int]:
        c = j = u = 0
        for s in self.statements.values():
            if s.klass is StatementClass.CONFIRMED:
                c += 1
            elif s.klass is StatementClass.CONJECTURED:
                j += 1
            else:
                u += 1
        return c, j, u

    def ids_in_order(self) -> list[str]:
        """Statement ids in first-seen (insertion) order."""
        return list(self.statements.keys())

    def check_partition(self) -> None:
        """Raise LedgerError if the partition invariant is broken."""
        confirmed, conjectured, unknown = self.confirmed, self.conjectured, self.unknown
        union = confirmed | conjectured | unknown
        if union != set(self.statements.keys()):
            raise LedgerError("partition does not cover the statement map")
        if len(confirmed) + len(conjectured) + len(unknown) != len(self.statements):
            raise LedgerError("partition sets overlap")
        for s in self.statements.values():
            if s.history and s.history[-1].to_class is not s.klass:
                raise LedgerError(f"{s.id}: last history entry disagrees with current class")

    def clone(self) -> "TripleLedger":
        return copy.deepcopy(self)


# =============================================================================
# Confidence rules and reports
# =============================================================================


@dataclass(frozen=True)
class ConfidenceRules:
    """Weights, threshold and iteration limits governing a session.

    w_conjectured must stay strictly below w_confirmed so that upgrading a
    statement never lowers the scalar confidence.
    """

    w_confirmed: float = 1.0
    w_conjectured: float = 0.5
    threshold: float = 0.75
    min_confirmed_core: int = 2
    max_rounds_per_layer: int = 3
    layer_count: int = 3

    def __post_init__(self) -> None:
        if not (0.0 < self.w_confirmed <= 1.0):
            raise ContractViolation("w_confirmed must be in (0, 1]")
        if not (0.0 <= self.w_conjectured < self.w_confirmed):
            raise ContractViolation("w_conjectured must be in [0, w_confirmed)")
        if not (0.0 <= self.threshold <= 1.0):
            raise ContractViolation("threshold must be in [0, 1]")
        if self.min_confirmed_core < 0:
            raise ContractViolation("min_confirmed_core must be non-negative")
        if self.max_rounds_per_layer < 1:
            raise ContractViolation("max_rounds_per_layer must be positive")
        if self.layer_count < 1:
            raise ContractViolation("layer_count must be positive")


DEFAULT_RULES = ConfidenceRules()


@dataclass(frozen=True)
class ConfidenceReport:
    """Scalar confidence over a ledger plus the compliance verdict inputs."""

    value: float
    counts: tuple[int, int, int]
    core_confirmed_count: int
    weights_used: tuple[float, float]
    compliant: bool


# =============================================================================
# Adjudication
# =============================================================================


def adjudicate_statement(
    initial: StatementClass,
    challenged: bool,
    defense: DefenseKind | None = None,
    post_defense: PostDefenseStanceKind | None = None,
    downgrade_target: StatementClass | None = None,
) -> StatementClass:
    """Decide a statement's final class for one exchange.

    `challenged` is False when the critic accepted (or never reviewed) the
    statement; in that case no defense or stance may be supplied. When the
    statement was objected to, both a defense kind and a post-defense stance
    are required (parsers supply NO_RESPONSE / MAINTAIN defaults for absent
    lines, so by the time adjudication runs the exchange is always total).
    """
    if not challenged:
        if defense is not None or post_defense is not None:
            raise ContractViolation("defense/stance supplied without an objection")
        return initial

    if defense is None or post_defense is None:
        raise ContractViolation("objection requires both a defense kind and a post-defense stance")

    if initial is StatementClass.UNKNOWN:
        # Unknown is absorbing: the transition rules never draw from it.
        return StatementClass.UNKNOWN

    if defense is DefenseKind.VOLUNTARY_DOWNGRADE:
        if downgrade_target is None:
            raise ContractViolation("voluntary downgrade requires a target class")
        if not (downgrade_target < initial):
            raise ContractViolation(
                f"downgrade target {downgrade_target.value} is not lower than {initial.value}"
            )
        return downgrade_target
    if downgrade_target is not None:
        raise ContractViolation("downgrade target supplied without a voluntary downgrade")

    if defense is DefenseKind.DEFENDED_SUCCESS:
        if post_defense is PostDefenseStanceKind.ACCEPT:
            return StatementClass.CONFIRMED
        return StatementClass.CONJECTURED
    if defense is DefenseKind.EFFECTIVE_PARTIAL:
        return StatementClass.CONJECTURED
    # NO_RESPONSE and FAILED_TO_PROVE drop the statement to unknown.
    return StatementClass.UNKNOWN


def _cause_for(defense: DefenseKind, final: StatementClass) -> TransitionCause:
    if defense is DefenseKind.VOLUNTARY_DOWNGRADE:
        return TransitionCause.VOLUNTARY_DOWNGRADE
    if defense is DefenseKind.NO_RESPONSE:
        return TransitionCause.NO_RESPONSE
    if defense is DefenseKind.FAILED_TO_PROVE:
        return TransitionCause.FAILED_TO_PROVE
    if defense is DefenseKind.DEFENDED_SUCCESS and final is StatementClass.CONFIRMED:
        return TransitionCause.DEFENSE_SUCCEEDED
    # Effective-partial, or a full defense the critic did not accept.
    return TransitionCause.DEFENSE_PARTIAL


def adjudicate_round(
    ledger: TripleLedger,
    verdicts: Sequence[CriticVerdict],
    defenses: Sequence[DefenseOutcome] = (),
    stances: Sequence[PostDefenseStance] = (),
    rulings: Sequence[ObserverRuling] = (),
    round_index: int = 1,
) -> TripleLedger:
    """Apply one full exchange to a ledger and return the updated copy.

    Per statement: the mechanical class comes from `adjudicate_statement`;
    an observer ruling, when present, wins and is flagged as an override iff
    it disagrees with the mechanical result. Statements without a verdict
    (and without a ruling) are untouched. History entries record every step:
    acceptance re-confirmations, mechanical moves, and observer overrides
    each append exactly one entry.
    """
    verdict_by_id = _index_unique(verdicts, "verdict", ledger)
    defense_by_id = _index_unique(defenses, "defense", ledger)
    stance_by_id = _index_unique(stances, "stance", ledger)
    ruling_by_id = _index_unique(rulings, "ruling", ledger)

    for sid in defense_by_id:
        verdict = verdict_by_id.get(sid)
        if verdict is None or verdict.stance is not VerdictStance.OBJECT:
            raise ContractViolation(f"defense for {sid} without an objection")
    for sid in stance_by_id:
        if sid not in defense_by_id:
            raise ContractViolation(f"post-defense stance for {sid} without a defense")

    out = ledger.clone()
    for sid, stmt in out.statements.items():
        verdict = verdict_by_id.get(sid)
        ruling = ruling_by_id.get(sid)
        if verdict is None and ruling is None:
            continue

        mechanical = stmt.klass
        if verdict is not None:
            if verdict.stance is VerdictStance.ACCEPT:
                stmt.append_transition(stmt.klass, TransitionCause.CRITIC_ACCEPTED, round_index)
            else:
                defense = defense_by_id.get(sid) or DefenseOutcome(sid, DefenseKind.NO_RESPONSE)
                stance = stance_by_id.get(
                    sid, PostDefenseStance(sid, PostDefenseStanceKind.MAINTAIN_OBJECTION)
                )
                mechanical = adjudicate_statement(
                    stmt.klass,
                    challenged=True,
                    defense=defense.kind,
                    post_defense=stance.stance,
                    downgrade_target=defense.downgrade_target,
                )
                stmt.append_transition(mechanical, _cause_for(defense.kind, mechanical), round_index)
                if defense.argument:
                    stmt.support = defense.argument

        if ruling is not None and ruling.final_class is not mechanical:
            stmt.append_transition(ruling.final_class, TransitionCause.OBSERVER_OVERRIDE, round_index)

    out.check_partition()
    return out


def resolve_rulings(
    ledger: TripleLedger,
    verdicts: Sequence[CriticVerdict],
    defenses: Sequence[DefenseOutcome],
    stances: Sequence[PostDefenseStance],
    raw_rulings: Sequence[ObserverRuling],
) -> list[ObserverRuling]:
    """Recompute each ruling's overrides_mechanical flag against the ledger."""
    verdict_by_id = {v.statement_id: v for v in verdicts}
    defense_by_id = {d.statement_id: d for d in defenses}
    stance_by_id = {s.statement_id: s for s in stances}
    resolved = []
    for ruling in raw_rulings:
        stmt = ledger.statements.get(ruling.statement_id)
        if stmt is None:
            raise UnknownStatementError(f"ruling references unknown statement {ruling.statement_id}")
        verdict = verdict_by_id.get(ruling.statement_id)
        if verdict is None or verdict.stance is VerdictStance.ACCEPT:
            mechanical = stmt.klass
        else:
            defense = defense_by_id.get(
                ruling.statement_id, DefenseOutcome(ruling.statement_id, DefenseKind.NO_RESPONSE)
            )
            stance = stance_by_id.get(
                ruling.statement_id,
                PostDefenseStance(ruling.statement_id, PostDefenseStanceKind.MAINTAIN_OBJECTION),
            )
            mechanical = adjudicate_statement(
                stmt.klass,
                challenged=True,
                defense=defense.kind,
                post_defense=stance.stance,
                downgrade_target=defense.downgrade_target,
            )
        resolved.append(
            ObserverRuling(
                statement_id=ruling.statement_id,
                final_class=ruling.final_class,
                justification=ruling.justification,
                overrides_mechanical=ruling.final_class is not mechanical,
            )
        )
    return resolved


def _index_unique(items: Iterable, label: str, ledger: TripleLedger) -> dict:
    by_id: dict[str, object] = {}
    for item in items:
        sid = item.statement_id
        if sid not in ledger.statements:
            raise UnknownStatementError(f"{label} references unknown statement {sid}")
        if sid in by_id:
            raise DuplicateEntryError(f"duplicate {label} for statement {sid}")
        by_id[sid] = item
    return by_id


# =============================================================================
# Confidence and compliance
# =============================================================================


def compute_confidence(
    ledger: TripleLedger,
    rules: ConfidenceRules,
    core_ids: set[str] | frozenset[str] = frozenset(),
) -> ConfidenceReport:
    """value = (w_c*|C| + w_j*|J|) / (|C|+|J|+|U|), plus the compliance verdict.

    The scalar is 1.0 when everything is confirmed, 0 when everything is
    unknown, and moves monotonically with class upgrades. Undefined (raises)
    on an empty ledger.
    """
    c, j, u = ledger.counts()
    total = c + j + u
    if total == 0:
        raise EmptyLedgerError("confidence is undefined on an empty ledger")
    unknown_core = core_ids - set(ledger.statements.keys())
    if unknown_core:
        raise UnknownStatementError(f"core ids not in ledger: {sorted(unknown_core)}")
    value = (rules.w_confirmed * c + rules.w_conjectured * j) / total
    core_confirmed = len(set(core_ids) & ledger.confirmed)
    compliant = value >= rules.threshold and core_confirmed >= rules.min_confirmed_core
    return ConfidenceReport(
        value=value,
        counts=(c, j, u),
        core_confirmed_count=core_confirmed,
        weights_used=(rules.w_confirmed, rules.w_conjectured),
        compliant=compliant,
    )


def check_compliance(report: ConfidenceReport, rules: ConfidenceRules) -> bool:
    """True iff value >= threshold and enough core conclusions are confirmed.

    Both comparisons are inclusive: a value exactly at the threshold passes.
    """
    if report.weights_used != (rules.w_confirmed, rules.w_conjectured):
        raise ContractViolation("report was computed under different weights")
    return report.value >= rules.threshold and report.core_confirmed_count >= rules.min_confirmed_core


# =============================================================================
# Initial classification
# =============================================================================


@dataclass(frozen=True)
class RawStatement:
    """Pre-ledger statement input: text plus the self-declared class."""

    text: str
    klass: StatementClass
    support: str | None = None
    principle_ref: str | None = None


def classify_initial(
    raw: Sequence[RawStatement],
    origin: Origin = Origin(),
    start_index: int = 1,
) -> TripleLedger:
    """Build a fresh ledger from self-classified statements.

    Ids are assigned sequentially (S1, S2, ...) in input order, starting at
    `start_index` so a session can keep ids unique across layers. Each
    statement gets a single `initial` history entry.
    """
    ledger = TripleLedger()
    append_initial(ledger, raw, origin, start_index)
    return ledger


def append_initial(
    ledger: TripleLedger,
    raw: Sequence[RawStatement],
    origin: Origin = Origin(),
    start_index: int | None = None,
) -> list[str]:
    """Append fresh statements to an existing ledger; returns the new ids."""
    if start_index is None:
        start_index = len(ledger.statements) + 1
    new_ids = []
    for offset, item in enumerate(raw):
        text = item.text.strip()
        if not text:
            raise StatementValidationError(offset, "empty statement text")
        sid = f"S{start_index + offset}"
        if sid in ledger.statements:
            raise DuplicateEntryError(f"id {sid} already present in ledger")
        stmt = Statement(
            id=sid,
            text=text,
            klass=item.klass,
            origin=origin,
            support=item.support,
            principle_ref=item.principle_ref,
        )
        stmt.history.append(Transition(item.klass, item.klass, TransitionCause.INITIAL, origin.round))
        ledger.statements[sid] = stmt
        new_ids.append(sid)
    ledger.check_partition()
    return new_ids
