"""Session orchestration: rounds, layers, the two operating modes, and replay.

A session walks constructor → critic → responder → observer rounds inside a
layer, carries a deterministic digest of each layer's outcome into the next,
and stops the moment a layer's ledger passes the compliance check. Every
prompt, raw reply, parse outcome, and adjudication is appended to the session
transcript, which is sufficient to re-execute the whole session without a
backend — that re-execution is `replay`, and any mismatch against the record
is reported by its first divergent sequence number.

Determinism rules the design: prompts render byte-stably, statement ids are
assigned in document order, event payloads are pure JSON, and the session id
itself derives from the config snapshot, so two runs of the same config over
the same scripted backend differ only in timestamps.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

from ramtn.backends import Backend, BackendError, BackendRequest
from ramtn.cogpack import (
    AdaptabilityReport,
    AppliesTo,
    Constraint,
    FrameworkPackage,
    PackageMeta,
    Principle,
    Provenance,
    QuestionTemplate,
    TaskContext,
    package_to_dict,
    parse_package,
    score_adaptability,
    validate_package,
)
from ramtn.protocol import (
    ConfidenceReport,
    ConfidenceRules,
    CriticVerdict,
    DefenseKind,
    DefenseOutcome,
    EmptyLedgerError,
    ObjectionCategory,
    Origin,
    PostDefenseStance,
    PostDefenseStanceKind,
    RawStatement,
    Role,
    StatementClass,
    TripleLedger,
    VerdictStance,
    adjudicate_round,
    append_initial,
    compute_confidence,
    resolve_rulings,
)
from ramtn.roleio import (
    ParsedRoleOutput,
    PromptContext,
    RenderError,
    RolePrompt,
    RoleParseError,
    parse_constructor_output,
    parse_critic_output,
    parse_observer_output,
    parse_response_output,
    render_prompt,
)
from ramtn.transcript import (
    ADJUDICATION,
    HUMAN_INPUT,
    PARSE_RESULT,
    PROMPT_SENT,
    RAW_REPLY,
    RULING,
    TERMINATION,
    SessionTranscript,
    first_divergence,
)
from ramtn.version import __version__

MODES = ("extraction", "enhancement")

CONVERGED = "converged"
EXHAUSTED = "exhausted"
RUNNING = "running"


# =============================================================================
# Errors
# =============================================================================


class EngineError(Exception):
    """Base class for session-level failures."""


class ConfigError(EngineError):
    """The session config is unusable; nothing was run."""


class SessionError(EngineError):
    """The session died mid-flight; the partial transcript is preserved."""

    def __init__(self, message: str, transcript: SessionTranscript | None = None):
        super().__init__(message)
        self.transcript = transcript


class AdaptabilityMismatch(EngineError):
    """The package declares no fit with this scenario (score 0.0, no force)."""


class ExtractionFailed(EngineError):
    """No principle candidate survived as confirmed; ledger kept for review."""

    def __init__(self, message: str, outcome: "SessionOutcome"):
        super().__init__(message)
        self.outcome = outcome


class AbortSession(Exception):
    """Raised by a responder channel to abandon an interactive session."""


class ReplayDivergence(EngineError):
    """Recomputation disagreed with the recorded transcript."""

    def __init__(self, sequence: int):
        self.sequence = sequence
        super().__init__(f"replay diverged from the record at sequence {sequence}")


class _BudgetStop(Exception):
    """Internal: the backend-call budget tripped; terminate in an orderly way."""


# =============================================================================
# Config
# =============================================================================


@dataclass(frozen=True)
class Limits:
    max_backend_calls: int = 500
    wall_clock_s: float = 600.0
    reask_budget: int = 2

    def __post_init__(self) -> None:
        if self.max_backend_calls <= 0:
            raise ConfigError("max_backend_calls must be strictly positive")
        if self.wall_clock_s <= 0:
            raise ConfigError("wall_clock_s must be strictly positive")
        if self.reask_budget < 0:
            raise ConfigError("reask_budget must be non-negative")


@dataclass(frozen=True)
class SessionConfig:
    mode: str
    problem: str
    package: FrameworkPackage | None = None
    rules: ConfidenceRules | None = None
    interactive: bool = False
    context: TaskContext | None = None
    force: bool = False
    session_label: str | None = None
    limits: Limits = field(default_factory=Limits)
    slots: Mapping[str, str] = field(default_factory=dict)
    backend_name: str = "scripted"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "enhancement" and self.package is None:
            raise ConfigError("enhancement mode requires a framework package")
        if self.interactive and self.mode != "extraction":
            raise ConfigError("interactive sessions exist only in extraction mode")
        if not self.problem.strip():
            raise ConfigError("problem/source text must be non-empty")

    @property
    def resolved_rules(self) -> ConfidenceRules:
        if self.rules is not None:
            return self.rules
        if self.package is not None:
            return self.package.confidence_rules
        return ConfidenceRules()

    def snapshot(self) -> dict:
        rules = self.resolved_rules
        return {
            "engine": __version__,
            "mode": self.mode,
            "interactive": self.interactive,
            "force": self.force,
            "session_label": self.session_label,
            "backend": self.backend_name,
            "problem": self.problem,
            "package": package_to_dict(self.package) if self.package else None,
            "rules": dataclasses.asdict(rules),
            "context": (
                {"keywords": list(self.context.keywords), "resources": list(self.context.resources)}
                if self.context
                else None
            ),
            "limits": dataclasses.asdict(self.limits),
            "slots": dict(self.slots),
        }

    @property
    def session_id(self) -> str:
        if self.session_label:
            return self.session_label
        basis = {k: v for k, v in self.snapshot().items() if k != "session_label"}
        digest = hashlib.sha256(
            json.dumps(basis, sort_keys=True, ensure_ascii=False).encode("utf-8")
        ).hexdigest()
        return f"s-{digest[:12]}"

    @classmethod
    def from_snapshot(cls, snap: Mapping[str, object]) -> "SessionConfig":
        try:
            package = None
            if snap.get("package") is not None:
                package = parse_package(json.dumps(snap["package"], ensure_ascii=False))
            context = None
            if snap.get("context") is not None:
                ctx = snap["context"]
                context = TaskContext(
                    keywords=tuple(ctx["keywords"]), resources=tuple(ctx["resources"])
                )
            return cls(
                mode=str(snap["mode"]),
                problem=str(snap["problem"]),
                package=package,
                rules=ConfidenceRules(**snap["rules"]),
                interactive=bool(snap["interactive"]),
                context=context,
                force=bool(snap.get("force", False)),
                session_label=snap.get("session_label"),
                limits=Limits(**snap["limits"]),
                slots=dict(snap.get("slots") or {}),
                backend_name=str(snap.get("backend", "scripted")),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"unusable config snapshot: {err}")


# =============================================================================
# Results
# =============================================================================


@dataclass
class RoundRecord:
    layer: int
    round: int
    added: tuple[str, ...]
    objected: tuple[str, ...]
    report: ConfidenceReport | None
    notes: tuple[str, ...] = ()


@dataclass
class UnitState:
    layer: int
    round_index: int
    input_digest: str
    ledger: TripleLedger
    round_records: list[RoundRecord]
    status: str = RUNNING


@dataclass(frozen=True)
class EnhancementResult:
    ledger: TripleLedger
    report: ConfidenceReport | None
    rendered: str
    compliant: bool
    adaptability: AdaptabilityReport | None = None


@dataclass(frozen=True)
class ExtractionResult:
    package: FrameworkPackage | None
    session_id: str
    candidate_classes: Mapping[str, str]
    dropped: tuple[str, ...]


@dataclass
class SessionOutcome:
    config: SessionConfig
    session_id: str
    transcript: SessionTranscript
    state: UnitState
    layers_run: int
    reason: str
    report: ConfidenceReport | None
    compliant: bool
    result: EnhancementResult | ExtractionResult | None = None


@dataclass(frozen=True)
class PendingInput:
    """What an interactive session is waiting on: one objection to answer."""

    statement_id: str
    statement_text: str
    statement_class: StatementClass
    category: ObjectionCategory
    reason: str
    layer: int
    round: int


ResponderChannel = Callable[[PendingInput], str]


@dataclass(frozen=True)
class ReplayReport:
    session_id: str
    events_checked: int
    counts: tuple[int, int, int] | None
    confidence: float | None
    compliant: bool


# =============================================================================
# Extraction conventions
# =============================================================================

PRINCIPLE_PREFIX = "PRINCIPLE:"
_CANDIDATE_RE = re.compile(
    r"^(?:(PRINCIPLE)|TEMPLATE\[(factual|logical|completeness)\]|CONSTRAINT\[(hard|soft)\]):\s*(.+)$",
    re.DOTALL,
)
_TAG_RE = re.compile(r"\s*@(P[0-9]+)\s*$")

EXTRACTION_CHARGE = (
    "Distill the expert's working knowledge from the source dialogue below into "
    "candidate framework entries. Declare each candidate as a statement whose text "
    "starts with one of:\n"
    "  PRINCIPLE: <decision principle with its applicability conditions>\n"
    "  TEMPLATE[factual|logical|completeness]: <challenge question, may use {statement}>\n"
    "  CONSTRAINT[hard|soft]: <non-negotiable or advisory rule>\n"
    "Only candidates that survive as confirmed become package entries."
)


def bootstrap_package() -> FrameworkPackage:
    """The seed package used when extraction starts from nothing."""
    both = (StatementClass.CONFIRMED, StatementClass.CONJECTURED)
    return FrameworkPackage(
        meta=PackageMeta(
            id="extraction-bootstrap",
            name="Extraction Bootstrap",
            version="1.0.0",
            domain="meta",
            provenance=Provenance(source="built-in"),
        ),
        principles=(
            Principle(
                "P1",
                "A candidate principle must state the conditions under which it applies, "
                "not just its conclusion.",
                rationale="Condition-free rules cannot be contested or transferred.",
                weight=1.0,
                core=True,
            ),
            Principle(
                "P2",
                "Every candidate must be falsifiable: name the evidence that would defeat it.",
                rationale="Unfalsifiable advice survives scrutiny vacuously.",
                weight=1.0,
                core=True,
            ),
        ),
        question_templates=(
            QuestionTemplate(
                "T1", AppliesTo(classes=both), "factual",
                "What concrete case, number, or source supports: {statement}?",
            ),
            QuestionTemplate(
                "T2", AppliesTo(classes=both), "logical",
                "Does the reasoning behind {statement} still hold if its strongest premise is weakened?",
            ),
            QuestionTemplate(
                "T3", AppliesTo(classes=both), "completeness",
                "What boundary condition, exception, or missing prerequisite does {statement} omit?",
            ),
        ),
        constraints=(
            Constraint(
                "C1",
                "Candidates must be declared with the PRINCIPLE:/TEMPLATE[...]:/CONSTRAINT[...]: prefixes.",
                "hard",
            ),
        ),
    )


def _split_principle_tag(text: str) -> tuple[str, str | None]:
    """Split a trailing @P<n> principle tag off a statement text."""
    m = _TAG_RE.search(text)
    if m:
        head = text[: m.start()].strip()
        if head:
            return head, m.group(1)
    return text, None


# =============================================================================
# Session execution
# =============================================================================


def _sha12(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _ledger_dump(ledger: TripleLedger) -> list[dict]:
    out = []
    for sid in ledger.ids_in_order():
        stmt = ledger.statements[sid]
        out.append(
            {
                "id": sid,
                "text": stmt.text,
                "class": stmt.klass.value,
                "support": stmt.support,
                "principle_ref": stmt.principle_ref,
            }
        )
    return out


def _report_dump(report: ConfidenceReport | None) -> dict | None:
    if report is None:
        return None
    return {
        "value": report.value,
        "counts": list(report.counts),
        "core_confirmed": report.core_confirmed_count,
        "compliant": report.compliant,
    }


def _parsed_summary(parsed: ParsedRoleOutput) -> dict:
    summary: dict = {}
    if parsed.statements:
        summary["statements"] = [
            {"label": s.label, "class": s.klass.value, "text": s.text} for s in parsed.statements
        ]
    if parsed.verdicts:
        summary["verdicts"] = [
            {
                "id": v.statement_id,
                "stance": v.stance.value,
                "category": v.category.value if v.category else None,
                "reason": v.reason,
            }
            for v in parsed.verdicts
        ]
    if parsed.defenses:
        summary["defenses"] = [
            {
                "id": d.statement_id,
                "kind": d.kind.value,
                "argument": d.argument,
                "target": d.downgrade_target.value if d.downgrade_target else None,
            }
            for d in parsed.defenses
        ]
    if parsed.stances:
        summary["stances"] = [
            {"id": s.statement_id, "stance": s.stance.value} for s in parsed.stances
        ]
    if parsed.rulings:
        summary["rulings"] = [
            {"id": r.statement_id, "class": r.final_class.value, "justification": r.justification}
            for r in parsed.rulings
        ]
    return summary


def layer_digest(ledger: TripleLedger, layer: int) -> str:
    """Deterministic hand-off text from one layer to the next."""
    confirmed, conjectured, unknown = [], [], []
    for sid in ledger.ids_in_order():
        stmt = ledger.statements[sid]
        if stmt.klass is StatementClass.CONFIRMED:
            confirmed.append(stmt.text)
        elif stmt.klass is StatementClass.CONJECTURED:
            conjectured.append(stmt.text)
        else:
            unknown.append(stmt.text)

    def block(title: str, items: list[str]) -> str:
        body = "\n".join(f"- {t}" for t in items) if items else "- (none)"
        return f"{title}:\n{body}"

    return "\n".join(
        [
            f"[layer {layer} outcome]",
            block("CONFIRMED (carry forward verbatim)", confirmed),
            block("CONJECTURED (re-examine)", conjectured),
            block("OPEN GAPS (unknown, address these)", unknown),
        ]
    )


class _Run:
    """Single-session executor; owns the transcript and the call budget."""

    def __init__(
        self,
        config: SessionConfig,
        backend: Backend,
        channel: ResponderChannel | None = None,
        sink: Callable | None = None,
    ):
        if config.interactive and channel is None:
            raise ConfigError("interactive extraction requires a responder channel")
        self.config = config
        self.backend = backend
        self.channel = channel
        self.session_id = config.session_id
        self.rules = config.resolved_rules
        self.transcript = SessionTranscript(self.session_id, config.snapshot(), on_append=sink)
        self.calls = 0
        self.started = time.monotonic()
        self.adaptability: AdaptabilityReport | None = None
        self.current_state: UnitState | None = None
        self.layers_run = 0
        if config.mode == "extraction":
            self.pkg = config.package or bootstrap_package()
            self.core_ids = self._extraction_core
            self.working_problem = EXTRACTION_CHARGE + "\n\n--- SOURCE ---\n" + config.problem
        else:
            self.pkg = config.package
            core = self.pkg.core_principle_ids
            self.core_ids = lambda ledger: frozenset(
                sid
                for sid, stmt in ledger.statements.items()
                if stmt.principle_ref in core
            )
            self.working_problem = config.problem

    @staticmethod
    def _extraction_core(ledger: TripleLedger) -> frozenset[str]:
        return frozenset(
            sid
            for sid, stmt in ledger.statements.items()
            if stmt.text.startswith(PRINCIPLE_PREFIX)
        )

    # -- budget ---------------------------------------------------------------

    def _guard_budget(self) -> None:
        if self.calls >= self.config.limits.max_backend_calls:
            raise _BudgetStop()
        if time.monotonic() - self.started > self.config.limits.wall_clock_s:
            raise SessionError("wall-clock budget exceeded", self.transcript)

    # -- one role call with re-asks --------------------------------------------

    def call_role(
        self,
        role: Role,
        prompt: RolePrompt,
        step_base: str,
        parser: Callable[[str], ParsedRoleOutput],
    ) -> ParsedRoleOutput | None:
        """Ask, parse, re-ask on grammar failure; None when attempts run out."""
        attempts = 1 + self.config.limits.reask_budget
        for attempt in range(1, attempts + 1):
            self._guard_budget()
            step_key = step_base if attempt == 1 else f"{step_base}#{attempt}"
            self.transcript.append(
                PROMPT_SENT,
                {
                    "step_key": step_key,
                    "role": role.value,
                    "layer": prompt.layer,
                    "round": prompt.round,
                    "prompt": prompt.rendered_text,
                },
            )
            try:
                reply = self.backend.complete(
                    BackendRequest(
                        role=role,
                        prompt=prompt.rendered_text,
                        session_id=self.session_id,
                        step_key=step_key,
                    )
                )
            except BackendError as err:
                raise SessionError(f"backend failed on {step_key}: {err}", self.transcript)
            self.calls += 1
            self.transcript.append(RAW_REPLY, {"step_key": step_key, "text": reply.text})
            try:
                parsed = parser(reply.text)
            except RoleParseError as err:
                self.transcript.append(
                    PARSE_RESULT,
                    {
                        "step_key": step_key,
                        "role": role.value,
                        "ok": False,
                        "error": str(err),
                        "warnings": [],
                        "summary": {},
                    },
                )
                continue
            self.transcript.append(
                PARSE_RESULT,
                {
                    "step_key": step_key,
                    "role": role.value,
                    "ok": True,
                    "error": None,
                    "warnings": list(parsed.warnings),
                    "summary": _parsed_summary(parsed),
                },
            )
            return parsed
        return None

    # -- human responder --------------------------------------------------------

    def _ask_human(
        self, pending: PendingInput, objected: Mapping[str, StatementClass]
    ) -> tuple[DefenseOutcome, PostDefenseStance]:
        step_key = (
            f"{self.session_id}/L{pending.layer}/R{pending.round}/responder/{pending.statement_id}"
        )
        text = self.channel(pending)
        self.transcript.append(HUMAN_INPUT, {"step_key": step_key, "text": text})
        scope = {pending.statement_id: objected[pending.statement_id]}
        try:
            parsed = parse_response_output(text, scope)
            mode = "grammar"
            defense = parsed.defenses[0]
            stance = parsed.stances[0]
            # A bare grammar parse with no #RESPONSE line means the text was
            # free prose that merely failed to *look* like grammar; treat
            # no-response results from plain text as a lenient defense.
            if defense.kind is DefenseKind.NO_RESPONSE and text.strip():
                raise RoleParseError("plain text")
        except RoleParseError:
            mode = "lenient"
            defense = DefenseOutcome(
                pending.statement_id, DefenseKind.DEFENDED_SUCCESS, argument=text.strip()
            )
            stance = PostDefenseStance(pending.statement_id, PostDefenseStanceKind.ACCEPT)
        self.transcript.append(
            PARSE_RESULT,
            {
                "step_key": step_key,
                "role": Role.RESPONDER.value,
                "ok": True,
                "error": None,
                "warnings": [f"human input normalized via {mode} path"],
                "summary": _parsed_summary(
                    ParsedRoleOutput(role=Role.RESPONDER, defenses=(defense,), stances=(stance,))
                ),
            },
        )
        return defense, stance

    # -- one unit (layer) --------------------------------------------------------

    def run_unit(self, layer: int, prior_summary: str | None) -> UnitState:
        ledger = TripleLedger()
        state = UnitState(
            layer=layer,
            round_index=0,
            input_digest=_sha12(self.working_problem + "\n" + (prior_summary or "")),
            ledger=ledger,
            round_records=[],
        )
        self.current_state = state

        for round_index in range(1, self.rules.max_rounds_per_layer + 1):
            state.round_index = round_index
            notes: list[str] = []
            step = f"{self.session_id}/L{layer}/R{round_index}"

            ctx = PromptContext(
                problem=self.working_problem,
                layer=layer,
                round=round_index,
                next_statement_index=len(ledger.statements) + 1,
                prior_summary=prior_summary,
                ledger=ledger if ledger.statements else None,
                adaptability_notes=tuple(self.adaptability.notes) if self.adaptability else (),
                slots=self.config.slots,
            )
            constructed = self.call_role(
                Role.CONSTRUCTOR,
                render_prompt(Role.CONSTRUCTOR, self.pkg, ctx),
                f"{step}/constructor",
                parse_constructor_output,
            )
            added: list[str] = []
            if constructed is not None and constructed.statements:
                raws = []
                for declared in constructed.statements:
                    text, ref = _split_principle_tag(declared.text)
                    raws.append(RawStatement(text=text, klass=declared.klass, principle_ref=ref))
                added = append_initial(
                    ledger, raws, Origin(layer=layer, round=round_index, role=Role.CONSTRUCTOR)
                )

            if not ledger.statements:
                if constructed is not None:
                    # The reply parsed yet proposed nothing over an empty
                    # ledger: confidence is undefined, so the session dies.
                    raise SessionError(
                        "constructor produced an empty ledger", self.transcript
                    ) from EmptyLedgerError("no statements to adjudicate")
                notes.append("constructor unparseable; ledger still empty")
                state.round_records.append(
                    RoundRecord(layer, round_index, (), (), None, tuple(notes))
                )
                continue
            if constructed is None:
                notes.append("constructor unparseable; no statements added this round")

            contestable = [
                sid
                for sid in ledger.ids_in_order()
                if ledger.statements[sid].klass is not StatementClass.UNKNOWN
            ]

            verdicts: Sequence[CriticVerdict] = ()
            defenses: list[DefenseOutcome] = []
            stances: list[PostDefenseStance] = []
            rulings = ()
            objected: dict[str, StatementClass] = {}

            if contestable:
                all_ids = ledger.ids_in_order()
                # The constructor's context predates this round's statements;
                # the reviewing roles must see the grown ledger.
                ctx = dataclasses.replace(
                    ctx, ledger=ledger, next_statement_index=len(ledger.statements) + 1
                )
                try:
                    critic_prompt = render_prompt(Role.CRITIC, self.pkg, ctx)
                except RenderError as err:
                    if err.slot is not None:
                        raise SessionError(
                            f"critic prompt needs slot {{{err.slot}}}: supply it in the config",
                            self.transcript,
                        )
                    critic_prompt = None
                    notes.append(f"critic skipped: {err}")
                if critic_prompt is not None:
                    reviewed = self.call_role(
                        Role.CRITIC,
                        critic_prompt,
                        f"{step}/critic",
                        lambda t: parse_critic_output(t, all_ids),
                    )
                    if reviewed is None:
                        # An unreviewable round leaves every contestable claim
                        # unvetted: the engine challenges them itself and the
                        # silence downgrades them to unknown.
                        verdicts = tuple(
                            CriticVerdict(
                                sid,
                                VerdictStance.OBJECT,
                                category=ObjectionCategory.COMPLETENESS,
                                reason="critic reply unparseable after all re-asks",
                            )
                            for sid in contestable
                        )
                        notes.append("critic unparseable; contested statements lapse to unknown")
                    else:
                        verdicts = reviewed.verdicts
                        objected = {
                            v.statement_id: ledger.statements[v.statement_id].klass
                            for v in verdicts
                            if v.stance is VerdictStance.OBJECT
                            and ledger.statements[v.statement_id].klass
                            is not StatementClass.UNKNOWN
                        }

                if objected:
                    objections = tuple(
                        v for v in verdicts if v.statement_id in objected
                    )
                    if self.config.interactive:
                        for verdict in objections:
                            sid = verdict.statement_id
                            defense, stance = self._ask_human(
                                PendingInput(
                                    statement_id=sid,
                                    statement_text=ledger.statements[sid].text,
                                    statement_class=ledger.statements[sid].klass,
                                    category=verdict.category,
                                    reason=verdict.reason or "",
                                    layer=layer,
                                    round=round_index,
                                ),
                                objected,
                            )
                            defenses.append(defense)
                            stances.append(stance)
                    else:
                        responder_ctx = dataclasses.replace(ctx, objections=objections)
                        responded = self.call_role(
                            Role.RESPONDER,
                            render_prompt(Role.RESPONDER, self.pkg, responder_ctx),
                            f"{step}/responder",
                            lambda t: parse_response_output(t, objected),
                        )
                        if responded is None:
                            notes.append("responder unparseable; objections stand unanswered")
                        else:
                            defenses = list(responded.defenses)
                            stances = list(responded.stances)

                    observer_ctx = dataclasses.replace(
                        ctx,
                        objections=objections,
                        defenses=tuple(defenses),
                        stances=tuple(stances),
                    )
                    observed = self.call_role(
                        Role.OBSERVER,
                        render_prompt(Role.OBSERVER, self.pkg, observer_ctx),
                        f"{step}/observer",
                        lambda t: parse_observer_output(t, all_ids),
                    )
                    if observed is not None:
                        rulings = observed.rulings
                    else:
                        notes.append("observer unparseable; mechanical outcome stands")

            resolved = resolve_rulings(ledger, verdicts, defenses, stances, rulings)
            ledger = adjudicate_round(
                ledger, verdicts, defenses, stances, resolved, round_index=round_index
            )
            state.ledger = ledger
            self.current_state = state

            if resolved:
                self.transcript.append(
                    RULING,
                    {
                        "layer": layer,
                        "round": round_index,
                        "rulings": [
                            {
                                "id": r.statement_id,
                                "class": r.final_class.value,
                                "justification": r.justification,
                                "overrides": r.overrides_mechanical,
                            }
                            for r in resolved
                        ],
                    },
                )

            transitions = []
            for sid in ledger.ids_in_order():
                for entry in ledger.statements[sid].history:
                    if entry.round == round_index and entry.cause.value != "initial":
                        transitions.append(
                            {
                                "id": sid,
                                "from": entry.from_class.value,
                                "to": entry.to_class.value,
                                "cause": entry.cause.value,
                            }
                        )

            report = compute_confidence(ledger, self.rules, core_ids=self.core_ids(ledger))
            self.transcript.append(
                ADJUDICATION,
                {
                    "layer": layer,
                    "round": round_index,
                    "counts": list(report.counts),
                    "transitions": transitions,
                    "confidence": _report_dump(report),
                    "ledger": _ledger_dump(ledger),
                },
            )
            state.round_records.append(
                RoundRecord(
                    layer,
                    round_index,
                    tuple(added),
                    tuple(objected),
                    report,
                    tuple(notes),
                )
            )

            if report.compliant:
                state.status = CONVERGED
                return state

        state.status = EXHAUSTED
        return state

    # -- the layer pipeline --------------------------------------------------------

    def pipeline(self) -> tuple[UnitState, int]:
        state: UnitState | None = None
        prior: str | None = None
        for layer in range(1, self.rules.layer_count + 1):
            self.layers_run = layer
            state = self.run_unit(layer, prior)
            if state.status == CONVERGED:
                break
            prior = layer_digest(state.ledger, layer)
        return state, self.layers_run

    def final_report(self, state: UnitState) -> ConfidenceReport | None:
        if not state.ledger.statements:
            return None
        return compute_confidence(state.ledger, self.rules, core_ids=self.core_ids(state.ledger))

    def terminate(self, reason: str, state: UnitState, layers_run: int) -> ConfidenceReport | None:
        report = self.final_report(state)
        self.transcript.append(
            TERMINATION,
            {
                "reason": reason,
                "layers_run": layers_run,
                "counts": list(report.counts) if report else None,
                "confidence": _report_dump(report),
                "compliant": bool(report.compliant) if report else False,
                "ledger": _ledger_dump(state.ledger),
            },
        )
        return report


def _execute(
    config: SessionConfig,
    backend: Backend,
    channel: ResponderChannel | None = None,
    sink: Callable | None = None,
) -> SessionOutcome:
    run = _Run(config, backend, channel, sink)

    if config.mode == "enhancement":
        findings = validate_package(config.package)
        if findings:
            raise ConfigError(
                "package failed validation: " + "; ".join(str(f) for f in findings[:3])
            )
        if config.context is not None:
            run.adaptability = score_adaptability(config.package, config.context)
            if run.adaptability.score == 0.0 and not config.force:
                raise AdaptabilityMismatch(
                    f"package {config.package.meta.id} declares no fit with this scenario "
                    "(adaptability 0.0); pass force to run anyway"
                )

    empty = UnitState(
        layer=1, round_index=0, input_digest=_sha12(config.problem), ledger=TripleLedger(),
        round_records=[],
    )
    try:
        state, layers_run = run.pipeline()
        reason = "confidence-threshold" if state.status == CONVERGED else "iteration-limit"
    except _BudgetStop:
        state = run.current_state or empty
        state.status = EXHAUSTED
        layers_run = max(run.layers_run, 1)
        reason = "budget"
    except AbortSession:
        state = run.current_state or empty
        state.status = EXHAUSTED
        layers_run = max(run.layers_run, 1)
        reason = "user-abort"

    report = run.terminate(reason, state, layers_run)
    compliant = bool(report.compliant) if report else False

    outcome = SessionOutcome(
        config=config,
        session_id=run.session_id,
        transcript=run.transcript,
        state=state,
        layers_run=layers_run,
        reason=reason,
        report=report,
        compliant=compliant,
    )
    if config.mode == "enhancement":
        outcome.result = EnhancementResult(
            ledger=state.ledger,
            report=report,
            rendered=render_enhancement_report(config, state, report, layers_run, run.adaptability),
            compliant=compliant,
            adaptability=run.adaptability,
        )
    elif reason in ("confidence-threshold", "iteration-limit"):
        outcome.result = _assemble_extraction(run, state)
    else:
        # Interrupted mid-round: the ledger may hold statements whose review
        # never completed, so no draft package is assembled from them.
        outcome.result = ExtractionResult(
            package=None,
            session_id=run.session_id,
            candidate_classes={
                sid: state.ledger.statements[sid].klass.value
                for sid in state.ledger.ids_in_order()
            },
            dropped=(),
        )
    return outcome


def outcome_document(outcome: SessionOutcome) -> dict:
    """JSON-ready session result; the CLI's --out file and the service's
    response body both carry exactly this shape."""
    doc: dict = {
        "session": outcome.session_id,
        "mode": outcome.config.mode,
        "reason": outcome.reason,
        "layers_run": outcome.layers_run,
        "compliant": outcome.compliant,
        "report": _report_dump(outcome.report),
        "ledger": _ledger_dump(outcome.state.ledger),
    }
    result = outcome.result
    if isinstance(result, EnhancementResult):
        doc["rendered"] = result.rendered
        doc["adaptability"] = (
            {"score": result.adaptability.score, "notes": list(result.adaptability.notes)}
            if result.adaptability
            else None
        )
    elif isinstance(result, ExtractionResult):
        doc["package"] = package_to_dict(result.package) if result.package else None
        doc["dropped"] = list(result.dropped)
        doc["candidate_classes"] = dict(result.candidate_classes)
    return doc


# =============================================================================
# Enhancement
# =============================================================================

_SECTION_TITLES = (
    ("我确信的", StatementClass.CONFIRMED, "core conclusions, ready to act on"),
    ("我推测的", StatementClass.CONJECTURED, "plausible but unproven"),
    ("我不知道的", StatementClass.UNKNOWN, "open gaps"),
)


def render_enhancement_report(
    config: SessionConfig,
    state: UnitState,
    report: ConfidenceReport | None,
    layers_run: int,
    adaptability: AdaptabilityReport | None,
) -> str:
    pkg = config.package
    rules = config.resolved_rules
    lines = [
        "# Enhancement Report",
        "",
        f"- package: {pkg.meta.id} {pkg.meta.version}",
        f"- layers run: {layers_run}",
    ]
    if adaptability is not None:
        lines.append(f"- adaptability: {adaptability.score:.4g}")
        for note in adaptability.notes:
            lines.append(f"  - {note}")
    for title, klass, gloss in _SECTION_TITLES:
        lines += ["", f"## {title}", f"({gloss})", ""]
        ids = [
            sid
            for sid in state.ledger.ids_in_order()
            if state.ledger.statements[sid].klass is klass
        ]
        if not ids:
            lines.append("- (none)")
        for sid in ids:
            stmt = state.ledger.statements[sid]
            entry = f"- {sid}: {stmt.text}"
            if stmt.principle_ref:
                entry += f" [{stmt.principle_ref}]"
            if stmt.support:
                entry += f" — support: {stmt.support}"
            lines.append(entry)
    lines += ["", "## Compliance", ""]
    if report is None:
        lines += ["- no statements were produced", "- verdict: not compliant ✗"]
    else:
        c, j, u = report.counts
        lines += [
            f"- confidence: {report.value:.4f} (threshold {rules.threshold})",
            f"- statements: {c} confirmed / {j} conjectured / {u} unknown",
            f"- core confirmed: {report.core_confirmed_count} (minimum {rules.min_confirmed_core})",
            f"- verdict: {'compliant ✓' if report.compliant else 'not compliant ✗'}",
        ]
    return "\n".join(lines) + "\n"


def run_enhancement(
    config: SessionConfig, backend: Backend, sink: Callable | None = None
) -> SessionOutcome:
    if config.mode != "enhancement":
        raise ConfigError("run_enhancement requires an enhancement-mode config")
    return _execute(config, backend, sink=sink)


# =============================================================================
# Extraction
# =============================================================================


def _survival_weight(stmt, final_round: int) -> float:
    existed = max(1, final_round - stmt.origin.round + 1)
    downgrades = sum(1 for t in stmt.history if t.to_class < t.from_class)
    fraction = max(0.0, 1.0 - downgrades / existed)
    return round(0.5 + 0.5 * fraction, 4)


def _assemble_extraction(run: _Run, state: UnitState) -> ExtractionResult | None:
    ledger = state.ledger
    classes: dict[str, str] = {}
    principles: list[Principle] = []
    templates: list[QuestionTemplate] = []
    constraints: list[Constraint] = []
    dropped: list[str] = []
    both = (StatementClass.CONFIRMED, StatementClass.CONJECTURED)

    for sid in ledger.ids_in_order():
        stmt = ledger.statements[sid]
        m = _CANDIDATE_RE.match(stmt.text)
        if not m:
            continue
        classes[sid] = stmt.klass.value
        if stmt.klass is StatementClass.UNKNOWN:
            dropped.append(sid)
            continue
        is_principle, template_cat, constraint_kind = m.group(1), m.group(2), m.group(3)
        body = m.group(4).strip()
        weight = _survival_weight(stmt, state.round_index)
        if is_principle:
            confirmed = stmt.klass is StatementClass.CONFIRMED
            rationale = (
                stmt.support
                or ("survived adversarial review" if confirmed else "")
            )
            if not confirmed:
                rationale = ("provisional: unconfirmed under adversarial review. " + rationale).strip()
            principles.append(
                Principle(
                    f"P{len(principles) + 1}",
                    body,
                    rationale=rationale or "extracted from the source dialogue",
                    weight=weight,
                    core=confirmed,
                )
            )
        elif template_cat:
            if stmt.klass is StatementClass.CONFIRMED:
                templates.append(
                    QuestionTemplate(
                        f"T{len(templates) + 1}", AppliesTo(classes=both), template_cat, body
                    )
                )
            else:
                dropped.append(sid)
        elif constraint_kind:
            if stmt.klass is StatementClass.CONFIRMED:
                constraints.append(Constraint(f"C{len(constraints) + 1}", body, constraint_kind))
            else:
                dropped.append(sid)

    if not any(p.core for p in principles):
        return ExtractionResult(
            package=None,
            session_id=run.session_id,
            candidate_classes=classes,
            dropped=tuple(dropped),
        )

    if not templates:
        templates.append(
            QuestionTemplate(
                "T1",
                AppliesTo(classes=both),
                "completeness",
                "What evidence or condition is missing from: {statement}?",
            )
        )

    seed = run.config.package
    package = FrameworkPackage(
        meta=PackageMeta(
            id=(seed.meta.id + "-extracted") if seed else "extracted-framework",
            name=(seed.meta.name + " (extracted draft)") if seed else "Extracted Framework (draft)",
            version="0.1.0",
            domain=seed.meta.domain if seed else "general",
            provenance=Provenance(source="extraction session", session=run.session_id),
        ),
        principles=tuple(principles),
        question_templates=tuple(templates),
        constraints=tuple(constraints),
        confidence_rules=run.rules,
    )
    findings = validate_package(package)
    if findings:
        raise EngineError(
            "extraction assembled an invalid package: " + "; ".join(str(f) for f in findings[:3])
        )
    return ExtractionResult(
        package=package,
        session_id=run.session_id,
        candidate_classes=classes,
        dropped=tuple(dropped),
    )


def run_extraction(
    config: SessionConfig,
    backend: Backend,
    channel: ResponderChannel | None = None,
    sink: Callable | None = None,
) -> SessionOutcome:
    if config.mode != "extraction":
        raise ConfigError("run_extraction requires an extraction-mode config")
    outcome = _execute(config, backend, channel=channel, sink=sink)
    result = outcome.result
    ran_to_completion = outcome.reason in ("confidence-threshold", "iteration-limit")
    if ran_to_completion and isinstance(result, ExtractionResult) and result.package is None:
        raise ExtractionFailed(
            "no principle candidate survived as confirmed; the full ledger is attached",
            outcome,
        )
    return outcome


def run_session(
    config: SessionConfig,
    backend: Backend,
    channel: ResponderChannel | None = None,
    sink: Callable | None = None,
) -> SessionOutcome:
    if config.mode == "enhancement":
        return run_enhancement(config, backend, sink=sink)
    return run_extraction(config, backend, channel=channel, sink=sink)


# Convenience entry points mirroring the two lower-level operations.


def run_unit(
    problem: str, pkg: FrameworkPackage, backend: Backend, rules: ConfidenceRules | None = None
) -> UnitState:
    """Run a single layer over the problem text; the pipeline's building block."""
    config = SessionConfig(
        mode="enhancement",
        problem=problem,
        package=pkg,
        rules=rules or pkg.confidence_rules,
    )
    run = _Run(config, backend)
    state = run.run_unit(1, None)
    run.terminate(
        "confidence-threshold" if state.status == CONVERGED else "iteration-limit", state, 1
    )
    return state


def run_pipeline(
    problem: str, pkg: FrameworkPackage, backend: Backend, rules: ConfidenceRules | None = None
) -> tuple[UnitState, int]:
    """Run the full layer pipeline; returns the final state and layers used."""
    config = SessionConfig(
        mode="enhancement", problem=problem, package=pkg, rules=rules or pkg.confidence_rules
    )
    outcome = run_enhancement(config, backend)
    return outcome.state, outcome.layers_run


# =============================================================================
# Replay
# =============================================================================


class _TranscriptBackend(Backend):
    """Serves recorded raw replies by step key; replay's no-network backend."""

    def __init__(self, transcript: SessionTranscript):
        self.replies: dict[str, str] = {}
        for event in transcript.events:
            if event.kind == RAW_REPLY:
                self.replies[str(event.payload["step_key"])] = str(event.payload["text"])

    def complete(self, request: BackendRequest):
        from ramtn.backends import BackendReply, MissingFixtureKey

        text = self.replies.get(request.step_key)
        if text is None:
            raise MissingFixtureKey(request.step_key)
        return BackendReply(text=text)


def _human_feed(transcript: SessionTranscript) -> ResponderChannel:
    texts: Iterator[str] = iter(
        str(e.payload["text"]) for e in transcript.events if e.kind == HUMAN_INPUT
    )

    def channel(pending: PendingInput) -> str:
        try:
            return next(texts)
        except StopIteration:
            raise AbortSession("recorded transcript has no further human input")

    return channel


def replay(transcript: SessionTranscript) -> ReplayReport:
    """Re-execute a recorded session and verify it bit-for-bit.

    Raises MalformedTranscript when the record's own invariants fail, and
    ReplayDivergence (naming the first divergent sequence number) when
    recomputation disagrees with the record.
    """
    transcript.validate(require_termination=True)
    config = SessionConfig.from_snapshot(transcript.config)
    backend = _TranscriptBackend(transcript)

    recomputed: SessionTranscript | None = None
    try:
        outcome = _execute(
            config,
            backend,
            channel=_human_feed(transcript) if config.interactive else None,
        )
        recomputed = outcome.transcript
    except SessionError as err:
        recomputed = err.transcript
    except (AdaptabilityMismatch, ConfigError):
        recomputed = None

    if recomputed is None:
        raise ReplayDivergence(1)
    divergence = first_divergence(transcript, recomputed)
    if divergence is not None:
        raise ReplayDivergence(divergence)

    final = transcript.events[-1].payload
    confidence = final.get("confidence") or None
    return ReplayReport(
        session_id=transcript.session_id,
        events_checked=len(transcript.events),
        counts=tuple(final["counts"]) if final.get("counts") else None,
        confidence=confidence["value"] if confidence else None,
        compliant=bool(final.get("compliant")),
    )
