"""Wire grammar for role replies and deterministic prompt rendering.

The four roles talk to the engine in a line-oriented tagged grammar
(documented bit-exact in docs/wire-grammar.md and embedded in every rendered
prompt):

    #CONFIRMED / #CONJECTURED / #UNKNOWN     constructor section headers
    - <ID>: <text>                           statement line
    #VERDICT <ID>: ACCEPT
    #VERDICT <ID>: OBJECT <FACTUAL|LOGICAL|COMPLETENESS> "<reason>"
    #RESPONSE <ID>: DEFEND "<arg>"  |  PARTIAL "<arg>"  |  DOWNGRADE <CLASS>
    #STANCE <ID>: ACCEPT | MAINTAIN
    #RULING <ID>: <CONFIRMED|CONJECTURED|UNKNOWN> "<justification>"

Parsing is total: unrecognized lines become warnings, recognizable-but-broken
lines become structured errors with line numbers, and no input crashes or
hangs a parser. Absences carry defined meaning (implicit accept, no-response,
maintain) so the protocol stays decidable on sloppy model output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ramtn.cogpack import FrameworkPackage, QuestionTemplate
from ramtn.protocol import (
    CriticVerdict,
    DefenseKind,
    DefenseOutcome,
    ObjectionCategory,
    ObserverRuling,
    PostDefenseStance,
    PostDefenseStanceKind,
    Role,
    StatementClass,
    TripleLedger,
    VerdictStance,
)

# =============================================================================
# Errors
# =============================================================================


class RoleParseError(Exception):
    """Base for structured parse failures; may carry a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class UnparseableReply(RoleParseError):
    """The reply has none of the structure the role's grammar requires."""


class ProtocolViolation(RoleParseError):
    """Structurally valid lines that break protocol rules (duplicates, strays)."""


class UnknownReference(RoleParseError):
    """A line references a statement id that is not in scope."""


class MalformedLine(RoleParseError):
    """A line that starts like a grammar production but cannot be completed."""


class RenderError(Exception):
    """Prompt rendering failed; carries the unfillable slot when that's why."""

    def __init__(self, message: str, slot: str | None = None):
        self.slot = slot
        super().__init__(message)


# =============================================================================
# Parsed output containers
# =============================================================================


@dataclass(frozen=True)
class DeclaredStatement:
    """A constructor statement line: echoed label, text, declared class."""

    label: str
    text: str
    klass: StatementClass


@dataclass(frozen=True)
class ParsedRoleOutput:
    role: Role
    statements: tuple[DeclaredStatement, ...] = ()
    verdicts: tuple[CriticVerdict, ...] = ()
    defenses: tuple[DefenseOutcome, ...] = ()
    stances: tuple[PostDefenseStance, ...] = ()
    rulings: tuple[ObserverRuling, ...] = ()
    warnings: tuple[str, ...] = ()

    def payload_equal(self, other: "ParsedRoleOutput") -> bool:
        """Equality ignoring warnings (warnings never alter semantics)."""
        return (
            self.role is other.role
            and self.statements == other.statements
            and self.verdicts == other.verdicts
            and self.defenses == other.defenses
            and self.stances == other.stances
            and self.rulings == other.rulings
        )


# =============================================================================
# Grammar regexes
# =============================================================================

_SECTION_HEADERS = {
    "#CONFIRMED": StatementClass.CONFIRMED,
    "#CONJECTURED": StatementClass.CONJECTURED,
    "#UNKNOWN": StatementClass.UNKNOWN,
}

_ID = r"[A-Za-z][A-Za-z0-9_.-]*"
_STATEMENT_RE = re.compile(rf"^-\s+({_ID}):\s*(.*)$")
_VERDICT_RE = re.compile(rf"^#VERDICT\s+({_ID}):\s*(.*)$")
_OBJECT_RE = re.compile(r'^OBJECT\s+(FACTUAL|LOGICAL|COMPLETENESS)\s+"(.*)"\s*$')
_RESPONSE_RE = re.compile(rf"^#RESPONSE\s+({_ID}):\s*(.*)$")
_DEFEND_RE = re.compile(r'^(DEFEND|PARTIAL)\s+"(.*)"\s*$')
_DOWNGRADE_RE = re.compile(r"^DOWNGRADE\s+(\S+)\s*$")
_STANCE_RE = re.compile(rf"^#STANCE\s+({_ID}):\s*(\S+)\s*$")
_RULING_RE = re.compile(rf"^#RULING\s+({_ID}):\s*(.*)$")
_RULING_BODY_RE = re.compile(r'^(CONFIRMED|CONJECTURED|UNKNOWN)\s+"(.*)"\s*$')

_CATEGORY_BY_TOKEN = {
    "FACTUAL": ObjectionCategory.FACTUAL,
    "LOGICAL": ObjectionCategory.LOGICAL,
    "COMPLETENESS": ObjectionCategory.COMPLETENESS,
}
_CLASS_BY_TOKEN = {
    "CONFIRMED": StatementClass.CONFIRMED,
    "CONJECTURED": StatementClass.CONJECTURED,
    "UNKNOWN": StatementClass.UNKNOWN,
}


def _lines(text: str) -> list[tuple[int, str]]:
    return [(i + 1, line.rstrip("\r")) for i, line in enumerate(text.split("\n"))]


# =============================================================================
# Parsers
# =============================================================================


def parse_constructor_output(text: str) -> ParsedRoleOutput:
    """Extract classified statements from a constructor reply.

    At least one section header must appear; sections may be empty; lines
    outside recognized productions become warnings; a label declared twice
    anywhere is a protocol error.
    """
    statements: list[DeclaredStatement] = []
    warnings: list[str] = []
    seen_labels: set[str] = set()
    section: StatementClass | None = None
    saw_header = False

    for number, line in _lines(text):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped in _SECTION_HEADERS:
            if saw_header and _SECTION_HEADERS[stripped] is section:
                warnings.append(f"line {number}: repeated section header {stripped}")
            section = _SECTION_HEADERS[stripped]
            saw_header = True
            continue
        m = _STATEMENT_RE.match(stripped)
        if m:
            label, body = m.group(1), m.group(2).strip()
            if section is None:
                warnings.append(f"line {number}: statement line before any section header")
                continue
            if not body:
                warnings.append(f"line {number}: empty statement text for {label}")
                continue
            if label in seen_labels:
                raise ProtocolViolation(f"duplicate statement label {label}", line=number)
            seen_labels.add(label)
            statements.append(DeclaredStatement(label=label, text=body, klass=section))
            continue
        warnings.append(f"line {number}: unrecognized line {stripped[:60]!r}")

    if not saw_header:
        raise UnparseableReply("no #CONFIRMED/#CONJECTURED/#UNKNOWN section header found")
    return ParsedRoleOutput(
        role=Role.CONSTRUCTOR, statements=tuple(statements), warnings=tuple(warnings)
    )


def parse_critic_output(text: str, known_ids: Sequence[str]) -> ParsedRoleOutput:
    """One verdict per known id; missing verdict lines become implicit accepts."""
    verdicts: dict[str, CriticVerdict] = {}
    warnings: list[str] = []
    known = list(known_ids)
    known_set = set(known)

    for number, line in _lines(text):
        stripped = line.strip()
        if not stripped:
            continue
        m = _VERDICT_RE.match(stripped)
        if not m:
            if stripped.startswith("#VERDICT"):
                raise MalformedLine(f"unparseable verdict line {stripped[:60]!r}", line=number)
            warnings.append(f"line {number}: unrecognized line {stripped[:60]!r}")
            continue
        sid, rest = m.group(1), m.group(2).strip()
        if sid not in known_set:
            raise UnknownReference(f"verdict for unknown statement {sid}", line=number)
        if sid in verdicts:
            raise ProtocolViolation(f"duplicate verdict for {sid}", line=number)
        if rest == "ACCEPT":
            verdicts[sid] = CriticVerdict(sid, VerdictStance.ACCEPT)
            continue
        obj = _OBJECT_RE.match(rest)
        if obj:
            verdicts[sid] = CriticVerdict(
                sid,
                VerdictStance.OBJECT,
                category=_CATEGORY_BY_TOKEN[obj.group(1)],
                reason=obj.group(2) or "(no reason given)",
            )
            continue
        raise MalformedLine(
            f"verdict for {sid} must be ACCEPT or OBJECT <CATEGORY> \"reason\", got {rest[:40]!r}",
            line=number,
        )

    ordered: list[CriticVerdict] = []
    for sid in known:
        if sid in verdicts:
            ordered.append(verdicts[sid])
        else:
            ordered.append(CriticVerdict(sid, VerdictStance.ACCEPT))
            warnings.append(f"implicit accept for {sid} (no verdict line)")
    return ParsedRoleOutput(role=Role.CRITIC, verdicts=tuple(ordered), warnings=tuple(warnings))


def parse_response_output(
    text: str, objected: Mapping[str, StatementClass]
) -> ParsedRoleOutput:
    """Defenses plus trailing stances for the objected statements.

    `objected` maps each objected id to its current class (needed to reject
    non-lowering downgrades). Absent responses default to no-response, and a
    DEFEND without a #STANCE line defaults to a maintained objection — the
    Confirmed gate never opens by omission.
    """
    defenses: dict[str, DefenseOutcome] = {}
    stances: dict[str, PostDefenseStance] = {}
    warnings: list[str] = []

    for number, line in _lines(text):
        stripped = line.strip()
        if not stripped:
            continue
        m = _RESPONSE_RE.match(stripped)
        if m:
            sid, rest = m.group(1), m.group(2).strip()
            if sid not in objected:
                raise ProtocolViolation(f"response for {sid}, which was not objected to", line=number)
            if sid in defenses:
                raise ProtocolViolation(f"duplicate response for {sid}", line=number)
            defend = _DEFEND_RE.match(rest)
            if defend:
                kind = (
                    DefenseKind.DEFENDED_SUCCESS
                    if defend.group(1) == "DEFEND"
                    else DefenseKind.EFFECTIVE_PARTIAL
                )
                defenses[sid] = DefenseOutcome(sid, kind, argument=defend.group(2) or None)
                continue
            down = _DOWNGRADE_RE.match(rest)
            if down:
                token = down.group(1)
                target = _CLASS_BY_TOKEN.get(token)
                if target is None or target is StatementClass.CONFIRMED:
                    raise MalformedLine(
                        f"downgrade target must be CONJECTURED or UNKNOWN, got {token!r}", line=number
                    )
                if not (target < objected[sid]):
                    raise ProtocolViolation(
                        f"downgrade of {sid} to {token} does not lower its class", line=number
                    )
                defenses[sid] = DefenseOutcome(
                    sid, DefenseKind.VOLUNTARY_DOWNGRADE, downgrade_target=target
                )
                continue
            raise MalformedLine(
                f"response for {sid} must be DEFEND/PARTIAL \"arg\" or DOWNGRADE <CLASS>, got {rest[:40]!r}",
                line=number,
            )
        m = _STANCE_RE.match(stripped)
        if m:
            sid, token = m.group(1), m.group(2)
            if sid not in objected:
                raise ProtocolViolation(f"stance for {sid}, which was not objected to", line=number)
            if sid in stances:
                raise ProtocolViolation(f"duplicate stance for {sid}", line=number)
            if token == "ACCEPT":
                stances[sid] = PostDefenseStance(sid, PostDefenseStanceKind.ACCEPT)
            elif token == "MAINTAIN":
                stances[sid] = PostDefenseStance(sid, PostDefenseStanceKind.MAINTAIN_OBJECTION)
            else:
                raise MalformedLine(f"stance must be ACCEPT or MAINTAIN, got {token!r}", line=number)
            continue
        if stripped.startswith(("#RESPONSE", "#STANCE")):
            raise MalformedLine(f"unparseable line {stripped[:60]!r}", line=number)
        warnings.append(f"line {number}: unrecognized line {stripped[:60]!r}")

    ordered_defenses: list[DefenseOutcome] = []
    ordered_stances: list[PostDefenseStance] = []
    for sid in objected:
        defense = defenses.get(sid)
        if defense is None:
            defense = DefenseOutcome(sid, DefenseKind.NO_RESPONSE)
            warnings.append(f"no response for objected {sid}; recorded as no-response")
        ordered_defenses.append(defense)
        stance = stances.get(sid)
        if stance is None:
            if defense.kind is DefenseKind.DEFENDED_SUCCESS:
                warnings.append(f"no stance for defended {sid}; objection maintained")
            stance = PostDefenseStance(sid, PostDefenseStanceKind.MAINTAIN_OBJECTION)
        ordered_stances.append(stance)
    return ParsedRoleOutput(
        role=Role.RESPONDER,
        defenses=tuple(ordered_defenses),
        stances=tuple(ordered_stances),
        warnings=tuple(warnings),
    )


def parse_observer_output(text: str, known_ids: Sequence[str]) -> ParsedRoleOutput:
    """Zero or more rulings; an empty reply means the mechanics stand."""
    rulings: dict[str, ObserverRuling] = {}
    warnings: list[str] = []
    known_set = set(known_ids)

    for number, line in _lines(text):
        stripped = line.strip()
        if not stripped:
            continue
        m = _RULING_RE.match(stripped)
        if not m:
            if stripped.startswith("#RULING"):
                raise MalformedLine(f"unparseable ruling line {stripped[:60]!r}", line=number)
            warnings.append(f"line {number}: unrecognized line {stripped[:60]!r}")
            continue
        sid, rest = m.group(1), m.group(2).strip()
        if sid not in known_set:
            raise UnknownReference(f"ruling for unknown statement {sid}", line=number)
        if sid in rulings:
            raise ProtocolViolation(f"duplicate ruling for {sid}", line=number)
        body = _RULING_BODY_RE.match(rest)
        if body is None:
            raise MalformedLine(
                f"ruling for {sid} must be <CLASS> \"justification\", got {rest[:40]!r}", line=number
            )
        rulings[sid] = ObserverRuling(
            statement_id=sid,
            final_class=_CLASS_BY_TOKEN[body.group(1)],
            justification=body.group(2) or "(no justification given)",
        )

    ordered = [rulings[sid] for sid in known_ids if sid in rulings]
    return ParsedRoleOutput(role=Role.OBSERVER, rulings=tuple(ordered), warnings=tuple(warnings))


# =============================================================================
# Pretty-printers (payload -> wire text; inverse of the parsers)
# =============================================================================


_HEADER_BY_CLASS = {klass: header for header, klass in _SECTION_HEADERS.items()}


def render_constructor_reply(statements: Sequence[DeclaredStatement]) -> str:
    """Wire text preserving statement order; headers switch as the class does."""
    lines: list[str] = []
    current: StatementClass | None = None
    emitted: set[StatementClass] = set()
    for stmt in statements:
        if stmt.klass is not current:
            lines.append(_HEADER_BY_CLASS[stmt.klass])
            current = stmt.klass
            emitted.add(stmt.klass)
        lines.append(f"- {stmt.label}: {stmt.text}")
    for klass in (StatementClass.CONFIRMED, StatementClass.CONJECTURED, StatementClass.UNKNOWN):
        if klass not in emitted:
            lines.append(_HEADER_BY_CLASS[klass])
    return "\n".join(lines)


def render_critic_reply(verdicts: Sequence[CriticVerdict]) -> str:
    lines = []
    for v in verdicts:
        if v.stance is VerdictStance.ACCEPT:
            lines.append(f"#VERDICT {v.statement_id}: ACCEPT")
        else:
            category = v.category.value.upper() if v.category else "LOGICAL"
            lines.append(f'#VERDICT {v.statement_id}: OBJECT {category} "{v.reason}"')
    return "\n".join(lines)


def render_response_reply(
    defenses: Sequence[DefenseOutcome], stances: Sequence[PostDefenseStance] = ()
) -> str:
    lines = []
    for d in defenses:
        if d.kind is DefenseKind.DEFENDED_SUCCESS:
            lines.append(f'#RESPONSE {d.statement_id}: DEFEND "{d.argument or ""}"')
        elif d.kind is DefenseKind.EFFECTIVE_PARTIAL:
            lines.append(f'#RESPONSE {d.statement_id}: PARTIAL "{d.argument or ""}"')
        elif d.kind is DefenseKind.VOLUNTARY_DOWNGRADE:
            assert d.downgrade_target is not None
            lines.append(f"#RESPONSE {d.statement_id}: DOWNGRADE {d.downgrade_target.value.upper()}")
        # NO_RESPONSE / FAILED_TO_PROVE have no wire form: absence means no response.
    for s in stances:
        token = "ACCEPT" if s.stance is PostDefenseStanceKind.ACCEPT else "MAINTAIN"
        lines.append(f"#STANCE {s.statement_id}: {token}")
    return "\n".join(lines)


def render_observer_reply(rulings: Sequence[ObserverRuling]) -> str:
    return "\n".join(
        f'#RULING {r.statement_id}: {r.final_class.value.upper()} "{r.justification}"'
        for r in rulings
    )


# =============================================================================
# Prompt rendering
# =============================================================================

CONSTRUCTOR_GRAMMAR = """Reply using exactly this line grammar, nothing else:
#CONFIRMED
- S<n>: <a statement you are certain of>
#CONJECTURED
- S<n>: <a plausible statement needing verification>
#UNKNOWN
- S<n>: <a gap you cannot close with current information>
Include all three section headers even when a section is empty.
Label statements sequentially: S{next_index}, S{next_index_plus}, ...
Do not reuse a label that already exists in the ledger."""

CRITIC_GRAMMAR = """Reply using exactly this line grammar, one line per statement you reviewed:
#VERDICT <ID>: ACCEPT
#VERDICT <ID>: OBJECT <FACTUAL|LOGICAL|COMPLETENESS> "<specific reason>"
A statement you are silent on counts as accepted."""

RESPONDER_GRAMMAR = """For each objected statement, reply with exactly one of:
#RESPONSE <ID>: DEFEND "<your strongest argument>"
#RESPONSE <ID>: PARTIAL "<what survives of the claim>"
#RESPONSE <ID>: DOWNGRADE <CONJECTURED|UNKNOWN>
Then, for each DEFEND, state the critic's final position:
#STANCE <ID>: ACCEPT
#STANCE <ID>: MAINTAIN
Silence on an objection counts as conceding it (the statement drops to unknown)."""

OBSERVER_GRAMMAR = """If, and only if, a statement's mechanical outcome misstates the evidence, override it:
#RULING <ID>: <CONFIRMED|CONJECTURED|UNKNOWN> "<justification>"
An empty reply means every mechanical outcome stands."""

_ROLE_CHARGES = {
    Role.CONSTRUCTOR: (
        "You are the CONSTRUCTOR. Analyze the problem under the framework below and "
        "classify every statement you make by how well you can back it."
    ),
    Role.CRITIC: (
        "You are the CRITIC. Attack the ledger below on factual, logical, and "
        "completeness grounds; accept only what withstands the framework's questions."
    ),
    Role.RESPONDER: (
        "You are the CONSTRUCTOR answering objections. For each one: defend with "
        "evidence, concede partial validity, or downgrade your own claim."
    ),
    Role.OBSERVER: (
        "You are the OBSERVER. Recalibrate the round's outcomes only where the "
        "mechanical result misrepresents the strength of the evidence."
    ),
}

_GRAMMAR_BY_ROLE = {
    Role.CONSTRUCTOR: CONSTRUCTOR_GRAMMAR,
    Role.CRITIC: CRITIC_GRAMMAR,
    Role.RESPONDER: RESPONDER_GRAMMAR,
    Role.OBSERVER: OBSERVER_GRAMMAR,
}

_SLOT_PATTERN = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptContext:
    """Everything a rendered prompt may draw on besides the package."""

    problem: str
    layer: int = 1
    round: int = 1
    next_statement_index: int = 1
    prior_summary: str | None = None
    ledger: TripleLedger | None = None
    adaptability_notes: tuple[str, ...] = ()
    objections: tuple[CriticVerdict, ...] = ()
    defenses: tuple[DefenseOutcome, ...] = ()
    stances: tuple[PostDefenseStance, ...] = ()
    slots: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RolePrompt:
    role: Role
    rendered_text: str
    slots_filled: tuple[tuple[str, str], ...]
    package_id: str
    package_version: str
    layer: int
    round: int


def _fill_template(template: QuestionTemplate, statement_text: str, slots: Mapping[str, str]) -> str:
    values = dict(slots)
    values["statement"] = statement_text
    missing = [name for name in template.slots() if name not in values]
    if missing:
        raise RenderError(
            f"template {template.id} uses slot {{{missing[0]}}} with no value in context",
            slot=missing[0],
        )
    return _SLOT_PATTERN.sub(lambda m: values[m.group(1)], template.template)


def _applicable(template: QuestionTemplate, statement_text: str, klass: StatementClass) -> bool:
    if klass not in template.applies_to.classes:
        return False
    if not template.applies_to.triggers:
        return True
    lowered = statement_text.casefold()
    return any(trigger.casefold() in lowered for trigger in template.applies_to.triggers)


def render_prompt(role: Role, pkg: FrameworkPackage, context: PromptContext) -> RolePrompt:
    """Assemble a role prompt in fixed section order; byte-deterministic.

    Sections: role charge, principles, constraints, context, output grammar,
    and (critic only) the question templates instantiated against every
    ledger statement they apply to. A critic prompt with no applicable
    template is a render error, as is any template slot without a value.
    """
    parts: list[str] = []
    parts.append(f"## ROLE\n{_ROLE_CHARGES[role]}")

    principle_lines = [
        f"- {p.id}{' [core]' if p.core else ''} (w={p.weight:g}): {p.statement}" for p in pkg.principles
    ]
    parts.append(
        f"## PRINCIPLES ({pkg.meta.id} {pkg.meta.version})\n" + "\n".join(principle_lines)
    )

    if pkg.constraints:
        constraint_lines = [f"- {c.id} ({c.kind}): {c.text}" for c in pkg.constraints]
        parts.append("## CONSTRAINTS\n" + "\n".join(constraint_lines))

    context_lines = [f"Problem: {context.problem}"]
    if context.prior_summary:
        context_lines.append(f"Prior layer summary: {context.prior_summary}")
    if context.ledger is not None and context.ledger.statements:
        context_lines.append("Ledger:")
        for sid in context.ledger.ids_in_order():
            stmt = context.ledger.statements[sid]
            context_lines.append(f"- {sid} [{stmt.klass.value}]: {stmt.text}")
    if context.adaptability_notes:
        context_lines.append("Adaptability notes:")
        context_lines.extend(f"- {note}" for note in context.adaptability_notes)
    if role in (Role.RESPONDER, Role.OBSERVER) and context.objections:
        context_lines.append("Objections this round:")
        for v in context.objections:
            if v.stance is VerdictStance.OBJECT and v.category is not None:
                context_lines.append(f"- {v.statement_id} ({v.category.value}): {v.reason}")
    if role is Role.OBSERVER and context.defenses:
        context_lines.append("Defenses this round:")
        for d in context.defenses:
            detail = d.argument or (d.downgrade_target.value if d.downgrade_target else d.kind.value)
            context_lines.append(f"- {d.statement_id} [{d.kind.value}]: {detail}")
    parts.append("## CONTEXT\n" + "\n".join(context_lines))

    grammar = _GRAMMAR_BY_ROLE[role]
    if role is Role.CONSTRUCTOR:
        grammar = grammar.replace("{next_index}", str(context.next_statement_index)).replace(
            "{next_index_plus}", str(context.next_statement_index + 1)
        )
    parts.append("## OUTPUT GRAMMAR\n" + grammar)

    slots_filled: dict[str, str] = dict(context.slots)
    if role is Role.CRITIC:
        if context.ledger is None or not context.ledger.statements:
            raise RenderError("critic prompt needs a non-empty ledger snapshot")
        question_lines: list[str] = []
        for sid in context.ledger.ids_in_order():
            stmt = context.ledger.statements[sid]
            for template in pkg.question_templates:
                if _applicable(template, stmt.text, stmt.klass):
                    question = _fill_template(template, stmt.text, context.slots)
                    question_lines.append(f"- [{template.id} -> {sid}] {question}")
        if not question_lines:
            raise RenderError("no question template applies to any ledger statement")
        parts.append("## QUESTIONS\n" + "\n".join(question_lines))

    return RolePrompt(
        role=role,
        rendered_text="\n\n".join(parts) + "\n",
        slots_filled=tuple(sorted(slots_filled.items())),
        package_id=pkg.meta.id,
        package_version=pkg.meta.version,
        layer=context.layer,
        round=context.round,
    )
