"""Cognitive framework packages: schema, validation, canonical form, library.

A framework package is the portable unit of expert thinking style: decision
principles, critical question templates, domain constraints, confidence
rules, and an applicability declaration. Packages live in `.cfp.json` files
(UTF-8 JSON, schema documented in docs/package-format.md) and have a single
canonical serialization so that equality is byte equality.

Design ground rules:
- parse collects *all* findings (syntax, schema, semantic) instead of
  failing on the first: sections are parsed best-effort so a schema defect
  in one section never hides a semantic defect in another.
- construction normalizes ordering (sections sorted by id, keyword lists
  sorted case-insensitively) so parse -> serialize -> parse is the identity
  and serialization is a fixpoint.
- packages are immutable per version; the library refuses silent overwrite.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from ramtn.protocol import ConfidenceRules, ContractViolation, StatementClass

PACKAGE_SUFFIX = ".cfp.json"

# Classes a question template may target; unknowns hold no claim to question.
TEMPLATE_CLASSES = (StatementClass.CONFIRMED, StatementClass.CONJECTURED)

TEMPLATE_CATEGORIES = ("factual", "logical", "completeness")
CONSTRAINT_KINDS = ("hard", "soft")

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_VERSION_RE = re.compile(r"^(0|[1-9]\d*)\.(0|[1-9]\d*)\.(0|[1-9]\d*)$")
_SLOT_RE = re.compile(r"\{([a-z_]+)\}")


# =============================================================================
# Findings and errors
# =============================================================================


@dataclass(frozen=True)
class Finding:
    """One validation problem, tagged with the document path it lives at."""

    path: str
    message: str
    kind: str = "semantic"  # syntax | schema | semantic

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class PackageValidationError(Exception):
    """Raised by parse/serialize when a package has findings."""

    def __init__(self, findings: Sequence[Finding]):
        self.findings = list(findings)
        super().__init__("; ".join(str(f) for f in self.findings) or "invalid package")


class LibraryError(Exception):
    """Store collision, missing package, or unusable library directory."""


# =============================================================================
# Domain types
# =============================================================================


def _id_sort_key(identifier: str) -> tuple:
    m = re.match(r"^(.*?)(\d+)$", identifier)
    if m:
        return (m.group(1), int(m.group(2)), identifier)
    return (identifier, -1, identifier)


def _sorted_strings(items: Iterable[str]) -> tuple[str, ...]:
    return tuple(sorted(items, key=lambda s: (s.casefold(), s)))


@dataclass(frozen=True)
class Provenance:
    source: str
    session: str | None = None


@dataclass(frozen=True)
class PackageMeta:
    id: str
    name: str
    version: str
    domain: str
    provenance: Provenance

    def version_tuple(self) -> tuple[int, int, int]:
        m = _VERSION_RE.match(self.version)
        if not m:
            raise ContractViolation(f"version {self.version!r} is not MAJOR.MINOR.PATCH")
        return (int(m.group(1)), int(m.group(2)), int(m.group(3)))


@dataclass(frozen=True)
class Principle:
    id: str
    statement: str
    rationale: str
    weight: float
    core: bool


@dataclass(frozen=True)
class AppliesTo:
    """Targeting rule for a question template."""

    classes: tuple[StatementClass, ...]
    triggers: tuple[str, ...] = ()
    principle: str | None = None

    def __post_init__(self) -> None:
        ordered = tuple(k for k in TEMPLATE_CLASSES if k in self.classes)
        object.__setattr__(self, "classes", ordered)
        object.__setattr__(self, "triggers", _sorted_strings(self.triggers))


@dataclass(frozen=True)
class QuestionTemplate:
    id: str
    applies_to: AppliesTo
    category: str
    template: str

    def slots(self) -> tuple[str, ...]:
        return tuple(_SLOT_RE.findall(self.template))


@dataclass(frozen=True)
class Constraint:
    id: str
    text: str
    kind: str


@dataclass(frozen=True)
class Applicability:
    scenario_keywords: tuple[str, ...] = ()
    required_resources: tuple[str, ...] = ()
    contraindications: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "scenario_keywords", _sorted_strings(self.scenario_keywords))
        object.__setattr__(self, "required_resources", _sorted_strings(self.required_resources))
        object.__setattr__(self, "contraindications", _sorted_strings(self.contraindications))


@dataclass(frozen=True)
class FrameworkPackage:
    meta: PackageMeta
    principles: tuple[Principle, ...]
    question_templates: tuple[QuestionTemplate, ...]
    constraints: tuple[Constraint, ...] = ()
    confidence_rules: ConfidenceRules = field(default_factory=ConfidenceRules)
    applicability: Applicability = field(default_factory=Applicability)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "principles", tuple(sorted(self.principles, key=lambda p: _id_sort_key(p.id)))
        )
        object.__setattr__(
            self,
            "question_templates",
            tuple(sorted(self.question_templates, key=lambda t: _id_sort_key(t.id))),
        )
        object.__setattr__(
            self, "constraints", tuple(sorted(self.constraints, key=lambda c: _id_sort_key(c.id)))
        )

    @property
    def core_principle_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.principles if p.core)

    def principle_by_id(self, pid: str) -> Principle | None:
        for p in self.principles:
            if p.id == pid:
                return p
        return None


# =============================================================================
# Schema walking
# =============================================================================


class _Walk:
    """Tiny helper that accumulates schema findings while probing a tree."""

    def __init__(self) -> None:
        self.findings: list[Finding] = []

    def schema(self, path: str, message: str) -> None:
        self.findings.append(Finding(path, message, "schema"))

    def semantic(self, path: str, message: str) -> None:
        self.findings.append(Finding(path, message, "semantic"))

    def mapping(self, value: Any, path: str, required: Sequence[str], optional: Sequence[str] = ()) -> dict | None:
        if not isinstance(value, Mapping):
            self.schema(path, f"expected an object, got {_type_name(value)}")
            return None
        known = set(required) | set(optional)
        for key in value:
            if key not in known:
                self.schema(f"{path}.{key}", "unknown field")
        ok = True
        for key in required:
            if key not in value:
                self.schema(f"{path}.{key}", "missing required field")
                ok = False
        return dict(value) if ok else None

    def string(self, owner: Mapping, key: str, path: str, trim: bool = True) -> str | None:
        value = owner.get(key)
        if not isinstance(value, str):
            self.schema(f"{path}.{key}", f"expected a string, got {_type_name(value)}")
            return None
        return value.strip() if trim else value

    def number(self, owner: Mapping, key: str, path: str) -> float | None:
        value = owner.get(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.schema(f"{path}.{key}", f"expected a number, got {_type_name(value)}")
            return None
        return float(value)

    def integer(self, owner: Mapping, key: str, path: str) -> int | None:
        value = owner.get(key)
        if isinstance(value, bool) or not isinstance(value, int):
            self.schema(f"{path}.{key}", f"expected an integer, got {_type_name(value)}")
            return None
        return value

    def boolean(self, owner: Mapping, key: str, path: str) -> bool | None:
        value = owner.get(key)
        if not isinstance(value, bool):
            self.schema(f"{path}.{key}", f"expected a boolean, got {_type_name(value)}")
            return None
        return value

    def string_list(self, owner: Mapping, key: str, path: str) -> list[str] | None:
        value = owner.get(key)
        if not isinstance(value, list):
            self.schema(f"{path}.{key}", f"expected a list, got {_type_name(value)}")
            return None
        out = []
        ok = True
        for i, item in enumerate(value):
            if not isinstance(item, str):
                self.schema(f"{path}.{key}[{i}]", f"expected a string, got {_type_name(item)}")
                ok = False
            else:
                out.append(item.strip())
        return out if ok else None


def _type_name(value: Any) -> str:
    if value is None:
        return "nothing"
    return {dict: "object", list: "list", str: "string", bool: "boolean"}.get(
        type(value), type(value).__name__
    )


# =============================================================================
# Parsing (best-effort, all findings collected)
# =============================================================================


def try_parse_package(raw: bytes | str) -> tuple[FrameworkPackage | None, list[Finding]]:
    """Parse a package document; returns (package-or-None, all findings).

    Sections are parsed independently so defects accumulate: a missing field
    in meta still leaves principle-range errors visible, and vice versa.
    """
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as err:
            return None, [Finding("$", f"not valid UTF-8: {err}", "syntax")]
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as err:
        return None, [Finding("$", f"malformed document: {err.msg} at line {err.lineno}", "syntax")]

    w = _Walk()
    # Records unknown/missing top-level fields; sections still parse best-effort.
    w.mapping(
        doc,
        "$",
        required=["meta", "principles", "question_templates", "constraints", "applicability"],
        optional=["confidence_rules"],
    )
    if not isinstance(doc, Mapping):
        return None, w.findings
    top = dict(doc)

    meta = _parse_meta(w, top.get("meta")) if "meta" in top else None
    principles, principles_complete = _parse_principles(w, top.get("principles")) if "principles" in top else ([], False)
    templates = _parse_templates(w, top.get("question_templates")) if "question_templates" in top else []
    constraints = _parse_constraints(w, top.get("constraints")) if "constraints" in top else []
    applicability = _parse_applicability(w, top.get("applicability")) if "applicability" in top else None
    rules = _parse_rules(w, top.get("confidence_rules"))

    # Semantic checks over whatever parsed, with document-accurate paths.
    if meta is not None:
        _check_meta(w, meta)
    if "principles" in top:
        _check_principles(w, [(path, p) for path, p in principles])
        if principles_complete and not principles:
            w.semantic("principles", "a package needs at least one principle")
    known_principles = {p.id for _, p in principles} if principles_complete else None
    if "question_templates" in top:
        _check_templates(w, templates, known_principles)
        if isinstance(top.get("question_templates"), list) and not top["question_templates"]:
            w.semantic("question_templates", "a package needs at least one question template")
    if "constraints" in top:
        _check_constraints(w, constraints)
    if applicability is not None:
        _check_applicability(w, applicability)

    if w.findings:
        return None, w.findings
    assert meta is not None and applicability is not None and rules is not None
    pkg = FrameworkPackage(
        meta=meta,
        principles=tuple(p for _, p in principles),
        question_templates=tuple(t for _, t in templates),
        constraints=tuple(c for _, c in constraints),
        confidence_rules=rules,
        applicability=applicability,
    )
    return pkg, []


def parse_package(raw: bytes | str) -> FrameworkPackage:
    """Parse and fully validate; raises PackageValidationError with findings."""
    pkg, findings = try_parse_package(raw)
    if pkg is None:
        raise PackageValidationError(findings)
    return pkg


def _parse_meta(w: _Walk, value: Any) -> PackageMeta | None:
    node = w.mapping(value, "meta", required=["id", "name", "version", "domain", "provenance"])
    if node is None:
        return None
    pid = w.string(node, "id", "meta")
    name = w.string(node, "name", "meta")
    version = w.string(node, "version", "meta")
    domain = w.string(node, "domain", "meta")
    prov_node = w.mapping(node.get("provenance"), "meta.provenance", required=["source"], optional=["session"])
    provenance = None
    if prov_node is not None:
        source = w.string(prov_node, "source", "meta.provenance")
        session = None
        if prov_node.get("session") is not None:
            session = w.string(prov_node, "session", "meta.provenance")
        if source is not None:
            provenance = Provenance(source=source, session=session)
    if None in (pid, name, version, domain) or provenance is None:
        return None
    return PackageMeta(id=pid, name=name, version=version, domain=domain, provenance=provenance)


def _parse_principles(w: _Walk, value: Any) -> tuple[list[tuple[str, Principle]], bool]:
    """Returns ([(doc_path, principle), ...], section_fully_parsed)."""
    if not isinstance(value, list):
        w.schema("principles", f"expected a list, got {_type_name(value)}")
        return [], False
    out: list[tuple[str, Principle]] = []
    complete = True
    for i, item in enumerate(value):
        path = f"principles[{i}]"
        node = w.mapping(item, path, required=["id", "statement", "rationale", "weight", "core"])
        if node is None:
            complete = False
            continue
        pid = w.string(node, "id", path)
        statement = w.string(node, "statement", path)
        rationale = w.string(node, "rationale", path)
        weight = w.number(node, "weight", path)
        core = w.boolean(node, "core", path)
        if None in (pid, statement, rationale, weight, core):
            complete = False
            continue
        out.append((path, Principle(id=pid, statement=statement, rationale=rationale, weight=weight, core=core)))
    return out, complete


def _parse_templates(w: _Walk, value: Any) -> list[tuple[str, QuestionTemplate]]:
    if not isinstance(value, list):
        w.schema("question_templates", f"expected a list, got {_type_name(value)}")
        return []
    out: list[tuple[str, QuestionTemplate]] = []
    for i, item in enumerate(value):
        path = f"question_templates[{i}]"
        node = w.mapping(item, path, required=["id", "applies_to", "category", "template"])
        if node is None:
            continue
        tid = w.string(node, "id", path)
        category = w.string(node, "category", path)
        template = w.string(node, "template", path, trim=False)
        applies = None
        applies_node = w.mapping(
            node.get("applies_to"), f"{path}.applies_to", required=["classes", "triggers"], optional=["principle"]
        )
        if applies_node is not None:
            class_names = w.string_list(applies_node, "classes", f"{path}.applies_to")
            triggers = w.string_list(applies_node, "triggers", f"{path}.applies_to")
            principle = None
            if applies_node.get("principle") is not None:
                principle = w.string(applies_node, "principle", f"{path}.applies_to")
            classes: list[StatementClass] = []
            if class_names is not None:
                for j, cname in enumerate(class_names):
                    member = _TEMPLATE_CLASS_BY_NAME.get(cname)
                    if member is None:
                        w.semantic(f"{path}.applies_to.classes[{j}]", f"unknown class {cname!r}")
                    else:
                        classes.append(member)
                applies = AppliesTo(
                    classes=tuple(classes),
                    triggers=tuple(triggers) if triggers is not None else (),
                    principle=principle,
                )
        if None in (tid, category, template) or applies is None:
            continue
        out.append((path, QuestionTemplate(id=tid, applies_to=applies, category=category, template=template.strip())))
    return out


_TEMPLATE_CLASS_BY_NAME = {k.value: k for k in TEMPLATE_CLASSES}


def _parse_constraints(w: _Walk, value: Any) -> list[tuple[str, Constraint]]:
    if not isinstance(value, list):
        w.schema("constraints", f"expected a list, got {_type_name(value)}")
        return []
    out: list[tuple[str, Constraint]] = []
    for i, item in enumerate(value):
        path = f"constraints[{i}]"
        node = w.mapping(item, path, required=["id", "text", "kind"])
        if node is None:
            continue
        cid = w.string(node, "id", path)
        text = w.string(node, "text", path)
        kind = w.string(node, "kind", path)
        if None in (cid, text, kind):
            continue
        out.append((path, Constraint(id=cid, text=text, kind=kind)))
    return out


def _parse_applicability(w: _Walk, value: Any) -> Applicability | None:
    node = w.mapping(
        value, "applicability", required=["scenario_keywords", "required_resources", "contraindications"]
    )
    if node is None:
        return None
    keywords = w.string_list(node, "scenario_keywords", "applicability")
    resources = w.string_list(node, "required_resources", "applicability")
    contra = w.string_list(node, "contraindications", "applicability")
    if None in (keywords, resources, contra):
        return None
    return Applicability(
        scenario_keywords=tuple(keywords),
        required_resources=tuple(resources),
        contraindications=tuple(contra),
    )


_RULE_FIELDS = (
    "w_confirmed",
    "w_conjectured",
    "threshold",
    "min_confirmed_core",
    "max_rounds_per_layer",
    "layer_count",
)


def _parse_rules(w: _Walk, value: Any) -> ConfidenceRules | None:
    if value is None:
        return ConfidenceRules()  # omitted entirely: defaults apply
    node = w.mapping(value, "confidence_rules", required=list(_RULE_FIELDS))
    if node is None:
        return None
    w_c = w.number(node, "w_confirmed", "confidence_rules")
    w_j = w.number(node, "w_conjectured", "confidence_rules")
    threshold = w.number(node, "threshold", "confidence_rules")
    min_core = w.integer(node, "min_confirmed_core", "confidence_rules")
    max_rounds = w.integer(node, "max_rounds_per_layer", "confidence_rules")
    layers = w.integer(node, "layer_count", "confidence_rules")
    if None in (w_c, w_j, threshold, min_core, max_rounds, layers):
        return None
    try:
        return ConfidenceRules(
            w_confirmed=w_c,
            w_conjectured=w_j,
            threshold=threshold,
            min_confirmed_core=min_core,
            max_rounds_per_layer=max_rounds,
            layer_count=layers,
        )
    except ContractViolation as err:
        w.semantic("confidence_rules", str(err))
        return None


# =============================================================================
# Semantic validation
# =============================================================================


def _check_meta(w: _Walk, meta: PackageMeta) -> None:
    if not meta.id:
        w.semantic("meta.id", "id must be non-empty")
    elif not _ID_RE.match(meta.id):
        w.semantic("meta.id", f"id {meta.id!r} has characters unfit for a filename")
    if not meta.name:
        w.semantic("meta.name", "name must be non-empty")
    if not _VERSION_RE.match(meta.version):
        w.semantic("meta.version", f"version {meta.version!r} is not MAJOR.MINOR.PATCH")
    if not meta.provenance.source:
        w.semantic("meta.provenance.source", "source must be non-empty")


def _check_principles(w: _Walk, principles: Sequence[tuple[str, Principle]]) -> None:
    seen: set[str] = set()
    for path, principle in principles:
        if not principle.id:
            w.semantic(f"{path}.id", "id must be non-empty")
        elif principle.id in seen:
            w.semantic(f"{path}.id", f"duplicate principle id {principle.id!r}")
        seen.add(principle.id)
        if not principle.statement:
            w.semantic(f"{path}.statement", "statement must be non-empty")
        if not (0.0 < principle.weight <= 1.0):
            w.semantic(f"{path}.weight", f"weight {principle.weight} outside (0, 1]")


def _check_templates(
    w: _Walk,
    templates: Sequence[tuple[str, QuestionTemplate]],
    known_principles: set[str] | None,
) -> None:
    seen: set[str] = set()
    for path, template in templates:
        if not template.id:
            w.semantic(f"{path}.id", "id must be non-empty")
        elif template.id in seen:
            w.semantic(f"{path}.id", f"duplicate template id {template.id!r}")
        seen.add(template.id)
        if not template.applies_to.classes:
            w.semantic(f"{path}.applies_to.classes", "class filter must be non-empty")
        if template.category not in TEMPLATE_CATEGORIES:
            w.semantic(f"{path}.category", f"unknown category {template.category!r}")
        if "statement" not in template.slots():
            w.semantic(f"{path}.template", "template must use the {statement} slot")
        ref = template.applies_to.principle
        # Skip the dangling check when the principle section itself failed to
        # parse: an incomplete id set would fabricate false danglers.
        if ref is not None and known_principles is not None and ref not in known_principles:
            w.semantic(f"{path}.applies_to.principle", f"references unknown principle {ref!r}")
        for j, trigger in enumerate(template.applies_to.triggers):
            if not trigger:
                w.semantic(f"{path}.applies_to.triggers[{j}]", "empty trigger")


def _check_constraints(w: _Walk, constraints: Sequence[tuple[str, Constraint]]) -> None:
    seen: set[str] = set()
    for path, constraint in constraints:
        if not constraint.id:
            w.semantic(f"{path}.id", "id must be non-empty")
        elif constraint.id in seen:
            w.semantic(f"{path}.id", f"duplicate constraint id {constraint.id!r}")
        seen.add(constraint.id)
        if not constraint.text:
            w.semantic(f"{path}.text", "text must be non-empty")
        if constraint.kind not in CONSTRAINT_KINDS:
            w.semantic(f"{path}.kind", f"unknown kind {constraint.kind!r}")


def _check_applicability(w: _Walk, applicability: Applicability) -> None:
    for list_name in ("scenario_keywords", "required_resources", "contraindications"):
        for j, entry in enumerate(getattr(applicability, list_name)):
            if not entry.strip():
                w.semantic(f"applicability.{list_name}[{j}]", "empty entry")
            elif entry != entry.strip():
                w.semantic(f"applicability.{list_name}[{j}]", "entry has leading/trailing whitespace")


def validate_package(pkg: FrameworkPackage) -> list[Finding]:
    """Check every semantic invariant of a built package; empty list = valid."""
    w = _Walk()
    _check_meta(w, pkg.meta)
    if not pkg.principles:
        w.semantic("principles", "a package needs at least one principle")
    if not pkg.question_templates:
        w.semantic("question_templates", "a package needs at least one question template")
    _check_principles(w, [(f"principles[{i}]", p) for i, p in enumerate(pkg.principles)])
    _check_templates(
        w,
        [(f"question_templates[{i}]", t) for i, t in enumerate(pkg.question_templates)],
        {p.id for p in pkg.principles},
    )
    _check_constraints(w, [(f"constraints[{i}]", c) for i, c in enumerate(pkg.constraints)])
    _check_applicability(w, pkg.applicability)
    return w.findings


# =============================================================================
# Canonical serialization
# =============================================================================


def package_to_dict(pkg: FrameworkPackage) -> dict:
    """Plain-data view in canonical key order (construction already sorted lists)."""
    meta: dict[str, Any] = {
        "id": pkg.meta.id,
        "name": pkg.meta.name,
        "version": pkg.meta.version,
        "domain": pkg.meta.domain,
        "provenance": {"source": pkg.meta.provenance.source},
    }
    if pkg.meta.provenance.session is not None:
        meta["provenance"]["session"] = pkg.meta.provenance.session
    rules = pkg.confidence_rules
    return {
        "meta": meta,
        "principles": [
            {
                "id": p.id,
                "statement": p.statement,
                "rationale": p.rationale,
                "weight": p.weight,
                "core": p.core,
            }
            for p in pkg.principles
        ],
        "question_templates": [_template_to_dict(t) for t in pkg.question_templates],
        "constraints": [{"id": c.id, "text": c.text, "kind": c.kind} for c in pkg.constraints],
        "confidence_rules": {
            "w_confirmed": rules.w_confirmed,
            "w_conjectured": rules.w_conjectured,
            "threshold": rules.threshold,
            "min_confirmed_core": rules.min_confirmed_core,
            "max_rounds_per_layer": rules.max_rounds_per_layer,
            "layer_count": rules.layer_count,
        },
        "applicability": {
            "scenario_keywords": list(pkg.applicability.scenario_keywords),
            "required_resources": list(pkg.applicability.required_resources),
            "contraindications": list(pkg.applicability.contraindications),
        },
    }


def _template_to_dict(t: QuestionTemplate) -> dict:
    applies: dict[str, Any] = {
        "classes": [k.value for k in t.applies_to.classes],
        "triggers": list(t.applies_to.triggers),
    }
    if t.applies_to.principle is not None:
        applies["principle"] = t.applies_to.principle
    return {"id": t.id, "applies_to": applies, "category": t.category, "template": t.template}


def serialize_package(pkg: FrameworkPackage) -> bytes:
    """Canonical UTF-8 bytes; raises on an invalid package."""
    findings = validate_package(pkg)
    if findings:
        raise PackageValidationError(findings)
    text = json.dumps(package_to_dict(pkg), ensure_ascii=False, indent=2)
    return (text + "\n").encode("utf-8")


# =============================================================================
# Library
# =============================================================================


@dataclass(frozen=True)
class LibraryListing:
    packages: tuple[PackageMeta, ...]
    warnings: tuple[Finding, ...]


def package_filename(pkg: FrameworkPackage) -> str:
    return f"{pkg.meta.id}-{pkg.meta.version}{PACKAGE_SUFFIX}"


def library_store(directory: str | Path, pkg: FrameworkPackage) -> Path:
    """Write the canonical file atomically; refuse to overwrite id+version."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    target = directory / package_filename(pkg)
    if target.exists():
        raise LibraryError(f"{pkg.meta.id} {pkg.meta.version} already stored at {target}")
    payload = serialize_package(pkg)
    fd, tmp_name = tempfile.mkstemp(dir=str(directory), prefix=".cfp-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target


def library_load(directory: str | Path, package_id: str, version: str | None = None) -> FrameworkPackage:
    """Load by id; newest version wins when version is omitted."""
    directory = Path(directory)
    if not directory.is_dir():
        raise LibraryError(f"not a library directory: {directory}")
    candidates: list[tuple[tuple[int, int, int], FrameworkPackage]] = []
    for path in sorted(directory.glob(f"*{PACKAGE_SUFFIX}")):
        pkg, _ = try_parse_package(path.read_bytes())
        if pkg is None or pkg.meta.id != package_id:
            continue
        if version is not None and pkg.meta.version != version:
            continue
        candidates.append((pkg.meta.version_tuple(), pkg))
    if not candidates:
        wanted = package_id if version is None else f"{package_id} {version}"
        raise LibraryError(f"no package {wanted} in {directory}")
    candidates.sort(key=lambda pair: pair[0])
    return candidates[-1][1]


def library_list(directory: str | Path) -> LibraryListing:
    """Metadata of every valid package; corrupt files become warnings."""
    directory = Path(directory)
    if not directory.is_dir():
        raise LibraryError(f"not a library directory: {directory}")
    metas: list[PackageMeta] = []
    warnings: list[Finding] = []
    for path in sorted(directory.glob(f"*{PACKAGE_SUFFIX}")):
        pkg, findings = try_parse_package(path.read_bytes())
        if pkg is None:
            summary = findings[0].message if findings else "unreadable"
            warnings.append(Finding(path.name, f"skipped: {summary}", "schema"))
            continue
        metas.append(pkg.meta)
    metas.sort(key=lambda m: (m.id, m.version_tuple()))
    return LibraryListing(packages=tuple(metas), warnings=tuple(warnings))


# =============================================================================
# Adaptability scoring
# =============================================================================


@dataclass(frozen=True)
class TaskContext:
    """What the user brings: scenario keywords and available resources."""

    keywords: tuple[str, ...] = ()
    resources: tuple[str, ...] = ()


@dataclass(frozen=True)
class AdaptabilityReport:
    score: float
    notes: tuple[str, ...]


def _normalize(term: str) -> str:
    return re.sub(r"\s+", " ", term.strip().casefold())


def _normalize_set(terms: Iterable[str]) -> set[str]:
    return {t for t in (_normalize(term) for term in terms) if t}


def score_adaptability(pkg: FrameworkPackage, context: TaskContext) -> AdaptabilityReport:
    """Deterministic fit measure between a package and a task context.

    score = Jaccard(scenario keywords) x fraction-of-required-resources-present,
    capped at 0.5 when any declared contraindication appears in the context.
    Keyword matching is case-insensitive with collapsed whitespace; two empty
    keyword sets count as full overlap, and no required resources counts as
    fully resourced.
    """
    pkg_keywords = _normalize_set(pkg.applicability.scenario_keywords)
    ctx_keywords = _normalize_set(context.keywords)
    if not pkg_keywords and not ctx_keywords:
        jaccard = 1.0
    else:
        jaccard = len(pkg_keywords & ctx_keywords) / len(pkg_keywords | ctx_keywords)

    required = _normalize_set(pkg.applicability.required_resources)
    available = _normalize_set(context.resources)
    resource_fraction = 1.0 if not required else len(required & available) / len(required)

    score = jaccard * resource_fraction
    notes: list[str] = []
    context_terms = ctx_keywords | available
    for raw in pkg.applicability.contraindications:
        if _normalize(raw) in context_terms:
            notes.append(f'contraindicated: "{raw}" present in the task context')
    if notes:
        score = min(score, 0.5)
    return AdaptabilityReport(score=score, notes=tuple(notes))


# =============================================================================
# Bundled packages
# =============================================================================


def bundled_dir() -> Path:
    return Path(__file__).resolve().parent / "data" / "packages"


def list_bundled() -> tuple[str, ...]:
    listing = library_list(bundled_dir())
    return tuple(meta.id for meta in listing.packages)


def load_bundled(package_id: str, version: str | None = None) -> FrameworkPackage:
    return library_load(bundled_dir(), package_id, version)


def bump_version(pkg: FrameworkPackage, part: str = "patch") -> FrameworkPackage:
    """Return a copy with the version bumped (packages are immutable per version)."""
    major, minor, patch = pkg.meta.version_tuple()
    if part == "major":
        version = f"{major + 1}.0.0"
    elif part == "minor":
        version = f"{major}.{minor + 1}.0"
    elif part == "patch":
        version = f"{major}.{minor}.{patch + 1}"
    else:
        raise ContractViolation(f"unknown version part {part!r}")
    return replace(pkg, meta=replace(pkg.meta, version=version))
