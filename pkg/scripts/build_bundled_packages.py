"""Regenerate the bundled framework packages in canonical form.

Run from the repo root:  python3 scripts/build_bundled_packages.py

The four packages encode the expert decision frameworks used throughout the
test fixtures: a value-investment discipline, a clinical escalation
framework, a differentiated-teaching framework, and a career strategic
decision system. Editing a package means editing this script and rerunning
it; the files under src/ramtn/data/packages are build artifacts kept in the
repo so the library works from a plain checkout.
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ramtn.cogpack import (
    Applicability,
    AppliesTo,
    Constraint,
    FrameworkPackage,
    PackageMeta,
    Principle,
    Provenance,
    QuestionTemplate,
    serialize_package,
)
from ramtn.protocol import ConfidenceRules, StatementClass

CONF = StatementClass.CONFIRMED
CONJ = StatementClass.CONJECTURED

OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "ramtn" / "data" / "packages"


def buffett_investment() -> FrameworkPackage:
    return FrameworkPackage(
        meta=PackageMeta(
            id="buffett-investment",
            name="Value Investment Discipline",
            version="1.0.0",
            domain="investment-decision",
            provenance=Provenance(
                source="extracted from an expert dialogue on the 1972 See's Candies acquisition",
                session="ext-buffett-1972",
            ),
        ),
        principles=(
            Principle(
                id="P1",
                statement="严格价格纪律 — hold the pre-set valuation ceiling; use the seller's urgency instead of paying a premium",
                rationale="Capital-allocation discipline survives only if the ceiling binds even on attractive businesses.",
                weight=1.0,
                core=True,
            ),
            Principle(
                id="P2",
                statement="定价权为安全边际 — treat untapped price-raising headroom as the core indicator of durable earnings",
                rationale="A franchise that can lift prices without losing customers protects the purchase price better than asset backing.",
                weight=0.9,
                core=True,
            ),
            Principle(
                id="P3",
                statement="最小再投资偏好 — prefer cash generators on a stable asset base that need no incremental capital",
                rationale="Owner earnings compound only when growth does not consume them.",
                weight=0.9,
                core=True,
            ),
            Principle(
                id="P4",
                statement="风险控制 — retain the incumbent management team; avoid integration risk; protect brand and customer loyalty",
                rationale="The moat often lives in people and reputation that a takeover can destroy.",
                weight=0.8,
                core=True,
            ),
        ),
        question_templates=(
            QuestionTemplate(
                id="T1",
                applies_to=AppliesTo(classes=(CONF,), triggers=("valuation", "price", "moat"), principle="P1"),
                category="factual",
                template="What primary evidence supports {statement}, and would it survive an owner-earnings recalculation?",
            ),
            QuestionTemplate(
                id="T2",
                applies_to=AppliesTo(classes=(CONF, CONJ), triggers=("pricing power", "margin"), principle="P2"),
                category="logical",
                template="Does {statement} follow from demonstrated pricing power, or does it assume growth that requires new capital?",
            ),
            QuestionTemplate(
                id="T3",
                applies_to=AppliesTo(classes=(CONF, CONJ), triggers=()),
                category="completeness",
                template="What disconfirming evidence about {statement} has not been sought — competitor response, regulation, capital needs?",
            ),
        ),
        constraints=(
            Constraint(
                id="C1",
                text="Stay inside the circle of competence: no thesis on a business whose unit economics cannot be explained in plain words.",
                kind="hard",
            ),
            Constraint(
                id="C2",
                text="Never breach the pre-set valuation ceiling, whatever the narrative.",
                kind="hard",
            ),
            Constraint(
                id="C3",
                text="Prefer holding periods measured in years; turnover is a cost, not a signal.",
                kind="soft",
            ),
        ),
        confidence_rules=ConfidenceRules(threshold=0.78, min_confirmed_core=2),
        applicability=Applicability(
            scenario_keywords=("investment", "valuation", "equity", "acquisition", "capital allocation"),
            required_resources=("financial statements", "price history"),
            contraindications=("day trading", "momentum chasing"),
        ),
    )


def medical_diagnosis() -> FrameworkPackage:
    return FrameworkPackage(
        meta=PackageMeta(
            id="medical-diagnosis",
            name="Escalating Differential Diagnosis",
            version="1.0.0",
            domain="clinical-diagnosis",
            provenance=Provenance(
                source="extracted from a tertiary-hospital respiratory specialist's case walkthrough",
                session="ext-respiratory-62m",
            ),
        ),
        principles=(
            Principle(
                id="P1",
                statement="动态触发再评估 — treatment failure plus worsening symptoms triggers an escalated re-evaluation, not adherence to the initial pathway",
                rationale="A fixed pathway hides the moment when the working diagnosis stops explaining the data.",
                weight=1.0,
                core=True,
            ),
            Principle(
                id="P2",
                statement="分层排除逻辑 — rule out the typical explanation first, then use risk factors to focus on the dangerous alternative; differentiate before confirming",
                rationale="Ordering the differential by typicality and risk keeps workup cheap and safe.",
                weight=0.9,
                core=True,
            ),
            Principle(
                id="P3",
                statement="多模态证据闭环 — close the loop with cross-validating imaging, biomarker, and pathology evidence before settling the diagnosis",
                rationale="Single-modality findings admit too many explanations to anchor on.",
                weight=0.9,
                core=True,
            ),
            Principle(
                id="P4",
                statement="风险控制 — prefer a single unifying explanation and accumulate indirect evidence before any invasive test",
                rationale="Invasive certainty bought too early costs more than staged indirect evidence.",
                weight=0.8,
                core=True,
            ),
        ),
        question_templates=(
            QuestionTemplate(
                id="T1",
                applies_to=AppliesTo(classes=(CONF,), triggers=("diagnosis", "finding"), principle="P3"),
                category="factual",
                template="Which independent modality corroborates {statement}, and what would contradict it?",
            ),
            QuestionTemplate(
                id="T2",
                applies_to=AppliesTo(classes=(CONF, CONJ), triggers=("treatment", "response"), principle="P1"),
                category="logical",
                template="If the current treatment were addressing the true cause, is {statement} still consistent with the observed response?",
            ),
            QuestionTemplate(
                id="T3",
                applies_to=AppliesTo(classes=(CONF, CONJ), triggers=("risk",), principle="P2"),
                category="completeness",
                template="Which dangerous differential relevant to {statement} has not yet been excluded?",
            ),
        ),
        constraints=(
            Constraint(
                id="C1",
                text="Life-threatening causes are excluded before refining a benign working diagnosis.",
                kind="hard",
            ),
            Constraint(
                id="C2",
                text="An invasive test requires prior supporting indirect evidence.",
                kind="hard",
            ),
            Constraint(
                id="C3",
                text="Record the reasoning chain in a form a referral center can audit.",
                kind="soft",
            ),
        ),
        confidence_rules=ConfidenceRules(threshold=0.82, min_confirmed_core=3),
        applicability=Applicability(
            scenario_keywords=("diagnosis", "respiratory", "differential", "escalation", "primary care"),
            required_resources=("imaging", "laboratory tests"),
            contraindications=("unsupervised self-treatment",),
        ),
    )


def teaching_differentiation() -> FrameworkPackage:
    return FrameworkPackage(
        meta=PackageMeta(
            id="teaching-differentiation",
            name="Differentiated Instruction Loop",
            version="1.0.0",
            domain="classroom-instruction",
            provenance=Provenance(
                source="extracted from a lead mathematics teacher's lesson-adjustment walkthrough",
                session="ext-teaching-grade8",
            ),
        ),
        principles=(
            Principle(
                id="P1",
                statement="学情诊断一体化 — fuse a pre-class probe with opening laddered questions to locate the precise obstacle points",
                rationale="Strategy choice is only as good as the diagnosis of where understanding actually breaks.",
                weight=1.0,
                core=True,
            ),
            Principle(
                id="P2",
                statement="动态调控闭环 — collect live feedback by circulating, restating, and commenting, and insert remediation immediately",
                rationale="A lesson is a control loop; feedback that waits for the exam arrives too late to act on.",
                weight=0.9,
                core=True,
            ),
            Principle(
                id="P3",
                statement="分层策略匹配 — group by diagnosed level and pair each tier with its own tools and task ladder",
                rationale="One shared task either bores the top tier or strands the base tier.",
                weight=0.9,
                core=True,
            ),
        ),
        question_templates=(
            QuestionTemplate(
                id="T1",
                applies_to=AppliesTo(classes=(CONF,), triggers=("diagnosis", "level"), principle="P1"),
                category="factual",
                template="What observed student work, not impression, supports {statement}?",
            ),
            QuestionTemplate(
                id="T2",
                applies_to=AppliesTo(classes=(CONF, CONJ), triggers=("strategy", "grouping"), principle="P3"),
                category="logical",
                template="Does {statement} match the diagnosed tier, or does it assume resources or prior knowledge this class lacks?",
            ),
            QuestionTemplate(
                id="T3",
                applies_to=AppliesTo(classes=(CONF, CONJ), triggers=()),
                category="completeness",
                template="Which tier of the class does {statement} leave without a reachable success path?",
            ),
        ),
        constraints=(
            Constraint(
                id="C1",
                text="Every tier must get a reachable success experience within the same lesson.",
                kind="hard",
            ),
            Constraint(
                id="C2",
                text="Prefer tools that survive a no-multimedia classroom: board work, printed ladders, verbal probes.",
                kind="soft",
            ),
        ),
        confidence_rules=ConfidenceRules(threshold=0.83, min_confirmed_core=3),
        applicability=Applicability(
            scenario_keywords=("teaching", "classroom", "differentiation", "mathematics", "lesson planning"),
            required_resources=("blackboard", "practice problems"),
            contraindications=("rote drilling",),
        ),
    )


def strategic_decision() -> FrameworkPackage:
    return FrameworkPackage(
        meta=PackageMeta(
            id="strategic-decision",
            name="Dynamic Stability Decision System",
            version="1.0.0",
            domain="career-strategy",
            provenance=Provenance(
                source="authored from a researcher's personal strategic decision system",
            ),
        ),
        principles=(
            Principle(
                id="P1",
                statement="三维定位矩阵 — score a niche on opportunity-trait match, path feasibility, and growth headroom before committing",
                rationale="Three orthogonal checks stop a single attractive dimension from deciding alone.",
                weight=1.0,
                core=True,
            ),
            Principle(
                id="P2",
                statement="三级组织解构 — decompose the target organization into value orientation, organizational form, and the role's capability mode (strategy side versus execution side)",
                rationale="The same title means different work in different organizational strata.",
                weight=0.9,
                core=True,
            ),
            Principle(
                id="P3",
                statement="动态稳定理论 — final arbiter: choose what strengthens internal, transferable meta-capability over attachment to any external platform",
                rationale="Static stability borrowed from a platform evaporates with the platform.",
                weight=1.0,
                core=True,
            ),
        ),
        question_templates=(
            QuestionTemplate(
                id="T1",
                applies_to=AppliesTo(classes=(CONF,), triggers=("match", "fit"), principle="P1"),
                category="factual",
                template="Which of the three matrix dimensions has concrete evidence behind {statement}, and which is assumed?",
            ),
            QuestionTemplate(
                id="T2",
                applies_to=AppliesTo(classes=(CONF, CONJ), triggers=("organization", "role"), principle="P2"),
                category="logical",
                template="Does {statement} hold once the role is placed on the strategy/execution axis of the target organization?",
            ),
            QuestionTemplate(
                id="T3",
                applies_to=AppliesTo(classes=(CONF, CONJ), triggers=("stability",), principle="P3"),
                category="completeness",
                template="What does {statement} omit about whether the choice strengthens or weakens transferable capability?",
            ),
        ),
        constraints=(
            Constraint(
                id="C1",
                text="The dynamic-stability verdict overrides lower-level scores when they conflict.",
                kind="hard",
            ),
            Constraint(
                id="C2",
                text="Re-run the positioning matrix when the environment shifts; scores are snapshots, not verdicts.",
                kind="soft",
            ),
        ),
        applicability=Applicability(
            scenario_keywords=("career", "strategy", "positioning", "decision"),
            required_resources=("self assessment",),
            contraindications=(),
        ),
    )


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for build in (buffett_investment, medical_diagnosis, teaching_differentiation, strategic_decision):
        pkg = build()
        path = OUT_DIR / f"{pkg.meta.id}-{pkg.meta.version}.cfp.json"
        path.write_bytes(serialize_package(pkg))
        print(f"wrote {path.relative_to(Path.cwd()) if path.is_relative_to(Path.cwd()) else path}")


if __name__ == "__main__":
    main()
