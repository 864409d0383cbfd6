"""Engine behavior: units, pipelines, budgets, human input, replay."""

from __future__ import annotations

import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ramtn.backends import Backend, BackendReply, ScriptedBackend, load_bundled_fixture
from ramtn.cogpack import TaskContext, load_bundled
from ramtn.engine import (
    CONVERGED,
    EXHAUSTED,
    AbortSession,
    AdaptabilityMismatch,
    ConfigError,
    ExtractionFailed,
    Limits,
    ReplayDivergence,
    SessionConfig,
    SessionError,
    replay,
    run_enhancement,
    run_extraction,
    run_pipeline,
    run_unit,
)
from ramtn.protocol import ConfidenceRules, StatementClass
from ramtn.transcript import (
    ADJUDICATION,
    HUMAN_INPUT,
    PROMPT_SENT,
    RAW_REPLY,
    TERMINATION,
    MalformedTranscript,
    SessionTranscript,
    first_divergence,
)


def K(layer: int, round_: int, role: str) -> str:
    return f"*/L{layer}/R{round_}/{role}"


ONE_ROUND = ConfidenceRules(max_rounds_per_layer=1, layer_count=1)

BASIC_FIXTURE = {
    K(1, 1, "constructor"): (
        "#CONFIRMED\n"
        "- S1: 标的的净现金储备可覆盖三年运营支出 @P1\n"
        "- S2: 核心产品的定价权体现在連续提价后的留存数据 @P2\n"
        "- S3: 行业准入门槛来自监管牌照而非技术"
    ),
    K(1, 1, "critic"): (
        "#VERDICT S1: ACCEPT\n"
        '#VERDICT S2: OBJECT LOGICAL "留存数据与定价权之间缺少对照组"\n'
        "#VERDICT S3: ACCEPT"
    ),
    K(1, 1, "responder"): (
        '#RESPONSE S2: DEFEND "同期竞品涨价后流失率是本品的四倍，构成自然对照"\n'
        "#STANCE S2: ACCEPT"
    ),
    K(1, 1, "observer"): "",
}

STUBBORN_FIXTURE = {
    K(1, 1, "constructor"): (
        "#CONFIRMED\n"
        "- S1: 市场份额数据来自第三方审计 @P1\n"
        "- S2: 渠道库存处于五年低位 @P2\n"
        "#CONJECTURED\n"
        "- S3: 下季度补库存将拉动出货"
    ),
    K(1, 1, "critic"): (
        '#VERDICT S1: OBJECT FACTUAL "审计机构与公司存在关联交易"\n'
        '#VERDICT S2: OBJECT FACTUAL "库存口径在去年变更过，不可比"\n'
        "#VERDICT S3: ACCEPT"
    ),
    K(1, 1, "responder"): "",
    K(1, 1, "observer"): "",
}


class GarbageBackend(Backend):
    """Returns text no role grammar accepts; counts every call by role."""

    def __init__(self, text: str = "%% nothing useful %%"):
        self.text = text
        self.calls: dict[str, int] = {}

    def complete(self, request):
        role = request.step_key.rsplit("/", 1)[-1].split("#")[0]
        self.calls[role] = self.calls.get(role, 0) + 1
        return BackendReply(text=self.text)


def enhancement_config(**overrides) -> SessionConfig:
    defaults = dict(
        mode="enhancement",
        problem="评估一家区域消费品公司的收购报价",
        package=load_bundled("buffett-investment"),
        rules=ConfidenceRules(),
        session_label="t-enh",
    )
    defaults.update(overrides)
    return SessionConfig(**defaults)


# =============================================================================
# Single unit: the convergent and the stubborn example
# =============================================================================


class TestUnitBasic:
    def setup_method(self):
        self.outcome = run_enhancement(enhancement_config(), ScriptedBackend(BASIC_FIXTURE))

    def test_converges_in_one_round_of_one_layer(self):
        assert self.outcome.reason == "confidence-threshold"
        assert self.outcome.layers_run == 1
        assert self.outcome.state.status == CONVERGED
        assert self.outcome.state.round_index == 1

    def test_defended_objection_leaves_all_confirmed(self):
        report = self.outcome.report
        assert report.counts == (3, 0, 0)
        assert report.value == 1.0
        assert report.core_confirmed_count == 2
        assert self.outcome.compliant

    def test_transcript_is_complete_and_valid(self):
        t = self.outcome.transcript
        t.validate()
        kinds = [e.kind for e in t.events]
        assert kinds.count(PROMPT_SENT) == 4  # one per role
        assert kinds.count(RAW_REPLY) == 4
        assert kinds[-2:] == [ADJUDICATION, TERMINATION]

    def test_termination_payload_names_reason_and_confidence(self):
        final = self.outcome.transcript.events[-1].payload
        assert final["reason"] == "confidence-threshold"
        assert final["confidence"]["value"] == 1.0
        assert final["compliant"] is True

    def test_rendered_report_mirrors_partition(self):
        rendered = self.outcome.result.rendered
        confirmed_at = rendered.index("## 我确信的")
        conjectured_at = rendered.index("## 我推测的")
        unknown_at = rendered.index("## 我不知道的")
        assert confirmed_at < conjectured_at < unknown_at
        confirmed_block = rendered[confirmed_at:conjectured_at]
        assert confirmed_block.index("- S1:") < confirmed_block.index("- S2:")
        assert "- S3:" in confirmed_block
        assert rendered[conjectured_at:unknown_at].count("- (none)") == 1
        assert "compliant ✓" in rendered

    def test_convenience_wrappers_agree(self):
        pkg = load_bundled("buffett-investment")
        state = run_unit(
            "评估一家区域消费品公司的收购报价", pkg, ScriptedBackend(BASIC_FIXTURE), ConfidenceRules()
        )
        assert state.status == CONVERGED
        state2, layers = run_pipeline(
            "评估一家区域消费品公司的收购报价", pkg, ScriptedBackend(BASIC_FIXTURE), ConfidenceRules()
        )
        assert layers == 1
        assert [state2.ledger.statements[s].klass for s in state2.ledger.ids_in_order()] == [
            state.ledger.statements[s].klass for s in state.ledger.ids_in_order()
        ]


class TestUnitStubborn:
    def setup_method(self):
        self.outcome = run_enhancement(
            enhancement_config(rules=ONE_ROUND), ScriptedBackend(STUBBORN_FIXTURE)
        )

    def test_silence_costs_the_objected_statements(self):
        ledger = self.outcome.state.ledger
        assert ledger.statements["S1"].klass == StatementClass.UNKNOWN
        assert ledger.statements["S2"].klass == StatementClass.UNKNOWN
        assert ledger.statements["S3"].klass == StatementClass.CONJECTURED

    def test_session_exhausts_without_compliance(self):
        assert self.outcome.reason == "iteration-limit"
        assert self.outcome.state.status == EXHAUSTED
        assert not self.outcome.compliant
        assert self.outcome.report.counts == (0, 1, 2)


# =============================================================================
# Adversarial and interrupted sessions
# =============================================================================


class TestGarbageBackend:
    def test_halts_within_the_reask_bound_with_termination(self):
        backend = GarbageBackend()
        started = time.monotonic()
        outcome = run_enhancement(enhancement_config(rules=None), backend)
        elapsed = time.monotonic() - started

        rules = load_bundled("buffett-investment").confidence_rules
        bound = rules.layer_count * rules.max_rounds_per_layer * (1 + Limits().reask_budget)
        assert backend.calls == {"constructor": bound}
        assert outcome.reason == "iteration-limit"
        assert outcome.transcript.events[-1].kind == TERMINATION
        assert elapsed < 5.0
        outcome.transcript.validate()

    def test_no_reviewing_role_is_consulted_without_statements(self):
        backend = GarbageBackend()
        outcome = run_enhancement(enhancement_config(), backend)
        roles = {e.payload["role"] for e in outcome.transcript.events if e.kind == PROMPT_SENT}
        assert roles == {"constructor"}
        assert outcome.report is None

    def test_parse_failures_are_recorded_per_attempt(self):
        backend = GarbageBackend()
        outcome = run_enhancement(enhancement_config(rules=ONE_ROUND), backend)
        results = [e.payload for e in outcome.transcript.events if e.kind == "parse-result"]
        assert len(results) == 1 + Limits().reask_budget
        assert all(p["ok"] is False for p in results)
        keys = [p["step_key"] for p in results]
        assert keys[0].endswith("/constructor")
        assert keys[1].endswith("/constructor#2")
        assert keys[2].endswith("/constructor#3")


class TestBudget:
    def test_backend_call_ceiling_terminates_with_budget_reason(self):
        outcome = run_enhancement(
            enhancement_config(limits=Limits(max_backend_calls=5)), GarbageBackend()
        )
        assert outcome.reason == "budget"
        final = outcome.transcript.events[-1]
        assert final.kind == TERMINATION
        assert final.payload["reason"] == "budget"
        replies = [e for e in outcome.transcript.events if e.kind == RAW_REPLY]
        assert len(replies) == 5
        outcome.transcript.validate()

    def test_wall_clock_expiry_is_a_session_error_not_an_event(self):
        config = enhancement_config(limits=Limits(wall_clock_s=1e-9))
        with pytest.raises(SessionError, match="wall"):
            run_enhancement(config, ScriptedBackend(BASIC_FIXTURE))


INTERACTIVE_FIXTURE = {
    K(1, 1, "constructor"): (
        "#CONFIRMED\n"
        "- S1: PRINCIPLE: 先在小范围验证再扩张\n"
        "- S2: PRINCIPLE: 成本线之下绝不参与竞价\n"
        "#CONJECTURED\n"
        "- S3: PRINCIPLE: 行业人脉决定项目成败"
    ),
    K(1, 1, "critic"): (
        '#VERDICT S1: OBJECT FACTUAL "对话中只提到一次试点，证据单薄"\n'
        "#VERDICT S2: ACCEPT\n"
        '#VERDICT S3: OBJECT LOGICAL "把个案归因于人脉，忽略了产品差异"'
    ),
    K(1, 1, "observer"): "",
}


class TestInteractiveSession:
    def run_with(self, answers):
        config = SessionConfig(
            mode="extraction",
            problem="创业者复盘对话纪要……",
            interactive=True,
            rules=ONE_ROUND,
            session_label="t-inter",
        )
        return run_extraction(
            config,
            ScriptedBackend(INTERACTIVE_FIXTURE),
            channel=lambda pending: answers[pending.statement_id],
        )

    def test_plain_prose_counts_as_successful_defense(self):
        outcome = self.run_with(
            {"S1": "纪要第三页列了五个试点城市的留存数据。", "S3": "#RESPONSE S3: DOWNGRADE UNKNOWN"}
        )
        ledger = outcome.state.ledger
        assert ledger.statements["S1"].klass == StatementClass.CONFIRMED
        assert ledger.statements["S3"].klass == StatementClass.UNKNOWN

    def test_normalization_path_is_recorded_per_answer(self):
        outcome = self.run_with(
            {"S1": "纪要第三页列了五个试点城市的留存数据。", "S3": "#RESPONSE S3: DOWNGRADE UNKNOWN"}
        )
        warnings = [
            w
            for e in outcome.transcript.events
            if e.kind == "parse-result"
            for w in e.payload["warnings"]
            if "normalized" in w
        ]
        assert warnings == [
            "human input normalized via lenient path",
            "human input normalized via grammar path",
        ]
        human = [e for e in outcome.transcript.events if e.kind == HUMAN_INPUT]
        assert len(human) == 2

    def test_draft_package_reflects_the_answers(self):
        outcome = self.run_with(
            {"S1": "纪要第三页列了五个试点城市的留存数据。", "S3": "#RESPONSE S3: DOWNGRADE UNKNOWN"}
        )
        pkg = outcome.result.package
        assert [p.id for p in pkg.principles] == ["P1", "P2"]
        assert all(p.core for p in pkg.principles)
        assert outcome.result.dropped == ("S3",)
        # no templates were declared; a completeness probe is synthesized
        assert len(pkg.question_templates) == 1
        assert "{statement}" in pkg.question_templates[0].template

    def test_replay_reproduces_the_human_answers(self):
        outcome = self.run_with(
            {"S1": "纪要第三页列了五个试点城市的留存数据。", "S3": "#RESPONSE S3: DOWNGRADE UNKNOWN"}
        )
        report = replay(outcome.transcript)
        assert report.events_checked == len(outcome.transcript.events)

    def test_channel_abort_ends_with_user_abort(self):
        def channel(pending):
            raise AbortSession("operator closed the session")

        config = SessionConfig(
            mode="extraction",
            problem="创业者复盘对话纪要……",
            interactive=True,
            rules=ONE_ROUND,
            session_label="t-abort",
        )
        outcome = run_extraction(config, ScriptedBackend(INTERACTIVE_FIXTURE), channel=channel)
        assert outcome.reason == "user-abort"
        assert outcome.transcript.events[-1].payload["reason"] == "user-abort"
        assert outcome.result.package is None
        outcome.transcript.validate()

    def test_interactive_without_channel_is_a_config_error(self):
        config = SessionConfig(
            mode="extraction", problem="x", interactive=True, session_label="t-nochan"
        )
        with pytest.raises(ConfigError, match="channel"):
            run_extraction(config, ScriptedBackend(INTERACTIVE_FIXTURE))


class TestConstructorFailures:
    def test_parsed_but_empty_ledger_is_a_session_error(self):
        fixture = dict(BASIC_FIXTURE)
        fixture[K(1, 1, "constructor")] = "#CONFIRMED\n#CONJECTURED"
        with pytest.raises(SessionError, match="empty ledger"):
            run_enhancement(enhancement_config(), ScriptedBackend(fixture))

    def test_backend_failure_mid_run_carries_partial_transcript(self):
        fixture = {K(1, 1, "constructor"): BASIC_FIXTURE[K(1, 1, "constructor")]}
        with pytest.raises(SessionError, match="critic") as exc_info:
            run_enhancement(enhancement_config(), ScriptedBackend(fixture, strict=True))
        partial = exc_info.value.transcript
        assert partial is not None
        assert partial.last_seq >= 3
        assert partial.events[-1].kind != TERMINATION


# =============================================================================
# Adaptability gate
# =============================================================================


class TestAdaptability:
    def test_zero_fit_refuses_to_run(self):
        config = enhancement_config(context=TaskContext(keywords=("quantum", "biology")))
        with pytest.raises(AdaptabilityMismatch, match="force"):
            run_enhancement(config, ScriptedBackend(BASIC_FIXTURE))

    def test_force_overrides_the_gate(self):
        config = enhancement_config(
            context=TaskContext(keywords=("quantum", "biology")), force=True
        )
        outcome = run_enhancement(config, ScriptedBackend(BASIC_FIXTURE))
        assert outcome.compliant
        assert outcome.result.adaptability.score == 0.0

    def test_contraindication_notes_reach_the_prompts_and_report(self):
        config = enhancement_config(
            context=TaskContext(
                keywords=("investment", "valuation", "day trading"),
                resources=("financial statements", "price history"),
            )
        )
        outcome = run_enhancement(config, ScriptedBackend(BASIC_FIXTURE))
        # two of six union keywords overlap; the contraindication cap (0.5) is not binding
        assert outcome.result.adaptability.score == pytest.approx(1 / 3)
        assert outcome.result.adaptability.notes
        constructor_prompt = next(
            e.payload["prompt"]
            for e in outcome.transcript.events
            if e.kind == PROMPT_SENT and e.payload["role"] == "constructor"
        )
        assert "day trading" in constructor_prompt
        assert "day trading" in outcome.result.rendered

    def test_no_context_means_no_gate(self):
        outcome = run_enhancement(enhancement_config(), ScriptedBackend(BASIC_FIXTURE))
        assert outcome.result.adaptability is None


# =============================================================================
# Multi-layer flow
# =============================================================================

TWO_LAYER_RULES = ConfidenceRules(max_rounds_per_layer=1, layer_count=2)

TWO_LAYER_FIXTURE = {
    K(1, 1, "constructor"): (
        "#CONFIRMED\n"
        "- S1: 合同中的最低采购承诺具有法律约束力 @P1\n"
        "- S2: 对方近三年从未触发过违约条款 @P2\n"
        "#CONJECTURED\n"
        "- S3: 新产线投产后毛利率将回到历史区间"
    ),
    K(1, 1, "critic"): (
        "#VERDICT S1: ACCEPT\n"
        '#VERDICT S2: OBJECT FACTUAL "违约记录只查了本国法院，仲裁案件未覆盖"\n'
        "#VERDICT S3: ACCEPT"
    ),
    K(1, 1, "responder"): "",
    K(1, 1, "observer"): "",
    K(2, 1, "constructor"): (
        "#CONFIRMED\n"
        "- S1: 合同中的最低采购承诺具有法律约束力 @P1\n"
        "- S2: 经查国际仲裁数据库，对方无未决或败诉记录 @P2\n"
        "- S3: 新产线爬坡数据已公布，毛利率回升到历史区间 @P3"
    ),
    K(2, 1, "critic"): ("#VERDICT S1: ACCEPT\n#VERDICT S2: ACCEPT\n#VERDICT S3: ACCEPT"),
}

# layer 2 has no objections, so responder and observer are never consulted


class TestMultiLayer:
    def setup_method(self):
        self.outcome = run_enhancement(
            enhancement_config(rules=TWO_LAYER_RULES), ScriptedBackend(TWO_LAYER_FIXTURE)
        )

    def test_second_layer_recovers_convergence(self):
        assert self.outcome.layers_run == 2
        assert self.outcome.reason == "confidence-threshold"
        assert self.outcome.report.counts == (3, 0, 0)
        assert self.outcome.compliant

    def test_layer_two_prompt_carries_the_layer_one_digest(self):
        prompts = [
            e.payload
            for e in self.outcome.transcript.events
            if e.kind == PROMPT_SENT and e.payload["role"] == "constructor"
        ]
        assert len(prompts) == 2
        layer2 = prompts[1]["prompt"]
        assert "[layer 1 outcome]" in layer2
        assert "合同中的最低采购承诺具有法律约束力" in layer2  # carried forward verbatim
        assert prompts[0]["prompt"] != layer2

    def test_statement_ids_restart_each_layer(self):
        assert self.outcome.state.layer == 2
        assert self.outcome.state.ledger.ids_in_order() == ["S1", "S2", "S3"]

    def test_layer_inputs_have_distinct_digests(self):
        adjudications = [
            e.payload for e in self.outcome.transcript.events if e.kind == ADJUDICATION
        ]
        assert [a["layer"] for a in adjudications] == [1, 2]


# =============================================================================
# Multi-round extraction: downgrade then recovery, and survival weights
# =============================================================================

SURVIVAL_RULES = ConfidenceRules(max_rounds_per_layer=3, layer_count=1)

SURVIVAL_FIXTURE = {
    K(1, 1, "constructor"): (
        "#CONFIRMED\n"
        "- S1: PRINCIPLE: 只在能力圈内下注\n"
        "- S2: PRINCIPLE: 用十年维度评估管理层"
    ),
    K(1, 1, "critic"): (
        "#VERDICT S1: ACCEPT\n"
        '#VERDICT S2: OBJECT COMPLETENESS "对话里只有两个管理层案例，十年维度是推断"'
    ),
    K(1, 1, "responder"): "#RESPONSE S2: DOWNGRADE CONJECTURED",
    K(1, 1, "observer"): "",
    K(1, 2, "constructor"): ("#CONFIRMED\n- S3: PRINCIPLE: 把仓位集中在前三个想法"),
    K(1, 2, "critic"): (
        "#VERDICT S1: ACCEPT\n"
        '#VERDICT S2: OBJECT LOGICAL "上一轮降级后仍未给出更多案例"\n'
        "#VERDICT S3: ACCEPT"
    ),
    K(1, 2, "responder"): (
        '#RESPONSE S2: DEFEND "补充了对话后半段的三个十年期案例，样本足够"\n#STANCE S2: ACCEPT'
    ),
    K(1, 2, "observer"): "",
}


class TestSurvivalWeights:
    def setup_method(self):
        config = SessionConfig(
            mode="extraction",
            problem="投资人访谈记录……",
            rules=SURVIVAL_RULES,
            session_label="t-surv",
        )
        self.outcome = run_extraction(config, ScriptedBackend(SURVIVAL_FIXTURE))

    def test_downgrade_then_recovery_converges_in_round_two(self):
        assert self.outcome.reason == "confidence-threshold"
        assert self.outcome.state.round_index == 2
        assert self.outcome.report.counts == (3, 0, 0)

    def test_weights_price_the_downgrade_history(self):
        # principles follow ledger order: P1←S1, P2←S2, P3←S3
        weights = [p.weight for p in self.outcome.result.package.principles]
        assert weights == [1.0, 0.75, 1.0]

    def test_every_round_adjudicates_once(self):
        rounds = [
            e.payload["round"] for e in self.outcome.transcript.events if e.kind == ADJUDICATION
        ]
        assert rounds == [1, 2]


# =============================================================================
# Extraction failure
# =============================================================================

SMALL_TALK_FIXTURE = {
    K(1, 1, "constructor"): (
        "#CONJECTURED\n"
        "- S1: PRINCIPLE: 聊天中反复出现的口头禅可能反映习惯\n"
        "#UNKNOWN\n"
        "- S2: TEMPLATE[factual]: 今天的天气对心情的影响是什么?"
    ),
    K(1, 1, "critic"): "#VERDICT S1: ACCEPT\n#VERDICT S2: ACCEPT",
}


class TestExtractionFailed:
    def test_no_confirmed_principles_raises(self):
        config = SessionConfig(
            mode="extraction", problem="闲聊记录……", rules=ONE_ROUND, session_label="t-chat"
        )
        with pytest.raises(ExtractionFailed) as exc_info:
            run_extraction(config, ScriptedBackend(SMALL_TALK_FIXTURE))
        outcome = exc_info.value.outcome
        assert outcome.result.package is None
        assert outcome.result.dropped == ("S2",)
        assert outcome.reason == "iteration-limit"
        outcome.transcript.validate()


# =============================================================================
# Bundled scenario fixtures
# =============================================================================


class TestBundledScenarios:
    def test_investment_enhancement(self):
        config = SessionConfig(
            mode="enhancement",
            problem="评估一家拥有区域品牌的包装食品公司，当前报价对应28倍市盈率。",
            package=load_bundled("buffett-investment"),
            session_label="scenario-invest",
        )
        outcome = run_enhancement(config, load_bundled_fixture("investment-enhancement"))
        assert outcome.report.counts == (6, 1, 1)
        assert outcome.report.value == pytest.approx(0.8125, abs=1e-12)
        assert outcome.report.core_confirmed_count == 4
        assert outcome.compliant
        assert outcome.reason == "confidence-threshold"

    def test_medical_enhancement(self):
        config = SessionConfig(
            mode="enhancement",
            problem="A 58-year-old with progressive dyspnea; review the diagnosis and treatment plan.",
            package=load_bundled("medical-diagnosis"),
            session_label="scenario-med",
        )
        outcome = run_enhancement(config, load_bundled_fixture("medical-enhancement"))
        assert outcome.report.counts == (7, 0, 1)
        assert outcome.report.value == pytest.approx(0.875, abs=1e-12)
        assert outcome.report.core_confirmed_count == 3
        assert outcome.compliant

    def test_teaching_enhancement_with_observer_override(self):
        config = SessionConfig(
            mode="enhancement",
            problem="为混合水平的初中代数班设计一个月的分层教学方案。",
            package=load_bundled("teaching-differentiation"),
            session_label="scenario-teach",
        )
        outcome = run_enhancement(config, load_bundled_fixture("teaching-enhancement"))
        assert outcome.report.counts == (6, 2, 0)
        assert outcome.report.value == pytest.approx(0.875, abs=1e-12)
        assert outcome.report.core_confirmed_count == 3
        assert outcome.compliant
        rulings = [e for e in outcome.transcript.events if e.kind == "ruling"]
        assert len(rulings) == 1
        ruled = {r["id"]: r["class"] for r in rulings[0].payload["rulings"]}
        assert ruled == {"S7": "conjectured"}
        assert outcome.state.ledger.statements["S7"].klass == StatementClass.CONJECTURED

    def test_buffett_extraction_package(self):
        config = SessionConfig(
            mode="extraction",
            problem="投资者与合伙人关于历史决策的对话记录……",
            session_label="scenario-buffett",
        )
        outcome = run_extraction(config, load_bundled_fixture("buffett-extraction"))
        pkg = outcome.result.package
        assert [p.id for p in pkg.principles] == ["P1", "P2", "P3", "P4"]
        assert all(p.core for p in pkg.principles)
        assert any("严格价格纪律" in p.statement for p in pkg.principles)
        assert {t.category for t in pkg.question_templates} == {"factual", "completeness"}
        assert len(pkg.constraints) == 1
        assert outcome.result.dropped == ("S8",)
        assert outcome.report.counts == (7, 0, 1)


# =============================================================================
# Determinism, snapshots, replay
# =============================================================================


class TestDeterminism:
    def test_identical_configs_share_a_session_id(self):
        a = enhancement_config(session_label=None)
        b = enhancement_config(session_label=None)
        assert a.session_id == b.session_id
        assert a.session_id.startswith("s-")

    def test_two_runs_differ_only_in_timestamps(self):
        out1 = run_enhancement(enhancement_config(), ScriptedBackend(BASIC_FIXTURE))
        out2 = run_enhancement(enhancement_config(), ScriptedBackend(BASIC_FIXTURE))
        assert first_divergence(out1.transcript, out2.transcript) is None
        assert out1.session_id == out2.session_id

    def test_snapshot_round_trips_through_from_snapshot(self):
        config = enhancement_config(
            context=TaskContext(keywords=("investment",), resources=("price history",)),
            limits=Limits(max_backend_calls=99),
            force=True,
        )
        restored = SessionConfig.from_snapshot(config.snapshot())
        assert restored.snapshot() == config.snapshot()
        assert restored.session_id == config.session_id


class TestReplay:
    def make_outcome(self):
        return run_enhancement(enhancement_config(), ScriptedBackend(BASIC_FIXTURE))

    def test_replay_reproduces_a_clean_run(self):
        outcome = self.make_outcome()
        report = replay(outcome.transcript)
        assert report.events_checked == len(outcome.transcript.events)
        assert report.counts == (3, 0, 0)
        assert report.confidence == pytest.approx(1.0, abs=1e-12)
        assert report.compliant

    def test_replay_survives_persistence(self, tmp_path):
        outcome = self.make_outcome()
        path = tmp_path / "run.ramtn.log"
        outcome.transcript.save(path)
        report = replay(SessionTranscript.load(path))
        assert report.events_checked == len(outcome.transcript.events)

    def test_single_byte_corruption_names_the_divergent_event(self, tmp_path):
        outcome = self.make_outcome()
        text = outcome.transcript.to_text()
        # the objection reason first appears in the critic's raw reply; replay
        # serves the corrupted reply back, so the recorded parse-result that
        # follows it is the first event recomputation disagrees with
        token = "留存数据与定价权之间缺少对照组"
        corrupted = text.replace(token, token[:-1] + "照", 1)
        assert corrupted != text
        with pytest.raises(ReplayDivergence) as exc_info:
            replay(SessionTranscript.from_text(corrupted))
        critic_raw_seq = next(
            e.seq
            for e in outcome.transcript.events
            if e.kind == RAW_REPLY and token in e.payload["text"]
        )
        assert exc_info.value.sequence == critic_raw_seq + 1

    def test_truncated_transcript_is_rejected_before_replay(self):
        outcome = self.make_outcome()
        truncated = SessionTranscript(
            session_id=outcome.transcript.session_id,
            config=outcome.transcript.config,
            events=outcome.transcript.events[:-1],
        )
        with pytest.raises(MalformedTranscript):
            replay(truncated)


# =============================================================================
# Property: one adversarial round, engine against a recomputed truth table
# =============================================================================

DEFENSE_CHOICES = ("defend-accept", "defend-maintain", "partial", "downgrade", "silent")


def build_round_fixture(objections: dict[str, str | None], silent_responder: bool) -> dict:
    """S1,S2 confirmed, S3 conjectured; objections maps id -> category or None."""
    critic_lines = []
    for sid in ("S1", "S2", "S3"):
        if objections.get(sid):
            critic_lines.append(f'#VERDICT {sid}: OBJECT {objections[sid]} "质询{sid}"')
        else:
            critic_lines.append(f"#VERDICT {sid}: ACCEPT")
    return {
        K(1, 1, "constructor"): (
            "#CONFIRMED\n- S1: 陈述一 @P1\n- S2: 陈述二 @P2\n#CONJECTURED\n- S3: 陈述三"
        ),
        K(1, 1, "critic"): "\n".join(critic_lines),
        K(1, 1, "observer"): "",
    }


def responder_text(objected: list[str], choices: dict[str, str]) -> str:
    lines = []
    for sid in objected:
        kind = choices[sid]
        if kind == "defend-accept":
            lines.append(f'#RESPONSE {sid}: DEFEND "辩护{sid}"')
            lines.append(f"#STANCE {sid}: ACCEPT")
        elif kind == "defend-maintain":
            lines.append(f'#RESPONSE {sid}: DEFEND "辩护{sid}"')
            lines.append(f"#STANCE {sid}: MAINTAIN")
        elif kind == "partial":
            lines.append(f'#RESPONSE {sid}: PARTIAL "部分回应{sid}"')
        elif kind == "downgrade":
            lines.append(f"#RESPONSE {sid}: DOWNGRADE UNKNOWN")
    return "\n".join(lines)


def expected_class(start: StatementClass, objected: bool, choice: str | None) -> StatementClass:
    if not objected:
        return start
    if choice == "defend-accept":
        return StatementClass.CONFIRMED
    if choice == "defend-maintain":
        return StatementClass.CONJECTURED
    if choice == "partial":
        return StatementClass.CONJECTURED
    if choice == "downgrade":
        return StatementClass.UNKNOWN
    return StatementClass.UNKNOWN  # silence


@settings(max_examples=40, deadline=None)
@given(
    object_s1=st.booleans(),
    object_s2=st.booleans(),
    object_s3=st.booleans(),
    choice_s1=st.sampled_from(DEFENSE_CHOICES[:4]),
    choice_s2=st.sampled_from(DEFENSE_CHOICES[:4]),
    choice_s3=st.sampled_from(DEFENSE_CHOICES[:4]),
    silent=st.booleans(),
)
def test_one_round_outcomes_match_the_truth_table(
    object_s1, object_s2, object_s3, choice_s1, choice_s2, choice_s3, silent
):
    starts = {
        "S1": StatementClass.CONFIRMED,
        "S2": StatementClass.CONFIRMED,
        "S3": StatementClass.CONJECTURED,
    }
    objections = {
        "S1": "FACTUAL" if object_s1 else None,
        "S2": "LOGICAL" if object_s2 else None,
        "S3": "COMPLETENESS" if object_s3 else None,
    }
    choices = {"S1": choice_s1, "S2": choice_s2, "S3": choice_s3}
    objected = [sid for sid in ("S1", "S2", "S3") if objections[sid]]

    fixture = build_round_fixture(objections, silent)
    fixture[K(1, 1, "responder")] = "" if silent else responder_text(objected, choices)

    config = enhancement_config(rules=ONE_ROUND, session_label="t-prop")
    outcome = run_enhancement(config, ScriptedBackend(fixture))

    outcome.transcript.validate()
    assert outcome.reason in ("confidence-threshold", "iteration-limit")

    ledger = outcome.state.ledger
    expected = {
        sid: expected_class(
            starts[sid], sid in objected, None if silent else choices[sid]
        )
        for sid in starts
    }
    actual = {sid: ledger.statements[sid].klass for sid in starts}
    assert actual == expected

    counts = (
        sum(1 for c in expected.values() if c == StatementClass.CONFIRMED),
        sum(1 for c in expected.values() if c == StatementClass.CONJECTURED),
        sum(1 for c in expected.values() if c == StatementClass.UNKNOWN),
    )
    adjudications = [e for e in outcome.transcript.events if e.kind == ADJUDICATION]
    assert len(adjudications) == 1
    assert tuple(adjudications[0].payload["counts"]) == counts

    rules = ONE_ROUND
    value = (rules.w_confirmed * counts[0] + rules.w_conjectured * counts[1]) / 3
    assert outcome.report.value == pytest.approx(value, abs=1e-12)
