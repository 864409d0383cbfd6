"""Tests for the adjudication rules, ledger invariants and confidence math.

The TRUTH_TABLE below is the oracle for adjudicate_statement: every
contract-valid (initial, exchange) combination and its expected final class,
frozen by hand before the implementation existed. If the implementation ever
disagrees with this table, the implementation is wrong.
"""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ramtn.protocol import (
    ConfidenceRules,
    ContractViolation,
    CriticVerdict,
    DefenseKind,
    DefenseOutcome,
    DuplicateEntryError,
    EmptyLedgerError,
    ObjectionCategory,
    ObserverRuling,
    Origin,
    PostDefenseStance,
    PostDefenseStanceKind,
    RawStatement,
    StatementClass,
    StatementValidationError,
    TransitionCause,
    TripleLedger,
    UnknownStatementError,
    VerdictStance,
    adjudicate_round,
    adjudicate_statement,
    append_initial,
    check_compliance,
    classify_initial,
    compute_confidence,
    resolve_rulings,
)

C = StatementClass.CONFIRMED
J = StatementClass.CONJECTURED
U = StatementClass.UNKNOWN

OK = DefenseKind.DEFENDED_SUCCESS
PART = DefenseKind.EFFECTIVE_PARTIAL
DOWN = DefenseKind.VOLUNTARY_DOWNGRADE
SILENT = DefenseKind.NO_RESPONSE
FAILED = DefenseKind.FAILED_TO_PROVE

ACC = PostDefenseStanceKind.ACCEPT
MAINT = PostDefenseStanceKind.MAINTAIN_OBJECTION


# =============================================================================
# The truth table (frozen oracle)
# =============================================================================

# (initial, challenged, defense, post_defense, downgrade_target) -> final
TRUTH_TABLE = [
    # --- not challenged: identity ------------------------------------------
    (C, False, None, None, None, C),
    (J, False, None, None, None, J),
    (U, False, None, None, None, U),
    # --- challenged, initial Confirmed -------------------------------------
    (C, True, OK, ACC, None, C),
    (C, True, OK, MAINT, None, J),
    (C, True, PART, ACC, None, J),
    (C, True, PART, MAINT, None, J),
    (C, True, DOWN, ACC, J, J),
    (C, True, DOWN, MAINT, J, J),
    (C, True, DOWN, ACC, U, U),
    (C, True, DOWN, MAINT, U, U),
    (C, True, SILENT, ACC, None, U),
    (C, True, SILENT, MAINT, None, U),
    (C, True, FAILED, ACC, None, U),
    (C, True, FAILED, MAINT, None, U),
    # --- challenged, initial Conjectured ------------------------------------
    (J, True, OK, ACC, None, C),  # the single upgrade path
    (J, True, OK, MAINT, None, J),
    (J, True, PART, ACC, None, J),
    (J, True, PART, MAINT, None, J),
    (J, True, DOWN, ACC, U, U),
    (J, True, DOWN, MAINT, U, U),
    (J, True, SILENT, ACC, None, U),
    (J, True, SILENT, MAINT, None, U),
    (J, True, FAILED, ACC, None, U),
    (J, True, FAILED, MAINT, None, U),
    # --- challenged, initial Unknown: absorbing -----------------------------
    (U, True, OK, ACC, None, U),
    (U, True, OK, MAINT, None, U),
    (U, True, PART, ACC, None, U),
    (U, True, PART, MAINT, None, U),
    (U, True, SILENT, ACC, None, U),
    (U, True, SILENT, MAINT, None, U),
    (U, True, FAILED, ACC, None, U),
    (U, True, FAILED, MAINT, None, U),
]


@pytest.mark.parametrize("initial,challenged,defense,stance,target,expected", TRUTH_TABLE)
def test_truth_table(initial, challenged, defense, stance, target, expected):
    got = adjudicate_statement(
        initial,
        challenged=challenged,
        defense=defense,
        post_defense=stance,
        downgrade_target=target,
    )
    assert got is expected


def test_truth_table_is_exhaustive_over_valid_inputs():
    # 3 unchallenged + (2 live classes x (2 success + 2 partial + 2 silent +
    # 2 failed) + downgrades: Confirmed has 2 targets x 2 stances, Conjectured
    # has 1 target x 2 stances) + 8 absorbing Unknown rows.
    assert len(TRUTH_TABLE) == 3 + (2 * 8 + 4 + 2) + 8
    assert len({row[:5] for row in TRUTH_TABLE}) == len(TRUTH_TABLE)


# =============================================================================
# Contract violations
# =============================================================================


def test_defense_without_challenge_rejected():
    with pytest.raises(ContractViolation):
        adjudicate_statement(C, challenged=False, defense=OK)
    with pytest.raises(ContractViolation):
        adjudicate_statement(C, challenged=False, post_defense=ACC)


def test_challenge_requires_full_exchange():
    with pytest.raises(ContractViolation):
        adjudicate_statement(C, challenged=True, defense=OK, post_defense=None)
    with pytest.raises(ContractViolation):
        adjudicate_statement(C, challenged=True, defense=None, post_defense=ACC)


def test_downgrade_must_carry_strictly_lower_target():
    with pytest.raises(ContractViolation):
        adjudicate_statement(C, challenged=True, defense=DOWN, post_defense=MAINT)
    with pytest.raises(ContractViolation):
        adjudicate_statement(C, challenged=True, defense=DOWN, post_defense=MAINT, downgrade_target=C)
    with pytest.raises(ContractViolation):
        adjudicate_statement(J, challenged=True, defense=DOWN, post_defense=MAINT, downgrade_target=C)


def test_target_without_downgrade_rejected():
    with pytest.raises(ContractViolation):
        adjudicate_statement(C, challenged=True, defense=OK, post_defense=ACC, downgrade_target=J)


def test_objection_record_requires_category_and_reason():
    with pytest.raises(ContractViolation):
        CriticVerdict("S1", VerdictStance.OBJECT)
    with pytest.raises(ContractViolation):
        CriticVerdict("S1", VerdictStance.OBJECT, ObjectionCategory.FACTUAL, reason=None)
    with pytest.raises(ContractViolation):
        CriticVerdict("S1", VerdictStance.ACCEPT, ObjectionCategory.FACTUAL, "bogus")


def test_defense_record_target_rules():
    with pytest.raises(ContractViolation):
        DefenseOutcome("S1", DefenseKind.VOLUNTARY_DOWNGRADE)
    with pytest.raises(ContractViolation):
        DefenseOutcome("S1", DefenseKind.DEFENDED_SUCCESS, downgrade_target=U)


# =============================================================================
# Class ordering
# =============================================================================


def test_class_total_order():
    assert U < J < C
    assert C > J > U
    assert sorted([C, U, J], key=lambda k: k.rank) == [U, J, C]


# =============================================================================
# Round adjudication over a ledger
# =============================================================================


def fresh_ledger():
    return classify_initial(
        [
            RawStatement("the moat is durable", C),
            RawStatement("margins trend upward", J),
            RawStatement("management tenure unclear", U),
        ]
    )


def objection(sid, category=ObjectionCategory.FACTUAL):
    return CriticVerdict(sid, VerdictStance.OBJECT, category, "challenged")


def test_accept_verdict_keeps_class_and_logs_history():
    ledger = fresh_ledger()
    out = adjudicate_round(ledger, [CriticVerdict("S1", VerdictStance.ACCEPT)], round_index=2)
    stmt = out.statements["S1"]
    assert stmt.klass is C
    assert stmt.history[-1].cause is TransitionCause.CRITIC_ACCEPTED
    assert stmt.history[-1].round == 2
    # input ledger untouched
    assert ledger.statements["S1"].history[-1].cause is TransitionCause.INITIAL


def test_objection_with_successful_defense_and_acceptance_confirms():
    ledger = fresh_ledger()
    out = adjudicate_round(
        ledger,
        [objection("S2")],
        [DefenseOutcome("S2", OK, argument="backed by three filings")],
        [PostDefenseStance("S2", ACC)],
    )
    stmt = out.statements["S2"]
    assert stmt.klass is C
    assert stmt.history[-1].cause is TransitionCause.DEFENSE_SUCCEEDED
    assert stmt.support == "backed by three filings"


def test_objection_without_defense_defaults_to_no_response():
    ledger = fresh_ledger()
    out = adjudicate_round(ledger, [objection("S1")])
    stmt = out.statements["S1"]
    assert stmt.klass is U
    assert stmt.history[-1].cause is TransitionCause.NO_RESPONSE


def test_defense_without_stance_defaults_to_maintained_objection():
    ledger = fresh_ledger()
    out = adjudicate_round(ledger, [objection("S1")], [DefenseOutcome("S1", OK)])
    stmt = out.statements["S1"]
    assert stmt.klass is J
    assert stmt.history[-1].cause is TransitionCause.DEFENSE_PARTIAL


def test_voluntary_downgrade_applies_target():
    ledger = fresh_ledger()
    out = adjudicate_round(
        ledger,
        [objection("S1")],
        [DefenseOutcome("S1", DOWN, downgrade_target=U)],
        [PostDefenseStance("S1", MAINT)],
    )
    assert out.statements["S1"].klass is U
    assert out.statements["S1"].history[-1].cause is TransitionCause.VOLUNTARY_DOWNGRADE


def test_observer_override_appends_second_entry():
    ledger = fresh_ledger()
    out = adjudicate_round(
        ledger,
        [objection("S1")],
        [DefenseOutcome("S1", OK)],
        [PostDefenseStance("S1", ACC)],
        [ObserverRuling("S1", J, "evidence thinner than claimed")],
    )
    stmt = out.statements["S1"]
    assert stmt.klass is J
    assert [t.cause for t in stmt.history[-2:]] == [
        TransitionCause.DEFENSE_SUCCEEDED,
        TransitionCause.OBSERVER_OVERRIDE,
    ]


def test_observer_agreeing_ruling_adds_nothing():
    ledger = fresh_ledger()
    out = adjudicate_round(
        ledger,
        [objection("S1")],
        [DefenseOutcome("S1", OK)],
        [PostDefenseStance("S1", ACC)],
        [ObserverRuling("S1", C, "stands as defended")],
    )
    stmt = out.statements["S1"]
    assert stmt.klass is C
    assert stmt.history[-1].cause is TransitionCause.DEFENSE_SUCCEEDED


def test_ruling_without_verdict_can_still_move_a_statement():
    ledger = fresh_ledger()
    out = adjudicate_round(ledger, [], rulings=[ObserverRuling("S2", U, "unsupported")])
    stmt = out.statements["S2"]
    assert stmt.klass is U
    assert stmt.history[-1].cause is TransitionCause.OBSERVER_OVERRIDE


def test_unreviewed_statements_are_untouched():
    ledger = fresh_ledger()
    out = adjudicate_round(ledger, [CriticVerdict("S1", VerdictStance.ACCEPT)])
    assert out.statements["S2"].history == ledger.statements["S2"].history
    assert out.statements["S3"].klass is U


def test_duplicate_verdict_rejected():
    ledger = fresh_ledger()
    with pytest.raises(DuplicateEntryError):
        adjudicate_round(
            ledger,
            [CriticVerdict("S1", VerdictStance.ACCEPT), objection("S1")],
        )


def test_verdict_for_unknown_id_rejected():
    ledger = fresh_ledger()
    with pytest.raises(UnknownStatementError):
        adjudicate_round(ledger, [CriticVerdict("S99", VerdictStance.ACCEPT)])


def test_defense_without_objection_rejected():
    ledger = fresh_ledger()
    with pytest.raises(ContractViolation):
        adjudicate_round(ledger, [], [DefenseOutcome("S1", OK)])
    with pytest.raises(ContractViolation):
        adjudicate_round(
            ledger,
            [CriticVerdict("S1", VerdictStance.ACCEPT)],
            [DefenseOutcome("S1", OK)],
        )


def test_stance_without_defense_rejected():
    ledger = fresh_ledger()
    with pytest.raises(ContractViolation):
        adjudicate_round(ledger, [objection("S1")], [], [PostDefenseStance("S1", ACC)])


def test_resolve_rulings_flags_overrides():
    ledger = fresh_ledger()
    verdicts = [objection("S1")]
    defenses = [DefenseOutcome("S1", OK)]
    stances = [PostDefenseStance("S1", ACC)]
    resolved = resolve_rulings(
        ledger,
        verdicts,
        defenses,
        stances,
        [ObserverRuling("S1", J, "weak"), ObserverRuling("S2", J, "as stated")],
    )
    assert resolved[0].overrides_mechanical is True  # mechanical says Confirmed
    assert resolved[1].overrides_mechanical is False  # S2 untouched, already Conjectured


# =============================================================================
# Confidence and compliance
# =============================================================================


def ledger_with_counts(c, j, u):
    raw = [RawStatement(f"claim {i}", C) for i in range(c)]
    raw += [RawStatement(f"guess {i}", J) for i in range(j)]
    raw += [RawStatement(f"gap {i}", U) for i in range(u)]
    return classify_initial(raw)


# Frozen expected values, worked by hand:
#   value = (w_c*|C| + w_j*|J|) / (|C|+|J|+|U|)
CONFIDENCE_CASES = [
    # (c, j, u, w_c, w_j, expected)
    (2, 1, 1, 1.0, 0.5, 0.625),     # (2 + 0.5) / 4
    (6, 1, 1, 1.0, 0.5, 0.8125),    # (6 + 0.5) / 8
    (3, 0, 0, 1.0, 0.5, 1.0),
    (0, 0, 3, 1.0, 0.5, 0.0),
    (0, 4, 0, 1.0, 0.5, 0.5),
    (5, 2, 1, 1.0, 0.5, 0.75),      # (5 + 1) / 8, exactly the default threshold
    (2, 2, 0, 1.0, 0.25, 0.625),    # (2 + 0.5) / 4 under lighter conjecture weight
    (7, 2, 1, 1.0, 0.5, 0.8),       # (7 + 1) / 10
]


@pytest.mark.parametrize("c,j,u,w_c,w_j,expected", CONFIDENCE_CASES)
def test_confidence_values(c, j, u, w_c, w_j, expected):
    rules = ConfidenceRules(w_confirmed=w_c, w_conjectured=w_j)
    report = compute_confidence(ledger_with_counts(c, j, u), rules)
    assert report.value == pytest.approx(expected, abs=1e-12)
    assert report.counts == (c, j, u)


def test_threshold_comparison_is_inclusive():
    # 78 confirmed out of 100 lands exactly on a 0.78 threshold and passes.
    rules = ConfidenceRules(threshold=0.78, min_confirmed_core=1)
    ledger = ledger_with_counts(78, 0, 22)
    report = compute_confidence(ledger, rules, core_ids={"S1"})
    assert report.value == pytest.approx(0.78)
    assert report.compliant is True
    assert check_compliance(report, rules) is True


def test_compliance_requires_confirmed_core():
    rules = ConfidenceRules(threshold=0.5, min_confirmed_core=2)
    ledger = ledger_with_counts(1, 3, 0)  # value 0.625, but only S1 confirmed
    report = compute_confidence(ledger, rules, core_ids={"S1", "S2"})
    assert report.value >= rules.threshold
    assert report.core_confirmed_count == 1
    assert report.compliant is False


def test_core_ids_must_exist():
    with pytest.raises(UnknownStatementError):
        compute_confidence(ledger_with_counts(1, 1, 1), ConfidenceRules(), core_ids={"S9"})


def test_empty_ledger_confidence_undefined():
    with pytest.raises(EmptyLedgerError):
        compute_confidence(TripleLedger(), ConfidenceRules())


def test_compliance_check_rejects_mismatched_weights():
    report = compute_confidence(ledger_with_counts(2, 1, 1), ConfidenceRules())
    with pytest.raises(ContractViolation):
        check_compliance(report, ConfidenceRules(w_conjectured=0.25))


def test_rules_validation():
    with pytest.raises(ContractViolation):
        ConfidenceRules(w_conjectured=1.0)  # must stay below w_confirmed
    with pytest.raises(ContractViolation):
        ConfidenceRules(threshold=1.5)
    with pytest.raises(ContractViolation):
        ConfidenceRules(max_rounds_per_layer=0)
    with pytest.raises(ContractViolation):
        ConfidenceRules(min_confirmed_core=-1)


# =============================================================================
# Initial classification
# =============================================================================


def test_classify_initial_assigns_sequential_ids():
    ledger = fresh_ledger()
    assert ledger.ids_in_order() == ["S1", "S2", "S3"]
    assert ledger.statements["S1"].klass is C
    assert ledger.statements["S3"].klass is U
    for stmt in ledger.statements.values():
        assert len(stmt.history) == 1
        assert stmt.history[0].cause is TransitionCause.INITIAL


def test_classify_initial_start_index():
    ledger = classify_initial([RawStatement("later layer claim", J)], start_index=7)
    assert ledger.ids_in_order() == ["S7"]


def test_append_initial_continues_numbering():
    ledger = fresh_ledger()
    new_ids = append_initial(ledger, [RawStatement("a fourth", J)], Origin(layer=2, round=1))
    assert new_ids == ["S4"]
    assert ledger.statements["S4"].origin.layer == 2


def test_empty_statement_text_rejected_with_index():
    with pytest.raises(StatementValidationError) as err:
        classify_initial([RawStatement("fine", C), RawStatement("   ", J)])
    assert err.value.index == 1


# =============================================================================
# Property tests
# =============================================================================

klass_st = st.sampled_from([C, J, U])


@st.composite
def valid_exchange(draw):
    initial = draw(klass_st)
    challenged = draw(st.booleans())
    if not challenged:
        return initial, False, None, None, None
    defense = draw(st.sampled_from(list(DefenseKind)))
    target = None
    if defense is DOWN:
        lower = [k for k in (J, U) if k < initial]
        if not lower:
            defense = draw(st.sampled_from([OK, PART, SILENT, FAILED]))
        else:
            target = draw(st.sampled_from(lower))
    stance = draw(st.sampled_from([ACC, MAINT]))
    return initial, True, defense, stance, target


@given(valid_exchange())
def test_unknown_is_absorbing(exchange):
    initial, challenged, defense, stance, target = exchange
    final = adjudicate_statement(initial, challenged, defense, stance, target)
    if initial is U:
        assert final is U


@given(valid_exchange())
def test_confirmed_gate(exchange):
    """Confirmed output requires either no challenge or a fully accepted defense."""
    initial, challenged, defense, stance, target = exchange
    final = adjudicate_statement(initial, challenged, defense, stance, target)
    if final is C:
        assert (not challenged and initial is C) or (defense is OK and stance is ACC)


@given(valid_exchange())
def test_downgrade_lands_on_target(exchange):
    initial, challenged, defense, stance, target = exchange
    final = adjudicate_statement(initial, challenged, defense, stance, target)
    if defense is DOWN:
        assert final is target


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30))
def test_confidence_bounds(c, j, u):
    if c + j + u == 0:
        return
    report = compute_confidence(ledger_with_counts(c, j, u), ConfidenceRules())
    assert 0.0 <= report.value <= 1.0


@given(st.integers(0, 20), st.integers(0, 20), st.integers(1, 20))
def test_confidence_monotone_under_upgrade(c, j, u):
    """Moving one statement from unknown to conjectured never lowers the value."""
    rules = ConfidenceRules()
    before = compute_confidence(ledger_with_counts(c, j, u), rules)
    after = compute_confidence(ledger_with_counts(c, j + 1, u - 1), rules)
    assert after.value >= before.value


@settings(max_examples=60)
@given(
    st.lists(klass_st, min_size=1, max_size=8),
    st.data(),
)
def test_round_preserves_partition_and_history_chain(classes, data):
    ledger = classify_initial([RawStatement(f"claim {i}", k) for i, k in enumerate(classes)])
    ids = ledger.ids_in_order()
    verdicts, defenses, stances = [], [], []
    for sid in ids:
        action = data.draw(st.sampled_from(["skip", "accept", "object"]), label=sid)
        if action == "skip":
            continue
        if action == "accept":
            verdicts.append(CriticVerdict(sid, VerdictStance.ACCEPT))
            continue
        verdicts.append(objection(sid))
        initial = ledger.statements[sid].klass
        kinds = [OK, PART, SILENT, FAILED]
        if initial is not U:
            kinds.append(DOWN)
        kind = data.draw(st.sampled_from(kinds), label=f"{sid}-defense")
        if kind is DOWN:
            target = data.draw(
                st.sampled_from([k for k in (J, U) if k < initial]), label=f"{sid}-target"
            )
            defenses.append(DefenseOutcome(sid, kind, downgrade_target=target))
        else:
            defenses.append(DefenseOutcome(sid, kind))
        stances.append(PostDefenseStance(sid, data.draw(st.sampled_from([ACC, MAINT]), label=f"{sid}-stance")))

    out = adjudicate_round(ledger, verdicts, defenses, stances, round_index=2)
    out.check_partition()
    c, j, u = out.counts()
    assert c + j + u == len(classes)
    for stmt in out.statements.values():
        assert stmt.history[-1].to_class is stmt.klass
        for prev, nxt in zip(stmt.history, stmt.history[1:]):
            assert prev.to_class is nxt.from_class
