"""Author the bundled scripted-session fixtures.

Each fixture is a JSON map of step key -> reply text with the session segment
wildcarded to '*', so any session id can run against it. Regenerate with:

    python3 scripts/build_bundled_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "ramtn" / "data" / "fixtures"


BUFFETT_EXTRACTION = {
    "*/L1/R1/constructor": "\n".join(
        [
            "#CONFIRMED",
            "- S1: PRINCIPLE: 严格价格纪律：坚守估值上限，超过合理估值区间立即放弃，无论品牌多么诱人。",
            "- S2: PRINCIPLE: 定价权优先：持续提价而不流失客户的能力，是比当前利润更可靠的安全边际。",
            "- S3: PRINCIPLE: 低资本再投入偏好：优先选择维持增长几乎不需要追加资本开支的生意。",
            "- S5: TEMPLATE[factual]: 该判断依据哪一笔具体交易或哪一组经营数据？请指出来源：{statement}",
            "- S6: TEMPLATE[completeness]: {statement} 在什么市场环境或什么规模下会失效？",
            "- S7: CONSTRAINT[hard]: 任何出价不得超过按保守盈利假设计算的估值上限。",
            "#CONJECTURED",
            "- S4: PRINCIPLE: 风险控制优先：宁可错过机会，也不承担无法量化的下行风险。",
            "#UNKNOWN",
            "- S8: PRINCIPLE: 管理层更换后的品牌资产留存率需要更多案例才能形成判断。",
        ]
    ),
    # The engine assigns ids in document order: S1..S6 are the confirmed
    # block, S7 the conjectured principle, S8 the unknown one.
    "*/L1/R1/critic": "\n".join(
        [
            "#VERDICT S1: ACCEPT",
            '#VERDICT S2: OBJECT FACTUAL "提价能力的证据只来自单一案例，样本可能不足"',
            "#VERDICT S3: ACCEPT",
            "#VERDICT S4: ACCEPT",
            "#VERDICT S5: ACCEPT",
            "#VERDICT S6: ACCEPT",
            '#VERDICT S7: OBJECT LOGICAL "无法量化的界定含糊，原则缺乏可操作的判定条件"',
            "#VERDICT S8: ACCEPT",
        ]
    ),
    "*/L1/R1/responder": "\n".join(
        [
            '#RESPONSE S2: DEFEND "喜诗糖果连续多年提价后销量与回购率保持稳定，提价记录跨越完整通胀周期，并非单一数据点"',
            "#STANCE S2: ACCEPT",
            '#RESPONSE S7: DEFEND "下行风险可用永久性资本损失概率界定：估值透支、杠杆、技术替代三类情形均可检验"',
            "#STANCE S7: ACCEPT",
        ]
    ),
    # Silent observer: the mechanical outcome stands, and in the interactive
    # variant a human downgrade must not be overridden.
    "*/L1/R1/observer": "",
}


INVESTMENT_ENHANCEMENT = {
    "*/L1/R1/constructor": "\n".join(
        [
            "#CONFIRMED",
            "- S1: 标的拥有持续提价而不流失客户的记录，具备真实定价权 @P2",
            "- S2: 28倍市盈率超出保守估值上限，按价格纪律应当放弃或大幅压价 @P1",
            "- S3: 维持增长所需的再投资极低，自由现金流转化率高 @P3",
            "- S4: 品牌在区域市场的复购率数据完整且可独立验证",
            "- S5: 管理层过去十年的资本配置记录与股东利益一致",
            "#CONJECTURED",
            "- S6: 提价空间在未来五年仍能保持每年5%以上 @P2",
            "- S7: 竞争对手的扩张不会侵蚀其利基市场",
            "#UNKNOWN",
            "- S8: 新渠道对毛利结构的长期影响",
        ]
    ),
    "*/L1/R1/critic": "\n".join(
        [
            "#VERDICT S1: ACCEPT",
            "#VERDICT S2: ACCEPT",
            "#VERDICT S3: ACCEPT",
            "#VERDICT S4: ACCEPT",
            '#VERDICT S5: OBJECT COMPLETENESS "资本配置记录未覆盖行业下行期，样本期的选择可能美化了结论"',
            '#VERDICT S6: OBJECT LOGICAL "从历史提价外推未来五年，未论证需求价格弹性是否恶化"',
            "#VERDICT S7: ACCEPT",
            "#VERDICT S8: ACCEPT",
        ]
    ),
    "*/L1/R1/responder": "\n".join(
        [
            '#RESPONSE S5: DEFEND "样本期包含两次完整衰退周期，下行期的配置纪录并未缺失"',
            "#STANCE S5: ACCEPT",
            '#RESPONSE S6: DEFEND "近三次提价后的量价数据显示需求弹性低于0.3，外推假设有实证支撑"',
            "#STANCE S6: ACCEPT",
        ]
    ),
    "*/L1/R1/observer": "",
}


MEDICAL_ENHANCEMENT = {
    "*/L1/R1/constructor": "\n".join(
        [
            "#CONFIRMED",
            "- S1: The working diagnosis of organizing pneumonia explains both the CT finding and the subacute course @P1",
            "- S2: Layered exclusion has ruled out the three dangerous mimics: malignancy, tuberculosis, and vasculitis @P2",
            "- S3: A steroid treatment response within two weeks would close the multi-modal evidence loop @P3",
            "- S4: The risk of a missed malignancy is controlled by the scheduled follow-up imaging",
            "- S5: Outpatient management is appropriate given stable vitals and no hypoxia",
            "- S6: The imaging pattern is classic for the working diagnosis",
            "#CONJECTURED",
            "- S7: The failed antibiotic course already makes an atypical infection unlikely",
            "#UNKNOWN",
            "- S8: Whether an occult autoimmune process is driving the presentation",
        ]
    ),
    "*/L1/R1/critic": "\n".join(
        [
            "#VERDICT S1: ACCEPT",
            "#VERDICT S2: ACCEPT",
            "#VERDICT S3: ACCEPT",
            '#VERDICT S4: OBJECT FACTUAL "the follow-up interval is asserted without guideline support for this lesion size"',
            "#VERDICT S5: ACCEPT",
            "#VERDICT S6: ACCEPT",
            '#VERDICT S7: OBJECT LOGICAL "antibiotic failure does not by itself discriminate atypical infection from inflammation"',
            "#VERDICT S8: ACCEPT",
        ]
    ),
    "*/L1/R1/responder": "\n".join(
        [
            '#RESPONSE S4: DEFEND "the six-week interval matches the society guideline for sub-centimeter consolidation in a never-smoker"',
            "#STANCE S4: ACCEPT",
            '#RESPONSE S7: DEFEND "the course covered both typical and atypical coverage windows at adequate dosing, which does discriminate"',
            "#STANCE S7: ACCEPT",
        ]
    ),
    "*/L1/R1/observer": "",
}


TEACHING_ENHANCEMENT = {
    "*/L1/R1/constructor": "\n".join(
        [
            "#CONFIRMED",
            "- S1: The entry diagnosis shows three stable ability clusters, so instruction must split at the concept-introduction step @P1",
            "- S2: The mid-lesson checkpoint gives a clean signal for regrouping before guided practice @P2",
            "- S3: Matching each cluster to a different practice strategy keeps all three groups inside their zone of productive struggle @P3",
            "- S4: The fast cluster can absorb an extension task without teacher attention for ten minutes",
            "- S5: Board work plus worked examples covers the middle cluster's main error pattern",
            "- S6: The support cluster needs manipulatives before symbolic practice",
            "- S7: One checkpoint per lesson is enough to keep the grouping current",
            "#CONJECTURED",
            "- S8: Peer tutoring between the fast and support clusters will hold attention through the final segment",
        ]
    ),
    "*/L1/R1/critic": "\n".join(
        [
            "#VERDICT S1: ACCEPT",
            "#VERDICT S2: ACCEPT",
            "#VERDICT S3: ACCEPT",
            "#VERDICT S4: ACCEPT",
            '#VERDICT S5: OBJECT COMPLETENESS "the plan does not say what the middle cluster does when the error pattern is not the main one"',
            "#VERDICT S6: ACCEPT",
            "#VERDICT S7: ACCEPT",
            '#VERDICT S8: OBJECT LOGICAL "attention effects of cross-level tutoring are assumed, not evidenced for this class"',
        ]
    ),
    "*/L1/R1/responder": "\n".join(
        [
            '#RESPONSE S5: DEFEND "the checkpoint routes students with other error patterns to the support strategy, so the case is covered"',
            "#STANCE S5: ACCEPT",
            '#RESPONSE S8: PARTIAL "last term\'s pairing log shows mixed results; keep it but with a fallback"',
        ]
    ),
    "*/L1/R1/observer": '#RULING S7: CONJECTURED "one checkpoint is a habit claim, not a measured sufficiency; keep it provisional"',
}


FIXTURES = {
    "buffett-extraction": BUFFETT_EXTRACTION,
    "investment-enhancement": INVESTMENT_ENHANCEMENT,
    "medical-enhancement": MEDICAL_ENHANCEMENT,
    "teaching-enhancement": TEACHING_ENHANCEMENT,
}


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for name, table in FIXTURES.items():
        path = OUT_DIR / f"{name}.fixture.json"
        path.write_text(
            json.dumps(table, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(f"wrote {path} ({len(table)} keys)")


if __name__ == "__main__":
    main()
