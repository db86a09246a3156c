import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddxkit.expert import (
    DifferentialDiagnosis,
    SMOOTHING_EPS,
    expert_inference,
    score_disease,
    softmax_normalize,
)
from ddxkit.kb import DEMOGRAPHIC

from conftest import make_kb, oracle_inference, oracle_score


def test_empty_observations_score_zero(flu_kb):
    assert score_disease(flu_kb, "flu", set(), set()) == 0.0


def test_single_positive_finding_score(flu_kb):
    # FREQ(flu, fever) = 0.8 -> ln(eps + 0.8)
    expected = math.log(SMOOTHING_EPS + 0.8)
    assert score_disease(flu_kb, "flu", {"fever"}, set()) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-0.221894, abs=1e-6)


def test_negative_finding_score(flu_kb):
    expected = math.log(SMOOTHING_EPS + 1.0 - 0.8)
    assert score_disease(flu_kb, "flu", set(), {"fever"}) == pytest.approx(expected, abs=1e-12)


def test_unlinked_demographic_excludes_disease():
    kb = make_kb(
        ["d"],
        [("female", DEMOGRAPHIC, "sex"), "cough"],
        {("d", "cough"): 0.5},
    )
    assert score_disease(kb, "d", {"female"}, set()) == -math.inf
    # an unlinked clinical finding only penalizes
    assert score_disease(kb, "d", {"cough", "female"}, set()) == -math.inf
    assert math.isfinite(score_disease(kb, "d", {"cough"}, set()))


def test_score_rejects_bad_inputs(flu_kb):
    with pytest.raises(ValueError, match="both pos and neg"):
        score_disease(flu_kb, "flu", {"fever"}, {"fever"})
    with pytest.raises(KeyError):
        score_disease(flu_kb, "flu", {"hiccups"}, set())
    with pytest.raises(KeyError):
        score_disease(flu_kb, "plague", {"fever"}, set())


def test_softmax_symmetry():
    assert softmax_normalize([0.0, 0.0]) == [0.5, 0.5]


def test_softmax_matches_direct_evaluation():
    # raw differential scores 26.9 / 23.4 / 22.9, normalized by hand
    raw = [26.9, 23.4, 22.9]
    m = max(raw)
    exps = [math.exp(s - m) for s in raw]
    expected = [e / sum(exps) for e in exps]
    result = softmax_normalize(raw)
    assert result == pytest.approx(expected, abs=1e-15)
    assert result == pytest.approx([0.9537, 0.0288, 0.0175], abs=5e-5)


def test_softmax_sentinel_and_errors():
    assert softmax_normalize([5.0, -math.inf]) == [1.0, 0.0]
    with pytest.raises(ValueError):
        softmax_normalize([])
    with pytest.raises(ValueError):
        softmax_normalize([-math.inf, -math.inf])
    with pytest.raises(ValueError):
        softmax_normalize([math.nan, 0.0])
    with pytest.raises(ValueError):
        softmax_normalize([math.inf, 0.0])


@given(
    st.lists(st.floats(-50, 50), min_size=1, max_size=8),
    st.floats(-50, 50),
)
@settings(max_examples=200)
def test_softmax_shift_invariance_and_normalization(scores, shift):
    base = softmax_normalize(scores)
    shifted = softmax_normalize([s + shift for s in scores])
    assert sum(base) == pytest.approx(1.0, abs=1e-9)
    for a, b in zip(base, shifted):
        assert a == pytest.approx(b, abs=1e-12)


def test_inference_matches_oracle_on_small_kb(flu_kb):
    ddx = expert_inference(flu_kb, {"fever", "cough"}, {"rash"}, k=5)
    expected = oracle_inference(flu_kb, {"fever", "cough"}, {"rash"}, k=5)
    assert ddx.diseases == tuple(d for d, _ in expected)
    for (d, p), (od, op) in zip(ddx.entries, expected):
        assert d == od and p == pytest.approx(op, abs=1e-12)


def test_two_disease_renormalization():
    # raw scores -0.2 and -1.6 renormalize among themselves
    probs = softmax_normalize([-0.2, -1.6])
    assert probs == pytest.approx([0.8022, 0.1978], abs=5e-5)


def test_inference_k1_is_certain(flu_kb):
    ddx = expert_inference(flu_kb, {"fever"}, set(), k=1)
    assert len(ddx.entries) == 1
    assert ddx.entries[0] == ("flu", 1.0)


def test_inference_all_excluded_raises():
    kb = make_kb(["d"], [("male", DEMOGRAPHIC, "sex")], {})
    with pytest.raises(ValueError, match="excluded"):
        expert_inference(kb, {"male"}, set(), k=3)
    with pytest.raises(ValueError, match="k must be"):
        expert_inference(kb, set(), set(), k=0)


def test_inference_exhaustive_oracle_agreement():
    kb = make_kb(
        ["d0", "d1", "d2"],
        ["f0", "f1", "f2", ("f3", DEMOGRAPHIC, "sex")],
        {
            ("d0", "f0"): 0.9,
            ("d0", "f1"): 0.2,
            ("d1", "f1"): 0.7,
            ("d1", "f2"): 0.4,
            ("d1", "f3"): 0.5,
            ("d2", "f2"): 1.0,
            ("d2", "f3"): 0.5,
        },
    )
    fids = [f.id for f in kb.findings]
    for assignment in itertools.product((0, 1, 2), repeat=len(fids)):
        pos = {f for f, a in zip(fids, assignment) if a == 1}
        neg = {f for f, a in zip(fids, assignment) if a == 2}
        for k in (1, 2, 5):
            try:
                expected = oracle_inference(kb, pos, neg, k)
            except ValueError:
                with pytest.raises(ValueError):
                    expert_inference(kb, pos, neg, k)
                continue
            got = expert_inference(kb, pos, neg, k)
            assert got.diseases == tuple(d for d, _ in expected)
            for (d, p), (od, op) in zip(got.entries, expected):
                assert p == pytest.approx(op, abs=1e-12)


@st.composite
def random_kb_and_case(draw):
    n_d = draw(st.integers(2, 4))
    n_f = draw(st.integers(2, 6))
    diseases = [f"d{i}" for i in range(n_d)]
    findings = [f"f{i}" for i in range(n_f)]
    freqs = {}
    for d in diseases:
        for f in findings:
            q = draw(st.sampled_from([0.0, 0.1, 0.3, 0.6, 0.9]))
            if q:
                freqs[(d, f)] = q
    kb = make_kb(diseases, findings, freqs)
    labels = draw(st.lists(st.sampled_from([0, 1, 2]), min_size=n_f, max_size=n_f))
    pos = {f for f, a in zip(findings, labels) if a == 1}
    neg = {f for f, a in zip(findings, labels) if a == 2}
    return kb, pos, neg


@given(random_kb_and_case(), st.integers(0, 10))
@settings(max_examples=100)
def test_raising_a_positive_frequency_never_hurts_rank(case, salt):
    kb, pos, neg = case
    if not pos:
        return
    d = kb.diseases[salt % len(kb.diseases)].id
    f = sorted(pos)[salt % len(pos)]
    ranked = [did for did, _ in oracle_inference(kb, pos, neg, k=len(kb.diseases))]
    before = ranked.index(d) if d in ranked else len(ranked)

    bumped = dict(kb.frequencies)
    bumped[(d, f)] = min(1.0, bumped.get((d, f), 0.0) + 0.3)
    kb2 = make_kb([x.id for x in kb.diseases], [(x.id, x.kind, x.mutex_group) for x in kb.findings], bumped)
    ddx2 = expert_inference(kb2, pos, neg, k=len(kb.diseases))
    after = ddx2.diseases.index(d) if d in ddx2.diseases else len(ddx2.diseases)
    assert after <= before


def test_differential_invariants_are_enforced():
    with pytest.raises(ValueError, match="sum"):
        DifferentialDiagnosis(entries=(("a", 0.5), ("b", 0.4)), raw_scores=(0.0, 0.0))
    with pytest.raises(ValueError, match="sorted"):
        DifferentialDiagnosis(entries=(("a", 0.3), ("b", 0.7)), raw_scores=(0.0, 0.0))
    with pytest.raises(ValueError, match="> 0"):
        DifferentialDiagnosis(entries=(("a", 1.0), ("b", 0.0)), raw_scores=(0.0, 0.0))
    with pytest.raises(ValueError, match="empty"):
        DifferentialDiagnosis(entries=(), raw_scores=())
