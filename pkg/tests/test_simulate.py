import collections

import numpy as np
import pytest

from ddxkit.data import write_cases
from ddxkit.kb import DEMOGRAPHIC
from ddxkit.simulate import (
    ClinicalCase,
    SimConfig,
    case_rng,
    remove_mutex,
    simulable_diseases,
    simulate_case,
    simulate_dataset,
)
from ddxkit.synthetic import make_separable_kb

from conftest import make_kb


@pytest.fixture
def mutex_kb():
    return make_kb(
        ["d"],
        [
            ("age_adult", DEMOGRAPHIC, "age"),
            ("age_child", DEMOGRAPHIC, "age"),
            ("male", DEMOGRAPHIC, "sex"),
            "cough",
            "fever",
        ],
        {("d", "cough"): 1.0, ("d", "fever"): 0.9, ("d", "age_adult"): 1.0, ("d", "age_child"): 1.0},
    )


def test_remove_mutex_drops_whole_group(mutex_kb):
    pool = ["age_child", "age_adult", "cough"]
    assert remove_mutex(mutex_kb, pool, {"age_adult"}) == ["cough"]


def test_remove_mutex_without_shared_groups_is_noop(mutex_kb):
    assert remove_mutex(mutex_kb, ["cough", "fever"], {"male"}) == ["cough", "fever"]
    assert remove_mutex(mutex_kb, [], {"male"}) == []


def test_certain_findings_are_always_elicited():
    kb = make_kb(["d"], ["f0", "f1", "f2", "f3", "f4"], {("d", f"f{i}"): 1.0 for i in range(5)})
    for seed in range(10):
        case = simulate_case(kb, "d", case_rng(seed, 0), SimConfig(cases_total=1))
        assert case.pos == frozenset({"f0", "f1", "f2", "f3", "f4"})
        assert case.neg == frozenset()
        assert case.seed_disease == "d"


def test_unsimulable_disease_raises():
    kb = make_kb(["d"], [("male", DEMOGRAPHIC, "sex")], {("d", "male"): 1.0})
    with pytest.raises(ValueError, match="no nonzero clinical findings"):
        simulate_case(kb, "d", case_rng(0, 0), SimConfig(cases_total=1))
    assert simulable_diseases(kb) == []


def test_mutex_demographics_yield_exactly_one(mutex_kb):
    for seed in range(1000):
        case = simulate_case(mutex_kb, "d", case_rng(seed, 0), SimConfig(cases_total=1))
        assert len(case.pos & {"age_adult", "age_child"}) == 1


def test_case_invariants_hold_across_a_dataset():
    kb = make_separable_kb(n_diseases=6)
    groups = {f.id: f.mutex_group for f in kb.findings}
    cases = simulate_dataset(kb, SimConfig(cases_total=300, min_cases_per_disease=10, seed=3))
    for case in cases:
        assert not case.pos & case.neg
        by_group = collections.Counter(groups[f] for f in case.pos if groups.get(f))
        assert all(count == 1 for count in by_group.values())
        assert abs(sum(p for _, p in case.ddx.entries) - 1.0) < 1e-9


def test_at_least_five_findings_when_available():
    kb = make_kb(["d"], [f"f{i}" for i in range(8)], {("d", f"f{i}"): 1.0 for i in range(8)})
    for seed in range(50):
        case = simulate_case(kb, "d", case_rng(seed, 0), SimConfig(cases_total=1))
        assert len(case.pos | case.neg) >= 5


def test_dataset_respects_per_disease_floor():
    kb = make_separable_kb(n_diseases=4)
    cases = simulate_dataset(kb, SimConfig(cases_total=130, min_cases_per_disease=30, seed=1))
    assert len(cases) == 130
    counts = collections.Counter(c.seed_disease for c in cases)
    assert all(counts[d] >= 30 for d in simulable_diseases(kb))
    assert [c.id for c in cases[:3]] == ["sim-0", "sim-1", "sim-2"]


def test_dataset_count_without_floor():
    kb = make_kb(["d"], ["a", "b", "c"], {("d", "a"): 0.9, ("d", "b"): 0.5, ("d", "c"): 0.3})
    cases = simulate_dataset(kb, SimConfig(cases_total=10, min_cases_per_disease=0, seed=0))
    assert len(cases) == 10


def test_dataset_rejects_unreachable_floor():
    kb = make_separable_kb(n_diseases=4)
    with pytest.raises(ValueError, match="cases_total"):
        simulate_dataset(kb, SimConfig(cases_total=100, min_cases_per_disease=50, seed=0))


def test_dataset_is_deterministic_and_thread_independent():
    kb = make_separable_kb(n_diseases=5)
    cfg = SimConfig(cases_total=80, min_cases_per_disease=10, seed=42)
    a = write_cases(simulate_dataset(kb, cfg))
    b = write_cases(simulate_dataset(kb, cfg))
    c = write_cases(simulate_dataset(kb, cfg, threads=4))
    assert a == b == c
    different = write_cases(simulate_dataset(kb, SimConfig(cases_total=80, min_cases_per_disease=10, seed=43)))
    assert different != a


def test_inclusion_and_negative_rates():
    # One disease, five findings: the pool size pins the target count at 5,
    # so every finding is visited in every case.
    kb = make_kb(
        ["d"],
        ["fa", "fb", "fc", "fd", "fe"],
        {("d", "fa"): 0.9, ("d", "fb"): 0.8, ("d", "fc"): 0.7, ("d", "fd"): 0.3, ("d", "fe"): 0.05},
    )
    n = 4000
    cases = simulate_dataset(kb, SimConfig(cases_total=n, min_cases_per_disease=0, seed=9))
    pos_rate = sum("fa" in c.pos for c in cases) / n
    neg_rate = sum("fe" in c.neg for c in cases) / n
    assert 0.87 <= pos_rate <= 0.93
    assert 0.22 <= neg_rate <= 0.28
    assert not any("fe" in c.pos for c in cases)


def test_seed_disease_stays_in_differential_on_separable_kb():
    kb = make_separable_kb()
    cases = simulate_dataset(kb, SimConfig(cases_total=400, min_cases_per_disease=20, seed=5))
    hit = sum(c.seed_disease in c.ddx.diseases for c in cases) / len(cases)
    assert hit >= 0.95


def test_clinical_case_validates_itself():
    from ddxkit.data import normalize_ddx

    ddx = normalize_ddx([("d", 1.0)])
    with pytest.raises(ValueError, match="both pos and neg"):
        ClinicalCase(id="x", pos=frozenset({"a"}), neg=frozenset({"a"}), ddx=ddx)
    with pytest.raises(ValueError, match="source"):
        ClinicalCase(id="x", pos=frozenset(), neg=frozenset(), ddx=ddx, source="dream")


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(cases_total=0)
    with pytest.raises(ValueError):
        SimConfig(cases_total=1, pos_threshold=1.5)
    with pytest.raises(ValueError):
        SimConfig(cases_total=1, seed=-1)
