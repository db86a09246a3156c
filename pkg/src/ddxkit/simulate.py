"""Synthetic clinical case generation from a knowledge base.

Each case starts from a seed disease y. Demographics are drawn first, each
included with probability FREQ(y, f) under mutual exclusion. A target count
L is then drawn and the disease's clinical findings are walked once in
descending-frequency order: common findings (FREQ >= pos_threshold) enter
the positives with probability FREQ(y, f), rare ones enter the explicit
negatives when a uniform draw exceeds neg_gate. The resulting finding sets
are labeled with the expert engine's differential diagnosis, so the label
is a distribution over diseases rather than the seed alone.

Every case owns an RNG stream derived from (seed, case index), which makes
datasets reproducible byte-for-byte and independent of worker count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .expert import DifferentialDiagnosis, expert_inference
from .kb import KnowledgeBase, frequency, sorted_findings

CASE_SOURCES = ("expert_sim", "assessment", "vignette")


@dataclass(frozen=True)
class SimConfig:
    cases_total: int
    seed: int = 0
    min_cases_per_disease: int = 50
    ddx_top_k: int = 5
    pos_threshold: float = 0.2
    neg_gate: float = 0.75
    max_findings_cap: int = 40

    def __post_init__(self):
        if self.cases_total < 1:
            raise ValueError("cases_total must be >= 1")
        if self.min_cases_per_disease < 0:
            raise ValueError("min_cases_per_disease must be >= 0")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.ddx_top_k < 1:
            raise ValueError("ddx_top_k must be >= 1")
        for name in ("pos_threshold", "neg_gate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.max_findings_cap < 1:
            raise ValueError("max_findings_cap must be >= 1")


@dataclass(frozen=True)
class ClinicalCase:
    id: str
    pos: frozenset[str]
    neg: frozenset[str]
    ddx: DifferentialDiagnosis
    source: str = "expert_sim"
    seed_disease: str | None = None

    def __post_init__(self):
        overlap = self.pos & self.neg
        if overlap:
            raise ValueError(f"case {self.id!r}: findings in both pos and neg: {sorted(overlap)}")
        if self.source not in CASE_SOURCES:
            raise ValueError(f"case {self.id!r}: source must be one of {CASE_SOURCES}, got {self.source!r}")


def remove_mutex(kb: KnowledgeBase, pool: list[str], selected_pos: set[str] | frozenset[str]) -> list[str]:
    """Drop pool findings sharing a mutex group with any selected finding.

    Selected findings themselves are dropped too; survivors keep their
    order. Findings without a group never conflict.
    """
    taken_groups = {g for g in (kb.mutex_group(f) for f in selected_pos) if g is not None}
    out = []
    for fid in pool:
        if fid in selected_pos:
            continue
        g = kb.mutex_group(fid)
        if g is not None and g in taken_groups:
            continue
        out.append(fid)
    return out


def case_rng(seed: int, case_index: int) -> np.random.Generator:
    """Independent per-case stream; generation order cannot matter."""
    return np.random.default_rng(np.random.SeedSequence([seed, 1, case_index]))


def simulate_case(
    kb: KnowledgeBase,
    disease_id: str,
    rng: np.random.Generator,
    cfg: SimConfig,
    case_id: str = "sim-0",
) -> ClinicalCase:
    """Generate one labeled case seeded on `disease_id`."""
    clinical = sorted_findings(kb, disease_id)
    if not clinical:
        raise ValueError(f"disease {disease_id!r} has no nonzero clinical findings; cannot simulate")

    pos: set[str] = set()
    neg: set[str] = set()

    # Demographic pass, ascending id order. Each surviving candidate is
    # included with probability FREQ(y, f); an inclusion knocks out the
    # rest of its mutex group.
    demo_pool = [f.id for f in kb.demographic_findings()]
    while demo_pool:
        fid = demo_pool.pop(0)
        if rng.random() < frequency(kb, disease_id, fid):
            pos.add(fid)
            demo_pool = remove_mutex(kb, demo_pool, {fid})
    n_demo = len(pos)

    # The clinical pool honors mutex groups already taken by demographics.
    pool = remove_mutex(kb, clinical, pos)
    upper = max(5, min(len(pool), cfg.max_findings_cap))
    target = int(rng.integers(5, upper, endpoint=True)) + n_demo

    while pool and len(pos) + len(neg) <= target:
        fid = pool.pop(0)
        q = frequency(kb, disease_id, fid)
        if q >= cfg.pos_threshold:
            if rng.random() < q:
                pos.add(fid)
                pool = remove_mutex(kb, pool, {fid})
        else:
            if rng.random() > cfg.neg_gate:
                neg.add(fid)

    ddx = expert_inference(kb, pos, neg, cfg.ddx_top_k)
    return ClinicalCase(
        id=case_id,
        pos=frozenset(pos),
        neg=frozenset(neg),
        ddx=ddx,
        source="expert_sim",
        seed_disease=disease_id,
    )


def simulable_diseases(kb: KnowledgeBase) -> list[str]:
    """Disease ids with at least one nonzero clinical finding, ascending."""
    return sorted(d.id for d in kb.diseases if sorted_findings(kb, d.id))


def simulate_dataset(kb: KnowledgeBase, cfg: SimConfig, threads: int = 1) -> list[ClinicalCase]:
    """Generate cfg.cases_total cases with a per-disease floor.

    The first min_cases_per_disease * |D*| cases cover every simulable
    disease in ascending id order; the remainder draws seed diseases
    uniformly. Output is fully determined by (kb, cfg).
    """
    dstar = simulable_diseases(kb)
    if not dstar:
        raise ValueError("no simulable disease in knowledge base")
    floor = len(dstar) * cfg.min_cases_per_disease
    if cfg.cases_total < floor:
        raise ValueError(
            f"cases_total={cfg.cases_total} cannot cover {len(dstar)} diseases "
            f"x min_cases_per_disease={cfg.min_cases_per_disease} (= {floor})"
        )
    labels = [d for d in dstar for _ in range(cfg.min_cases_per_disease)]
    chooser = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    labels.extend(dstar[int(chooser.integers(len(dstar)))] for _ in range(cfg.cases_total - floor))

    def build(i: int) -> ClinicalCase:
        return simulate_case(kb, labels[i], case_rng(cfg.seed, i), cfg, case_id=f"sim-{i}")

    indices = range(cfg.cases_total)
    if threads <= 1:
        return [build(i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(build, indices))
