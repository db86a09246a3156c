"""Desk-scale synthetic knowledge bases and assessment-style case sets.

`make_separable_kb` builds a KB whose diseases are separable by design:
each owns a few exclusive high-frequency findings, on top of background
findings shared by every disease and a small demographic block (sex plus
age brackets, one age ruled out per disease). Models trained on cases
simulated from it should recover the seed disease, which makes the KB a
useful end-to-end fixture.

`make_novel_disease_cases` fabricates cases for a disease the KB does not
know: a handful of exclusive out-of-KB findings, plus KB findings borrowed
from several existing diseases so that, with the novel findings stripped
away, the cases look like ambiguous mixtures of known diseases.
"""
from __future__ import annotations

import numpy as np

from .kb import CLINICAL, DEMOGRAPHIC, Disease, Finding, KnowledgeBase
from .simulate import ClinicalCase
from .data import normalize_ddx

SEXES = ("male", "female")
AGES = ("age_child", "age_young", "age_mid", "age_old")


def make_separable_kb(
    n_diseases: int = 20,
    exclusive_per_disease: int = 3,
    n_background: int = 6,
    seed: int = 0,
    exclusive_freq: tuple[float, float] = (0.7, 0.95),
) -> KnowledgeBase:
    rng = np.random.default_rng(seed)
    diseases = [Disease(id=f"d{i:02d}", display_name=f"Disease {i:02d}") for i in range(n_diseases)]

    findings: list[Finding] = []
    freqs: dict[tuple[str, str], float] = {}

    for i, d in enumerate(diseases):
        for j in range(exclusive_per_disease):
            fid = f"d{i:02d}_f{j}"
            findings.append(Finding(id=fid, display_name=f"Exclusive finding {j} of {d.id}", kind=CLINICAL))
            freqs[(d.id, fid)] = float(rng.uniform(*exclusive_freq))

    # Background findings link to every disease: half pos-eligible at
    # moderate frequency, half rare enough to feed the negative gate.
    for b in range(n_background):
        fid = f"bg{b}"
        findings.append(Finding(id=fid, display_name=f"Background finding {b}", kind=CLINICAL))
        lo, hi = ((0.25, 0.45) if b < (n_background + 1) // 2 else (0.04, 0.12))
        for d in diseases:
            freqs[(d.id, fid)] = float(rng.uniform(lo, hi))

    for sex in SEXES:
        findings.append(Finding(id=sex, display_name=sex, kind=DEMOGRAPHIC, mutex_group="sex"))
    for age in AGES:
        findings.append(Finding(id=age, display_name=age.replace("_", " "), kind=DEMOGRAPHIC, mutex_group="age"))

    for i, d in enumerate(diseases):
        split = float(rng.uniform(0.35, 0.65))
        freqs[(d.id, "male")] = split
        freqs[(d.id, "female")] = 1.0 - split
        impossible = int(rng.integers(len(AGES)))  # one age bracket per disease is ruled out
        for a, age in enumerate(AGES):
            if a != impossible:
                freqs[(d.id, age)] = float(rng.uniform(0.2, 0.6))

    return KnowledgeBase(diseases=diseases, findings=findings, frequencies=freqs)


def novel_finding_ids(n: int = 5, novel_id: str = "novel") -> list[str]:
    return [f"{novel_id}_x{j}" for j in range(n)]


def make_novel_disease_cases(
    kb: KnowledgeBase,
    novel_id: str = "novel",
    n_cases: int = 20,
    n_novel_findings: int = 5,
    borrow_per_case: int = 4,
    seed: int = 7,
) -> list[ClinicalCase]:
    """One-hot labeled cases for a disease outside the KB.

    Each case carries the novel disease's exclusive out-of-KB findings on
    top of a KB-visible part built to look like the simulated population:
    one exclusive finding borrowed from each of `borrow_per_case` distinct
    KB diseases, backgrounds and explicit negatives at population-typical
    rates, and demographics compatible with every borrowed disease. With
    the novel findings stripped away the case is an ambiguous mixture of
    known diseases rather than a recognizable novel signature.
    """
    from .kb import frequency

    rng = np.random.default_rng(seed)
    novel = novel_finding_ids(n_novel_findings, novel_id)
    common_bg = sorted(f.id for f in kb.findings if f.id.startswith("bg"))[: 3]
    rare_bg = sorted(f.id for f in kb.findings if f.id.startswith("bg"))[3:]
    cases = []
    for t in range(n_cases):
        pos = {f for f in novel if rng.random() < 0.8}
        if not pos:
            pos.add(novel[int(rng.integers(len(novel)))])
        sex = SEXES[int(rng.integers(len(SEXES)))]
        age = AGES[int(rng.integers(len(AGES)))]
        pos |= {sex, age}
        # Borrow only from diseases plausible under the case's demographics,
        # so every borrowed disease stays a live competitor for a masked model.
        pool = [
            d.id
            for d in kb.diseases
            if frequency(kb, d.id, sex) > 0 and frequency(kb, d.id, age) > 0
        ]
        for did in rng.choice(pool, size=min(borrow_per_case, len(pool)), replace=False):
            owned = [f.id for f in kb.findings if f.id.startswith(f"{did}_")]
            pos.add(owned[int(rng.integers(len(owned)))])
        pos |= {f for f in common_bg if rng.random() < 0.35}
        neg = {f for f in rare_bg if rng.random() < 0.25}
        cases.append(
            ClinicalCase(
                id=f"{novel_id}-{t}",
                pos=frozenset(pos),
                neg=frozenset(neg),
                ddx=normalize_ddx([(novel_id, 1.0)]),
                source="assessment",
                seed_disease=novel_id,
            )
        )
    return cases
