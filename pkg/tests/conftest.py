import math

import pytest

from ddxkit.kb import CLINICAL, DEMOGRAPHIC, Disease, Finding, KnowledgeBase


def make_kb(diseases, findings, freqs) -> KnowledgeBase:
    """Shorthand KB builder for tests.

    diseases: list of ids; findings: list of id, (id, kind) or
    (id, kind, mutex_group) tuples; freqs: {(disease, finding): q}.
    """
    ds = [Disease(id=d, display_name=d) for d in diseases]
    fs = []
    for f in findings:
        if isinstance(f, str):
            f = (f, CLINICAL, None)
        elif len(f) == 2:
            f = (f[0], f[1], None)
        fs.append(Finding(id=f[0], display_name=f[0], kind=f[1], mutex_group=f[2]))
    return KnowledgeBase(diseases=ds, findings=fs, frequencies=dict(freqs))


@pytest.fixture
def flu_kb() -> KnowledgeBase:
    return make_kb(
        ["cold", "flu"],
        [
            "cough",
            "fatigue",
            "fever",
            "rash",
            ("female", DEMOGRAPHIC, "sex"),
            ("male", DEMOGRAPHIC, "sex"),
        ],
        {
            ("flu", "fever"): 0.8,
            ("flu", "cough"): 0.5,
            ("flu", "fatigue"): 0.5,
            ("flu", "male"): 0.5,
            ("flu", "female"): 0.5,
            ("cold", "cough"): 0.9,
            ("cold", "fatigue"): 0.3,
            ("cold", "rash"): 0.05,
            ("cold", "male"): 0.5,
            ("cold", "female"): 0.5,
        },
    )


def oracle_score(kb: KnowledgeBase, disease_id: str, pos, neg) -> float:
    """Brute-force reimplementation of the expert scoring rule."""
    eps = 1e-3
    total = 0.0
    for fid in pos:
        q = kb.frequencies.get((disease_id, fid), 0.0)
        if q == 0.0 and kb.finding(fid).kind == DEMOGRAPHIC:
            return -math.inf
        total += math.log(eps + q)
    for fid in neg:
        q = kb.frequencies.get((disease_id, fid), 0.0)
        total += math.log(eps + 1.0 - q)
    return total


def oracle_inference(kb: KnowledgeBase, pos, neg, k: int):
    """Brute-force expert differential: enumerate, keep top-k, softmax."""
    scores = {d.id: oracle_score(kb, d.id, pos, neg) for d in kb.diseases}
    finite = [(did, s) for did, s in scores.items() if s != -math.inf]
    if not finite:
        raise ValueError("all diseases excluded")
    finite.sort(key=lambda t: (-t[1], t[0]))
    kept = finite[:k]
    m = max(s for _, s in kept)
    weights = [(did, math.exp(s - m)) for did, s in kept]
    z = sum(w for _, w in weights)
    ranked = [(did, w / z) for did, w in weights if w / z > 0.0]
    ranked.sort(key=lambda t: (-t[1], t[0]))
    return ranked
