"""Embedding-bag diagnosis model.

Every finding owns two embedding rows, one for observed-present and one for
observed-absent (rows 2i and 2i+1 for finding index i). A case's gathered
rows are averaged, projected to disease logits, and log-softmax normalized.
Observed demographic values contribute a second stream: their L-dimensional
rows are summed and log-softmax normalized into a prior that is added to
the finding stream, then the combination is renormalized. A demographic row
initialized to MASK at a disease the KB rules out pins that disease's
probability near zero whenever the demographic is observed, while staying
trainable.

Checkpoints are a versioned JSON container with the vocabulary and the
parameter blocks as base64 little-endian float64 in row-major order.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .data import Vocabulary
from .kb import KnowledgeBase, frequency

DEMOGRAPHIC_MASK = -30.0
CHECKPOINT_FORMAT = "ddx-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelInput:
    """Vocabulary-index view of one case; index tuples are kept sorted."""

    pos_clinical: tuple[int, ...]
    neg_clinical: tuple[int, ...]
    demo: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "pos_clinical", tuple(sorted(self.pos_clinical)))
        object.__setattr__(self, "neg_clinical", tuple(sorted(self.neg_clinical)))
        object.__setattr__(self, "demo", tuple(sorted(self.demo)))
        if set(self.pos_clinical) & set(self.neg_clinical):
            raise ValueError("a finding cannot be both present and absent")

    @property
    def n_rows(self) -> int:
        return len(self.pos_clinical) + len(self.neg_clinical)


@dataclass
class ModelParameters:
    finding_embeddings: np.ndarray  # [2K, D]
    projection: np.ndarray  # [D, L]
    bias: np.ndarray  # [L]
    demographic_embeddings: np.ndarray  # [M, L]
    vocab: Vocabulary

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(K findings, L diseases, D embedding dim, M demographic values)."""
        return (
            self.vocab.n_findings,
            self.vocab.n_diseases,
            self.finding_embeddings.shape[1],
            self.vocab.n_demographics,
        )

    def blocks(self) -> dict[str, np.ndarray]:
        return {
            "finding_embeddings": self.finding_embeddings,
            "projection": self.projection,
            "bias": self.bias,
            "demographic_embeddings": self.demographic_embeddings,
        }

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            finding_embeddings=self.finding_embeddings.copy(),
            projection=self.projection.copy(),
            bias=self.bias.copy(),
            demographic_embeddings=self.demographic_embeddings.copy(),
            vocab=self.vocab,
        )

    def validate(self) -> None:
        K, L, D, M = self.dims
        expected = {
            "finding_embeddings": (2 * K, D),
            "projection": (D, L),
            "bias": (L,),
            "demographic_embeddings": (M, L),
        }
        for name, arr in self.blocks().items():
            if arr.shape != expected[name]:
                raise ValueError(f"{name}: shape {arr.shape} != expected {expected[name]}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite entries")


def init_parameters(
    vocab: Vocabulary, dim: int, seed: int, kb: KnowledgeBase | None = None
) -> ModelParameters:
    """Uniform [-0.05, 0.05] weights plus KB-derived demographic masks.

    With a KB, demographic row m gets DEMOGRAPHIC_MASK at every disease the
    KB links to m with frequency 0 (the disease is implausible under that
    demographic) and 0 elsewhere. Pairs unknown to the KB, including novel
    diseases, are left unmasked. Without a KB all rows are zero, a uniform
    prior over every disease.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    K, L = vocab.n_findings, vocab.n_diseases
    M = vocab.n_demographics
    rng = np.random.default_rng(seed)
    finding_embeddings = rng.uniform(-0.05, 0.05, size=(2 * K, dim))
    projection = rng.uniform(-0.05, 0.05, size=(dim, L))
    bias = rng.uniform(-0.05, 0.05, size=L)
    demographic = np.zeros((M, L))
    if kb is not None:
        for m, fid in enumerate(vocab.demographic_list):
            if not kb.has_finding(fid):
                continue
            for j, did in enumerate(vocab.diseases):
                if kb.has_disease(did) and frequency(kb, did, fid) == 0.0:
                    demographic[m, j] = DEMOGRAPHIC_MASK
    return ModelParameters(
        finding_embeddings=finding_embeddings,
        projection=projection,
        bias=bias,
        demographic_embeddings=demographic,
        vocab=vocab,
    )


@dataclass(frozen=True)
class DropoutPlan:
    """Fixed per-row element masks; rows follow pos_clinical then neg_clinical."""

    rate: float
    masks: np.ndarray  # [n_rows, D] of 0/1


def make_dropout_plan(x: ModelInput, dim: int, rate: float, rng: np.random.Generator) -> DropoutPlan:
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    masks = (rng.random(size=(x.n_rows, dim)) >= rate).astype(float)
    return DropoutPlan(rate=rate, masks=masks)


def gather_rows(x: ModelInput) -> list[int]:
    """Embedding-table row ids: 2i for present finding i, 2i+1 for absent."""
    return [2 * i for i in x.pos_clinical] + [2 * i + 1 for i in x.neg_clinical]


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = np.max(z)
    return z - (m + np.log(np.sum(np.exp(z - m))))


def pooled_embedding(p: ModelParameters, x: ModelInput, plan: DropoutPlan | None = None) -> np.ndarray:
    """Mean of the case's gathered rows under inverted dropout; zero if none."""
    rows = gather_rows(x)
    if not rows:
        return np.zeros(p.finding_embeddings.shape[1])
    gathered = p.finding_embeddings[rows]
    if plan is not None and plan.rate > 0.0:
        gathered = gathered * plan.masks / (1.0 - plan.rate)
    return gathered.mean(axis=0)


def demographic_logits(p: ModelParameters, x: ModelInput) -> np.ndarray:
    if not x.demo:
        return np.zeros(p.vocab.n_diseases)
    return p.demographic_embeddings[list(x.demo)].sum(axis=0)


def forward(p: ModelParameters, x: ModelInput, plan: DropoutPlan | None = None) -> np.ndarray:
    """Log-probability vector over the vocabulary's diseases.

    Passing a DropoutPlan is train mode; omitting it is inference. A plan
    with rate 0 is exactly inference.
    """
    h = pooled_embedding(p, x, plan)
    lf = log_softmax(h @ p.projection + p.bias)
    ld = log_softmax(demographic_logits(p, x))
    return log_softmax(lf + ld)


def predict_topk(p: ModelParameters, x: ModelInput, k: int) -> list[tuple[str, float]]:
    """The k most probable diseases, ties broken by ascending disease id."""
    L = p.vocab.n_diseases
    if not (1 <= k <= L):
        raise ValueError(f"k must be in [1, {L}], got {k}")
    probs = np.exp(forward(p, x))
    order = sorted(range(L), key=lambda j: (-probs[j], p.vocab.diseases[j]))
    return [(p.vocab.diseases[j], float(probs[j])) for j in order[:k]]


def encode_case(
    vocab: Vocabulary, pos: frozenset[str] | set[str], neg: frozenset[str] | set[str]
) -> tuple[ModelInput, int]:
    """Map finding ids to model indices; returns the input and a count of
    skipped findings (out-of-vocabulary, or demographics observed absent,
    which the demographic stream cannot represent)."""
    skipped = 0
    pos_clinical: list[int] = []
    neg_clinical: list[int] = []
    demo: list[int] = []
    for fid in pos:
        if not vocab.has_finding(fid):
            skipped += 1
        elif fid in vocab.demographic_ids:
            demo.append(vocab.demo_index(fid))
        else:
            pos_clinical.append(vocab.finding_index(fid))
    for fid in neg:
        if not vocab.has_finding(fid) or fid in vocab.demographic_ids:
            skipped += 1
        else:
            neg_clinical.append(vocab.finding_index(fid))
    return ModelInput(tuple(pos_clinical), tuple(neg_clinical), tuple(demo)), skipped


def encode_target(vocab: Vocabulary, ddx) -> np.ndarray:
    """Dense soft-label vector over the vocabulary's diseases."""
    target = np.zeros(vocab.n_diseases)
    for did, prob in ddx.entries:
        try:
            target[vocab.disease_index(did)] = prob
        except KeyError:
            raise ValueError(f"case references disease outside vocabulary: {did!r}") from None
    return target


def _encode_array(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode_array(s: str, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).astype(float)


def checkpoint_to_json(p: ModelParameters) -> str:
    p.validate()
    K, L, D, M = p.dims
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "byte_order": "little",
        "dtype": "float64",
        "dims": {"n_findings": K, "n_diseases": L, "dim": D, "n_demographics": M},
        "vocab": p.vocab.to_dict(),
        "arrays": {name: _encode_array(a) for name, a in p.blocks().items()},
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def checkpoint_from_json(text: str) -> ModelParameters:
    doc = json.loads(text)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}, expected {CHECKPOINT_VERSION}")
    if doc.get("byte_order") != "little" or doc.get("dtype") != "float64":
        raise ValueError("unsupported checkpoint encoding")
    vocab = Vocabulary.from_dict(doc["vocab"])
    dims = doc["dims"]
    K, L, D, M = dims["n_findings"], dims["n_diseases"], dims["dim"], dims["n_demographics"]
    if (K, L, M) != (vocab.n_findings, vocab.n_diseases, vocab.n_demographics):
        raise ValueError("checkpoint dims disagree with its vocabulary")
    arrays = doc["arrays"]
    p = ModelParameters(
        finding_embeddings=_decode_array(arrays["finding_embeddings"], (2 * K, D)),
        projection=_decode_array(arrays["projection"], (D, L)),
        bias=_decode_array(arrays["bias"], (L,)),
        demographic_embeddings=_decode_array(arrays["demographic_embeddings"], (M, L)),
        vocab=vocab,
    )
    p.validate()
    return p


def save_checkpoint(p: ModelParameters, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(checkpoint_to_json(p))


def load_checkpoint(path) -> ModelParameters:
    with open(path, encoding="utf-8") as fh:
        return checkpoint_from_json(fh.read())
