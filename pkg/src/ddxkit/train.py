"""KL soft-label training with minibatch Adam.

The loss per case is KL(p || g(x)) between the case's differential label p
and the model distribution. Writing c for the combined pre-normalization
logits (finding-stream log-softmax plus demographic log-softmax), the
gradient of the loss in c is softmax(c) - p; because that difference sums
to zero, it passes through both inner log-softmax layers unchanged, and
the remaining chain rule is plain linear algebra over the projection, the
pooling mean, the dropout scaling, and the embedding gathers. Gradients
are validated against central finite differences in the test suite.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import CaseSet
from .model import (
    DropoutPlan,
    ModelInput,
    ModelParameters,
    encode_case,
    encode_target,
    gather_rows,
    make_dropout_plan,
    pooled_embedding,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 512
    epochs: int = 15
    dropout_rate: float = 0.7
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class Gradients:
    finding_embeddings: np.ndarray
    projection: np.ndarray
    bias: np.ndarray
    demographic_embeddings: np.ndarray

    @classmethod
    def zeros_like(cls, p: ModelParameters) -> "Gradients":
        return cls(**{name: np.zeros_like(a) for name, a in p.blocks().items()})

    def blocks(self) -> dict[str, np.ndarray]:
        return {
            "finding_embeddings": self.finding_embeddings,
            "projection": self.projection,
            "bias": self.bias,
            "demographic_embeddings": self.demographic_embeddings,
        }


@dataclass
class AdamState:
    m: Gradients
    v: Gradients
    t: int = 0

    @classmethod
    def init(cls, p: ModelParameters) -> "AdamState":
        return cls(m=Gradients.zeros_like(p), v=Gradients.zeros_like(p), t=0)


def kl_loss(target: np.ndarray, logprobs: np.ndarray) -> float:
    """KL divergence from the model to the target, sum over target support.

    `target` is a dense probability vector aligned to the vocabulary's
    disease indices; zero-probability entries contribute nothing.
    """
    target = np.asarray(target, dtype=float)
    support = target > 0.0
    t = target[support]
    return float(np.sum(t * (np.log(t) - logprobs[support])))


def _log_softmax_rows(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return z - (m + np.log(np.exp(z - m).sum(axis=1, keepdims=True)))


def backward(
    p: ModelParameters,
    batch: list[tuple[ModelInput, np.ndarray]],
    plans: list[DropoutPlan | None] | None = None,
) -> tuple[Gradients, float]:
    """Mean loss gradient over a batch, with dropout masks fixed per call.

    Returns (gradients, mean KL loss). `plans` aligns with `batch`; None
    entries (or a None list) run without dropout.
    """
    if not batch:
        raise ValueError("empty batch")
    if plans is None:
        plans = [None] * len(batch)
    B = len(batch)
    D, L = p.projection.shape

    H = np.empty((B, D))
    U = np.zeros((B, L))
    P = np.empty((B, L))
    for i, (x, target) in enumerate(batch):
        H[i] = pooled_embedding(p, x, plans[i])
        if x.demo:
            U[i] = p.demographic_embeddings[list(x.demo)].sum(axis=0)
        P[i] = target

    LF = _log_softmax_rows(H @ p.projection + p.bias)
    LD = _log_softmax_rows(U)
    C = LF + LD
    O = _log_softmax_rows(C)
    Q = np.exp(O)

    with np.errstate(divide="ignore"):
        logP = np.where(P > 0.0, np.log(np.where(P > 0.0, P, 1.0)), 0.0)
    mean_loss = float(np.where(P > 0.0, P * (logP - O), 0.0).sum() / B)

    # d(loss)/dC = Q - P sums to zero per case, so it is also the gradient
    # at both inner log-softmax inputs.
    G_C = (Q - P) / B
    grads = Gradients.zeros_like(p)
    grads.projection[:] = H.T @ G_C
    grads.bias[:] = G_C.sum(axis=0)
    G_H = G_C @ p.projection.T

    for i, (x, _) in enumerate(batch):
        rows = gather_rows(x)
        if rows:
            n = len(rows)
            plan = plans[i]
            if plan is not None and plan.rate > 0.0:
                contrib = (G_H[i] * plan.masks) / ((1.0 - plan.rate) * n)
            else:
                contrib = np.tile(G_H[i] / n, (n, 1))
            grads.finding_embeddings[rows] += contrib
        for m in x.demo:
            grads.demographic_embeddings[m] += G_C[i]
    return grads, mean_loss


def adam_step(
    p: ModelParameters, g: Gradients, s: AdamState, cfg: TrainConfig
) -> tuple[ModelParameters, AdamState]:
    """Bias-corrected Adam update, applied in place."""
    s.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for name, theta in p.blocks().items():
        grad = g.blocks()[name]
        m = s.m.blocks()[name]
        v = s.v.blocks()[name]
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1**s.t)
        v_hat = v / (1.0 - b2**s.t)
        theta -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return p, s


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss: float
    holdout_topk: dict[int, float] | None = None

    def format_line(self) -> str:
        line = f"epoch {self.epoch} loss {self.mean_loss:.6f}"
        if self.holdout_topk is not None:
            line += "".join(f" top{k} {v:.4f}" for k, v in sorted(self.holdout_topk.items()))
        return line


def encode_training_set(vocab, cases: CaseSet) -> tuple[list[ModelInput], list[np.ndarray], int]:
    inputs, targets, skipped = [], [], 0
    for case in cases:
        x, n_skip = encode_case(vocab, case.pos, case.neg)
        skipped += n_skip
        inputs.append(x)
        targets.append(encode_target(vocab, case.ddx))
    return inputs, targets, skipped


def train(
    p0: ModelParameters,
    train_set: CaseSet,
    cfg: TrainConfig,
    holdout: CaseSet | None = None,
) -> tuple[ModelParameters, list[EpochRecord]]:
    """Run the full optimization; p0 is left untouched.

    Every epoch reshuffles with the config-seeded stream, walks batches of
    cfg.batch_size (the final short batch is kept), resamples dropout masks
    per case, and records the mean training loss. With a holdout set the
    record also carries top-1/3/5 accuracy against the argmax of each
    case's differential label.
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    p = p0.copy()
    inputs, targets, skipped = encode_training_set(p.vocab, train_set)
    if skipped:
        logger.warning("training encode skipped %d findings outside the vocabulary", skipped)
    n = len(inputs)
    D = p.projection.shape[0]
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.init(p)
    history: list[EpochRecord] = []
    order = np.arange(n)

    for epoch in range(1, cfg.epochs + 1):
        rng.shuffle(order)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            batch = [(inputs[i], targets[i]) for i in chunk]
            if cfg.dropout_rate > 0.0:
                plans = [make_dropout_plan(x, D, cfg.dropout_rate, rng) for x, _ in batch]
            else:
                plans = None
            grads, loss = backward(p, batch, plans)
            adam_step(p, grads, state, cfg)
            total += loss * len(chunk)
        holdout_topk = _holdout_metrics(p, holdout) if holdout is not None else None
        record = EpochRecord(epoch=epoch, mean_loss=total / n, holdout_topk=holdout_topk)
        history.append(record)
        logger.info("%s", record.format_line())
    return p, history


def _holdout_metrics(p: ModelParameters, holdout: CaseSet) -> dict[int, float]:
    from .evaluate import evaluate, model_predictor

    ks = [k for k in (1, 3, 5) if k <= p.vocab.n_diseases]
    report = evaluate(model_predictor(p), holdout, ks=ks)
    return dict(report.accuracy)
