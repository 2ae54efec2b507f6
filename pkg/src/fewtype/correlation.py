"""The learned word-to-type correlation matrix and its training losses.

One real matrix with a row per label and a column per vocabulary token
realizes the verbalizer: the softmax over a column gives p(label |
token), and mixing columns with a masked-token distribution gives the
label prediction. Rows are tied to the label hierarchy by two cosine
regularizers (parent/child alignment, sibling separation). Gradients
are analytic; finite differences are used only as a test oracle.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend import MaskedLMProvider, Vocab
from .errors import ConfigError, ContractError, DataError
from .hierarchy import LabelHierarchy, LabelPath, parse_label_path

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_VERSION = 1


@dataclass
class CorrelationMatrix:
    """Trainable |labels| x |vocab| score matrix with its row index."""

    u: np.ndarray
    labels: tuple[LabelPath, ...]
    vocab_size: int
    label_index: dict[LabelPath, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.u.shape != (len(self.labels), self.vocab_size):
            raise ContractError(
                f"matrix shape {self.u.shape} != ({len(self.labels)}, {self.vocab_size})"
            )
        if not np.all(np.isfinite(self.u)):
            raise ContractError("matrix entries must be finite")
        if not self.label_index:
            self.label_index = {label: i for i, label in enumerate(self.labels)}

    def row(self, label: LabelPath) -> np.ndarray:
        return self.u[self.label_index[label]]

    def column_softmax(self) -> np.ndarray:
        """p(label | token) for every column, stacked as a matrix."""
        shifted = self.u - self.u.max(axis=0, keepdims=True)
        ex = np.exp(shifted)
        return ex / ex.sum(axis=0, keepdims=True)

    def copy(self) -> "CorrelationMatrix":
        return CorrelationMatrix(self.u.copy(), self.labels, self.vocab_size)


def vocab_fingerprint(vocab: Vocab) -> str:
    joined = "\x00".join(vocab.id_to_token)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def name_token_ids(hierarchy: LabelHierarchy, provider: MaskedLMProvider) -> dict[LabelPath, list[int]]:
    """Resolve each label's surface names to vocabulary token ids.

    Multi-subword names contribute all their pieces. Names the provider
    cannot tokenize are dropped with a warning; the caller decides what
    a label with no resolvable names means.
    """
    out: dict[LabelPath, list[int]] = {}
    for label in hierarchy.labels:
        ids: list[int] = []
        for name in hierarchy.names_of(label):
            try:
                pieces = provider.tokenize(name)
            except ContractError:
                logger.warning("dropping unresolvable name %r for label %s", name, label)
                continue
            ids.extend(pieces)
        out[label] = sorted(set(ids))
    return out


def init_correlation(
    hierarchy: LabelHierarchy, provider: MaskedLMProvider, alpha: float
) -> CorrelationMatrix:
    """Initialize the matrix with a bias toward each label's name tokens.

    Name-token entries start at (1-alpha)/n + alpha/(V-n) and all others
    at alpha/(V-n), where n counts the label's resolvable name tokens.
    A label with no resolvable names gets a uniform row.
    """
    if not 0 <= alpha < 1:
        raise ConfigError(f"alpha must be in [0, 1), got {alpha}")
    vocab = provider.vocab()
    vsize = len(vocab)
    names = name_token_ids(hierarchy, provider)
    u = np.empty((len(hierarchy.labels), vsize), dtype=np.float64)
    for i, label in enumerate(hierarchy.labels):
        ids = names[label]
        n = len(ids)
        if n == 0 or n >= vsize:
            logger.warning("label %s has no usable name tokens; uniform row", label)
            u[i, :] = 1.0 / vsize
            continue
        u[i, :] = alpha / (vsize - n)
        u[i, ids] = (1.0 - alpha) / n + alpha / (vsize - n)
    return CorrelationMatrix(u, hierarchy.labels, vsize)


def word_to_type(cm: CorrelationMatrix, token_id: int) -> np.ndarray:
    """p(label | token): softmax over one column."""
    if not 0 <= token_id < cm.vocab_size:
        raise ContractError(f"token id {token_id} outside vocabulary")
    col = cm.u[:, token_id]
    shifted = col - col.max()
    ex = np.exp(shifted)
    return ex / ex.sum()


def map_to_labels(cm: CorrelationMatrix, token_dist: np.ndarray) -> np.ndarray:
    """Mix per-column label distributions by the token distribution."""
    d = np.asarray(token_dist, dtype=np.float64)
    if d.shape != (cm.vocab_size,):
        raise ContractError(f"token distribution shape {d.shape} != ({cm.vocab_size},)")
    return cm.column_softmax() @ d


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    # identical rows short-circuit to exactly 1.0 so the regularizer
    # anchors (aligned parent/child, identical siblings) are exact
    if np.array_equal(a, b):
        return 1.0 if a.any() else 0.0
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def inclusive_loss(cm: CorrelationMatrix, hierarchy: LabelHierarchy) -> float:
    """Sum of cosine distances between each child row and its parent row."""
    total = 0.0
    for label in hierarchy.labels:
        parent = hierarchy.parent_of(label)
        if parent is None:
            continue
        total += 1.0 - _cosine(cm.row(label), cm.row(parent))
    return total


def exclusive_loss(cm: CorrelationMatrix, hierarchy: LabelHierarchy) -> float:
    """Sum of cosine similarities over unordered sibling pairs."""
    total = 0.0
    for a, b in hierarchy.sibling_pairs():
        total += _cosine(cm.row(a), cm.row(b))
    return total


def ce_loss(pred: np.ndarray, gold_index: int) -> float:
    return float(-np.log(max(float(pred[gold_index]), PROB_FLOOR)))


def kl_loss(target: np.ndarray, pred: np.ndarray) -> float:
    t = np.asarray(target, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    logs = np.log(np.maximum(t, PROB_FLOOR)) - np.log(np.maximum(p, PROB_FLOOR))
    return float(np.sum(t * logs))


@dataclass
class Batch:
    """Inputs for one loss/gradient evaluation on a fixed matrix snapshot.

    ``ce_dists``/``ce_gold`` hold the labeled examples' masked-token
    distributions and gold row indices; ``kl_dists``/``kl_targets`` hold
    the augmented instances and their smoothed label vectors. Either
    part may be empty.
    """

    ce_dists: np.ndarray
    ce_gold: np.ndarray
    kl_dists: np.ndarray
    kl_targets: np.ndarray

    @classmethod
    def build(cls, n_labels: int, vocab_size: int, ce_items=(), kl_items=()) -> "Batch":
        ce_d = np.array([d for d, _ in ce_items], dtype=np.float64).reshape(len(ce_items), vocab_size)
        ce_g = np.array([g for _, g in ce_items], dtype=np.int64)
        kl_d = np.array([d for d, _ in kl_items], dtype=np.float64).reshape(len(kl_items), vocab_size)
        kl_t = np.array([t for _, t in kl_items], dtype=np.float64).reshape(len(kl_items), n_labels)
        return cls(ce_d, ce_g, kl_d, kl_t)

    @property
    def n_ce(self) -> int:
        return self.ce_dists.shape[0]

    @property
    def n_kl(self) -> int:
        return self.kl_dists.shape[0]


@dataclass(frozen=True)
class LossComponents:
    ce: float
    inc: float
    exc: float
    new: float


def loss_components(cm: CorrelationMatrix, batch: Batch, hierarchy: LabelHierarchy) -> LossComponents:
    P = cm.column_softmax()
    ce = 0.0
    if batch.n_ce:
        q = batch.ce_dists @ P.T
        gold = q[np.arange(batch.n_ce), batch.ce_gold]
        ce = float(-np.sum(np.log(np.maximum(gold, PROB_FLOOR))))
    new = 0.0
    if batch.n_kl:
        q = batch.kl_dists @ P.T
        t = batch.kl_targets
        logs = np.log(np.maximum(t, PROB_FLOOR)) - np.log(np.maximum(q, PROB_FLOOR))
        new = float(np.sum(t * logs))
    return LossComponents(
        ce=ce,
        inc=inclusive_loss(cm, hierarchy),
        exc=exclusive_loss(cm, hierarchy),
        new=new,
    )


def total_loss(parts: LossComponents, lam: float, lam_n: float, beta: float) -> float:
    return parts.ce + lam * parts.exc + lam * parts.inc + beta * lam_n * parts.new


def _weighted_nll_grad(P: np.ndarray, dists: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Gradient of sum_i sum_y c_iy * (-log q_iy) w.r.t. the matrix.

    q_i = P @ d_i with P the column softmax of the matrix. Entries where
    q fell below the probability floor contribute zero (matching the
    clamped loss value).
    """
    q = dists @ P.T
    r = np.where(q > PROB_FLOOR, coeffs / np.maximum(q, PROB_FLOOR), 0.0)
    a = r.T @ dists  # labels x vocab
    s = (P * a).sum(axis=0)  # per-column correction
    return -P * (a - s[np.newaxis, :])


def _cosine_pair_grads(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """d cos(a, b) / da, d cos(a, b) / db, and cos(a, b)."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return np.zeros_like(a), np.zeros_like(b), 0.0
    cos = float(a @ b / (na * nb))
    ga = b / (na * nb) - cos * a / (na * na)
    gb = a / (na * nb) - cos * b / (nb * nb)
    return ga, gb, cos


def regularizer_grads(
    cm: CorrelationMatrix, hierarchy: LabelHierarchy
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the inclusive and exclusive losses."""
    g_inc = np.zeros_like(cm.u)
    g_exc = np.zeros_like(cm.u)
    for label in hierarchy.labels:
        parent = hierarchy.parent_of(label)
        if parent is None:
            continue
        i, j = cm.label_index[label], cm.label_index[parent]
        ga, gb, _ = _cosine_pair_grads(cm.u[i], cm.u[j])
        g_inc[i] -= ga
        g_inc[j] -= gb
    for a, b in hierarchy.sibling_pairs():
        i, j = cm.label_index[a], cm.label_index[b]
        ga, gb, _ = _cosine_pair_grads(cm.u[i], cm.u[j])
        g_exc[i] += ga
        g_exc[j] += gb
    return g_inc, g_exc


def grad_total(
    cm: CorrelationMatrix,
    batch: Batch,
    hierarchy: LabelHierarchy,
    lam: float,
    lam_n: float,
    beta: float,
) -> np.ndarray:
    """Analytic gradient of the total training objective w.r.t. the matrix."""
    grad = np.zeros_like(cm.u)
    P = cm.column_softmax()
    if batch.n_ce:
        coeffs = np.zeros((batch.n_ce, len(cm.labels)))
        coeffs[np.arange(batch.n_ce), batch.ce_gold] = 1.0
        grad += _weighted_nll_grad(P, batch.ce_dists, coeffs)
    if beta * lam_n != 0.0 and batch.n_kl:
        grad += beta * lam_n * _weighted_nll_grad(P, batch.kl_dists, batch.kl_targets)
    if lam != 0.0:
        g_inc, g_exc = regularizer_grads(cm, hierarchy)
        grad += lam * (g_inc + g_exc)
    return grad


@dataclass
class OptimizerState:
    """Adam moments plus the linear learning-rate decay bookkeeping."""

    lr: float
    total_steps: int
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def ensure_shapes(self, shape: tuple[int, int]) -> None:
        if self.m is None:
            self.m = np.zeros(shape)
        if self.v is None:
            self.v = np.zeros(shape)


def adam_step(cm: CorrelationMatrix, state: OptimizerState, grad: np.ndarray) -> CorrelationMatrix:
    """One Adam update with bias correction and linear lr decay, in place."""
    if grad.shape != cm.u.shape:
        raise ContractError(f"gradient shape {grad.shape} != matrix shape {cm.u.shape}")
    state.ensure_shapes(cm.u.shape)
    if state.total_steps > 0:
        lr_t = state.lr * max(0.0, 1.0 - state.step / state.total_steps)
    else:
        lr_t = state.lr
    t = state.step + 1
    state.m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grad
    state.v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = state.m / (1.0 - ADAM_BETA1**t)
    v_hat = state.v / (1.0 - ADAM_BETA2**t)
    cm.u -= lr_t * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    state.step = t
    return cm


def save_checkpoint(
    path: str | Path,
    cm: CorrelationMatrix,
    vocab: Vocab,
    state: OptimizerState | None = None,
    extra: dict | None = None,
) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "labels": [str(label) for label in cm.labels],
        "vocab_fingerprint": vocab_fingerprint(vocab),
        "vocab_size": cm.vocab_size,
        "u": cm.u.tolist(),
    }
    if state is not None:
        state.ensure_shapes(cm.u.shape)
        payload["optimizer"] = {
            "lr": state.lr,
            "total_steps": state.total_steps,
            "step": state.step,
            "m": state.m.tolist(),
            "v": state.v.tolist(),
        }
    if extra:
        payload["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_checkpoint(
    path: str | Path, vocab: Vocab
) -> tuple[CorrelationMatrix, OptimizerState | None, dict]:
    """Load a checkpoint, verifying it was trained against this vocabulary."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {payload.get('format_version')}")
    if payload["vocab_fingerprint"] != vocab_fingerprint(vocab):
        raise DataError("checkpoint vocabulary fingerprint does not match the provider")
    labels = tuple(parse_label_path(s) for s in payload["labels"])
    cm = CorrelationMatrix(np.asarray(payload["u"]), labels, int(payload["vocab_size"]))
    state = None
    if "optimizer" in payload:
        opt = payload["optimizer"]
        state = OptimizerState(
            lr=float(opt["lr"]),
            total_steps=int(opt["total_steps"]),
            step=int(opt["step"]),
            m=np.asarray(opt["m"], dtype=np.float64),
            v=np.asarray(opt["v"], dtype=np.float64),
        )
    return cm, state, payload.get("extra", {})
