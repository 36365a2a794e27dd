"""Mini-batch trainer: corruption sampling, self-adversarial loss, Adam.

Gradients are computed analytically from the score's four-term real
form, accumulated into dense tables with a fixed reduction order
(sorted segment sums), and applied with one Adam step per batch over
all four embedding tables. Early stopping tracks filtered MRR on the
validation triples and returns the best snapshot seen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from ..kg import TripleSplit
from .model import ComplexModel, _score_arrays, init_embeddings
from .ranking import evaluate_ranking


@dataclass(frozen=True)
class TrainingConfig:
    k: int = 150
    eta: int = 15
    learning_rate: float = 0.0005
    batch_size: int = 8000
    adversarial_temperature: float = 1.0
    max_epochs: int = 500
    check_every: int = 10
    patience: int = 5
    seed: int = 0
    l2: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.eta < 1:
            raise ValueError("eta must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.adversarial_temperature > 0:
            raise ValueError("adversarial_temperature must be > 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


@dataclass
class AdamState:
    """First/second-moment accumulators for one parameter table."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params))


def adam_step(
    state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update, in place on ``params``."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.m.shape}"
        )
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def sample_corruptions(triple, kg, eta: int, rng: np.random.Generator, max_retries: int = 10):
    """eta negatives for one indexed triple (subject or object replaced).

    The replacement entity is drawn uniformly from the other |E|-1
    entities via an index shift, so the positive itself can never come
    back. Duplicate negatives are resampled up to ``max_retries`` times,
    then accepted.
    """
    n_ent = kg.n_entities
    if n_ent < 2:
        raise ValueError("corruption sampling needs at least 2 entities")
    s, r, o = (int(x) for x in triple)
    out = []
    seen: set[tuple[int, int, int]] = set()
    for _ in range(eta):
        cand = (s, r, o)
        for attempt in range(max_retries + 1):
            side = int(rng.integers(2))
            orig = s if side == 0 else o
            draw = int(rng.integers(n_ent - 1))
            if draw >= orig:
                draw += 1
            cand = (draw, r, o) if side == 0 else (s, r, draw)
            if cand not in seen or attempt == max_retries:
                break
        seen.add(cand)
        out.append(cand)
    return out


def corrupt_batch(
    pos_idx: np.ndarray, eta: int, n_entities: int, rng: np.random.Generator
) -> np.ndarray:
    """(n*eta, 3) corruptions, eta consecutive rows per positive.

    Vectorized training-path variant of sample_corruptions: same
    fair-coin side choice and index-shift draw, but duplicates among a
    positive's negatives are accepted outright.
    """
    if n_entities < 2:
        raise ValueError("corruption sampling needs at least 2 entities")
    n = pos_idx.shape[0] * eta
    neg = np.repeat(pos_idx, eta, axis=0)
    side = rng.integers(2, size=n)
    draw = rng.integers(n_entities - 1, size=n)
    col = np.where(side == 0, 0, 2)
    rows = np.arange(n)
    orig = neg[rows, col]
    draw = draw + (draw >= orig)
    neg[rows, col] = draw
    return neg


def self_adversarial_loss(
    positive_score: float, negative_scores: Sequence[float], temperature: float
):
    """Loss and exact score-partials for one positive and its negatives.

    weights w = softmax(temperature * f_neg), treated as constants
    (stop-gradient); loss = -log sigma(f_pos) - sum_i w_i log sigma(-f_i).
    Returns (loss, d_loss/d_f_pos, d_loss/d_f_neg array).
    """
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    f_neg = np.asarray(negative_scores, dtype=np.float64)
    if f_neg.size == 0:
        raise ValueError("need at least one negative score")
    f_pos = float(positive_score)
    logits = temperature * f_neg
    logits = logits - logits.max()
    w = np.exp(logits)
    w /= w.sum()
    # -log sigma(x) == softplus(-x), computed stably via logaddexp
    loss = float(np.logaddexp(0.0, -f_pos) + np.sum(w * np.logaddexp(0.0, f_neg)))
    d_pos = float(expit(f_pos) - 1.0)
    d_neg = w * expit(f_neg)
    return loss, d_pos, d_neg


def _batch_loss(pos_scores: np.ndarray, neg_scores: np.ndarray, temperature: float):
    """Mean self-adversarial loss over a batch; grads already carry 1/n."""
    n = pos_scores.shape[0]
    logits = temperature * neg_scores
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    per_pos = np.logaddexp(0.0, -pos_scores) + np.sum(
        w * np.logaddexp(0.0, neg_scores), axis=1
    )
    loss = float(per_pos.mean())
    d_pos = (expit(pos_scores) - 1.0) / n
    d_neg = w * expit(neg_scores) / n
    return loss, d_pos, d_neg


def _scatter_add(out: np.ndarray, idx: np.ndarray, values: np.ndarray) -> None:
    """out[idx] += values with a deterministic (sorted-segment) reduction."""
    order = np.argsort(idx, kind="stable")
    idx_sorted = idx[order]
    vals_sorted = values[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(idx_sorted)) + 1))
    sums = np.add.reduceat(vals_sorted, starts, axis=0)
    out[idx_sorted[starts]] += sums


@dataclass
class TrainingResult:
    model: ComplexModel
    history: tuple[str, ...]
    epochs_run: int
    best_mrr: float = float("nan")

    def history_text(self) -> str:
        return "\n".join(self.history) + "\n" if self.history else ""


def _scatter_add_pair(
    out_a: np.ndarray, out_b: np.ndarray,
    idx: np.ndarray, vals_a: np.ndarray, vals_b: np.ndarray,
) -> None:
    """Two deterministic scatter-adds sharing one sort of the same index vector."""
    order = np.argsort(idx, kind="stable")
    idx_sorted = idx[order]
    stacked = np.concatenate((vals_a, vals_b), axis=1)[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(idx_sorted)) + 1))
    sums = np.add.reduceat(stacked, starts, axis=0)
    rows = idx_sorted[starts]
    k = vals_a.shape[1]
    out_a[rows] += sums[:, :k]
    out_b[rows] += sums[:, k:]


def _apply_batch(model: ComplexModel, adam, idx: np.ndarray, g: np.ndarray, lr: float, l2: float,
                 gathered=None):
    """Accumulate score-gradients for rows idx weighted by g; Adam-step all tables."""
    s, r, o = idx[:, 0], idx[:, 1], idx[:, 2]
    if gathered is None:
        s_re, s_im = model.ent_re[s], model.ent_im[s]
        r_re, r_im = model.rel_re[r], model.rel_im[r]
        o_re, o_im = model.ent_re[o], model.ent_im[o]
    else:
        s_re, s_im, r_re, r_im, o_re, o_im = gathered
    gc = g[:, None]
    grad_ent_re = np.zeros_like(model.ent_re)
    grad_ent_im = np.zeros_like(model.ent_im)
    grad_rel_re = np.zeros_like(model.rel_re)
    grad_rel_im = np.zeros_like(model.rel_im)
    _scatter_add_pair(
        grad_ent_re,
        grad_ent_im,
        np.concatenate((s, o)),
        np.concatenate((gc * (r_re * o_re + r_im * o_im), gc * (s_re * r_re - s_im * r_im))),
        np.concatenate((gc * (r_re * o_im - r_im * o_re), gc * (s_im * r_re + s_re * r_im))),
    )
    _scatter_add_pair(
        grad_rel_re, grad_rel_im, r,
        gc * (s_re * o_re + s_im * o_im),
        gc * (s_re * o_im - s_im * o_re),
    )
    if l2 > 0:
        grad_ent_re += l2 * model.ent_re
        grad_ent_im += l2 * model.ent_im
        grad_rel_re += l2 * model.rel_re
        grad_rel_im += l2 * model.rel_im
    adam_step(adam["ent_re"], model.ent_re, grad_ent_re, lr)
    adam_step(adam["ent_im"], model.ent_im, grad_ent_im, lr)
    adam_step(adam["rel_re"], model.rel_re, grad_rel_re, lr)
    adam_step(adam["rel_im"], model.rel_im, grad_rel_im, lr)


def train(splits: TripleSplit, config: TrainingConfig) -> TrainingResult:
    """Fit embeddings on a split's training triples.

    Every ``check_every`` epochs the filtered validation MRR is
    measured (against the union of all split triples); ``patience``
    consecutive checks without strict improvement over the best seen —
    including the untrained baseline — stop training. Without
    validation triples, runs the full ``max_epochs``.
    """
    kg = splits.kg
    train_idx = kg.to_index_array(splits.train)
    if train_idx.shape[0] == 0:
        raise ValueError("no training triples")
    model = init_embeddings(kg, config.k, config.seed)
    rng = np.random.default_rng(config.seed)
    adam = {
        "ent_re": AdamState.for_params(model.ent_re),
        "ent_im": AdamState.for_params(model.ent_im),
        "rel_re": AdamState.for_params(model.rel_re),
        "rel_im": AdamState.for_params(model.rel_im),
    }
    history: list[str] = []
    has_validation = len(splits.validation) > 0
    known = splits.all_known()
    best_model = model.copy()
    best_mrr = float("nan")
    if has_validation:
        best_mrr = evaluate_ranking(model, splits.validation, known).mrr
        history.append(f"check\t0\t{best_mrr!r}")

    n = train_idx.shape[0]
    bad_checks = 0
    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        epochs_run = epoch
        order = rng.permutation(n)
        loss_sum = 0.0
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            pos = train_idx[order[start : start + config.batch_size]]
            neg = corrupt_batch(pos, config.eta, kg.n_entities, rng)
            idx = np.concatenate((pos, neg))
            s, r, o = idx[:, 0], idx[:, 1], idx[:, 2]
            gathered = (
                model.ent_re[s], model.ent_im[s],
                model.rel_re[r], model.rel_im[r],
                model.ent_re[o], model.ent_im[o],
            )
            scores = _score_arrays(*gathered)
            n_pos = pos.shape[0]
            pos_scores = scores[:n_pos]
            neg_scores = scores[n_pos:].reshape(n_pos, config.eta)
            loss, d_pos, d_neg = _batch_loss(
                pos_scores, neg_scores, config.adversarial_temperature
            )
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no} "
                    f"(batch size {n_pos})"
                )
            loss_sum += loss * n_pos
            g = np.concatenate((d_pos, d_neg.ravel()))
            _apply_batch(model, adam, idx, g, config.learning_rate, config.l2,
                         gathered=gathered)
        history.append(f"epoch\t{loss_sum / n!r}")

        if has_validation and epoch % config.check_every == 0:
            mrr = evaluate_ranking(model, splits.validation, known).mrr
            history.append(f"check\t{epoch}\t{mrr!r}")
            if not (mrr > best_mrr):
                bad_checks += 1
                if bad_checks >= config.patience:
                    break
            else:
                best_mrr = mrr
                best_model = model.copy()
                bad_checks = 0

    final = best_model if has_validation else model
    return TrainingResult(
        model=final, history=tuple(history), epochs_run=epochs_run, best_mrr=best_mrr
    )
