"""Exact t-SNE for small point sets.

Maps N high-dimensional vectors to 2-D by matching pairwise neighbor
distributions: Gaussian similarities in the input space (bandwidth tuned
per point to hit a target perplexity) against Student-t similarities in
the embedding, minimizing KL divergence by gradient descent with momentum
and early exaggeration.  All O(N^2) quantities are materialized, which is
the right trade for the few thousand points this package works with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .errors import PreconditionError

__all__ = [
    "TsneEmbedding",
    "TsneResult",
    "tsne",
    "joint_probs",
    "conditional_probs",
    "kl_and_grad",
]

_TINY = 1e-12


def pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    """Dense matrix of squared euclidean distances, exact diagonal zero."""
    x = np.asarray(x, np.float64)
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _row_entropy(d2: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """Shannon entropy (nats) and probabilities of one Gaussian row.

    d2 holds the squared distances from a point to every other point
    (self excluded).  The shift by the row minimum keeps exp() in range
    for arbitrarily large beta.
    """
    shifted = d2 - d2.min()
    w = np.exp(-beta * shifted)
    total = w.sum()
    p = w / total
    # H = log(sum w) + beta * E[d2], rewritten for the shifted weights.
    h = math.log(total) + beta * float(np.dot(p, shifted))
    return h, p


def conditional_probs(
    d2: np.ndarray, perplexity: float, tol_log2: float = 1e-4, max_iter: int = 200
) -> tuple[np.ndarray, float]:
    """Per-point Gaussian rows whose entropy matches log2(perplexity).

    Returns the row-stochastic conditional matrix (zero diagonal) and the
    worst |log2 achieved - log2 target| over all rows.  The bandwidth of
    each row is found by bisection on the precision beta = 1/(2 sigma^2);
    entropy is strictly decreasing in beta, so plain bracketing works.
    """
    n = d2.shape[0]
    target = math.log(perplexity)  # entropy target in nats
    p = np.zeros((n, n))
    worst = 0.0
    others = np.arange(n)
    for i in range(n):
        row = d2[i, others != i]
        beta, lo, hi = 1.0, 0.0, math.inf
        h, probs = _row_entropy(row, beta)
        for _ in range(max_iter):
            if abs(h - target) / math.log(2.0) < tol_log2:
                break
            if h > target:  # too spread out: sharpen
                lo = beta
                beta = beta * 2.0 if hi == math.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = beta / 2.0 if lo == 0.0 else 0.5 * (beta + lo)
            h, probs = _row_entropy(row, beta)
        worst = max(worst, abs(h - target) / math.log(2.0))
        p[i, others != i] = probs
    return p, worst


def joint_probs(x: np.ndarray, perplexity: float) -> tuple[np.ndarray, float]:
    """Symmetrized joint neighbor distribution P over all pairs."""
    cond, worst = conditional_probs(pairwise_sq_dists(x), perplexity)
    p = (cond + cond.T) / (2.0 * x.shape[0])
    return p, worst


def kl_and_grad(p: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(P || Q) and its gradient for a 2-D embedding y.

    Q uses the Student-t kernel 1/(1 + |yi - yj|^2); the gradient is
    4 * sum_j (p_ij - q_ij) * (1 + |yi - yj|^2)^-1 * (yi - yj).
    """
    w = 1.0 / (1.0 + pairwise_sq_dists(y))
    np.fill_diagonal(w, 0.0)
    q = w / w.sum()
    mask = p > 0.0
    kl = float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], _TINY))))
    m = (p - q) * w
    grad = 4.0 * (m.sum(axis=1)[:, None] * y - m @ y)
    return kl, grad


def _check_inputs(n: int, perplexity: float) -> None:
    if n < 4:
        raise PreconditionError(f"need at least 4 points, got {n}")
    if not perplexity > 1.0:
        raise PreconditionError(f"perplexity must exceed 1, got {perplexity}")
    if perplexity >= (n - 1) / 3.0:
        need = int(math.floor(3.0 * perplexity + 1.0)) + 1
        raise PreconditionError(
            f"perplexity {perplexity} needs at least {need} points, got {n}"
        )


@dataclass
class TsneResult:
    embedding: np.ndarray          # (n, 2) float64
    kl: float                      # final divergence against the true P
    kl_curve: list[tuple[int, float]] = field(default_factory=list)
    perplexity_log2_error: float = 0.0


def run_tsne(
    vectors: np.ndarray,
    perplexity: float = 30.0,
    iterations: int = 1000,
    learning_rate: float = 100.0,
    early_exaggeration: float = 4.0,
    exaggeration_iters: int = 100,
    momentum: float = 0.5,
    final_momentum: float = 0.8,
    momentum_switch_iter: int = 250,
    init_scale: float = 1e-4,
    record_every: int = 25,
    seed: int | None = None,
) -> TsneResult:
    x = np.asarray(vectors, np.float64)
    if x.ndim != 2:
        raise PreconditionError(f"expected a 2-D array of vectors, got shape {x.shape}")
    n = x.shape[0]
    _check_inputs(n, perplexity)

    p, worst = joint_probs(x, perplexity)
    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, init_scale, size=(n, 2))
    update = np.zeros_like(y)
    curve: list[tuple[int, float]] = []
    for it in range(iterations):
        if it < exaggeration_iters:
            _, grad = kl_and_grad(p * early_exaggeration, y)
            if it % record_every == 0:
                curve.append((it, kl_and_grad(p, y)[0]))
        else:
            kl, grad = kl_and_grad(p, y)
            if it % record_every == 0:
                curve.append((it, kl))
        m = momentum if it < momentum_switch_iter else final_momentum
        update = m * update - learning_rate * grad
        y = y + update
        y = y - y.mean(axis=0)
    kl, _ = kl_and_grad(p, y)
    curve.append((iterations, kl))
    return TsneResult(embedding=y, kl=kl, kl_curve=curve,
                      perplexity_log2_error=worst)


def tsne(
    vectors: np.ndarray,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int | None = None,
    **kwargs,
) -> np.ndarray:
    """Convenience wrapper returning just the (n, 2) embedding."""
    return run_tsne(vectors, perplexity=perplexity, iterations=iterations,
                    seed=seed, **kwargs).embedding


class TsneEmbedding(BaseEstimator):
    """Estimator-style front end for :func:`run_tsne`.

    fit(X) computes the embedding; fit_transform(X) returns it.  After
    fitting, ``embedding_``, ``kl_divergence_``, ``kl_curve_`` and
    ``perplexity_log2_error_`` are available.
    """

    def __init__(
        self,
        perplexity: float = 30.0,
        n_iter: int = 1000,
        learning_rate: float = 100.0,
        early_exaggeration: float = 4.0,
        exaggeration_iters: int = 100,
        momentum: float = 0.5,
        final_momentum: float = 0.8,
        momentum_switch_iter: int = 250,
        init_scale: float = 1e-4,
        record_every: int = 25,
        random_state: int | None = None,
    ):
        self.perplexity = perplexity
        self.n_iter = n_iter
        self.learning_rate = learning_rate
        self.early_exaggeration = early_exaggeration
        self.exaggeration_iters = exaggeration_iters
        self.momentum = momentum
        self.final_momentum = final_momentum
        self.momentum_switch_iter = momentum_switch_iter
        self.init_scale = init_scale
        self.record_every = record_every
        self.random_state = random_state

    def fit(self, X, y=None):
        res = run_tsne(
            np.asarray(X, np.float64),
            perplexity=self.perplexity,
            iterations=self.n_iter,
            learning_rate=self.learning_rate,
            early_exaggeration=self.early_exaggeration,
            exaggeration_iters=self.exaggeration_iters,
            momentum=self.momentum,
            final_momentum=self.final_momentum,
            momentum_switch_iter=self.momentum_switch_iter,
            init_scale=self.init_scale,
            record_every=self.record_every,
            seed=self.random_state,
        )
        self.embedding_ = res.embedding
        self.kl_divergence_ = res.kl
        self.kl_curve_ = res.kl_curve
        self.perplexity_log2_error_ = res.perplexity_log2_error
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X, y).embedding_
