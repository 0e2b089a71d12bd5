"""Word-word co-occurrence counting and factorization counterparts.

Includes the weighted squared-log objective, plain log-count and conditional
log-count factorization, and the report comparing a full-softmax skipgram
model's conditionals against the empirical co-occurrence conditionals.
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .corpus import CorpusStream, Vocabulary, iter_windows
from .errors import DataError
from .optim import ADAGRAD_EPS, softmax

GLOVE_X_MAX = 100.0
GLOVE_ALPHA = 0.75


class CooccurrenceMatrix:
    """Sparse (target, context) counts over windows, no subsampling."""

    def __init__(self, vocab: Vocabulary, win: int,
                 entries: Optional[Dict[Tuple[int, int], float]] = None):
        self.vocab = vocab
        self.win = win
        self.entries = entries if entries is not None else {}

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, i: int, j: int, value: float = 1.0) -> None:
        self.entries[(i, j)] = self.entries.get((i, j), 0.0) + value

    def get(self, i: int, j: int) -> float:
        return self.entries.get((i, j), 0.0)

    def total_mass(self) -> float:
        return sum(self.entries.values())

    def column_sums(self) -> np.ndarray:
        sums = np.zeros(len(self.vocab))
        for (_, j), x in self.entries.items():
            sums[j] += x
        return sums

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((len(self.vocab), len(self.vocab)))
        for (i, j), x in self.entries.items():
            dense[i, j] = x
        return dense

    def nonzero_arrays(self):
        """Deterministically ordered (rows, cols, values) arrays."""
        items = sorted(self.entries.items())
        rows = np.array([ij[0] for ij, _ in items], dtype=np.int64)
        cols = np.array([ij[1] for ij, _ in items], dtype=np.int64)
        vals = np.array([x for _, x in items])
        return rows, cols, vals

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for (i, j), x in sorted(self.entries.items()):
                fh.write(f"{i}\t{j}\t{x:g}\n")

    @classmethod
    def load(cls, path, vocab: Vocabulary, win: int) -> "CooccurrenceMatrix":
        entries: Dict[Tuple[int, int], float] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DataError(f"{path}:{lineno}: expected 'i<TAB>j<TAB>x'")
                entries[(int(parts[0]), int(parts[1]))] = float(parts[2])
        return cls(vocab, win, entries)


def count_cooccurrences(corpus: CorpusStream, vocab: Vocabulary,
                        win: int) -> CooccurrenceMatrix:
    """x_ij = number of windows in which j appears in the context of i."""
    matrix = CooccurrenceMatrix(vocab, win)
    for sample in iter_windows(corpus, vocab, win, subsample=False):
        for j in sample.context:
            matrix.add(sample.target, int(j))
    return matrix


def glove_weight(x: float, x_max: float = GLOVE_X_MAX,
                 alpha: float = GLOVE_ALPHA) -> float:
    """Low-count damping weight: (x/x_max)**alpha below x_max, else 1."""
    if x <= 0:
        raise DataError("weighting is defined for positive counts only")
    if x >= x_max:
        return 1.0
    return (x / x_max) ** alpha


@dataclass
class FactorModel:
    P: np.ndarray  # target-side vectors, |V| x d
    Q: np.ndarray  # context-side vectors, |V| x d
    bias1: Optional[np.ndarray] = None  # per-word target bias
    bias2: Optional[np.ndarray] = None  # per-word context bias

    def score(self, i: int, j: int) -> float:
        s = float(self.P[i] @ self.Q[j])
        if self.bias1 is not None:
            s += float(self.bias1[i]) + float(self.bias2[j])
        return s

    def score_matrix(self) -> np.ndarray:
        s = self.P @ self.Q.T
        if self.bias1 is not None:
            s = s + self.bias1[:, None] + self.bias2[None, :]
        return s


def _init_factors(v: int, d: int, rng: np.random.Generator, biases: bool) -> FactorModel:
    scale = 0.5 / d
    model = FactorModel(P=rng.uniform(-scale, scale, size=(v, d)),
                        Q=rng.uniform(-scale, scale, size=(v, d)))
    if biases:
        model.bias1 = np.zeros(v)
        model.bias2 = np.zeros(v)
    return model


class _AdaGradCell:
    """Per-parameter accumulators for cell-wise factorization updates."""

    def __init__(self, model: FactorModel):
        self.P = np.full_like(model.P, 0.0)
        self.Q = np.full_like(model.Q, 0.0)
        self.b1 = np.zeros(len(model.P)) if model.bias1 is not None else None
        self.b2 = np.zeros(len(model.Q)) if model.bias2 is not None else None


def _cell_sgd(model: FactorModel, accum: _AdaGradCell, i: int, j: int,
              err: float, weight: float, lr: float) -> None:
    """One AdaGrad descent step on weight * err(i,j)^2, err = fit - target."""
    p, q = model.P[i], model.Q[j]
    gp = 2.0 * weight * err * q
    gq = 2.0 * weight * err * p
    accum.P[i] += gp * gp
    model.P[i] -= lr * gp / (np.sqrt(accum.P[i]) + ADAGRAD_EPS)
    accum.Q[j] += gq * gq
    model.Q[j] -= lr * gq / (np.sqrt(accum.Q[j]) + ADAGRAD_EPS)
    if model.bias1 is not None:
        gb = 2.0 * weight * err
        accum.b1[i] += gb * gb
        model.bias1[i] -= lr * gb / (math.sqrt(accum.b1[i]) + ADAGRAD_EPS)
        accum.b2[j] += gb * gb
        model.bias2[j] -= lr * gb / (math.sqrt(accum.b2[j]) + ADAGRAD_EPS)


def train_glove(matrix: CooccurrenceMatrix, d: int, epochs: int,
                lr: float = 0.05, x_max: float = GLOVE_X_MAX,
                alpha: float = GLOVE_ALPHA, seed: int = 0):
    """Minimize sum f(x_ij) (p_i.q_j + b_i + b_j - log x_ij)^2 by AdaGrad
    over shuffled nonzero cells. Returns (model, final objective)."""
    if len(matrix) == 0:
        raise DataError("empty co-occurrence matrix")
    rows, cols, vals = matrix.nonzero_arrays()
    targets = np.log(vals)
    weights = np.array([glove_weight(x, x_max, alpha) for x in vals])
    rng = np.random.default_rng(seed)
    model = _init_factors(len(matrix.vocab), d, rng, biases=True)
    accum = _AdaGradCell(model)
    objective = _glove_objective(model, rows, cols, targets, weights)
    for _ in range(epochs):
        order = rng.permutation(len(rows))
        for n in order:
            i, j = int(rows[n]), int(cols[n])
            err = model.score(i, j) - targets[n]
            _cell_sgd(model, accum, i, j, err, weights[n], lr)
        objective = _glove_objective(model, rows, cols, targets, weights)
    return model, objective


def _glove_objective(model, rows, cols, targets, weights) -> float:
    fit = np.einsum("nd,nd->n", model.P[rows], model.Q[cols])
    if model.bias1 is not None:
        fit = fit + model.bias1[rows] + model.bias2[cols]
    return float((weights * (fit - targets) ** 2).sum())


def factorize_log_counts(matrix: CooccurrenceMatrix, d: int,
                         mode: str = "raw_log", epochs: int = 200,
                         lr: float = 0.1, seed: int = 0):
    """Unweighted squared-error factorization of log counts.

    raw_log fits log(x_ij); conditional_log fits log(x_ij / column_sum_j).
    Zero-count cells are excluded. Returns (model, final objective).
    """
    if mode not in ("raw_log", "conditional_log"):
        raise ValueError(f"unknown factorization mode {mode!r}")
    rows, cols, vals = matrix.nonzero_arrays()
    if len(vals) == 0:
        raise DataError("no nonzero cells to factorize")
    if np.any(vals <= 0):
        raise DataError("counts must be positive where present")
    if mode == "raw_log":
        targets = np.log(vals)
    else:
        col_sums = matrix.column_sums()
        targets = np.log(vals / col_sums[cols])
    rng = np.random.default_rng(seed)
    model = _init_factors(len(matrix.vocab), d, rng, biases=False)
    accum = _AdaGradCell(model)
    weights = np.ones(len(vals))
    objective = _glove_objective(model, rows, cols, targets, weights)
    for _ in range(epochs):
        order = rng.permutation(len(rows))
        for n in order:
            i, j = int(rows[n]), int(cols[n])
            err = model.score(i, j) - targets[n]
            _cell_sgd(model, accum, i, j, err, 1.0, lr)
        objective = _glove_objective(model, rows, cols, targets, weights)
    return model, objective


def skipgram_equivalence_report(matrix: CooccurrenceMatrix, model) -> dict:
    """KL(empirical || model) per context column for a full-softmax skipgram.

    The model conditional of column j is softmax_i(e'(v_i) . e(v_j)); the
    empirical conditional is x_ij / sum_k x_kj. Columns with no mass are
    skipped and reported.
    """
    e = model.e
    e_prime = model.e_prime
    v = len(matrix.vocab)
    if e.shape[0] < v:
        raise DataError("model vocabulary smaller than matrix vocabulary")
    dense = matrix.to_dense()
    col_sums = dense.sum(axis=0)
    scores = e_prime[:v] @ e[:v].T  # scores[i, j]
    model_cond = softmax(scores.T).T  # softmax over i per column j
    kls = []
    skipped = []
    for j in range(v):
        if col_sums[j] <= 0:
            skipped.append(j)
            continue
        emp = dense[:, j] / col_sums[j]
        nz = emp > 0
        kls.append(float(np.sum(emp[nz] * np.log(emp[nz] / model_cond[nz, j]))))
    if not kls:
        raise DataError("no nonzero columns to compare")
    return {
        "mean_kl": float(np.mean(kls)),
        "max_kl": float(np.max(kls)),
        "columns": len(kls),
        "skipped_columns": skipped,
    }
