"""Sine-label datasets, a soft-margin kernel SVM solved in the dual, and C selection.

The dual is solved with a two-coordinate (SMO-style) method: each step picks
a KKT-violating pair (second-order working-set choice) and solves the two-variable subproblem
exactly, which keeps sum_i y_i a_i = 0 and the box 0 <= a_i <= C.  The inner
loop is compiled with numba.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConvergenceError

C_GRID = tuple(2.0**t for t in range(-8, 10))


def sign(v):
    """Sign with sign(0) = +1."""
    return np.where(np.asarray(v) >= 0, 1, -1)


# ---------------------------------------------------------------------------
# data


@dataclass
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    w: int | None = None
    b: float | None = None
    seed: int | None = None
    train_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    test_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels differ in length")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise ValueError("labels must be +1 or -1")

    def to_json(self) -> str:
        return json.dumps({
            "inputs": self.inputs.tolist(), "labels": self.labels.tolist(), "w": self.w,
            "b": self.b, "seed": self.seed, "train_idx": np.asarray(self.train_idx).tolist(),
            "test_idx": np.asarray(self.test_idx).tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "LabeledDataset":
        d = json.loads(text)
        d["train_idx"] = np.asarray(d["train_idx"], dtype=int)
        d["test_idx"] = np.asarray(d["test_idx"], dtype=int)
        return cls(**d)


def make_sine_dataset(count: int = 100, w: int = 1, b: float = 0.3, seed: int = 0,
                      train_fraction: float = 0.8) -> LabeledDataset:
    """x uniform on [-pi, pi), y = sign(sin(w x + b)), with a seeded train/test split.

    Inputs and split depend only on ``seed`` and ``count``, so datasets that
    differ only in ``w`` or ``b`` share their inputs.
    """
    if count < 10:
        raise ValueError("count must be at least 10")
    if w < 1:
        raise ValueError("frequency w must be at least 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-np.pi, np.pi, size=count)
    y = sign(np.sin(w * x + b))
    perm = rng.permutation(count)
    k = int(round(train_fraction * count))
    return LabeledDataset(x.reshape(-1, 1), y, w, b, seed, np.sort(perm[:k]), np.sort(perm[k:]))


# ---------------------------------------------------------------------------
# SVM


@dataclass
class SvmModel:
    alpha: np.ndarray
    bias: float
    labels: np.ndarray
    C: float
    iterations: int = 0
    kkt_residual: float = 0.0
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > 0)

    def decision(self, kernel_rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(kernel_rows, dtype=float))
        if rows.shape[1] != self.alpha.size:
            raise ValueError(f"kernel row length {rows.shape[1]} != training size {self.alpha.size}")
        return rows @ (self.alpha * self.labels) + self.bias

    def to_json(self) -> str:
        return json.dumps({"alpha": self.alpha.tolist(), "bias": self.bias, "labels": self.labels.tolist(),
                           "C": self.C, "iterations": self.iterations, "kkt_residual": self.kkt_residual})

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        d = json.loads(text)
        return cls(np.asarray(d["alpha"]), d["bias"], np.asarray(d["labels"]), d["C"],
                   d["iterations"], d["kkt_residual"])


@numba.njit(cache=True)
def _smo(K, y, C, tol, max_sweeps, a0):
    n = K.shape[0]
    a = a0.copy()
    # gradient of 0.5 a^T Q a - sum(a) with Q = y y^T * K
    G = -np.ones(n)
    for s in range(n):
        if a[s] != 0.0:
            for t in range(n):
                G[t] += y[t] * y[s] * K[t, s] * a[s]
    obj0 = 0.0
    for t in range(n):
        obj0 += 0.5 * a[t] * (G[t] - 1.0)
    trace = np.empty(max_sweeps + 1)
    trace[0] = obj0
    n_trace = 1
    it = 0
    gap = np.inf
    max_iter = max_sweeps * n
    while True:
        # i: maximal violation in the "up" set; j: second-order choice in the "low" set
        i = -1
        gmax = -np.inf
        for t in range(n):
            v = -y[t] * G[t]
            up = (y[t] > 0 and a[t] < C) or (y[t] < 0 and a[t] > 0)
            if up and v > gmax:
                gmax = v
                i = t
        j = -1
        gmin = np.inf
        best = np.inf
        for t in range(n):
            low = (y[t] > 0 and a[t] > 0) or (y[t] < 0 and a[t] < C)
            if not low:
                continue
            v = -y[t] * G[t]
            if v < gmin:
                gmin = v
            if i >= 0 and v < gmax:
                q = K[i, i] + K[t, t] - 2.0 * K[i, t]
                if q <= 1e-12:
                    q = 1e-12
                score = -(gmax - v) * (gmax - v) / q
                if score < best:
                    best = score
                    j = t
        gap = gmax - gmin
        if i < 0 or j < 0 or gap < tol or it >= max_iter:
            break
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 1e-12:
            quad = 1e-12
        # step along d_i = y_i, d_j = -y_j keeps sum y a fixed
        step = (-y[i] * G[i] + y[j] * G[j]) / quad
        lim_i = C - a[i] if y[i] > 0 else a[i]
        lim_j = a[j] if y[j] > 0 else C - a[j]
        if step > lim_i:
            step = lim_i
        if step > lim_j:
            step = lim_j
        di = y[i] * step
        dj = -y[j] * step
        a[i] = min(max(a[i] + di, 0.0), C)
        a[j] = min(max(a[j] + dj, 0.0), C)
        for t in range(n):
            G[t] += y[t] * (K[t, i] * y[i] * di + K[t, j] * y[j] * dj)
        it += 1
        if it % n == 0 and n_trace < trace.size:
            obj = 0.0
            for t in range(n):
                obj += 0.5 * a[t] * (G[t] - 1.0)
            trace[n_trace] = obj
            n_trace += 1
    obj = 0.0
    for t in range(n):
        obj += 0.5 * a[t] * (G[t] - 1.0)
    if n_trace < trace.size:
        trace[n_trace] = obj
        n_trace += 1
    return a, G, it, gap, trace[:n_trace]


def _objective(Q, a):
    return 0.5 * a @ Q @ a - a.sum()


def _polish(K, y, C, a):
    """Exact step on the free variables with bounded ones held fixed.

    On the free set, with the equality constraint projected out, take the
    Newton step of the dual quadratic.  If the reduced Hessian is singular
    and the gradient has a component in its null space, the objective is
    linear along that component, so move along it until a bound is hit.
    The step is kept only if the dual objective does not increase.
    """
    free = np.flatnonzero((a > 0) & (a < C))
    if free.size < 2:
        return a
    Q = (y[:, None] * y[None, :]) * K
    grad = (Q @ a - 1.0)[free]
    yf = y[free]
    # orthonormal basis of {d : y_F . d = 0}
    Z = np.linalg.svd(yf[None, :])[2][1:].T
    H = Z.T @ Q[np.ix_(free, free)] @ Z
    r = Z.T @ grad
    lam, V = np.linalg.eigh(0.5 * (H + H.T))
    null = lam <= 1e-10 * max(lam[-1], 1e-300)
    r_null = V[:, null] @ (V[:, null].T @ r)
    if np.linalg.norm(r_null) > 1e-12 * (1.0 + np.linalg.norm(r)):
        d = -Z @ r_null
        step = np.inf
    else:
        rng_ = ~null
        d = -Z @ (V[:, rng_] @ ((V[:, rng_].T @ r) / lam[rng_]))
        step = 1.0
    for di, ai in zip(d, a[free]):
        if di > 0:
            step = min(step, (C - ai) / di)
        elif di < 0:
            step = min(step, -ai / di)
    if not np.isfinite(step) or step <= 0:
        return a
    trial = a.copy()
    trial[free] = np.clip(a[free] + step * d, 0.0, C)
    return trial if _objective(Q, trial) <= _objective(Q, a) else a


def svm_train(gram, labels, C: float, tol: float = 1e-5, max_sweeps: int = 10_000,
              polish_every: int = 10) -> SvmModel:
    """Soft-margin dual SVM on a precomputed training Gram matrix.

    One sweep is ``N`` pair updates.  Every ``polish_every`` sweeps without
    convergence an exact free-set step is attempted, which rescues the slow
    tail on rank-deficient Gram matrices.  Raises :class:`ConvergenceError`
    when the KKT gap is still above ``tol`` after ``max_sweeps`` sweeps.
    """
    K = np.ascontiguousarray(np.asarray(getattr(gram, "entries", gram), dtype=float))
    y = np.asarray(labels, dtype=float)
    if K.shape != (y.size, y.size):
        raise ValueError("Gram matrix and labels disagree in size")
    if C <= 0:
        raise ValueError("C must be positive")
    a = np.zeros(y.size)
    done, iters, traces = 0, 0, []
    while True:
        chunk = min(polish_every, max_sweeps - done)
        a, G, it, gap, trace = _smo(K, y, float(C), float(tol), int(chunk), a)
        iters += it
        done += chunk
        traces.append(trace if not traces else trace[1:])
        if gap < tol or done >= max_sweeps:
            break
        a = _polish(K, y, float(C), a)
    trace = np.concatenate(traces)
    if gap >= tol and np.isfinite(gap):
        raise ConvergenceError(f"SMO stopped after {iters} updates with KKT gap {gap:.3g}", residual=float(gap))
    a[a < 1e-14 * C] = 0.0
    a[a > C * (1 - 1e-14)] = C
    v = -y * G
    free = (a > 0) & (a < C)
    if free.any():
        bias = float(np.mean(v[free]))
    else:
        up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
        low = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
        hi = v[up].max() if up.any() else v[low].min()
        lo = v[low].min() if low.any() else v[up].max()
        bias = float(0.5 * (hi + lo))
    return SvmModel(a, bias, y.astype(int), float(C), int(iters), float(max(gap, 0.0)), trace)


def svm_predict(model: SvmModel, kernel_row) -> np.ndarray | int:
    """Labels for one kernel row (returns int) or a matrix of rows (returns array)."""
    single = np.ndim(kernel_row) == 1
    out = sign(model.decision(kernel_row))
    return int(out[0]) if single else out


def misclassification_rate(predictions, truth) -> float:
    p = np.asarray(predictions)
    t = np.asarray(truth)
    if p.shape != t.shape or p.size == 0:
        raise ValueError("predictions and truth must be non-empty and equal in length")
    return float(np.mean(p != t))


def stratified_folds(labels, folds: int, seed: int) -> np.ndarray:
    """Fold id per sample; each class is shuffled and dealt round-robin."""
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold = np.empty(y.size, dtype=int)
    offset = 0
    for cls in (-1, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return fold


def cross_validate_c(gram, labels, folds: int = 5, seed: int = 0, grid=C_GRID,
                     tol: float = 1e-5) -> tuple[float, dict]:
    """Pick C by k-fold accuracy; ties go to the smaller C."""
    K = np.asarray(getattr(gram, "entries", gram), dtype=float)
    y = np.asarray(labels, dtype=int)
    if y.size < folds:
        raise ValueError("need at least as many samples as folds")
    fold = None
    for attempt in range(2):
        cand = stratified_folds(y, folds, seed + attempt)
        if all(np.unique(y[cand != f]).size == 2 for f in range(folds)):
            fold = cand
            break
    if fold is None:
        raise ValueError("a training fold contains a single class")
    scores = {}
    for C in grid:
        acc = []
        for f in range(folds):
            tr, va = _fold_split(fold, f)
            model = svm_train(K[np.ix_(tr, tr)], y[tr], C, tol=tol)
            pred = svm_predict(model, K[np.ix_(va, tr)])
            acc.append(1.0 - misclassification_rate(pred, y[va]))
        scores[float(C)] = float(np.mean(acc))
    best = max(scores.values())
    best_c = min(c for c, s in scores.items() if s == best)
    return best_c, scores


def _fold_split(fold: np.ndarray, f: int) -> tuple[np.ndarray, np.ndarray]:
    return np.flatnonzero(fold != f), np.flatnonzero(fold == f)


def fit_and_score(K_full: np.ndarray, data: LabeledDataset, folds: int = 5, cv_seed: int = 0) -> dict:
    """Cross-validate C on the training split, refit, and score the test split."""
    tr, te = data.train_idx, data.test_idx
    y = data.labels
    best_c, scores = cross_validate_c(K_full[np.ix_(tr, tr)], y[tr], folds, cv_seed)
    model = svm_train(K_full[np.ix_(tr, tr)], y[tr], best_c)
    pred = svm_predict(model, K_full[np.ix_(te, tr)])
    err = misclassification_rate(pred, y[te])
    return {"C": best_c, "cv_scores": scores, "misclassification": err, "model": model}
