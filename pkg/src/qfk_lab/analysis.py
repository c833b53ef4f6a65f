"""Pooled kernel statistics, Fourier fits of 1-D kernels and geometric difference."""
from __future__ import annotations

import io
import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats as _stats

from .errors import FitError


def _entries(g) -> np.ndarray:
    return np.asarray(getattr(g, "entries", g), dtype=float)


# ---------------------------------------------------------------------------
# pooled statistics


@dataclass
class PooledStats:
    mean: float
    variance: float
    count: int
    mean_stderr: float | None = None
    variance_stderr: float | None = None

    def __post_init__(self):
        if self.count < 1 or self.variance < 0:
            raise ValueError("need count >= 1 and variance >= 0")


def offdiag_values(gram) -> np.ndarray:
    K = _entries(gram)
    n = K.shape[0]
    if K.shape != (n, n) or n < 2:
        raise ValueError("need a square Gram matrix with N >= 2")
    return K[np.triu_indices(n, 1)]


def pooled_offdiag_stats(grams) -> PooledStats:
    """Mean and population variance over strict upper-triangle entries of all matrices.

    With two or more matrices, jackknife standard errors are attached
    (deleting one matrix at a time).
    """
    grams = list(grams)
    if not grams:
        raise ValueError("no Gram matrices given")
    sizes = {_entries(g).shape for g in grams}
    if len(sizes) != 1:
        raise ValueError(f"Gram matrices differ in size: {sorted(sizes)}")
    parts = [offdiag_values(g) for g in grams]
    v = np.concatenate(parts)
    out = PooledStats(float(v.mean()), float(v.var()), int(v.size))
    b = len(parts)
    if b >= 2:
        loo_m, loo_v = [], []
        for k in range(b):
            rest = np.concatenate(parts[:k] + parts[k + 1:])
            loo_m.append(rest.mean())
            loo_v.append(rest.var())
        f = (b - 1) / b
        out.mean_stderr = float(np.sqrt(f * np.sum((np.array(loo_m) - np.mean(loo_m)) ** 2)))
        out.variance_stderr = float(np.sqrt(f * np.sum((np.array(loo_v) - np.mean(loo_v)) ** 2)))
    return out


def log2_slope(ns, values) -> float:
    """Least-squares slope of log2(values) against ``ns``."""
    return float(np.polyfit(np.asarray(ns, dtype=float), np.log2(np.asarray(values, dtype=float)), 1)[0])


# ---------------------------------------------------------------------------
# Fourier representation


def uniform_grid(points: int = 100) -> np.ndarray:
    """``points`` equally spaced values on [-pi, pi)."""
    return -np.pi + 2 * np.pi * np.arange(points) / points


@dataclass
class FourierTable:
    """Coefficients c[w + cutoff, w' + cutoff] of k(x, x') = sum c e^{i w x} e^{i w' x'}."""

    cutoff: int
    coefficients: np.ndarray
    fit_mae: float = 0.0

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(-self.cutoff, self.cutoff + 1)

    def coef(self, w: int, wp: int) -> complex:
        c = self.cutoff
        if abs(w) > c or abs(wp) > c:
            return 0j
        return complex(self.coefficients[w + c, wp + c])

    def amplitude(self, w: int, wp: int) -> float:
        return abs(self.coef(w, wp))

    def hermitian_error(self) -> float:
        C = self.coefficients
        return float(np.max(np.abs(C - np.conj(C[::-1, ::-1]))))

    def support(self, threshold: float = 1e-2) -> set[tuple[int, int]]:
        f = self.frequencies
        idx = np.argwhere(np.abs(self.coefficients) > threshold)
        return {(int(f[a]), int(f[b])) for a, b in idx}

    def to_csv(self, flag_below: float = 1e-3) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["omega", "omega_prime", "re", "im", "abs", "sub_threshold"])
        f = self.frequencies
        for a, wa in enumerate(f):
            for b, wb in enumerate(f):
                c = self.coefficients[a, b]
                w.writerow([int(wa), int(wb), repr(float(c.real)), repr(float(c.imag)),
                            repr(float(abs(c))), int(abs(c) < flag_below)])
        return buf.getvalue()


def _design(xs: np.ndarray, cutoff: int) -> np.ndarray:
    return np.exp(1j * np.outer(xs, np.arange(-cutoff, cutoff + 1)))


def fourier_fit(xs, K, cutoff: int = 12, xps=None, ridge: float = 1e-12) -> FourierTable:
    """Least-squares double Fourier series on a grid.

    ``K[a, b]`` is the kernel at ``(xs[a], xps[b])``.  The model factorises
    as ``E C F^T`` so the normal equations split per axis.  The result is
    projected onto Hermitian-symmetric coefficient sets, which is exact for
    real samples.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    xs = np.asarray(xs, dtype=float)
    xps = xs if xps is None else np.asarray(xps, dtype=float)
    K = np.asarray(K, dtype=float)
    if K.shape != (xs.size, xps.size):
        raise ValueError(f"kernel grid shape {K.shape} does not match ({xs.size}, {xps.size})")
    nf = 2 * cutoff + 1
    E, F = _design(xs, cutoff), _design(xps, cutoff)
    for M, axis in ((E, "x"), (F, "x'")):
        if np.linalg.matrix_rank(M) < nf:
            raise FitError(
                f"design along {axis} is rank deficient for cutoff {cutoff}: "
                f"need at least {nf} distinct grid points per axis"
            )

    def pinv(M):
        G = M.conj().T @ M
        return np.linalg.solve(G + ridge * np.eye(nf), M.conj().T)

    C = pinv(E) @ K @ pinv(F).T
    C = 0.5 * (C + np.conj(C[::-1, ::-1]))
    rec = (E @ C @ F.T).real
    return FourierTable(cutoff, C, float(np.mean(np.abs(rec - K))))


def fourier_reconstruct(table: FourierTable, x, xp) -> float | np.ndarray:
    """Real part of the truncated double series at (x, x'); broadcasts over arrays."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    f = table.frequencies
    ex = np.exp(1j * x[..., None] * f)
    ey = np.exp(1j * xp[..., None] * f)
    val = np.einsum("...a,ab,...b->...", ex, table.coefficients, ey)
    out = val.real
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# symmetric eigenproblems and geometric difference


def sym_eig(M, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors of a real symmetric matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T), initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return np.linalg.eigh(0.5 * (M + M.T))


@dataclass
class GeometricDifference:
    g: float
    normalized: float
    discarded: int
    floor: float
    size: int

    def __float__(self) -> float:
        return self.g

    def to_dict(self) -> dict:
        return dict(g=self.g, g_over_sqrt_n=self.normalized, discarded_eigenvalues=self.discarded,
                    eigen_floor=self.floor, size=self.size)


def geometric_difference(Ka, Kb, eigen_floor: float | None = None) -> GeometricDifference:
    """g(Ka || Kb) = sqrt(|| sqrt(Kb) Ka^+ sqrt(Kb) ||_2).

    Eigenvalues of Ka below ``eigen_floor`` (default 1e-10 * lambda_max) are
    dropped from the pseudo-inverse; the count is reported.
    """
    A, B = _entries(Ka), _entries(Kb)
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError(f"Gram matrices must be square and equal in size, got {A.shape} and {B.shape}")
    n = A.shape[0]
    wa, Va = sym_eig(A)
    wb, Vb = sym_eig(B)
    for w, name in ((wa, "Ka"), (wb, "Kb")):
        if w[0] < -1e-8 * n:
            raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3g})")
    floor = 1e-10 * wa[-1] if eigen_floor is None else float(eigen_floor)
    keep = wa > floor
    if not keep.any():
        raise ValueError("every eigenvalue of Ka lies below the floor")
    Ainv = (Va[:, keep] / wa[keep]) @ Va[:, keep].T
    sqrt_b = (Vb * np.sqrt(np.clip(wb, 0.0, None))) @ Vb.T
    M = sqrt_b @ Ainv @ sqrt_b
    top = sym_eig(M, tol=1e-6)[0][-1]
    g = float(np.sqrt(max(top, 0.0)))
    return GeometricDifference(g, g / np.sqrt(n), int((~keep).sum()), float(floor), n)


def spearman(a, b) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    return float(_stats.spearmanr(a, b).statistic)
