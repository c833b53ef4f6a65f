"""Haar sampling, first/second unitary moment formulas and kernel scaling laws.

Operator arguments to the moment formulas are dense ``d x d`` arrays.  For
the embedded first moment the Haar unitary acts on the *last* Kronecker
factor, i.e. the full-space operator is ``kron(I_wbar, W)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .circuits import ala_blocks
from .statevec import apply_matrix_batch, apply_pauli_batch

# ---------------------------------------------------------------------------
# sampling


def sample_haar_unitary(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar unitary via QR of a complex Ginibre matrix with R-diagonal phases removed.

    Returns shape (d, d), or (size, d, d) when ``size`` is given.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    shape = (d, d) if size is None else (size, d, d)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[..., None, :]


def haar_state(d: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Haar-random pure states, shape (size, d)."""
    z = rng.standard_normal((size, d)) + 1j * rng.standard_normal((size, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# analytic moments


def _square(ops, d: int | None = None) -> int:
    ops = [np.asarray(o) for o in ops]
    side = ops[0].shape[0]
    for o in ops:
        if o.ndim != 2 or o.shape != (side, side):
            raise ValueError("operators must be square and of equal size")
    if d is not None and d != side:
        raise ValueError(f"operators have side {side}, expected d={d}")
    return side


def first_moment(A, B, d: int | None = None) -> complex:
    """Haar average of Tr[W A W^dag B]."""
    d = _square([A, B], d)
    return complex(np.trace(A) * np.trace(B) / d)


def _second_moment_groups(A, B, C, D, d):
    d = _square([A, B, C, D], d)
    if d < 2:
        raise ValueError("second moments need d >= 2")
    tA, tB, tC, tD = (np.trace(np.asarray(o)) for o in (A, B, C, D))
    tAC = np.trace(np.asarray(A) @ np.asarray(C))
    tBD = np.trace(np.asarray(B) @ np.asarray(D))
    g1 = tA * tC * tBD + tAC * tB * tD
    g2 = tA * tB * tC * tD + tAC * tBD
    return d, g1, g2


def second_moment_cyclic(A, B, C, D, d: int | None = None) -> complex:
    """Haar average of Tr[W A W^dag B W C W^dag D]."""
    d, g1, g2 = _second_moment_groups(A, B, C, D, d)
    return complex(g1 / (d * d - 1) - g2 / (d * (d * d - 1)))


def second_moment_product(A, B, C, D, d: int | None = None) -> complex:
    """Haar average of Tr[W A W^dag B] Tr[W C W^dag D]."""
    d, g1, g2 = _second_moment_groups(A, B, C, D, d)
    return complex(g2 / (d * d - 1) - g1 / (d * (d * d - 1)))


def partial_trace_last(A: np.ndarray, d_w: int) -> np.ndarray:
    """Trace out the last Kronecker factor of dimension ``d_w``."""
    A = np.asarray(A)
    full = A.shape[0]
    if A.shape != (full, full) or full % d_w:
        raise ValueError(f"dimension {full} is not divisible by d_w={d_w}")
    db = full // d_w
    return np.einsum("iaja->ij", A.reshape(db, d_w, db, d_w))


def embedded_first_moment(A, B, d_w: int) -> complex:
    """Haar average of Tr[(I x W) A (I x W^dag) B] with W on the last factor."""
    _square([A, B])
    return complex(np.trace(partial_trace_last(A, d_w) @ partial_trace_last(B, d_w)) / d_w)


# ---------------------------------------------------------------------------
# Monte-Carlo estimates


@dataclass
class MomentResult:
    analytic_value: complex
    mc_estimate: complex
    mc_stderr: float
    sample_count: int
    mc_stderr_imag: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.mc_stderr < 0 or self.mc_stderr_imag < 0:
            raise ValueError("standard errors must be non-negative")
        if self.sample_count < 1:
            raise ValueError("sample_count must be positive")

    @property
    def z_score(self) -> float:
        """Largest |z| over the real and imaginary components."""
        diff = complex(self.mc_estimate) - complex(self.analytic_value)
        # components that vanish identically carry only roundoff on both sides
        tiny = 1e-12 * (1.0 + abs(complex(self.analytic_value)))
        z = 0.0
        for delta, se in ((diff.real, self.mc_stderr), (diff.imag, self.mc_stderr_imag)):
            if abs(delta) <= tiny:
                continue
            z = max(z, abs(delta) / se) if se > 0 else float("inf")
        return z

    def to_dict(self) -> dict:
        a = complex(self.analytic_value)
        m = complex(self.mc_estimate)
        return {
            "label": self.label,
            "analytic_re": a.real,
            "analytic_im": a.imag,
            "mc_re": m.real,
            "mc_im": m.imag,
            "stderr_re": self.mc_stderr,
            "stderr_im": self.mc_stderr_imag,
            "samples": self.sample_count,
            "z": self.z_score,
        }


def mean_result(values: np.ndarray, analytic, label: str = "") -> MomentResult:
    values = np.asarray(values)
    n = values.size
    se_re = float(np.std(values.real, ddof=1) / np.sqrt(n))
    se_im = float(np.std(values.imag, ddof=1) / np.sqrt(n)) if np.iscomplexobj(values) else 0.0
    return MomentResult(complex(analytic), complex(values.mean()), se_re, n, se_im, label)


def jackknife(values: np.ndarray, stat, batches: int = 20) -> tuple[float, float]:
    """Statistic over all values and its delete-one-batch jackknife standard error."""
    values = np.asarray(values)
    if batches < 2 or values.size < batches:
        raise ValueError("need at least two batches with one sample each")
    parts = np.array_split(values, batches)
    full = float(stat(values))
    loo = np.array([stat(np.concatenate(parts[:k] + parts[k + 1:])) for k in range(batches)])
    se = float(np.sqrt((batches - 1) / batches * np.sum((loo - loo.mean()) ** 2)))
    return full, se


def _variance(v):
    return np.var(v)


def _chunked(total: int, chunk: int):
    done = 0
    while done < total:
        k = min(chunk, total - done)
        yield k
        done += k


def mc_first_moment(A, B, samples: int, rng, chunk: int = 20000) -> np.ndarray:
    d = _square([A, B])
    out = []
    for k in _chunked(samples, chunk):
        W = sample_haar_unitary(d, rng, k)
        M = W @ A @ np.conj(np.swapaxes(W, 1, 2))
        out.append(np.einsum("sij,ji->s", M, B))
    return np.concatenate(out)


def mc_second_moment_cyclic(A, B, C, D, samples: int, rng, chunk: int = 20000) -> np.ndarray:
    d = _square([A, B, C, D])
    out = []
    for k in _chunked(samples, chunk):
        W = sample_haar_unitary(d, rng, k)
        Wd = np.conj(np.swapaxes(W, 1, 2))
        X = W @ A @ Wd @ B
        Y = W @ C @ Wd @ D
        out.append(np.einsum("sij,sji->s", X, Y))
    return np.concatenate(out)


def mc_second_moment_product(A, B, C, D, samples: int, rng, chunk: int = 20000) -> np.ndarray:
    d = _square([A, B, C, D])
    out = []
    for k in _chunked(samples, chunk):
        W = sample_haar_unitary(d, rng, k)
        Wd = np.conj(np.swapaxes(W, 1, 2))
        t1 = np.einsum("sij,ji->s", W @ A @ Wd, B)
        t2 = np.einsum("sij,ji->s", W @ C @ Wd, D)
        out.append(t1 * t2)
    return np.concatenate(out)


def mc_embedded_first_moment(A, B, d_w: int, samples: int, rng, chunk: int = 20000) -> np.ndarray:
    full = _square([A, B])
    if full % d_w:
        raise ValueError(f"dimension {full} is not divisible by d_w={d_w}")
    eye = np.eye(full // d_w)
    out = []
    for k in _chunked(samples, chunk):
        W = sample_haar_unitary(d_w, rng, k)
        E = np.einsum("ab,sij->saibj", eye, W).reshape(k, full, full)
        M = E @ A @ np.conj(np.swapaxes(E, 1, 2))
        out.append(np.einsum("sij,ji->s", M, B))
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# closed-form kernel statistics


@dataclass
class ScalingFormula:
    kernel: str
    case: str
    n: int
    mean: float
    variance_kind: str
    variance_value: float
    m: int | None = None
    d: int | None = None
    raw_value: float | None = None
    leading_term: float | None = None
    subtracted_term: float | None = None

    def __post_init__(self):
        if self.variance_value < 0 or not np.isfinite(self.mean):
            raise ValueError("variance must be non-negative and mean finite")

    def to_dict(self) -> dict:
        return asdict(self)


def _case(case: str) -> str:
    c = case.lower()
    if c in ("global", "globalrandom", "global_random"):
        return "GlobalRandom"
    if c == "ala":
        return "ALA"
    raise ValueError(f"unknown case {case!r}")


def analytic_fidelity_stats(n: int, case: str = "GlobalRandom", m: int | None = None) -> ScalingFormula:
    """Mean and variance (or variance upper bound) of the fidelity kernel.

    For the ALA case the raw bound ``2^k/(4^m-1)^k - 1/4^m`` is negative at
    small n; ``variance_value`` then falls back to the leading term and both
    pieces are reported.
    """
    if n < 1:
        raise ValueError("n must be positive")
    c = _case(case)
    D = 2.0**n
    if c == "GlobalRandom":
        return ScalingFormula("Fidelity", c, n, 1 / D, "Exact", (D - 1) / (D * D * (D + 1)))
    if not m or n % m:
        raise ValueError(f"ALA case needs a block width m dividing n={n}")
    kappa = n // m
    lead = 2.0**kappa / (4.0**m - 1) ** kappa
    sub = 1 / 4.0**m
    raw = lead - sub
    return ScalingFormula("Fidelity", c, n, 1 / D, "UpperBound", raw if raw >= 0 else lead,
                          m=m, raw_value=raw, leading_term=lead, subtracted_term=sub)


def analytic_aldqfk_stats(n: int, case: str = "GlobalRandom", m: int | None = None,
                          d: int | None = None) -> ScalingFormula:
    """Mean and variance (or lower bound) of one ALDQFK term."""
    if n < 1:
        raise ValueError("n must be positive")
    c = _case(case)
    if c == "GlobalRandom":
        D = 2.0**n
        var = D / (2 * (D * D - 1)) * (1 + (D - 2) / (D * (D + 1)))
        return ScalingFormula("ALDQFK", c, n, 0.0, "Exact", var)
    if not m or n % m:
        raise ValueError(f"ALA case needs a block width m dividing n={n}")
    if d is None or d < 1:
        raise ValueError("ALA case needs a block depth d >= 1")
    a = 2.0 ** (m * d)
    var = a * a * (a - 1) / (2 * (4.0**m - 1) ** 2 * (2.0**m + 1) ** (4 * (d - 1)))
    return ScalingFormula("ALDQFK", c, n, 0.0, "LowerBound", var, m=m, d=d)


# ---------------------------------------------------------------------------
# kernel closures with Haar stand-ins


@dataclass
class ClosureResult:
    n: int
    samples: int
    mean: float
    mean_stderr: float
    variance: float
    variance_stderr: float
    formula: ScalingFormula

    @property
    def mean_z(self) -> float:
        return abs(self.mean - self.formula.mean) / self.mean_stderr

    @property
    def variance_z(self) -> float:
        return abs(self.variance - self.formula.variance_value) / self.variance_stderr

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "formula"}
        out.update(mean_z=self.mean_z, variance_z=self.variance_z,
                   analytic_mean=self.formula.mean, analytic_variance=self.formula.variance_value,
                   variance_kind=self.formula.variance_kind)
        return out


def _closure(values, n, formula, batches):
    mean, mean_se = jackknife(values, np.mean, batches)
    var, var_se = jackknife(values, _variance, batches)
    return ClosureResult(n, len(values), mean, mean_se, var, var_se, formula)


def fidelity_closure(n: int, samples: int, rng, batches: int = 20) -> ClosureResult:
    """|<0|W^dag W'|0>|^2 with independent Haar W, W' on n qubits."""
    d = 2**n
    vals = []
    for k in _chunked(samples, 20000):
        a = sample_haar_unitary(d, rng, k)[:, :, 0]
        b = sample_haar_unitary(d, rng, k)[:, :, 0]
        vals.append(np.abs(np.einsum("si,si->s", a.conj(), b)) ** 2)
    return _closure(np.concatenate(vals), n, analytic_fidelity_stats(n), batches)


def _u_haar(W: np.ndarray, n: int, qubit: int = 0, axis: str = "Z") -> np.ndarray:
    """W^dag B W |0> for a batch of full-space unitaries W."""
    psi = W[:, :, 0]
    psi = apply_pauli_batch(psi, n, axis, qubit)
    return np.einsum("sji,sj->si", W.conj(), psi)


def aldqfk_global_closure(n: int, samples: int, rng, batches: int = 20) -> ClosureResult:
    """Re<u|u'> with u = W^dag Z_0 W|0> and independent Haar prefixes W, W'."""
    d = 2**n
    vals = []
    for k in _chunked(samples, 20000):
        u = _u_haar(sample_haar_unitary(d, rng, k), n)
        v = _u_haar(sample_haar_unitary(d, rng, k), n)
        vals.append(np.einsum("si,si->s", u.conj(), v).real)
    return _closure(np.concatenate(vals), n, analytic_aldqfk_stats(n), batches)


def _product_state(n: int, rng, size: int) -> np.ndarray:
    """Batch of tensor products of Haar single-qubit states, little-endian."""
    psi = np.ones((size, 1), dtype=complex)
    for _ in range(n):
        q = haar_state(2, rng, size)
        # new qubit becomes the most significant bit
        psi = np.einsum("sa,sb->sab", q, psi).reshape(size, -1)
    return psi


def _ala_u(psi0: np.ndarray, n: int, m: int, d: int, k: int, rng, axis: str = "Z") -> np.ndarray:
    """U^dag B U psi0 where U is a brick stack of Haar m-qubit blocks.

    Layers 0..d-2 are complete; at layer d-1 only block ``k`` (the one
    carrying the parameter) is present, and B acts on its first qubit.
    """
    size = psi0.shape[0]
    dim = 2**m
    ops = []
    for layer in range(d - 1):
        for block in ala_blocks(n, m, layer):
            ops.append((block, sample_haar_unitary(dim, rng, size)))
    target = ala_blocks(n, m, d - 1)[k]
    ops.append((target, sample_haar_unitary(dim, rng, size)))
    psi = psi0
    for block, W in ops:
        psi = apply_matrix_batch(psi, n, W, block)
    psi = apply_pauli_batch(psi, n, axis, target[0])
    for block, W in reversed(ops):
        psi = apply_matrix_batch(psi, n, np.conj(np.swapaxes(W, 1, 2)), block)
    return psi


def aldqfk_ala_closure(n: int, m: int, d: int, samples: int, rng, batches: int = 20,
                       block: int | None = None, chunk: int = 5000) -> ClosureResult:
    """ALDQFK term with Haar ALA blocks and a shared random product initial state.

    The x and x' sides draw independent block unitaries.  ``block`` defaults
    to the middle block of layer d.
    """
    if n % m or (m > 1 and m % 2):
        raise ValueError("need m even (or 1) dividing n")
    nblocks = len(ala_blocks(n, m, d - 1))
    k = nblocks // 2 if block is None else block
    vals = []
    for size in _chunked(samples, chunk):
        psi0 = _product_state(n, rng, size)
        u = _ala_u(psi0, n, m, d, k, rng)
        v = _ala_u(psi0, n, m, d, k, rng)
        vals.append(np.einsum("si,si->s", u.conj(), v).real)
    return _closure(np.concatenate(vals), n, analytic_aldqfk_stats(n, "ALA", m, d), batches)


# ---------------------------------------------------------------------------
# moment battery


def _random_operator(d: int, rng) -> np.ndarray:
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


def _random_hermitian(d: int, rng) -> np.ndarray:
    a = _random_operator(d, rng)
    return (a + a.conj().T) / 2


def _projector0(d: int) -> np.ndarray:
    p = np.zeros((d, d), dtype=complex)
    p[0, 0] = 1
    return p


def _z_string(d: int) -> np.ndarray:
    return np.diag([1.0 if bin(i).count("1") % 2 == 0 else -1.0 for i in range(d)]).astype(complex)


def battery_tuples(d: int, seed: int = 7) -> list[tuple[str, str, tuple]]:
    """Fixed operator tuples: three per moment formula, as (kind, label, operators)."""
    rng = np.random.default_rng([seed, d])
    P, Z = _projector0(d), _z_string(d)
    h = [_random_hermitian(d, rng) for _ in range(4)]
    g = [_random_operator(d, rng) for _ in range(4)]
    dw, db = d, 2
    full = dw * db
    Pf = _projector0(full)
    out = [
        ("first", "projectors", (P, P)),
        ("first", "hermitian", (h[0], h[1])),
        ("first", "general", (g[0], g[1])),
        ("cyclic", "z-strings", (Z, Z, Z, Z)),
        ("cyclic", "hermitian", tuple(h)),
        ("cyclic", "general", tuple(g)),
        ("product", "pure-states", (P, P, P, P)),
        ("product", "hermitian", tuple(h)),
        ("product", "general", tuple(g)),
        ("embedded", "projector-kron", (Pf, np.kron(_random_hermitian(db, rng), Z))),
        ("embedded", "hermitian", (_random_hermitian(full, rng), _random_hermitian(full, rng))),
        ("embedded", "general", (_random_operator(full, rng), _random_operator(full, rng))),
    ]
    return out


def evaluate_tuple(kind: str, ops: tuple, d: int, samples: int, rng) -> MomentResult:
    if kind == "first":
        return mean_result(mc_first_moment(*ops, samples, rng), first_moment(*ops))
    if kind == "cyclic":
        return mean_result(mc_second_moment_cyclic(*ops, samples, rng), second_moment_cyclic(*ops))
    if kind == "product":
        return mean_result(mc_second_moment_product(*ops, samples, rng), second_moment_product(*ops))
    if kind == "embedded":
        return mean_result(mc_embedded_first_moment(*ops, d, samples, rng), embedded_first_moment(*ops, d))
    raise ValueError(f"unknown moment kind {kind!r}")


def moment_battery(d: int, samples: int, seed: int) -> list[MomentResult]:
    """Analytic-vs-Monte-Carlo results for the fixed battery at dimension ``d``."""
    rng = np.random.default_rng(seed)
    rows = []
    for kind, label, ops in battery_tuples(d):
        r = evaluate_tuple(kind, ops, d, samples, rng)
        r.label = f"{kind}/{label}/d={d}"
        rows.append(r)
    return rows
