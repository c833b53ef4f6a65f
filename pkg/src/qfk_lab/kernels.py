"""Fidelity and Fisher-type kernels over circuit templates, plus Gram assembly.

Pairwise functions (``fidelity_kernel``, ``aldqfk_term`` ...) walk a bound
circuit on single statevectors.  Gram assembly uses the batched path in
:func:`cross_gram`, which evolves all data points at once.
"""
from __future__ import annotations

import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuits import (
    CircuitTemplate,
    apply_slots,
    as_batch,
    bind,
    generators,
    slot_angles,
    zero_batch,
)
from .statevec import apply_gate, apply_pauli, apply_pauli_batch, inner_product, zero_state

KINDS = ("Fidelity", "ALDQFK", "ALDQFKNormalized", "SLDQFKParamShift")


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    template: CircuitTemplate
    theta: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "theta", tuple(float(t) for t in np.atleast_1d(self.theta)))
        if len(self.theta) != self.template.n_params:
            raise ValueError(f"theta has {len(self.theta)} entries, template needs {self.template.n_params}")
        if self.kind != "Fidelity" and self.template.n_params == 0:
            raise ValueError("Fisher kernels need at least one parameter")

    @property
    def n_terms(self) -> int:
        return len(self.template.param_slot_positions)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "circuit": self.template.short_name(),
            "circuit_hash": self.template.descriptor_hash(),
            "theta": list(self.theta),
        }


@dataclass
class GramMatrix:
    entries: np.ndarray
    spec: KernelSpec | None = None
    data_seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def provenance(self) -> dict:
        out = {"size": self.size, "data_seed": self.data_seed}
        if self.spec is not None:
            out.update(self.spec.describe())
        out.update(self.meta)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.provenance(), sort_keys=True) + "\n")
        np.savetxt(buf, self.entries, delimiter=",", fmt="%.17g")
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.provenance(), sort_keys=True, indent=2)

    def save(self, stem: str) -> None:
        with open(stem + ".csv", "w") as fh:
            fh.write(self.to_csv())
        with open(stem + ".json", "w") as fh:
            fh.write(self.to_json())


# ---------------------------------------------------------------------------
# pairwise, single-state path


def _check_pair(spec: KernelSpec, x, xp):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    n = spec.template.n_features
    if x.shape != (n,) or xp.shape != (n,):
        raise ValueError(f"feature vectors must have length {n}")
    return x, xp


def _state(spec: KernelSpec, x, stop: int | None = None):
    bound = bind(spec.template, x, spec.theta)
    s = zero_state(spec.template.n_qubits)
    for g in bound.gates[:stop]:
        apply_gate(s, g)
    return s, bound


def fidelity_kernel(spec: KernelSpec, x, xp) -> float:
    x, xp = _check_pair(spec, x, xp)
    a, _ = _state(spec, x)
    b, _ = _state(spec, xp)
    return abs(inner_product(a, b)) ** 2


def _u_vector(spec: KernelSpec, x, i: int):
    """U_{1:i}^dagger B_i U_{1:i} |0> for generator entry ``i``."""
    gens = generators(spec.template)
    if not 0 <= i < len(gens):
        raise ValueError(f"term index {i} out of range for {len(gens)} generators")
    g = gens[i]
    s, bound = _state(spec, x, g.prefix_length)
    for q in g.qubits:
        apply_pauli(s, "Z" if g.axis == "ZZ" else g.axis, q)
    for gate in reversed(bound.gates[: g.prefix_length]):
        apply_gate(s, gate.inverse())
    return s


def aldqfk_term(spec: KernelSpec, x, xp, i: int) -> float:
    x, xp = _check_pair(spec, x, xp)
    return float(inner_product(_u_vector(spec, x, i), _u_vector(spec, xp, i)).real)


def aldqfk(spec: KernelSpec, x, xp) -> float:
    if spec.kind not in ("ALDQFK", "ALDQFKNormalized"):
        raise ValueError(f"aldqfk needs an ALDQFK kind, got {spec.kind}")
    p = spec.n_terms
    total = sum(aldqfk_term(spec, x, xp, i) for i in range(p))
    return total / p if spec.kind == "ALDQFKNormalized" else total


def _shifted_state(spec: KernelSpec, x, slot: int, shift: float):
    bound = bind(spec.template, x, spec.theta)
    s = zero_state(spec.template.n_qubits)
    for k, g in enumerate(bound.gates):
        if k == slot:
            g = type(g)(g.name, g.qubits, g.angle + shift)
        apply_gate(s, g)
    return s


def sldqfk_param_shift(spec: KernelSpec, x, xp) -> float:
    """Sum over parameterized gates of Tr[(rho+ - rho-)(rho'+ - rho'-)] with +-pi/2 shifts."""
    x, xp = _check_pair(spec, x, xp)
    total = 0.0
    for g in generators(spec.template):
        a = [_shifted_state(spec, x, g.gate_index, s) for s in (np.pi / 2, -np.pi / 2)]
        b = [_shifted_state(spec, xp, g.gate_index, s) for s in (np.pi / 2, -np.pi / 2)]
        f = [[abs(inner_product(u, v)) ** 2 for v in b] for u in a]
        total += f[0][0] - f[0][1] - f[1][0] + f[1][1]
    return total


def kernel_value(spec: KernelSpec, x, xp) -> float:
    if spec.kind == "Fidelity":
        return fidelity_kernel(spec, x, xp)
    if spec.kind == "SLDQFKParamShift":
        return sldqfk_param_shift(spec, x, xp)
    return aldqfk(spec, x, xp)


# ---------------------------------------------------------------------------
# batched path


def fidelity_states(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    angles = slot_angles(spec.template, X, spec.theta)
    psi = zero_batch(spec.template.n_qubits, X.shape[0])
    return apply_slots(psi, spec.template, angles, 0, len(spec.template.slots))


def aldqfk_features(spec: KernelSpec, X: np.ndarray):
    """Yield the batch of vectors u_i(x) for every generator entry i, in order."""
    t = spec.template
    n = t.n_qubits
    angles = slot_angles(t, X, spec.theta)
    psi = zero_batch(n, X.shape[0])
    pos = 0
    for g in generators(t):
        psi = apply_slots(psi, t, angles, pos, g.prefix_length)
        pos = g.prefix_length
        u = psi
        for q in g.qubits:
            u = apply_pauli_batch(u, n, "Z" if g.axis == "ZZ" else g.axis, q)
        yield apply_slots(u, t, angles, 0, g.prefix_length, inverse=True)


def _shifted_batch(spec: KernelSpec, X: np.ndarray, angles, slot: int, shift: float) -> np.ndarray:
    t = spec.template
    a = list(angles)
    a[slot] = a[slot] + shift
    psi = zero_batch(t.n_qubits, X.shape[0])
    return apply_slots(psi, t, a, 0, len(t.slots))


def _chunks(X: np.ndarray, threads: int):
    if threads <= 1 or X.shape[0] < 2 * threads:
        return [X]
    return np.array_split(X, threads)


def _map_rows(fn, X: np.ndarray, threads: int) -> np.ndarray:
    parts = _chunks(X, threads)
    if len(parts) == 1:
        return fn(X)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.concatenate(list(pool.map(fn, parts)), axis=0)


def cross_gram(spec: KernelSpec, XA, XB=None, threads: int = 1) -> np.ndarray:
    """Kernel matrix K[a, b] = k(XA[a], XB[b]); XB defaults to XA."""
    t = spec.template
    XA = as_batch(t, XA)
    same = XB is None
    XB = XA if same else as_batch(t, XB)
    X = XA if same else np.concatenate([XA, XB], axis=0)
    na = XA.shape[0]

    def split(states):
        return (states, states) if same else (states[:na], states[na:])

    if spec.kind == "Fidelity":
        S = _map_rows(lambda Z: fidelity_states(spec, Z), X, threads)
        A, B = split(S)
        return np.abs(A.conj() @ B.T) ** 2

    if spec.kind == "SLDQFKParamShift":
        K = np.zeros((na, XB.shape[0]))
        for g in generators(t):
            def shifted(Z, s, k=g.gate_index):
                return _shifted_batch(spec, Z, slot_angles(t, Z, spec.theta), k, s)

            P = _map_rows(lambda Z: shifted(Z, np.pi / 2), X, threads)
            M = _map_rows(lambda Z: shifted(Z, -np.pi / 2), X, threads)
            Pa, Pb = split(P)
            Ma, Mb = split(M)
            K += (np.abs(Pa.conj() @ Pb.T) ** 2 - np.abs(Pa.conj() @ Mb.T) ** 2
                  - np.abs(Ma.conj() @ Pb.T) ** 2 + np.abs(Ma.conj() @ Mb.T) ** 2)
        return K

    # ALDQFK kinds: accumulate Re <u_i(a)|u_i(b)> over generator entries
    def feats(Z):
        return np.stack(list(aldqfk_features(spec, Z)), axis=0)

    K = np.zeros((na, XB.shape[0]))
    parts = _chunks(X, threads)
    if len(parts) == 1:
        for u in aldqfk_features(spec, X):
            A, B = split(u)
            K += (A.conj() @ B.T).real
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            U = np.concatenate(list(pool.map(feats, parts)), axis=1)
        for u in U:
            A, B = split(u)
            K += (A.conj() @ B.T).real
    if spec.kind == "ALDQFKNormalized":
        K /= spec.n_terms
    return K


def gram_matrix(spec: KernelSpec, data, data_seed: int | None = None, threads: int = 1) -> GramMatrix:
    """Symmetric Gram matrix; the lower triangle is computed and mirrored."""
    X = np.asarray(data, dtype=float)
    if X.size == 0:
        raise ValueError("empty data set")
    X = as_batch(spec.template, X)
    K = cross_gram(spec, X, threads=threads)
    lower = np.tril(K)
    K = lower + np.tril(K, -1).T
    return GramMatrix(K, spec, data_seed)
