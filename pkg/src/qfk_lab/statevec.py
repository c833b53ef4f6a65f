"""Dense statevector engine.

Amplitudes are little-endian: qubit ``q`` is bit ``q`` of the basis index.
All kernels below work on a *batch* of states stored as a ``(B, 2**n)``
complex array so that Gram-matrix loops can evolve every data point at once;
the :class:`Statevector` wrapper is the single-state view of the same code.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceError

DEFAULT_MAX_QUBITS = 24

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)

ROTATIONS = ("RX", "RY", "RZ")
GATE_NAMES = ("RX", "RY", "RZ", "RZZ", "H", "CNOT", "CZ")
_ARITY = {"RX": 1, "RY": 1, "RZ": 1, "RZZ": 2, "H": 1, "CNOT": 2, "CZ": 2}


def max_qubits() -> int:
    """Simulator ceiling; ``QFK_MAX_QUBITS`` overrides the default of 24."""
    value = os.environ.get("QFK_MAX_QUBITS")
    return int(value) if value else DEFAULT_MAX_QUBITS


@dataclass(frozen=True)
class GateOp:
    """One gate of a resolved circuit.

    ``name`` is one of RX/RY/RZ (Pauli rotations exp(-i angle P/2)), RZZ
    (exp(-i angle Z⊗Z/2)), H, CNOT (qubits = control, target) or CZ.
    """

    name: str
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.name not in _ARITY:
            raise ValueError(f"unknown gate {self.name!r}")
        if len(self.qubits) != _ARITY[self.name]:
            raise ValueError(f"{self.name} acts on {_ARITY[self.name]} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit in {self.qubits}")
        if self.name in ROTATIONS + ("RZZ",) and self.angle is None:
            raise ValueError(f"{self.name} needs an angle")

    @property
    def axis(self) -> str | None:
        if self.name in ROTATIONS:
            return self.name[1]
        if self.name == "RZZ":
            return "ZZ"
        return None

    def inverse(self) -> "GateOp":
        if self.angle is None:
            return self
        return GateOp(self.name, self.qubits, -self.angle)

    def matrix(self) -> np.ndarray:
        """Local unitary on ``qubits`` (first listed qubit = least significant bit)."""
        return gate_matrix(self.name, self.angle)


def rotation_matrix(axis: str, angle):
    """exp(-i angle P/2); ``angle`` may be an array, giving shape (..., 2, 2)."""
    t = np.asarray(angle, dtype=float)
    c = np.cos(t / 2)
    s = np.sin(t / 2)
    out = np.zeros(t.shape + (2, 2), dtype=complex)
    if axis == "X":
        out[..., 0, 0] = c
        out[..., 1, 1] = c
        out[..., 0, 1] = -1j * s
        out[..., 1, 0] = -1j * s
    elif axis == "Y":
        out[..., 0, 0] = c
        out[..., 1, 1] = c
        out[..., 0, 1] = -s
        out[..., 1, 0] = s
    elif axis == "Z":
        out[..., 0, 0] = np.exp(-0.5j * t)
        out[..., 1, 1] = np.exp(0.5j * t)
    else:
        raise ValueError(f"unknown rotation axis {axis!r}")
    return out


def gate_matrix(name: str, angle: float | None = None) -> np.ndarray:
    if name in ROTATIONS:
        return rotation_matrix(name[1], angle)
    if name == "H":
        return _H.copy()
    if name == "RZZ":
        # basis |b0 b1> with b0 the low bit; phase depends only on parity
        ph = np.exp(-0.5j * angle * np.array([1, -1, -1, 1]))
        return np.diag(ph)
    if name == "CNOT":
        # control = qubits[0] (low bit), target = qubits[1]
        m = np.eye(4, dtype=complex)
        m[[1, 3]] = m[[3, 1]]
        return m
    if name == "CZ":
        return np.diag([1, 1, 1, -1]).astype(complex)
    raise ValueError(f"unknown gate {name!r}")


# ---------------------------------------------------------------------------
# batched kernels: psi has shape (B, 2**n)


def _check_qubits(n: int, qubits) -> None:
    for q in qubits:
        if not 0 <= q < n:
            raise ValueError(f"qubit index {q} out of range for {n} qubits")


def _split(psi: np.ndarray, n: int, q: int) -> np.ndarray:
    return psi.reshape(psi.shape[0], 2 ** (n - 1 - q), 2, 2**q)


def apply_1q(psi: np.ndarray, n: int, q: int, mat: np.ndarray) -> np.ndarray:
    """Apply a 2x2 matrix (or a batch of them, shape (B, 2, 2)) to qubit ``q``."""
    v = _split(psi, n, q)
    if mat.ndim == 2:
        out = np.einsum("ij,bhjl->bhil", mat, v)
    else:
        out = np.einsum("bij,bhjl->bhil", mat, v)
    return out.reshape(psi.shape)


def _bit(n: int, q: int) -> np.ndarray:
    return (np.arange(2**n) >> q) & 1


def apply_diag_phase(psi: np.ndarray, angle, signs: np.ndarray) -> np.ndarray:
    """Multiply by exp(-i angle s/2) where ``s`` is a ±1 pattern over the basis."""
    a = np.asarray(angle, dtype=float)
    if a.ndim == 0:
        return psi * np.exp(-0.5j * a * signs)[None, :]
    return psi * np.exp(-0.5j * a[:, None] * signs[None, :])


def apply_gate_batch(psi: np.ndarray, n: int, name: str, qubits, angle=None) -> np.ndarray:
    """Apply one gate to every state in the batch; ``angle`` may be per-state."""
    _check_qubits(n, qubits)
    if name == "RZ":
        return apply_diag_phase(psi, angle, 1 - 2 * _bit(n, qubits[0]))
    if name == "RZZ":
        parity = _bit(n, qubits[0]) ^ _bit(n, qubits[1])
        return apply_diag_phase(psi, angle, 1 - 2 * parity)
    if name in ("RX", "RY"):
        return apply_1q(psi, n, qubits[0], rotation_matrix(name[1], angle))
    if name == "H":
        return apply_1q(psi, n, qubits[0], _H)
    if name == "CZ":
        mask = (_bit(n, qubits[0]) & _bit(n, qubits[1])).astype(bool)
        out = psi.copy()
        out[:, mask] *= -1
        return out
    if name == "CNOT":
        c, t = qubits
        idx = np.arange(2**n)
        perm = np.where((idx >> c) & 1, idx ^ (1 << t), idx)
        return psi[:, perm]
    raise ValueError(f"unknown gate {name!r}")


def apply_pauli_batch(psi: np.ndarray, n: int, axis: str, qubit: int) -> np.ndarray:
    _check_qubits(n, (qubit,))
    if axis == "Z":
        return psi * (1 - 2 * _bit(n, qubit))[None, :]
    if axis == "X":
        return psi[:, np.arange(2**n) ^ (1 << qubit)]
    if axis == "Y":
        # Y|0> = i|1>, Y|1> = -i|0>
        flipped = psi[:, np.arange(2**n) ^ (1 << qubit)]
        return flipped * (1j * (1 - 2 * (1 - _bit(n, qubit))))[None, :]
    raise ValueError(f"unknown Pauli axis {axis!r}")


def apply_pauli_string(psi: np.ndarray, n: int, axes: str, qubits) -> np.ndarray:
    for a, q in zip(axes, qubits):
        psi = apply_pauli_batch(psi, n, a, q)
    return psi


def apply_matrix_batch(psi: np.ndarray, n: int, mat: np.ndarray, qubits) -> np.ndarray:
    """Apply a dense unitary on ``qubits`` (qubits[0] = least significant bit).

    ``mat`` is (2**k, 2**k) or a per-state stack (B, 2**k, 2**k).
    """
    qubits = tuple(qubits)
    _check_qubits(n, qubits)
    k = len(qubits)
    b = psi.shape[0]
    t = psi.reshape((b,) + (2,) * n)
    # tensor axis of qubit q is 1 + (n - 1 - q)
    axes = [1 + n - 1 - q for q in reversed(qubits)]
    rest = [a for a in range(1, n + 1) if a not in axes]
    t = np.transpose(t, [0] + axes + rest).reshape(b, 2**k, -1)
    if mat.ndim == 2:
        t = np.einsum("ij,bjr->bir", mat, t)
    else:
        t = np.einsum("bij,bjr->bir", mat, t)
    t = t.reshape((b,) + (2,) * n)
    inv = np.argsort([0] + axes + rest)
    return np.transpose(t, inv).reshape(b, 2**n)


# ---------------------------------------------------------------------------
# single-state API


@dataclass
class Statevector:
    """Pure state of ``n_qubits`` qubits; mutated in place by gate application."""

    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {self.amplitudes.shape}"
            )

    def copy(self) -> "Statevector":
        return Statevector(self.n_qubits, self.amplitudes.copy())

    clone = copy

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def _update(self, new: np.ndarray) -> "Statevector":
        self.amplitudes[:] = new[0]
        return self

    def apply(self, gate: GateOp) -> "Statevector":
        return apply_gate(self, gate)


def zero_state(n: int) -> Statevector:
    if n < 1:
        raise ValueError("need at least one qubit")
    if n > max_qubits():
        raise ResourceError(f"{n} qubits exceeds the simulator ceiling of {max_qubits()}")
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = 1.0
    return Statevector(n, amps)


def apply_gate(state: Statevector, gate: GateOp) -> Statevector:
    new = apply_gate_batch(state.amplitudes[None, :], state.n_qubits, gate.name, gate.qubits, gate.angle)
    return state._update(new)


def apply_pauli(state: Statevector, axis: str, qubit: int) -> Statevector:
    new = apply_pauli_batch(state.amplitudes[None, :], state.n_qubits, axis, qubit)
    return state._update(new)


def inner_product(a: Statevector, b: Statevector) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"qubit counts differ: {a.n_qubits} vs {b.n_qubits}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


@dataclass
class DensityFragment:
    """Reduced density matrix over ``dims`` qubits."""

    dims: int
    matrix: np.ndarray

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


def partial_trace_vector(amps: np.ndarray, n: int, keep) -> np.ndarray:
    """Reduced density matrix of a pure state over the qubits in ``keep``.

    The kept qubits keep their relative little-endian order.
    """
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise ValueError("keep set must be non-empty")
    _check_qubits(n, keep)
    t = np.asarray(amps).reshape((2,) * n)
    kept_axes = [n - 1 - q for q in reversed(keep)]
    traced = [a for a in range(n) if a not in kept_axes]
    m = np.transpose(t, kept_axes + traced).reshape(2 ** len(keep), -1)
    return m @ m.conj().T


def partial_trace(state: Statevector, keep) -> DensityFragment:
    mat = partial_trace_vector(state.amplitudes, state.n_qubits, keep)
    return DensityFragment(int(np.log2(mat.shape[0])), mat)
