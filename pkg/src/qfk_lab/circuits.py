"""Circuit families with data re-uploading, parameter binding and generator bookkeeping.

Every family is stored as a flat list of :class:`Slot` descriptors.  A slot
resolves to one gate once data ``x`` and parameters ``theta`` are known; the
layer order inside each depth step is data sub-layer first, parameter
sub-layer second.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .statevec import (
    GateOp,
    ROTATIONS,
    apply_gate_batch,
    max_qubits,
)
from .errors import ResourceError

FAMILIES = ("TensorProduct", "IQP", "ALA", "HEA")


@dataclass(frozen=True)
class Slot:
    """One gate position.

    ``source`` is "data", "param" or "fixed".  A data slot's angle is
    ``scale * prod(x[f] for f in index) + offset``; a param slot reads
    ``theta[index[0]]``; a fixed slot carries ``angle`` (None for discrete gates).
    """

    gate: str
    qubits: tuple[int, ...]
    source: str = "fixed"
    index: tuple[int, ...] = ()
    scale: float = 1.0
    offset: float = 0.0
    angle: float | None = None

    def resolve(self, x, theta) -> float | None:
        if self.source == "data":
            return self.scale * float(np.prod([x[f] for f in self.index])) + self.offset
        if self.source == "param":
            return float(theta[self.index[0]])
        return self.angle


@dataclass(frozen=True)
class CircuitTemplate:
    n_qubits: int
    slots: tuple[Slot, ...]
    family: str
    depth: int
    n_features: int
    n_params: int
    m: int | None = None
    structure_seed: int | None = None

    def __post_init__(self):
        used = sorted({s.index[0] for s in self.slots if s.source == "param"})
        if used != list(range(self.n_params)):
            raise ValueError("parameter indices must be 0..p-1 without gaps")

    @property
    def param_slot_positions(self) -> list[int]:
        return [k for k, s in enumerate(self.slots) if s.source == "param"]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slots"] = [asdict(s) for s in self.slots]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitTemplate":
        slots = tuple(
            Slot(
                gate=s["gate"],
                qubits=tuple(s["qubits"]),
                source=s["source"],
                index=tuple(s["index"]),
                scale=s["scale"],
                offset=s["offset"],
                angle=s["angle"],
            )
            for s in d["slots"]
        )
        fields_ = {k: v for k, v in d.items() if k != "slots"}
        return cls(slots=slots, **fields_)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CircuitTemplate":
        return cls.from_dict(json.loads(text))

    def descriptor_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def short_name(self) -> str:
        tag = f"{self.family}(m={self.m})" if self.family == "ALA" else self.family
        return f"{tag}[n={self.n_qubits},L={self.depth}]"


@dataclass(frozen=True)
class GeneratorInfo:
    """A parameterized gate: ``U_{1:i}`` is ``gates[:prefix_length]``."""

    param_index: int
    axis: str
    qubits: tuple[int, ...]
    gate_index: int
    prefix_length: int

    @property
    def qubit(self) -> int:
        return self.qubits[0]


@dataclass(frozen=True)
class BoundCircuit:
    template: CircuitTemplate
    x: tuple[float, ...]
    theta: tuple[float, ...]
    gates: tuple[GateOp, ...] = field(repr=False)


# ---------------------------------------------------------------------------
# builders


def _feature(q: int, broadcast: bool) -> int:
    return 0 if broadcast else q


def _tp_data_layer(n: int, broadcast: bool) -> list[Slot]:
    out = []
    for q in range(n):
        f = (_feature(q, broadcast),)
        out.append(Slot("RY", (q,), "data", f))
        out.append(Slot("RZ", (q,), "data", f))
    return out


def _tp_param_layer(qubits, first_param: int) -> list[Slot]:
    out = []
    for k, q in enumerate(qubits):
        out.append(Slot("RY", (q,), "param", (first_param + k,)))
        out.append(Slot("RZ", (q,), "param", (first_param + k,)))
    return out


def _n_features(n: int, n_features: int | None) -> tuple[int, bool]:
    if n_features is None or n_features == n:
        return n, False
    if n_features == 1:
        return 1, True
    raise ValueError(f"n_features must be {n} or 1 (broadcast), got {n_features}")


def _check_common(n: int, L: int) -> None:
    if n < 1 or L < 1:
        raise ValueError("need n >= 1 and L >= 1")


def build_tensor_product(n: int, L: int, n_features: int | None = None) -> CircuitTemplate:
    """Layers of Ry(a)Rz(a) per qubit, first with a = x_q, then a = theta."""
    _check_common(n, L)
    nf, bc = _n_features(n, n_features)
    slots: list[Slot] = []
    for d in range(L):
        slots += _tp_data_layer(n, bc)
        slots += _tp_param_layer(range(n), d * n)
    return CircuitTemplate(n, tuple(slots), "TensorProduct", L, nf, n * L, m=1)


def build_iqp(n: int, L: int, n_features: int | None = None) -> CircuitTemplate:
    """IQP-type layers: H wall, Z phases phi_i, nearest-neighbour ZZ phases phi_{j,j+1}.

    Data phases are x_i and x_j x_{j+1} / pi; parameter phases are theta_i and
    theta_{n+j}.  The phase of each term is used directly as the rotation
    angle of the corresponding Rz / Rzz gate.
    """
    _check_common(n, L)
    if n < 2:
        raise ValueError("IQP circuits need n >= 2 for the ZZ terms")
    nf, bc = _n_features(n, n_features)
    per = 2 * n - 1
    slots: list[Slot] = []
    for d in range(L):
        slots += [Slot("H", (q,)) for q in range(n)]
        slots += [Slot("RZ", (q,), "data", (_feature(q, bc),)) for q in range(n)]
        slots += [
            Slot("RZZ", (j, j + 1), "data", (_feature(j, bc), _feature(j + 1, bc)), scale=1 / np.pi)
            for j in range(n - 1)
        ]
        base = d * per
        slots += [Slot("H", (q,)) for q in range(n)]
        slots += [Slot("RZ", (q,), "param", (base + q,)) for q in range(n)]
        slots += [Slot("RZZ", (j, j + 1), "param", (base + n + j,)) for j in range(n - 1)]
    return CircuitTemplate(n, tuple(slots), "IQP", L, nf, per * L)


def ala_blocks(n: int, m: int, layer: int) -> list[tuple[int, ...]]:
    """Qubit blocks of one ALA layer; odd layers shift by m/2 and leave the edges idle."""
    if m == 1 or layer % 2 == 0:
        return [tuple(range(k * m, (k + 1) * m)) for k in range(n // m)]
    h = m // 2
    return [tuple(range(h + k * m, h + (k + 1) * m)) for k in range(n // m - 1)]


def build_ala(n: int, m: int, L: int, structure_seed: int = 0, n_features: int | None = None) -> CircuitTemplate:
    """Alternating layered ansatz.

    Each depth step applies the data sub-layer on all qubits and then one
    brick layer of m-qubit blocks.  A block is a CNOT chain over its qubits
    (direction flips with layer parity) followed by Ry(t)Rz(t) on each qubit,
    one parameter t per qubit.  ``m = 1`` has no entanglers and reproduces the
    tensor-product family gate for gate.
    """
    _check_common(n, L)
    if m < 1 or (m > 1 and m % 2):
        raise ValueError("block width m must be 1 or even")
    if n % m:
        raise ValueError(f"n={n} is not divisible by block width m={m}")
    nf, bc = _n_features(n, n_features)
    slots: list[Slot] = []
    p = 0
    for d in range(L):
        slots += _tp_data_layer(n, bc)
        for block in ala_blocks(n, m, d):
            pairs = list(zip(block[:-1], block[1:]))
            if d % 2:
                pairs = [(b, a) for a, b in reversed(pairs)]
            slots += [Slot("CNOT", pr) for pr in pairs]
            slots += _tp_param_layer(block, p)
            p += len(block)
    return CircuitTemplate(n, tuple(slots), "ALA", L, nf, p, m=m, structure_seed=int(structure_seed))


def hea_axes(n: int, L: int, structure_seed: int) -> list[list[str]]:
    rng = np.random.default_rng(structure_seed)
    return [[str(a) for a in row] for row in rng.choice(np.array(["X", "Y", "Z"]), size=(L, n))]


def build_hea(n: int, L: int, structure_seed: int = 0, n_features: int | None = None) -> CircuitTemplate:
    """Hardware-efficient ansatz: data sub-layer, seeded random-axis rotations, CNOT ladder."""
    _check_common(n, L)
    if n < 2:
        raise ValueError("HEA needs n >= 2")
    nf, bc = _n_features(n, n_features)
    axes = hea_axes(n, L, structure_seed)
    slots: list[Slot] = []
    for d in range(L):
        slots += _tp_data_layer(n, bc)
        slots += [Slot("R" + axes[d][q], (q,), "param", (d * n + q,)) for q in range(n)]
        slots += [Slot("CNOT", (q, q + 1)) for q in range(n - 1)]
    return CircuitTemplate(n, tuple(slots), "HEA", L, nf, n * L, structure_seed=int(structure_seed))


def build_family(family: str, n: int, L: int, m: int | None = None, structure_seed: int = 0,
                 n_features: int | None = None) -> CircuitTemplate:
    fam = family.lower()
    if fam in ("tensorproduct", "tp", "tensor_product"):
        return build_tensor_product(n, L, n_features)
    if fam == "iqp":
        return build_iqp(n, L, n_features)
    if fam == "ala":
        return build_ala(n, m if m is not None else 2, L, structure_seed, n_features)
    if fam == "hea":
        return build_hea(n, L, structure_seed, n_features)
    raise ValueError(f"unknown circuit family {family!r}")


# ---------------------------------------------------------------------------
# binding and simulation


def _check_lengths(template: CircuitTemplate, x, theta) -> None:
    if len(x) != template.n_features:
        raise ValueError(f"expected {template.n_features} features, got {len(x)}")
    if len(theta) != template.n_params:
        raise ValueError(f"expected {template.n_params} parameters, got {len(theta)}")


def bind(template: CircuitTemplate, x, theta) -> BoundCircuit:
    x = tuple(float(v) for v in np.atleast_1d(x))
    theta = tuple(float(v) for v in np.atleast_1d(theta))
    _check_lengths(template, x, theta)
    gates = tuple(GateOp(s.gate, s.qubits, s.resolve(x, theta)) for s in template.slots)
    return BoundCircuit(template, x, theta, gates)


def generators(bound: BoundCircuit | CircuitTemplate) -> list[GeneratorInfo]:
    """One entry per parameterized gate, in circuit order.

    A parameter shared by several gates (Ry and Rz in the same sub-layer)
    yields one entry per gate.
    """
    template = bound.template if isinstance(bound, BoundCircuit) else bound
    out = []
    for k in template.param_slot_positions:
        s = template.slots[k]
        axis = "ZZ" if s.gate == "RZZ" else s.gate[1]
        out.append(GeneratorInfo(s.index[0], axis, s.qubits, k, k + 1))
    return out


def slot_angles(template: CircuitTemplate, X: np.ndarray, theta) -> list:
    """Per-slot angles for a batch of inputs: arrays of shape (B,), floats, or None."""
    X = np.asarray(X, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = []
    for s in template.slots:
        if s.source == "data":
            v = X[:, s.index[0]].copy()
            for f in s.index[1:]:
                v = v * X[:, f]
            out.append(s.scale * v + s.offset)
        elif s.source == "param":
            out.append(float(theta[s.index[0]]))
        else:
            out.append(s.angle)
    return out


def as_batch(template: CircuitTemplate, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if template.n_features == 1 else X.reshape(1, -1)
    if X.shape[1] != template.n_features:
        raise ValueError(f"expected {template.n_features} features, got {X.shape[1]}")
    return X


def check_capacity(n: int) -> None:
    if n > max_qubits():
        raise ResourceError(f"{n} qubits exceeds the simulator ceiling of {max_qubits()}")


def zero_batch(n: int, batch: int) -> np.ndarray:
    check_capacity(n)
    psi = np.zeros((batch, 2**n), dtype=complex)
    psi[:, 0] = 1.0
    return psi


def apply_slots(psi: np.ndarray, template: CircuitTemplate, angles, start: int, stop: int,
                inverse: bool = False) -> np.ndarray:
    """Apply slots[start:stop] (or their inverses in reverse order) to a batch."""
    n = template.n_qubits
    rng = range(stop - 1, start - 1, -1) if inverse else range(start, stop)
    for k in rng:
        s = template.slots[k]
        a = angles[k]
        if inverse and a is not None:
            a = -a
        psi = apply_gate_batch(psi, n, s.gate, s.qubits, a)
    return psi


def simulate(template: CircuitTemplate, X, theta, angles=None) -> np.ndarray:
    """States U(x, theta)|0> for every row of ``X``; shape (B, 2**n)."""
    X = as_batch(template, X)
    if len(theta) != template.n_params:
        raise ValueError(f"expected {template.n_params} parameters, got {len(theta)}")
    if angles is None:
        angles = slot_angles(template, X, theta)
    psi = zero_batch(template.n_qubits, X.shape[0])
    return apply_slots(psi, template, angles, 0, len(template.slots))


def run_bound(bound: BoundCircuit):
    """Evolve |0...0> through a bound circuit; returns a :class:`Statevector`."""
    from .statevec import apply_gate, zero_state

    state = zero_state(bound.template.n_qubits)
    for g in bound.gates:
        apply_gate(state, g)
    return state


def unitary(bound: BoundCircuit, stop: int | None = None) -> np.ndarray:
    """Dense matrix of gates[:stop]; for tests and small n only."""
    n = bound.template.n_qubits
    psi = np.eye(2**n, dtype=complex)  # column j = U|j>, evolved as a batch of rows
    for g in bound.gates[:stop]:
        psi = apply_gate_batch(psi, n, g.name, g.qubits, g.angle)
    return psi.T


def sample_angles(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform angles on [-pi, pi)."""
    return rng.uniform(-np.pi, np.pi, size=size)


__all__ = [
    "FAMILIES",
    "ROTATIONS",
    "Slot",
    "CircuitTemplate",
    "BoundCircuit",
    "GeneratorInfo",
    "build_tensor_product",
    "build_iqp",
    "build_ala",
    "build_hea",
    "build_family",
    "ala_blocks",
    "hea_axes",
    "bind",
    "generators",
    "simulate",
    "run_bound",
    "unitary",
    "slot_angles",
    "apply_slots",
    "zero_batch",
    "sample_angles",
]
