"""Dense statevector simulation.

Qubit ``q`` is bit ``q`` of the amplitude index (least-significant first), so
``[0, 1]`` (qubit 0 in |0>, qubit 1 in |1>) lives at index 2.  Multi-qubit
gate matrices follow the same rule on their own targets: ``targets[0]`` is the
least-significant bit of the matrix row/column index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ResourceError, ValidationError

STATE_QUBIT_CAP = 14
DENSE_QUBIT_CAP = 10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}

_S = 1 / np.sqrt(2)
STABILIZER_LABELS = ("0", "1", "+", "-", "i", "-i")
SINGLE_QUBIT_STATES = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([_S, _S], dtype=complex),
    "-": np.array([_S, -_S], dtype=complex),
    "i": np.array([_S, 1j * _S], dtype=complex),
    "-i": np.array([_S, -1j * _S], dtype=complex),
}
_LABEL_ALIASES = {"−": "-", "−i": "-i"}


def _canonical_label(label: str) -> str:
    label = _LABEL_ALIASES.get(label, label)
    if label not in SINGLE_QUBIT_STATES:
        raise ValidationError(f"unknown single-qubit label {label!r}")
    return label


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized amplitudes over ``2**n`` basis states."""

    n: int
    amps: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n <= STATE_QUBIT_CAP:
            raise ResourceError(f"n={self.n} outside [1, {STATE_QUBIT_CAP}]")
        amps = np.asarray(self.amps, dtype=complex).reshape(-1)
        if amps.shape[0] != 2**self.n:
            raise ValidationError(f"expected {2**self.n} amplitudes, got {amps.shape[0]}")
        if abs(np.vdot(amps, amps).real - 1) > 1e-8:
            raise ValidationError("state vector is not normalized")
        amps.flags.writeable = False
        object.__setattr__(self, "amps", amps)

    @classmethod
    def basis(cls, n: int, index: int = 0) -> StateVector:
        amps = np.zeros(2**n, dtype=complex)
        amps[index] = 1.0
        return cls(n, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def __eq__(self, other):
        return (
            isinstance(other, StateVector)
            and self.n == other.n
            and np.array_equal(self.amps, other.amps)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ProductState:
    """Tensor product of single-qubit states, ``factors[q]`` on qubit ``q``.

    ``labels`` is set when every factor is one of the six stabilizer states.
    """

    factors: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        factors = np.asarray(self.factors, dtype=complex)
        if factors.ndim != 2 or factors.shape[1] != 2:
            raise ValidationError("factors must have shape (n, 2)")
        norms = np.linalg.norm(factors, axis=1)
        if np.any(np.abs(norms - 1) > 1e-9):
            raise ValidationError("single-qubit factor is not normalized")
        factors = factors / norms[:, None]
        factors.flags.writeable = False
        object.__setattr__(self, "factors", factors)

    @property
    def n(self) -> int:
        return self.factors.shape[0]

    def to_statevector(self) -> StateVector:
        amps = np.ones(1, dtype=complex)
        for f in self.factors:
            amps = np.kron(f, amps)
        return StateVector(self.n, amps)

    def projector(self, qubit: int) -> np.ndarray:
        f = self.factors[qubit]
        return np.outer(f, f.conj())

    def describe(self) -> list:
        """JSON-friendly description: label list, else [[re, im], [re, im]] per qubit."""
        if self.labels is not None:
            return list(self.labels)
        return [[[a.real, a.imag] for a in f] for f in self.factors]

    @classmethod
    def from_description(cls, desc: Sequence) -> ProductState:
        if all(isinstance(d, str) for d in desc):
            return product_state(desc)
        return product_state([[complex(re, im) for re, im in f] for f in desc])


def product_state(factors: Sequence) -> ProductState:
    """Build a ProductState from labels in {0,1,+,-,i,-i} and/or amplitude pairs."""
    if len(factors) == 0:
        raise ValidationError("need at least one factor")
    vecs, labels = [], []
    for f in factors:
        if isinstance(f, str):
            label = _canonical_label(f)
            vecs.append(SINGLE_QUBIT_STATES[label])
            labels.append(label)
        else:
            v = np.asarray(f, dtype=complex)
            if v.shape != (2,) or abs(np.linalg.norm(v) - 1) > 1e-9:
                raise ValidationError(f"amplitude pair {f!r} is not a normalized 2-vector")
            vecs.append(v)
            labels.append(None)
    return ProductState(np.array(vecs), None if None in labels else tuple(labels))


def make_product_state(factors: Sequence) -> StateVector:
    return product_state(factors).to_statevector()


# -- gate application ---------------------------------------------------------


def apply_matrix(amps: np.ndarray, n: int, matrix: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    """Apply a ``2**k`` square matrix to ``targets`` of a flat amplitude array.

    ``amps`` may carry trailing batch dimensions: shape ``(2**n, ...)``.
    """
    k = len(targets)
    batch = amps.shape[1:]
    q0 = targets[0]
    if all(t == q0 + j for j, t in enumerate(targets)):
        # Ascending contiguous targets form one index block: a batched matmul.
        t = amps.reshape(2 ** (n - q0 - k), 2**k, -1)
        return (matrix @ t).reshape(amps.shape)
    t = amps.reshape((2,) * n + batch)
    axes = [n - 1 - q for q in reversed(targets)]
    t = np.moveaxis(t, axes, range(k))
    front = t.shape
    t = (matrix @ t.reshape(2**k, -1)).reshape(front)
    t = np.moveaxis(t, range(k), axes)
    return t.reshape((2**n,) + batch)


_EYE = {2: np.eye(2), 4: np.eye(4)}


def _is_involution(g: np.ndarray) -> bool:
    return np.allclose(g @ g, np.eye(g.shape[0]), atol=1e-12)


@dataclass(frozen=True, eq=False)
class Gate:
    """A fixed unitary, or ``exp(-i theta_j G / 2)`` when bound to parameter ``j``."""

    targets: tuple[int, ...]
    matrix: np.ndarray | None = None
    param: int | None = None
    generator: np.ndarray | None = None
    name: str = ""
    _involutive: bool = field(default=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if len(self.targets) not in (1, 2) or len(set(self.targets)) != len(self.targets):
            raise ValidationError(f"gate targets {self.targets} must be 1 or 2 distinct qubits")
        dim = 2 ** len(self.targets)
        if self.param is None:
            if self.matrix is None:
                raise ValidationError("fixed gate needs a matrix")
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (dim, dim) or not np.allclose(m.conj().T @ m, np.eye(dim), atol=1e-10):
                raise ValidationError(f"gate {self.name or '?'} matrix is not a {dim}x{dim} unitary")
            object.__setattr__(self, "matrix", m)
        else:
            g = np.asarray(self.generator, dtype=complex)
            if g.shape != (dim, dim) or not np.allclose(g, g.conj().T, atol=1e-10):
                raise ValidationError("generator must be Hermitian and match the targets")
            object.__setattr__(self, "generator", g)
            object.__setattr__(self, "_involutive", _is_involution(g))

    def unitary(self, params: Sequence[float] | None = None) -> np.ndarray:
        if self.param is None:
            return self.matrix
        theta = float(params[self.param])
        g = self.generator
        if self._involutive:
            return np.cos(theta / 2) * _EYE[g.shape[0]] - 1j * np.sin(theta / 2) * g
        w, v = np.linalg.eigh(g)
        return (v * np.exp(-0.5j * theta * w)) @ v.conj().T


def pauli_generator(paulis: str) -> np.ndarray:
    """Matrix of a Pauli string; ``paulis[0]`` acts on ``targets[0]`` (the LSB)."""
    m = np.ones((1, 1), dtype=complex)
    for p in paulis:
        m = np.kron(PAULI[p], m)
    return m


def rotation(paulis: str, targets: Sequence[int], param: int) -> Gate:
    return Gate(tuple(targets), param=param, generator=pauli_generator(paulis), name="R" + paulis)


@dataclass(frozen=True, eq=False)
class Circuit:
    """Ordered gate list on ``n`` qubits.

    ``default_params`` holds the parameter vector that reproduces the circuit's
    intended target (e.g. a Trotter step); parameter-free circuits have length 0.
    """

    n: int
    gates: tuple[Gate, ...] = ()
    default_params: np.ndarray | None = None
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if max(g.targets) >= self.n or min(g.targets) < 0:
                raise ValidationError(f"gate on {g.targets} outside an {self.n}-qubit register")
        idx = {g.param for g in self.gates if g.param is not None}
        if idx != set(range(len(idx))):
            raise ValidationError("parameter indices must form a contiguous range from 0")
        if self.default_params is None:
            object.__setattr__(self, "default_params", np.zeros(len(idx)))
        else:
            dp = np.asarray(self.default_params, dtype=float).copy()
            if dp.shape != (len(idx),):
                raise ValidationError("default_params length must equal num_params")
            dp.flags.writeable = False
            object.__setattr__(self, "default_params", dp)

    @property
    def num_params(self) -> int:
        return len(self.default_params)

    def resolve(self, params: Sequence[float] | None) -> np.ndarray:
        if params is None:
            return self.default_params
        params = np.asarray(params, dtype=float)
        if params.shape != (self.num_params,):
            raise ValidationError(f"expected {self.num_params} parameters, got {params.shape}")
        return params

    def with_defaults(self, params: Sequence[float]) -> Circuit:
        return Circuit(self.n, self.gates, np.asarray(params, dtype=float), self.description)


def apply_circuit_amps(
    amps: np.ndarray, circuit: Circuit, params=None, adjoint: bool = False
) -> np.ndarray:
    """Array-level circuit application; batch dimensions after the first are allowed."""
    params = circuit.resolve(params)
    gates = reversed(circuit.gates) if adjoint else circuit.gates
    out = amps
    for g in gates:
        u = g.unitary(params)
        out = apply_matrix(out, circuit.n, u.conj().T if adjoint else u, g.targets)
    return out


def apply_circuit(
    state: StateVector, circuit: Circuit, params=None, adjoint: bool = False
) -> StateVector:
    if state.n != circuit.n:
        raise ValidationError(f"state has {state.n} qubits, circuit has {circuit.n}")
    return StateVector(state.n, apply_circuit_amps(state.amps, circuit, params, adjoint))


def overlap(a: StateVector, b: StateVector) -> complex:
    """<a|b>."""
    if a.n != b.n:
        raise ValidationError(f"overlap of {a.n}- and {b.n}-qubit states")
    return complex(np.vdot(a.amps, b.amps))


def dense_unitary(circuit: Circuit, params=None, cap: int = DENSE_QUBIT_CAP) -> np.ndarray:
    if circuit.n > cap:
        raise ResourceError(f"dense unitary of {circuit.n} qubits exceeds cap {cap}")
    eye = np.eye(2**circuit.n, dtype=complex)
    return apply_circuit_amps(eye, circuit, params)


# -- circuit builders ---------------------------------------------------------


def _brick_bonds(n: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(0, n - 1, 2)] + [(i, i + 1) for i in range(1, n - 1, 2)]


def build_trotter_heisenberg(n: int, dt: float, layers: int = 1) -> Circuit:
    """First-order Trotter circuit for sum_i XX + YY + ZZ on an open chain.

    Each layer applies the even bonds then the odd bonds, each bond as three
    parameterized exponentials; the defaults ``2 dt / layers`` reproduce
    ``U(dt/layers)**layers``.
    """
    if n < 2:
        raise ValidationError("Heisenberg chain needs n >= 2")
    if layers < 1:
        raise ValidationError("layers must be >= 1")
    gates = []
    for _ in range(layers):
        for a, b in _brick_bonds(n):
            for p in ("XX", "YY", "ZZ"):
                gates.append(rotation(p, (a, b), len(gates)))
    theta = np.full(len(gates), 2 * dt / layers)
    return Circuit(n, gates, theta, f"heisenberg(n={n},dt={dt},layers={layers})")


def build_trotter_tfim(n: int, dt: float, alphas: Sequence[float], layers: int = 1) -> Circuit:
    """First-order Trotter circuit for sum_i Z_i Z_{i+1} + sum_i alpha_i X_i."""
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (n,):
        raise ValidationError(f"need {n} field coefficients, got {alphas.shape}")
    if n < 2:
        raise ValidationError("TFIM chain needs n >= 2")
    gates, theta = [], []
    for _ in range(layers):
        for a, b in _brick_bonds(n):
            gates.append(rotation("ZZ", (a, b), len(gates)))
            theta.append(2 * dt / layers)
        for q in range(n):
            gates.append(rotation("X", (q,), len(gates)))
            theta.append(2 * alphas[q] * dt / layers)
    return Circuit(n, gates, np.array(theta), f"tfim(n={n},dt={dt},layers={layers})")


def build_rx_layer(n: int, angle: float = 0.0) -> Circuit:
    """``RX(theta)`` on every qubit, all sharing parameter 0 (default ``angle``)."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    gates = [rotation("X", (q,), 0) for q in range(n)]
    return Circuit(n, gates, np.array([angle]), f"rx(n={n},angle={angle})")


def circuit_from_dict(spec: dict) -> Circuit:
    """Circuit from ``{"n", "gates": [...], "default_params"}``.

    Each gate is ``{"targets": [...], "paulis": "XY", "param": j}`` (parameterized
    Pauli rotation) or ``{"targets": [...], "matrix": [[[re, im], ...], ...]}``.
    """
    try:
        n = int(spec["n"])
        gates = []
        for g in spec["gates"]:
            if "paulis" in g:
                gates.append(rotation(g["paulis"], g["targets"], int(g["param"])))
            else:
                m = np.array([[complex(re, im) for re, im in row] for row in g["matrix"]])
                gates.append(Gate(tuple(g["targets"]), matrix=m, name=g.get("name", "")))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed circuit description: {exc}") from None
    return Circuit(n, gates, spec.get("default_params"), spec.get("description", "custom"))


def heisenberg_hamiltonian(n: int) -> np.ndarray:
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n - 1):
        for p in "XYZ":
            h += _embed_pauli(n, {i: p, i + 1: p})
    return h


def tfim_hamiltonian(n: int, alphas: Sequence[float]) -> np.ndarray:
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n - 1):
        h += _embed_pauli(n, {i: "Z", i + 1: "Z"})
    for i, a in enumerate(alphas):
        h += a * _embed_pauli(n, {i: "X"})
    return h


def _embed_pauli(n: int, ops: dict[int, str]) -> np.ndarray:
    m = np.ones((1, 1), dtype=complex)
    for q in range(n):
        m = np.kron(PAULI[ops.get(q, "I")], m)
    return m


def ghz_like_amps(amps: np.ndarray, n: int, sign: int, adjoint: bool = False) -> np.ndarray:
    """Exact action of (X^n + s Z^n)/sqrt2 (n odd) or (X^n + i s Z^n)/sqrt2 (n even).

    Works on ``(2**n, ...)`` arrays; ``adjoint`` applies the inverse.
    """
    if sign not in (1, -1):
        raise ValidationError("sign must be +1 or -1")
    idx = np.arange(2**n)
    parity = np.array([bin(i).count("1") & 1 for i in idx])
    zsign = (1 - 2 * parity).astype(complex)
    coef = complex(sign) if n % 2 else 1j * sign
    if adjoint:
        coef = np.conj(coef)
    flipped = amps[idx ^ (2**n - 1)]
    zpart = (coef * zsign).reshape((-1,) + (1,) * (amps.ndim - 1)) * amps
    return (flipped + zpart) / np.sqrt(2)


def apply_ghz_like(state: StateVector, sign: int, adjoint: bool = False) -> StateVector:
    return StateVector(state.n, ghz_like_amps(state.amps, state.n, sign, adjoint))


def ghz_like_unitary(n: int, sign: int) -> np.ndarray:
    if n > DENSE_QUBIT_CAP:
        raise ResourceError(f"dense unitary of {n} qubits exceeds cap {DENSE_QUBIT_CAP}")
    return ghz_like_amps(np.eye(2**n, dtype=complex), n, sign)


# -- random product states ----------------------------------------------------


def sample_stabilizer_product(n: int, seed: int | np.random.Generator) -> ProductState:
    rng = np.random.default_rng(seed)
    labels = [STABILIZER_LABELS[k] for k in rng.integers(6, size=n)]
    return product_state(labels)


def sample_haar_product(n: int, seed: int | np.random.Generator) -> ProductState:
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    return ProductState(g / np.linalg.norm(g, axis=1, keepdims=True))


def random_state(n: int, seed: int | np.random.Generator) -> StateVector:
    """Haar-random n-qubit pure state (normalized complex Gaussian)."""
    rng = np.random.default_rng(seed)
    g = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return StateVector(n, g / np.linalg.norm(g))


@dataclass(frozen=True)
class GhzLike:
    """The GHZ-like target ``U_sign`` on ``n`` qubits, optionally sandwiched as ``W2 U W1``.

    ``w1``/``w2`` are per-qubit 2x2 unitaries (local twirl), ``None`` for no twirl.
    """

    n: int
    sign: int
    w1: tuple | None = None
    w2: tuple | None = None

    @property
    def description(self) -> str:
        return f"ghz(n={self.n},sign={self.sign:+d})"


def _apply_local_layer(amps: np.ndarray, n: int, mats, adjoint: bool) -> np.ndarray:
    for q, m in enumerate(mats):
        amps = apply_matrix(amps, n, m.conj().T if adjoint else m, [q])
    return amps


def evolve(target, amps: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """Apply a target (Circuit at its default parameters, GhzLike, or dense matrix)."""
    if isinstance(target, Circuit):
        return apply_circuit_amps(amps, target, None, adjoint)
    if isinstance(target, GhzLike):
        n = target.n
        first, last = (target.w2, target.w1) if adjoint else (target.w1, target.w2)
        if first is not None:
            amps = _apply_local_layer(amps, n, first, adjoint)
        amps = ghz_like_amps(amps, n, target.sign, adjoint)
        if last is not None:
            amps = _apply_local_layer(amps, n, last, adjoint)
        return amps
    mat = np.asarray(target)
    return (mat.conj().T if adjoint else mat) @ amps


def target_qubits(target) -> int:
    if isinstance(target, (Circuit, GhzLike)):
        return target.n
    return int(np.log2(np.asarray(target).shape[0]))


def target_unitary(target, cap: int = DENSE_QUBIT_CAP) -> np.ndarray:
    n = target_qubits(target)
    if n > cap:
        raise ResourceError(f"dense unitary of {n} qubits exceeds cap {cap}")
    return evolve(target, np.eye(2**n, dtype=complex))


def target_description(target) -> str:
    if isinstance(target, (Circuit, GhzLike)):
        return target.description
    return f"dense({target_qubits(target)})"
