"""Classical shadows of output states: random Pauli-basis and random Clifford measurements.

A :class:`ShadowSet` holds the raw measurement record (bases/tableaux plus
outcome bits).  Snapshot operators are never materialized on all ``n`` qubits:
Pauli snapshots are contracted on an observable's support only (factors outside
trace to one), Clifford snapshots are evaluated through ``W^dag |b>``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .clifford import CLIFFORD_QUBIT_CAP, random_clifford_tableau, tableau_unitary
from .errors import ResourceError, ValidationError
from .rng import counter_uniforms, shot_generator
from .sim import PAULI, StateVector, apply_matrix

SUPPORT_CAP = 12
DEFAULT_BATCHES = 10
BASIS_NAMES = "XYZ"

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_SDG = np.diag([1, -1j])
# Rotation taking the Pauli eigenbasis to the computational basis (+1 -> |0>).
BASIS_ROTATIONS = (_H, _H @ _SDG, np.eye(2, dtype=complex))

# Single-qubit snapshot factors 3 W^dag|b><b|W - I = I/2 + (3/2)(-1)^b P,
# indexed by outcome code 2 * basis + bit.
SNAPSHOT_FACTORS = np.array(
    [0.5 * np.eye(2) + 1.5 * (1 - 2 * bit) * PAULI[p] for p in BASIS_NAMES for bit in (0, 1)]
)


@dataclass(frozen=True)
class PauliSnapshot:
    bases: str
    bits: str

    def factor(self, qubit: int) -> np.ndarray:
        return SNAPSHOT_FACTORS[2 * BASIS_NAMES.index(self.bases[qubit]) + int(self.bits[qubit])]


@dataclass(frozen=True, eq=False)
class CliffordSnapshot:
    tableau: np.ndarray
    bits: str

    def vector(self) -> np.ndarray:
        """``W^dag |b>``."""
        w = tableau_unitary(self.tableau)
        b = int(self.bits[::-1], 2)
        return w[b].conj()


@dataclass(frozen=True, eq=False)
class ShadowSet:
    """M measurement records of one prepared state.

    ``bits[m, q]`` is the outcome on qubit ``q``; ``bases[m, q]`` in {0, 1, 2}
    for X, Y, Z (Pauli kind); ``tableaux[m]`` the sampled Clifford (Clifford kind).
    """

    kind: str
    n: int
    bits: np.ndarray
    bases: np.ndarray | None = None
    tableaux: np.ndarray | None = None
    seed: int = 0
    input_state: list = field(default_factory=list)
    target: str = ""

    def __post_init__(self):
        if self.kind not in ("pauli", "clifford"):
            raise ValidationError(f"unknown shadow kind {self.kind!r}")
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2 or bits.shape[1] != self.n or bits.shape[0] < 1:
            raise ValidationError("bits must have shape (M, n) with M >= 1")
        object.__setattr__(self, "bits", bits)
        M = bits.shape[0]
        if self.kind == "pauli":
            bases = np.asarray(self.bases, dtype=np.uint8)
            if bases.shape != (M, self.n) or bases.max(initial=0) > 2:
                raise ValidationError("pauli shadow needs bases of shape (M, n) over {0,1,2}")
            object.__setattr__(self, "bases", bases)
        else:
            tabs = np.asarray(self.tableaux, dtype=bool)
            if tabs.shape != (M, 2 * self.n, 2 * self.n + 1):
                raise ValidationError("clifford shadow needs tableaux of shape (M, 2n, 2n+1)")
            object.__setattr__(self, "tableaux", tabs)
        for arr in (self.bits, self.bases, self.tableaux):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def M(self) -> int:
        return self.bits.shape[0]

    def __len__(self) -> int:
        return self.M

    @property
    def snapshots(self) -> Iterator[PauliSnapshot | CliffordSnapshot]:
        for m in range(self.M):
            bits = "".join(str(b) for b in self.bits[m])
            if self.kind == "pauli":
                yield PauliSnapshot("".join(BASIS_NAMES[b] for b in self.bases[m]), bits)
            else:
                yield CliffordSnapshot(self.tableaux[m], bits)

    def subset(self, indices: Sequence[int]) -> ShadowSet:
        idx = np.asarray(indices)
        return ShadowSet(
            self.kind,
            self.n,
            self.bits[idx],
            None if self.bases is None else self.bases[idx],
            None if self.tableaux is None else self.tableaux[idx],
            self.seed,
            self.input_state,
            self.target,
        )

    @cached_property
    def outcome_codes(self) -> np.ndarray:
        """Per-qubit code ``2 * basis + bit`` (Pauli kind)."""
        self._require("pauli")
        return (2 * self.bases + self.bits).astype(np.int64)

    def support_codes(self, support: tuple[int, ...]) -> np.ndarray:
        """``sum_j code[:, support[j]] * 6**j`` per snapshot, memoized per support."""
        cache = self.__dict__.setdefault("_support_codes", {})
        if support not in cache:
            local = self.outcome_codes[:, list(support)]
            cache[support] = local @ (6 ** np.arange(len(support), dtype=np.int64))
        return cache[support]

    @cached_property
    def clifford_rows(self) -> np.ndarray:
        """Row ``m`` is ``<b_m| W_m``, so ``rows @ v = <b_m|W_m|v>``."""
        self._require("clifford")
        weights = 1 << np.arange(self.n)
        b = self.bits.astype(np.int64) @ weights
        return np.array([tableau_unitary(t)[bm] for t, bm in zip(self.tableaux, b)])

    def _require(self, kind: str):
        if self.kind != kind:
            raise ValidationError(f"operation needs a {kind} shadow, got {self.kind}")

    def __eq__(self, other):
        if not isinstance(other, ShadowSet):
            return NotImplemented
        same = lambda a, b: (a is None and b is None) or (
            a is not None and b is not None and np.array_equal(a, b)
        )
        return (
            self.kind == other.kind
            and self.n == other.n
            and self.seed == other.seed
            and self.input_state == other.input_state
            and self.target == other.target
            and same(self.bits, other.bits)
            and same(self.bases, other.bases)
            and same(self.tableaux, other.tableaux)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SupportOperator:
    """Hermitian operator on the sorted qubit list ``support``.

    Local index bit ``j`` of ``matrix`` belongs to qubit ``support[j]``.
    """

    support: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        support = tuple(int(q) for q in self.support)
        if list(support) != sorted(set(support)):
            raise ValidationError("support must be sorted and distinct")
        if len(support) > SUPPORT_CAP:
            raise ResourceError(f"support of size {len(support)} exceeds cap {SUPPORT_CAP}")
        m = np.asarray(self.matrix, dtype=complex)
        d = 2 ** len(support)
        if m.shape != (d, d):
            raise ValidationError(f"matrix must be {d}x{d} for support {support}")
        if m.size and np.abs(m - m.conj().T).max() > 1e-10:
            raise ValidationError("support operator is not Hermitian")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "matrix", m)

    @property
    def k(self) -> int:
        return len(self.support)


# -- sampling -----------------------------------------------------------------


def _basis_probabilities(amps: np.ndarray, n: int, bases: np.ndarray) -> np.ndarray:
    rotated = amps
    for q in range(n):
        if bases[q] != 2:
            rotated = apply_matrix(rotated, n, BASIS_ROTATIONS[bases[q]], [q])
    p = np.abs(rotated) ** 2
    return p / p.sum()


def _draw(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    return np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(probs) - 1)


def _bits_of(outcomes: np.ndarray, n: int) -> np.ndarray:
    return ((outcomes[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def sample_pauli_shadow(
    state: StateVector, M: int, seed: int, input_state: list | None = None, target: str = ""
) -> ShadowSet:
    """Measure M copies of ``state`` in independent uniformly random Pauli bases."""
    if M < 1:
        raise ValidationError("M must be >= 1")
    n = state.n
    u = counter_uniforms(seed, 0, M, n + 1)
    bases = np.minimum((u[:, :n] * 3).astype(np.int64), 2)
    codes = bases @ (3 ** np.arange(n, dtype=np.int64))
    outcomes = np.empty(M, dtype=np.int64)
    # Shots sharing a basis share one probability vector.
    uniq, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
    for g, row in enumerate(first):
        mask = inverse == g
        probs = _basis_probabilities(state.amps, n, bases[row])
        outcomes[mask] = _draw(probs, u[mask, n])
    return ShadowSet(
        "pauli", n, _bits_of(outcomes, n), bases.astype(np.uint8), None, seed,
        list(input_state or []), target,
    )


def _clifford_shot(amps: np.ndarray, n: int, seed: int, m: int):
    rng = shot_generator(seed, m)
    tab = random_clifford_tableau(n, rng)
    w = tableau_unitary(tab)
    out = w @ amps
    probs = np.abs(out) ** 2
    b = int(_draw(probs / probs.sum(), np.array([rng.random()]))[0])
    return tab, b, w[b]


def sample_clifford_shadow(
    state: StateVector,
    M: int,
    seed: int,
    input_state: list | None = None,
    target: str = "",
    threads: int = 1,
    cap: int = CLIFFORD_QUBIT_CAP,
) -> ShadowSet:
    """Apply a uniformly random n-qubit Clifford to each of M copies and measure."""
    if M < 1:
        raise ValidationError("M must be >= 1")
    n = state.n
    if n > cap:
        raise ResourceError(f"Clifford shadows limited to {cap} qubits, got {n}")
    amps = np.asarray(state.amps)

    def shot(m):
        return _clifford_shot(amps, n, seed, m)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(shot, range(M), chunksize=256))
    else:
        results = [shot(m) for m in range(M)]
    tabs = np.array([r[0] for r in results])
    outcomes = np.array([r[1] for r in results], dtype=np.int64)
    shadow = ShadowSet(
        "clifford", n, _bits_of(outcomes, n), None, tabs, seed, list(input_state or []), target
    )
    # The rows are a pure function of (tableau, bits); prefill the cache.
    shadow.__dict__["clifford_rows"] = np.array([r[2] for r in results])
    return shadow


# -- estimation ---------------------------------------------------------------


def batch_means(values: np.ndarray, K: int = DEFAULT_BATCHES) -> np.ndarray:
    """Means of K contiguous batches along the last axis (sizes differ by at most one,
    larger batches first)."""
    values = np.asarray(values, dtype=float)
    M = values.shape[-1]
    if K < 1 or K > M:
        raise ValidationError(f"need 1 <= K <= M, got K={K}, M={M}")
    size, extra = divmod(M, K)
    sizes = np.full(K, size)
    sizes[:extra] += 1
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return np.add.reduceat(values, starts, axis=-1) / sizes


def median_of_means(values: np.ndarray, K: int = DEFAULT_BATCHES) -> tuple[float, float]:
    """Median of K contiguous batch means, and the standard error of the batch means."""
    means = batch_means(values, K)
    stderr = float(means.std(ddof=1) / np.sqrt(K)) if K > 1 else float("nan")
    return float(np.median(means)), stderr


TABLE_SUPPORT_LIMIT = 8
# G[o, 2c + r] = F_o[r, c], so that sum_{r,c} F_o[r,c] O[c,r] is a plain contraction.
_TABLE_KERNEL = SNAPSHOT_FACTORS.transpose(0, 2, 1).reshape(6, 4)


def snapshot_table(obs: SupportOperator) -> np.ndarray:
    """``T[code] = Tr[(f_{o_{k-1}} x ... x f_{o_0}) O]`` for every local outcome pattern.

    ``code = sum_j o_j 6**j`` with ``o_j = 2 * basis + bit`` on ``support[j]``.
    """
    k = obs.k
    t = obs.matrix.reshape((2,) * (2 * k))
    # Pair (row, col) axes per qubit, most significant local qubit first.
    t = t.transpose([a for j in range(k) for a in (j, j + k)]).reshape((4,) * k)
    for _ in range(k):
        t = np.tensordot(t, _TABLE_KERNEL, axes=([0], [1]))
    return np.real(t).reshape(-1)


def _snapshot_values_direct(codes: np.ndarray, obs: SupportOperator) -> np.ndarray:
    uniq, inverse = np.unique(codes, axis=0, return_inverse=True)
    vals = np.empty(len(uniq))
    for u_i, pattern in enumerate(uniq):
        local = np.ones((1, 1), dtype=complex)
        for o in pattern:
            local = np.kron(SNAPSHOT_FACTORS[o], local)
        vals[u_i] = np.real(np.sum(local * obs.matrix.T))
    return vals[inverse.reshape(-1)]


def pauli_snapshot_values(shadow: ShadowSet, obs: SupportOperator) -> np.ndarray:
    """Per-snapshot ``Tr[rho_m O]`` for a Pauli shadow."""
    shadow._require("pauli")
    if obs.k > SUPPORT_CAP:
        raise ResourceError(f"support {obs.k} exceeds cap {SUPPORT_CAP}")
    if obs.support and obs.support[-1] >= shadow.n:
        raise ValidationError("observable support outside the shadow's register")
    if obs.k <= TABLE_SUPPORT_LIMIT:
        return snapshot_table(obs)[shadow.support_codes(obs.support)]
    return _snapshot_values_direct(shadow.outcome_codes[:, list(obs.support)], obs)


def estimate_support_expectation(
    shadow: ShadowSet, obs: SupportOperator, K: int = DEFAULT_BATCHES
) -> float:
    return median_of_means(pauli_snapshot_values(shadow, obs), K)[0]


def clifford_fidelity_values(shadow: ShadowSet, target: StateVector | np.ndarray) -> np.ndarray:
    """Per-snapshot ``(2^n + 1) |<target| W^dag |b>|^2 - 1``."""
    shadow._require("clifford")
    amps = target.amps if isinstance(target, StateVector) else np.asarray(target)
    if amps.shape[0] != 2**shadow.n:
        raise ValidationError("target dimension does not match the shadow")
    return (2**shadow.n + 1) * np.abs(shadow.clifford_rows @ amps) ** 2 - 1


def estimate_fidelity_clifford(
    shadow: ShadowSet, target: StateVector | np.ndarray, K: int = DEFAULT_BATCHES
) -> float:
    return median_of_means(clifford_fidelity_values(shadow, target), K)[0]
