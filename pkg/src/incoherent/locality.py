"""Pauli decomposition of support operators and (alpha, k)-locality profiles.

An operator ``O`` is (alpha, k)-local when dropping every Pauli term of weight
above ``k`` changes it by ``alpha`` in spectral norm.  Profiles of ``alpha(k)``
for Heisenberg-evolved single-site projectors show how far the operator has
effectively spread, as opposed to the static light cone it is supported on.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .costs import backpropagate_site_observable
from .errors import ResourceError, ValidationError
from .shadows import SupportOperator
from .sim import PAULI, Circuit

DECOMPOSE_CAP = 12
DENSE_NORM_CAP = 10
PAULI_LABELS = "IXYZ"

# _TO_PAULI[p, 2r + c] = P_p[c, r] / 2, so that c_p = sum_{rc} _TO_PAULI[p, 2r+c] M[r, c].
_PAULI_STACK = np.array([PAULI[p] for p in PAULI_LABELS])
_TO_PAULI = 0.5 * _PAULI_STACK.transpose(0, 2, 1).reshape(4, 4)
_FROM_PAULI = _PAULI_STACK.reshape(4, 4)


def _pair_axes(matrix: np.ndarray, k: int) -> np.ndarray:
    # (row_j, col_j) pairs, most significant local qubit first.
    t = matrix.reshape((2,) * (2 * k))
    return t.transpose([a for j in range(k) for a in (j, j + k)]).reshape((4,) * k)


def _unpair_axes(t: np.ndarray, k: int) -> np.ndarray:
    t = t.reshape((2,) * (2 * k))
    rows = list(range(0, 2 * k, 2))
    return t.transpose(rows + [r + 1 for r in rows]).reshape(2**k, 2**k)


@dataclass(frozen=True, eq=False)
class PauliDecomposition:
    """``O = sum_P coeffs[P] P`` over Pauli strings on ``support``.

    ``coeffs`` has shape ``(4,) * k``; axis ``a`` indexes the Pauli (I, X, Y, Z)
    on ``support[k - 1 - a]``, matching the big-endian kron order of the matrix.
    """

    support: tuple[int, ...]
    coeffs: np.ndarray
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        k = len(self.support)
        grids = np.indices((4,) * k) if k else np.zeros((0,), dtype=int)
        object.__setattr__(
            self, "weights", (grids != 0).sum(axis=0) if k else np.zeros((), dtype=int)
        )

    @property
    def k(self) -> int:
        return len(self.support)

    @property
    def terms(self) -> dict[str, float]:
        """Nonzero coefficients keyed by Pauli string; character ``j`` acts on ``support[j]``."""
        out = {}
        for idx in zip(*np.nonzero(np.abs(self.coeffs) > 1e-14)):
            label = "".join(PAULI_LABELS[i] for i in reversed(idx))
            out[label] = float(self.coeffs[idx])
        return out

    def matrix(self, mask: np.ndarray | None = None) -> np.ndarray:
        """Dense reconstruction, optionally keeping only the terms where ``mask`` holds."""
        c = self.coeffs if mask is None else np.where(mask, self.coeffs, 0.0)
        t = c.astype(complex)
        for _ in range(self.k):
            t = np.tensordot(t, _FROM_PAULI, axes=([0], [0]))
        return _unpair_axes(t, self.k) if self.k else t.reshape(1, 1)


def pauli_decompose(op: SupportOperator) -> PauliDecomposition:
    """Coefficients ``c_P = Tr[P op] / 2^k``; real because ``op`` is Hermitian."""
    k = op.k
    if k > DECOMPOSE_CAP:
        raise ResourceError(f"Pauli decomposition limited to {DECOMPOSE_CAP} qubits, got {k}")
    t = _pair_axes(op.matrix, k)
    for _ in range(k):
        t = np.tensordot(t, _TO_PAULI, axes=([0], [1]))
    return PauliDecomposition(op.support, np.ascontiguousarray(np.real(t)))


def tail_norm(decomp: PauliDecomposition, k: int) -> float:
    """``alpha = ||sum_{weight(P) > k} c_P P||_inf`` by dense diagonalization."""
    if not 0 <= k <= decomp.k:
        raise ValidationError(f"cutoff k={k} outside [0, {decomp.k}]")
    if decomp.k > DENSE_NORM_CAP:
        raise ResourceError(f"dense spectral norm limited to {DENSE_NORM_CAP} qubits")
    mask = decomp.weights > k
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(decomp.matrix(mask)))))


def truncate(obs: SupportOperator, k: int) -> SupportOperator:
    """Weight-``<= k`` part of ``obs`` (same support)."""
    decomp = pauli_decompose(obs)
    if k >= decomp.k:
        return obs
    m = decomp.matrix(decomp.weights <= k)
    return SupportOperator(obs.support, 0.5 * (m + m.conj().T))


@dataclass
class LocalityProfile:
    """``alpha(k)`` for one back-propagated projector."""

    n: int
    site: int
    support: tuple[int, ...]
    entries: list[tuple[int, float]]
    dt: float | None = None
    layers: int | None = None

    @property
    def standard_locality(self) -> int:
        """Smallest cutoff whose tail vanishes (within 1e-10) among the profiled cutoffs."""
        zero = [k for k, a in self.entries if a <= 1e-10]
        return min(zero) if zero else len(self.support)

    def records(self) -> list[dict]:
        return [
            {"n": self.n, "dt": self.dt, "layers": self.layers, "site": self.site, "k": k, "alpha": a}
            for k, a in self.entries
        ]


def locality_profile(
    circuit: Circuit,
    params,
    site: int,
    factor,
    cutoffs=None,
    adjoint: bool = True,
    dt: float | None = None,
    layers: int | None = None,
) -> LocalityProfile:
    """Profile ``alpha(k)`` of ``V^dag (|f><f|_site x 1) V`` (``adjoint``) or ``V (..) V^dag``.

    Cutoffs default to ``1..k_support``.  ``k = 0`` is excluded: its tail is the
    whole traceless part, of norm exactly 1/2 for any such projector, and the
    spectral norm of the weight->=2 tail can exceed it.
    """
    obs = backpropagate_site_observable(circuit, params, site, factor, adjoint=adjoint)
    if obs.k > DENSE_NORM_CAP:
        raise ResourceError(f"back-propagated support {obs.k} exceeds {DENSE_NORM_CAP}")
    decomp = pauli_decompose(obs)
    cutoffs = range(1, obs.k + 1) if cutoffs is None else cutoffs
    entries = [(int(k), tail_norm(decomp, min(int(k), obs.k))) for k in cutoffs]
    return LocalityProfile(circuit.n, site, obs.support, entries, dt, layers)


def pauli_string_matrix(label: str) -> np.ndarray:
    """Dense matrix of a Pauli string whose character ``j`` acts on local qubit ``j``."""
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(PAULI[ch], out)
    return out


def all_pauli_labels(k: int):
    return ("".join(p) for p in itertools.product(PAULI_LABELS, repeat=k))
