"""Uniform Clifford sampling on the binary symplectic tableau, and tableau -> dense unitary.

Tableau layout (bool, shape ``(2n, 2n+1)``): row ``j < n`` is the image of
``X_j``, row ``n + j`` the image of ``Z_j``; columns ``[0, n)`` are x bits,
``[n, 2n)`` z bits and the last column the sign bit.  A row with bits
``(x, z, r)`` denotes the Hermitian Pauli ``(-1)^r i^{|x & z|} X^x Z^z``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ValidationError

CLIFFORD_QUBIT_CAP = 8


def symplectic_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Binary symplectic form of rows ``a`` and ``b`` (last axis is ``2n`` long)."""
    n = a.shape[-1] // 2
    return (
        np.sum(a[..., :n] & b[..., n:], axis=-1) + np.sum(a[..., n:] & b[..., :n], axis=-1)
    ) % 2


def _sp_int(a: int, b: int, n: int) -> int:
    mask = (1 << n) - 1
    return ((a & mask & (b >> n)) ^ ((a >> n) & b & mask)).bit_count() & 1


def _project_out(u: int, pairs: list[tuple[int, int]], n: int) -> int:
    # Linear projection onto the symplectic complement of span(pairs); maps a
    # uniform vector to a uniform vector of the complement.
    for v, w in pairs:
        if _sp_int(u, w, n):
            u ^= v
        if _sp_int(u, v, n):
            u ^= w
    return u


class _IntStream:
    def __init__(self, rng: np.random.Generator, bits: int):
        self.rng, self.bits, self.buf = rng, bits, []

    def next(self) -> int:
        if not self.buf:
            self.buf = self.rng.integers(0, 1 << self.bits, size=32, dtype=np.int64).tolist()[::-1]
        return self.buf.pop()


def random_symplectic(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform element of Sp(2n, F2) as a ``(2n, 2n)`` bool matrix (rows as in the tableau)."""
    stream = _IntStream(rng, 2 * n)
    pairs: list[tuple[int, int]] = []
    for _ in range(n):
        while True:
            v = _project_out(stream.next(), pairs, n)
            if v:
                break
        while True:
            w = _project_out(stream.next(), pairs, n)
            if _sp_int(v, w, n):
                break
        pairs.append((v, w))
    rows = [v for v, _ in pairs] + [w for _, w in pairs]
    return ((np.array(rows, dtype=np.int64)[:, None] >> np.arange(2 * n)) & 1).astype(bool)


def random_clifford_tableau(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform n-qubit Clifford (modulo global phase)."""
    tab = np.zeros((2 * n, 2 * n + 1), dtype=bool)
    tab[:, :-1] = random_symplectic(n, rng)
    tab[:, -1] = rng.integers(2, size=2 * n).astype(bool)
    return tab


def is_valid_tableau(tab: np.ndarray) -> bool:
    tab = np.asarray(tab)
    if tab.ndim != 2 or tab.shape[1] != tab.shape[0] + 1 or tab.shape[0] % 2:
        return False
    n = tab.shape[0] // 2
    sym = tab[:, :-1].astype(np.int64)
    gram = (sym[:, :n] @ sym[:, n:].T + sym[:, n:] @ sym[:, :n].T) % 2
    omega = np.zeros((2 * n, 2 * n), dtype=np.int64)
    omega[:n, n:] = np.eye(n, dtype=np.int64)
    omega[n:, :n] = np.eye(n, dtype=np.int64)
    return bool(np.array_equal(gram, omega))


def _row_paulis(tab: np.ndarray, n: int) -> list[tuple[int, int, int]]:
    """Per row: (x mask, z mask, phase exponent of i) for the operator ``i^phase X^x Z^z``."""
    weights = 1 << np.arange(n, dtype=np.int64)
    xs = (tab[:, :n].astype(np.int64) @ weights).tolist()
    zs = (tab[:, n : 2 * n].astype(np.int64) @ weights).tolist()
    signs = tab[:, -1].tolist()
    return [(x, z, (2 * s + (x & z).bit_count()) % 4) for x, z, s in zip(xs, zs, signs)]


def _apply_pauli(vec: np.ndarray, n: int, x: int, z: int, phase: int) -> np.ndarray:
    k = np.arange(2**n)
    src = k ^ x
    sign = 1 - 2 * (np.bitwise_count(src & z).astype(np.int64) & 1)
    return (1j**phase) * sign * vec[src]


def _stabilizer_state(n: int, stabilizers: list[tuple[int, int, int]]) -> np.ndarray:
    k = np.arange(2**n)
    for start in (np.exp(0.7j * k + 0.3 * k), np.exp(1.9j * k**2), np.ones(2**n)):
        vec = start.astype(complex)
        for x, z, ph in stabilizers:
            vec = 0.5 * (vec + _apply_pauli(vec, n, x, z, ph))
        norm = np.linalg.norm(vec)
        if norm > 1e-6:
            return vec / norm
    raise ValidationError("could not locate the stabilizer state of the tableau")


def tableau_unitary(tab: np.ndarray) -> np.ndarray:
    """Dense ``2**n`` unitary W (up to global phase) with ``W P W^dag`` given by the rows."""
    tab = np.asarray(tab, dtype=bool)
    if tab.shape[0] <= 4:
        return _tableau_unitary_cached(tab.tobytes(), tab.shape[0] // 2).copy()
    return _tableau_unitary(tab)


@lru_cache(maxsize=16384)
def _tableau_unitary_cached(key: bytes, n: int) -> np.ndarray:
    tab = np.frombuffer(key, dtype=bool).reshape(2 * n, 2 * n + 1)
    return _tableau_unitary(tab)


def _tableau_unitary(tab: np.ndarray) -> np.ndarray:
    n = tab.shape[0] // 2
    dim = 2**n
    rows = _row_paulis(tab, n)
    x_images, z_images = rows[:n], rows[n:]
    s0 = _stabilizer_state(n, z_images)
    # W|c> = (prod_j P_j^{c_j}) W|0>, P_j the image of X_j.
    xs = np.zeros(dim, dtype=np.int64)
    zs = np.zeros(dim, dtype=np.int64)
    ph = np.zeros(dim, dtype=np.int64)
    for j, (xj, zj, pj) in enumerate(x_images):
        lo = slice(0, 1 << j)
        hi = slice(1 << j, 1 << (j + 1))
        xs[hi] = xs[lo] ^ xj
        zs[hi] = zs[lo] ^ zj
        ph[hi] = (ph[lo] + pj + 2 * (np.bitwise_count(zs[lo] & xj).astype(np.int64) & 1)) % 4
    k = np.arange(dim)[:, None]
    src = k ^ xs[None, :]
    sign = 1 - 2 * (np.bitwise_count(src & zs[None, :]).astype(np.int64) & 1)
    return (1j ** ph[None, :]) * sign * s0[src]


def pauli_matrix_from_row(row: np.ndarray, n: int) -> np.ndarray:
    x, z, phase = _row_paulis(np.asarray(row, dtype=bool)[None, :], n)[0]
    eye = np.eye(2**n, dtype=complex)
    return np.stack([_apply_pauli(eye[:, c], n, x, z, phase) for c in range(2**n)], axis=1)


def all_tableaux(n: int) -> list[np.ndarray]:
    """Every n-qubit Clifford tableau (tractable for n = 1 only: 24 elements)."""
    if n != 1:
        raise ValidationError("exhaustive enumeration only supported for n = 1")
    out = []
    for bits in range(16):
        sym = np.array([[bits >> 0 & 1, bits >> 1 & 1], [bits >> 2 & 1, bits >> 3 & 1]], dtype=bool)
        if not symplectic_product(sym[0].astype(np.int64), sym[1].astype(np.int64)):
            continue
        for signs in range(4):
            tab = np.zeros((2, 3), dtype=bool)
            tab[:, :2] = sym
            tab[:, 2] = [signs & 1, signs >> 1 & 1]
            out.append(tab)
    return out


@lru_cache(maxsize=1)
def single_qubit_cliffords() -> tuple[np.ndarray, ...]:
    """The 24 single-qubit Cliffords as 2x2 unitaries (global phase arbitrary)."""
    return tuple(tableau_unitary(t) for t in all_tableaux(1))
