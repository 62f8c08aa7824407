"""Compilation costs: exact references and shadow estimates.

The shadow-based costs never touch the target.  They only combine stored
snapshots with observables built from the model circuit ``V(theta)``:

* global (deep) cost: Clifford-shadow fidelities with ``V(theta)|psi_j>``;
* local (shallow) cost: Pauli-shadow expectations of the 1-local projectors
  ``|psi_ji><psi_ji|`` conjugated through ``V(theta)`` and restricted to their
  light cone.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ResourceError, ValidationError
from .shadows import (
    DEFAULT_BATCHES,
    SUPPORT_CAP,
    ShadowSet,
    SupportOperator,
    batch_means,
    clifford_fidelity_values,
    median_of_means,
    pauli_snapshot_values,
)
from .sim import (
    DENSE_QUBIT_CAP,
    Circuit,
    ProductState,
    apply_circuit_amps,
    apply_matrix,
    dense_unitary,
    evolve,
    sample_haar_product,
    target_qubits,
    target_unitary,
)

DEFAULT_TEST_STATES = 100


def params_hash(params) -> str:
    data = np.ascontiguousarray(np.asarray(params, dtype=np.float64)).tobytes()
    return hashlib.sha256(data).hexdigest()[:16]


@dataclass
class CostReport:
    kind: str
    value: float
    stderr: float | None
    n_terms: int
    params_hash: str
    wall_time_ms: float = 0.0

    def to_record(self) -> dict:
        return asdict(self)


# -- exact costs ---------------------------------------------------------------


def hst_cost(U, V: Circuit, params=None, cap: int = DENSE_QUBIT_CAP) -> float:
    """``1 - |Tr[U^dag V(theta)]|^2 / 4^n``."""
    if target_qubits(U) != V.n:
        raise ValidationError("U and V act on different registers")
    u = target_unitary(U, cap)
    v = dense_unitary(V, params, cap)
    d = 2**V.n
    return float(1 - abs(np.vdot(u, v)) ** 2 / d**2)


def _states_matrix(states: Sequence, n: int) -> np.ndarray:
    if len(states) == 0:
        raise ValidationError("need at least one input state")
    cols = []
    for s in states:
        sv = s.to_statevector() if isinstance(s, ProductState) else s
        if sv.n != n:
            raise ValidationError(f"input state has {sv.n} qubits, expected {n}")
        cols.append(sv.amps)
    return np.stack(cols, axis=1)


def global_cost_exact(U, V: Circuit, params, states: Sequence) -> float:
    """``1 - mean_j |<psi_j| U^dag V(theta) |psi_j>|^2``."""
    psi = _states_matrix(states, V.n)
    u_psi = evolve(U, psi)
    v_psi = apply_circuit_amps(psi, V, params)
    fid = np.abs(np.sum(u_psi.conj() * v_psi, axis=0)) ** 2
    return float(1 - fid.mean())


def local_cost_exact(U, V: Circuit, params, inputs: Sequence[ProductState]) -> float:
    """``1 - mean_j <phi_j| H_j |phi_j>`` with ``phi_j = V^dag U psi_j`` and
    ``H_j = (1/n) sum_i |psi_ji><psi_ji|_i``."""
    if len(inputs) == 0:
        raise ValidationError("need at least one input state")
    if not all(isinstance(p, ProductState) for p in inputs):
        raise ValidationError("local cost needs product-state inputs")
    n = V.n
    psi = _states_matrix(inputs, n)
    phi = apply_circuit_amps(evolve(U, psi), V, params, adjoint=True)
    total = 0.0
    for j, inp in enumerate(inputs):
        for i in range(n):
            proj = apply_matrix(phi[:, j], n, inp.projector(i), [i])
            total += np.vdot(phi[:, j], proj).real
    return float(1 - total / (n * len(inputs)))


def test_loss(U, V: Circuit, params, N_test: int = DEFAULT_TEST_STATES, seed: int = 0) -> float:
    """Global cost over ``N_test`` fresh Haar-random product states."""
    rng = np.random.default_rng(seed)
    states = [sample_haar_product(V.n, rng) for _ in range(N_test)]
    return global_cost_exact(U, V, params, states)


test_loss.__test__ = False  # not a pytest test when imported into test modules


# -- light-cone back-propagation ------------------------------------------------


def _reorder_operator(op: np.ndarray, order: Sequence[int], new_order: Sequence[int]) -> np.ndarray:
    """Re-express an operator whose local bit j is qubit ``order[j]`` in ``new_order``."""
    k = len(order)
    if list(order) == list(new_order):
        return op
    t = op.reshape((2,) * (2 * k))
    pos = {q: k - 1 - j for j, q in enumerate(order)}
    row_axes = [pos[q] for q in reversed(new_order)]
    return t.transpose(row_axes + [a + k for a in row_axes]).reshape(2**k, 2**k)


def _embed(op: np.ndarray, support: list[int], new_support: list[int]) -> np.ndarray:
    extra = [q for q in new_support if q not in support]
    if not extra:
        return op
    big = np.kron(np.eye(2 ** len(extra)), op)
    return _reorder_operator(big, support + extra, new_support)


@dataclass(frozen=True)
class LightCone:
    """Static light cone of a set of sites: final support plus the gates met, in order.

    ``steps[t] = (gate index, local positions of its targets in support)``.
    """

    support: tuple[int, ...]
    steps: tuple[tuple[int, tuple[int, ...]], ...]
    adjoint: bool


@lru_cache(maxsize=1024)
def light_cone(
    circuit: Circuit, sites: tuple[int, ...], adjoint: bool = False, cap: int = SUPPORT_CAP
) -> LightCone:
    """Any gate touching the current support joins the cone and enlarges the support,
    whether or not it actually spreads the operator."""
    support = set(sites)
    order = range(len(circuit.gates) - 1, -1, -1) if adjoint else range(len(circuit.gates))
    met = []
    for gi in order:
        targets = circuit.gates[gi].targets
        if support & set(targets):
            support |= set(targets)
            met.append(gi)
            if len(support) > cap:
                raise ResourceError(
                    f"light cone grew to {len(support)} qubits (cap {cap}); "
                    "use the Clifford-shadow (global cost) path for this circuit"
                )
    final = tuple(sorted(support))
    steps = tuple((gi, tuple(final.index(t) for t in circuit.gates[gi].targets)) for gi in met)
    return LightCone(final, steps, adjoint)


def cone_unitary(cone: LightCone, circuit: Circuit, params) -> np.ndarray:
    """Product of the cone's gates on its support (``V`` restricted, or ``V^dag``)."""
    k = len(cone.support)
    w = np.eye(2**k, dtype=complex)
    for gi, pos in cone.steps:
        u = circuit.gates[gi].unitary(params)
        w = apply_matrix(w, k, u.conj().T if cone.adjoint else u, pos)
    return w


def propagate_operator(
    op: SupportOperator,
    circuit: Circuit,
    params=None,
    adjoint: bool = False,
    cap: int = SUPPORT_CAP,
) -> SupportOperator:
    """``V op V^dag`` (or ``V^dag op V`` when ``adjoint``) on the static light cone of ``op``."""
    params = circuit.resolve(params)
    cone = light_cone(circuit, op.support, adjoint, cap)
    w = cone_unitary(cone, circuit, params)
    big = _embed(op.matrix, list(op.support), list(cone.support))
    mat = w @ big @ w.conj().T
    return SupportOperator(cone.support, 0.5 * (mat + mat.conj().T))


def _site_projector_image(w: np.ndarray, k: int, pos: int, factor: np.ndarray) -> np.ndarray:
    # W (|f><f|_pos x 1) W^dag = A A^dag with A = f_0 W[:, bit=0] + f_1 W[:, bit=1].
    cols = np.arange(2**k)
    bit = (cols >> pos) & 1
    a = factor[0] * w[:, bit == 0] + factor[1] * w[:, bit == 1]
    mat = a @ a.conj().T
    return 0.5 * (mat + mat.conj().T)


def backpropagate_site_observable(
    V: Circuit, params, site: int, factor, adjoint: bool = False, cap: int = SUPPORT_CAP
) -> SupportOperator:
    """``V (|f><f|_site x 1) V^dag`` restricted to its light cone."""
    f = np.asarray(factor, dtype=complex)
    if f.shape != (2,) or abs(np.linalg.norm(f) - 1) > 1e-9:
        raise ValidationError("factor must be a normalized single-qubit state")
    if not 0 <= site < V.n:
        raise ValidationError(f"site {site} outside the register")
    params = V.resolve(params)
    cone = light_cone(V, (site,), adjoint, cap)
    w = cone_unitary(cone, V, params)
    k = len(cone.support)
    return SupportOperator(cone.support, _site_projector_image(w, k, cone.support.index(site), f))


def site_observables(
    V: Circuit, params, inputs: Sequence[ProductState], cap: int = SUPPORT_CAP
) -> list[list[SupportOperator]]:
    """``O[j][i] = V (|psi_ji><psi_ji|_i x 1) V^dag``; one cone unitary per site serves all inputs."""
    params = V.resolve(params)
    out = [[None] * V.n for _ in inputs]
    for i in range(V.n):
        cone = light_cone(V, (i,), False, cap)
        w = cone_unitary(cone, V, params)
        k, pos = len(cone.support), cone.support.index(i)
        for j, inp in enumerate(inputs):
            out[j][i] = SupportOperator(
                cone.support, _site_projector_image(w, k, pos, inp.factors[i])
            )
    return out


# -- shadow-estimated costs ----------------------------------------------------


def _check_shadows(shadows: Sequence[ShadowSet], kind: str, n_inputs: int, n: int):
    if len(shadows) != n_inputs or n_inputs == 0:
        raise ValidationError(f"need one shadow per input state ({n_inputs}), got {len(shadows)}")
    for s in shadows:
        if s.kind != kind:
            raise ValidationError(f"expected {kind} shadows, got {s.kind}")
        if s.n != n:
            raise ValidationError(f"shadow on {s.n} qubits, circuit on {n}")


def local_cost_terms(
    shadows: Sequence[ShadowSet],
    V: Circuit,
    params,
    inputs: Sequence[ProductState],
    cap: int = SUPPORT_CAP,
    truncate_k: int | None = None,
) -> np.ndarray:
    """Per-snapshot values of the local terms: entry ``j`` has shape ``(n, M_j)``."""
    observables = site_observables(V, params, inputs, cap)
    if truncate_k is not None:
        from .locality import truncate

        observables = [[truncate(o, truncate_k) for o in row] for row in observables]
    return [
        np.array([pauli_snapshot_values(shadow, o) for o in row])
        for shadow, row in zip(shadows, observables)
    ]


def local_cost_from_shadows(
    shadows: Sequence[ShadowSet],
    V: Circuit,
    params,
    inputs: Sequence[ProductState],
    K: int = DEFAULT_BATCHES,
    cap: int = SUPPORT_CAP,
    truncate_k: int | None = None,
) -> CostReport:
    """``1 - (1/nN) sum_{j,i} MoM_K[Tr(rho_jm O_ji(theta))]`` from Pauli shadows of ``U|psi_j>``."""
    start = time.perf_counter()
    params = V.resolve(params)
    _check_shadows(shadows, "pauli", len(inputs), V.n)
    n, N = V.n, len(inputs)
    total, var = 0.0, 0.0
    for vals in local_cost_terms(shadows, V, params, inputs, cap, truncate_k):
        means = batch_means(vals, K)  # (n, K)
        total += float(np.median(means, axis=1).sum())
        if K > 1:
            var += means.sum(axis=0).var(ddof=1) / K
    return CostReport(
        "local",
        float(1 - total / (n * N)),
        float(np.sqrt(var) / (n * N)) if K > 1 else None,
        n * N,
        params_hash(params),
        (time.perf_counter() - start) * 1e3,
    )


def global_cost_from_shadows(
    shadows: Sequence[ShadowSet],
    V: Circuit,
    params,
    inputs: Sequence,
    K: int = DEFAULT_BATCHES,
) -> CostReport:
    """``1 - (1/N) sum_j MoM_K[(2^n+1)|<b|W V(theta)|psi_j>|^2 - 1]`` from Clifford shadows."""
    start = time.perf_counter()
    params = V.resolve(params)
    _check_shadows(shadows, "clifford", len(inputs), V.n)
    psi = _states_matrix(inputs, V.n)
    v_psi = apply_circuit_amps(psi, V, params)
    total, var = 0.0, 0.0
    for j, shadow in enumerate(shadows):
        est, se = median_of_means(clifford_fidelity_values(shadow, v_psi[:, j]), K)
        total += est
        var += se**2
    N = len(inputs)
    return CostReport(
        "global",
        float(1 - total / N),
        float(np.sqrt(var) / N) if K > 1 else None,
        N,
        params_hash(params),
        (time.perf_counter() - start) * 1e3,
    )
