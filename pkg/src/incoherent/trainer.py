"""Training V(theta) on shadow-estimated costs.

Once the snapshots are fixed the shadow cost is a deterministic, smooth
function of theta, so central differences give noise-free gradients and a
plain limited-memory quasi-Newton method with Armijo backtracking applies.
The target is touched only while collecting shadows; test losses against the
true target are diagnostics and never reach the optimizer.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .costs import (
    DEFAULT_TEST_STATES,
    global_cost_from_shadows,
    local_cost_from_shadows,
    test_loss,
)
from .errors import NumericError, ValidationError
from .shadows import (
    DEFAULT_BATCHES,
    ShadowSet,
    sample_clifford_shadow,
    sample_pauli_shadow,
)
from .sim import Circuit, ProductState, StateVector, evolve, target_description

HISTORY = 10
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 30
STALL_WINDOW = 5
# Central-difference gradients carry ~eps/h rounding noise; below this they are zero.
GRAD_TOL = 1e-10
TEST_EVERY_SMALL_N = 8


@dataclass
class TrainConfig:
    """Optimizer settings.

    ``init`` is either ``"uniform"`` (theta_i ~ U(-1, 1) from ``seed``) or an
    explicit parameter vector.  Training stops once the accepted cost has
    dropped by at most ``tol`` over the last ``STALL_WINDOW`` iterations.
    """

    max_iters: int = 200
    h: float = 1e-5
    tol: float = 1e-9
    init: str | Sequence[float] = "uniform"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.h <= 0:
            raise ValidationError("grad_step h must be positive")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if isinstance(self.init, str) and self.init != "uniform":
            raise ValidationError(f"unknown init {self.init!r}")

    def initial_params(self, dim: int) -> np.ndarray:
        if isinstance(self.init, str):
            return np.random.default_rng(self.seed).uniform(-1, 1, dim)
        x = np.asarray(self.init, dtype=float)
        if x.shape != (dim,):
            raise ValidationError(f"init vector has shape {x.shape}, expected ({dim},)")
        return x.copy()


@dataclass
class IterationRecord:
    iter: int
    train_cost: float
    test_cost: float | None
    grad_norm: float
    wall_time_ms: float

    def to_record(self, timings: bool = True) -> dict:
        rec = {
            "iter": self.iter,
            "train_cost": self.train_cost,
            "test_cost": self.test_cost,
            "grad_norm": self.grad_norm,
        }
        if timings:
            rec["wall_time_ms"] = self.wall_time_ms
        return rec


@dataclass
class TrainTrace:
    iterations: list[IterationRecord] = field(default_factory=list)
    final_params: np.ndarray | None = None
    converged: bool = False
    message: str = ""

    @property
    def train_costs(self) -> np.ndarray:
        return np.array([r.train_cost for r in self.iterations])

    @property
    def final_cost(self) -> float:
        return self.iterations[-1].train_cost

    @property
    def final_test_cost(self) -> float | None:
        tests = [r.test_cost for r in self.iterations if r.test_cost is not None]
        return tests[-1] if tests else None

    def footer(self) -> dict:
        return {
            "final_params": [float(x) for x in self.final_params],
            "converged": self.converged,
            "message": self.message,
        }


def _checked(value) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise NumericError(f"cost returned a non-finite value ({value})")
    return value


def gradient(
    cost: Callable[[np.ndarray], float], params, h: float = 1e-5, threads: int = 1
) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h``."""
    if h <= 0:
        raise ValidationError("h must be positive")
    x = np.asarray(params, dtype=float)
    shifts = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        shifts += [x + e, x - e]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            vals = list(pool.map(lambda p: _checked(cost(p)), shifts))
    else:
        vals = [_checked(cost(p)) for p in shifts]
    vals = np.array(vals).reshape(-1, 2)
    return (vals[:, 0] - vals[:, 1]) / (2 * h)


def _two_loop(g: np.ndarray, history: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y in reversed(history):
        a = (s @ q) / (y @ s)
        alphas.append(a)
        q -= a * y
    if history:
        s, y = history[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), a in zip(history, reversed(alphas)):
        b = (y @ q) / (y @ s)
        q += (a - b) * s
    return -q


def _line_search(cost, x, f, g, d, scaled: bool):
    """Armijo backtracking by halving; ``None`` after ``MAX_BACKTRACKS`` failures."""
    slope = float(g @ d)
    if not slope < 0:
        d, slope = -g, -float(g @ g)
        scaled = False
    # Without curvature information a unit step along -g can overshoot wildly.
    t = 1.0 if scaled else min(1.0, 1.0 / np.sqrt(-slope))
    for _ in range(MAX_BACKTRACKS + 1):
        x_new = x + t * d
        f_new = _checked(cost(x_new))
        if f_new <= f + ARMIJO_C * t * slope:
            return x_new, f_new
        t *= 0.5
    return None


def minimize(
    cost: Callable[[np.ndarray], float],
    config: TrainConfig,
    dim: int | None = None,
    monitor: Callable[[int, np.ndarray], float | None] | None = None,
    grad: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[np.ndarray, TrainTrace]:
    """L-BFGS (memory 10) with Armijo backtracking; accepted costs never increase.

    ``monitor(iter, params)`` may return a diagnostic test cost for the trace;
    it has no influence on the iterates.
    """
    if dim is None:
        if isinstance(config.init, str):
            raise ValidationError("dim is required with a random init")
        dim = len(config.init)
    x = config.initial_params(dim)
    grad = grad or (lambda p: gradient(cost, p, config.h, config.threads))
    f = _checked(cost(x))
    g = grad(x)
    history: list[tuple[np.ndarray, np.ndarray]] = []
    trace = TrainTrace()
    accepted = [f]
    start = time.perf_counter()
    for it in range(1, config.max_iters + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= GRAD_TOL:
            trace.converged, trace.message = True, "zero gradient"
            break
        step = _line_search(cost, x, f, g, _two_loop(g, history), bool(history))
        if step is None and history:
            # The quasi-Newton model may be stale; retry along steepest descent.
            history.clear()
            step = _line_search(cost, x, f, g, -g, False)
        if step is None:
            trace.message = "line search failed"
            break
        x_new, f_new = step
        g_new = grad(x_new)
        s, y = x_new - x, g_new - g
        if s @ y > 1e-12 * (s @ s):
            history.append((s, y))
            del history[:-HISTORY]
        x, f, g = x_new, f_new, g_new
        accepted.append(f)
        test_cost = monitor(it, x) if monitor else None
        trace.iterations.append(
            IterationRecord(
                it, f, test_cost, float(np.linalg.norm(g)), (time.perf_counter() - start) * 1e3
            )
        )
        if len(accepted) > STALL_WINDOW and accepted[-1 - STALL_WINDOW] - f <= config.tol:
            trace.converged, trace.message = True, "cost stalled"
            break
    else:
        trace.message = "max_iters reached"
    if not trace.iterations:
        test_cost = monitor(0, x) if monitor else None
        trace.iterations.append(IterationRecord(0, f, test_cost, float(np.linalg.norm(g)), 0.0))
    trace.final_params = x
    return x, trace


# -- incoherent protocol --------------------------------------------------------


class TargetHandle:
    """Access point to the target unitary that counts protocol invocations.

    Every prepared output copy counts as one invocation.  ``diagnostic`` exposes
    the target for out-of-protocol test losses without touching the count.
    """

    def __init__(self, target):
        self._target = target
        self.invocations = 0
        self.diagnostic_calls = 0

    @property
    def description(self) -> str:
        return target_description(self._target)

    def prepare(self, state: StateVector | ProductState, copies: int) -> StateVector:
        """Return ``U|psi>`` standing for ``copies`` independent target queries."""
        if copies < 1:
            raise ValidationError("copies must be >= 1")
        sv = state.to_statevector() if isinstance(state, ProductState) else state
        self.invocations += copies
        return StateVector(sv.n, evolve(self._target, sv.amps))

    @property
    def diagnostic(self):
        self.diagnostic_calls += 1
        return self._target


def derived_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for a sub-task identified by ``keys``."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *keys])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def collect_shadows(
    handle: TargetHandle,
    inputs: Sequence[ProductState | StateVector],
    M: int,
    kind: str = "pauli",
    seed: int = 0,
    threads: int = 1,
    target_label: str | None = None,
) -> list[ShadowSet]:
    """Measurement phase: one M-shot shadow of ``U|psi_j>`` per input.

    ``target_label`` replaces the target description in the shadow headers
    (e.g. with a hash, so the files do not reveal the target's parameters).
    """
    label = handle.description if target_label is None else target_label
    if kind not in ("pauli", "clifford"):
        raise ValidationError(f"unknown shadow kind {kind!r}")
    shadows = []
    for j, inp in enumerate(inputs):
        out = handle.prepare(inp, M)
        desc = inp.describe() if isinstance(inp, ProductState) else []
        s = derived_seed(seed, j)
        if kind == "pauli":
            shadows.append(sample_pauli_shadow(out, M, s, desc, label))
        else:
            shadows.append(sample_clifford_shadow(out, M, s, desc, label, threads=threads))
    return shadows


def shadow_cost_function(
    shadows: Sequence[ShadowSet],
    ansatz: Circuit,
    inputs: Sequence,
    K: int = DEFAULT_BATCHES,
    truncate_k: int | None = None,
) -> Callable[[np.ndarray], float]:
    """theta -> shadow-estimated cost (local for Pauli shadows, global for Clifford)."""
    kinds = {s.kind for s in shadows}
    if len(kinds) != 1:
        raise ValidationError("shadows must share one kind")
    if kinds == {"pauli"}:
        return lambda p: local_cost_from_shadows(
            shadows, ansatz, p, inputs, K, truncate_k=truncate_k
        ).value
    return lambda p: global_cost_from_shadows(shadows, ansatz, p, inputs, K).value


def train_incoherent(
    shadows: Sequence[ShadowSet],
    target,
    ansatz: Circuit,
    inputs: Sequence,
    config: TrainConfig,
    K: int = DEFAULT_BATCHES,
    N_test: int = DEFAULT_TEST_STATES,
    test_seed: int = 0,
    test_every: int | None = None,
    truncate_k: int | None = None,
) -> TrainTrace:
    """Minimize the shadow cost over ``ansatz`` parameters.

    ``target`` (a TargetHandle, a target object, or None) is used only for the
    diagnostic test loss, every iteration at n <= 8 and every 10 above by
    default.
    """
    cost = shadow_cost_function(shadows, ansatz, inputs, K, truncate_k)
    every = test_every or (1 if ansatz.n <= TEST_EVERY_SMALL_N else 10)
    monitor = None
    if target is not None:
        true_u = target.diagnostic if isinstance(target, TargetHandle) else target

        def monitor(it, p):
            if it % every:
                return None
            return test_loss(true_u, ansatz, p, N_test, test_seed)

    _, trace = minimize(cost, config, ansatz.num_params, monitor)
    if target is not None and trace.iterations[-1].test_cost is None:
        trace.iterations[-1].test_cost = test_loss(
            true_u, ansatz, trace.final_params, N_test, test_seed
        )
    return trace


def covering_search(
    cost_at: Callable[[int], float], candidates: Sequence
) -> tuple[int, float]:
    """Exhaustive minimization over a finite candidate set; ties go to the lowest index."""
    if len(candidates) == 0:
        raise ValidationError("covering search needs at least one candidate")
    values = np.array([_checked(cost_at(i)) for i in range(len(candidates))])
    best = int(np.argmin(values))
    return best, float(values[best])
