"""Hardness of telling U_+ from U_- with product inputs and Pauli measurements.

``U_+`` and ``U_-`` are orthogonal in Hilbert-Schmidt inner product, yet a
single product-input / Pauli-basis measurement separates them with total
variation at most ``(14/18)^n``.  This module evaluates the constants behind
that bound exactly, and runs Monte Carlo distinguishing experiments whose
success is capped by ``1/2 + TV/2``.
"""

from __future__ import annotations

import copy
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .clifford import single_qubit_cliffords
from .errors import NumericError, ResourceError, ValidationError
from .shadows import BASIS_NAMES, BASIS_ROTATIONS
from .sim import (
    PAULI,
    SINGLE_QUBIT_STATES,
    STABILIZER_LABELS,
    GhzLike,
    ProductState,
    apply_matrix,
    evolve,
    product_state,
)

TV_ENUMERATION_CAP = 4
TWIRL_CAP = 6


def _stabilizer_vectors() -> list[np.ndarray]:
    return [SINGLE_QUBIT_STATES[label] for label in STABILIZER_LABELS]


def _exact_sqrt(q: Fraction) -> Fraction:
    num, den = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if num * num != q.numerator or den * den != q.denominator:
        raise NumericError(f"{q} is not the square of a rational")
    return Fraction(num, den)


def stabilizer_constant(first: str = "X", second: str = "Z") -> Fraction:
    """``(1/36) sum_{x,y} |<x|A|y><y|B|x>|`` over the six single-qubit stabilizer states.

    Squared magnitudes of stabilizer overlaps are multiples of 1/4, so each term
    is recovered exactly from its float value.
    """
    a, b = PAULI[first], PAULI[second]
    states = _stabilizer_vectors()
    total = Fraction(0)
    for x in states:
        for y in states:
            sq = abs((x.conj() @ a @ y) * (y.conj() @ b @ x)) ** 2
            q = Fraction(round(sq * 16), 16)
            if abs(float(q) - sq) > 1e-12:
                raise NumericError(f"overlap {sq} is not a multiple of 1/16")
            total += _exact_sqrt(q)
    return total / 36


def _z_factors() -> np.ndarray:
    """``z[psi, phi] = <phi|X|psi><psi|Z|phi>`` for one qubit (6 x 6)."""
    states = _stabilizer_vectors()
    x, z = PAULI["X"], PAULI["Z"]
    return np.array(
        [[(phi.conj() @ x @ psi) * (psi.conj() @ z @ phi) for phi in states] for psi in states]
    )


@dataclass(frozen=True)
class SingleMeasurementTV:
    exact_tv: float
    bound: float
    abs_sum: float


def single_measurement_tv(n: int) -> SingleMeasurementTV:
    """TV between outcome distributions of U_+ and U_- for one random measurement.

    The input is a uniformly random stabilizer product state, the measurement a
    uniformly random Pauli basis; ``TV = sum p(psi) / 3^n |Re z|`` (``Im z`` for
    even n) with ``z = <phi|X^n|psi><psi|Z^n|phi>`` over all outcome states phi.
    """
    if not 1 <= n <= TV_ENUMERATION_CAP:
        raise ResourceError(f"exact TV enumeration supports 1 <= n <= {TV_ENUMERATION_CAP}")
    per_qubit = _z_factors().reshape(-1) / 18.0  # p(psi) = 1/6, p(basis) = 1/3 per qubit
    z = np.ones(1, dtype=complex)
    for _ in range(n):
        z = np.multiply.outer(z, per_qubit).reshape(-1)
    part = np.real(z) if n % 2 else np.imag(z)
    exact = float(np.abs(part).sum())
    abs_sum = float(np.abs(z).sum())
    bound = (14 / 18) ** n
    if exact > bound + 1e-12:
        raise NumericError(f"exact TV {exact} exceeds the bound {bound}")
    return SingleMeasurementTV(exact, bound, abs_sum)


def twirl_moments(n: int, psi: Sequence[str] | None = None, phi: Sequence[str] | None = None):
    """``(E[z^2], E[|z|^2])`` over independent local Clifford twirls ``W1``, ``W2``.

    ``z = <phi|W2 X^n W1|psi><psi|W1^dag Z^n W2^dag|phi>`` for fixed product
    states (stabilizer labels per qubit, default all ``"0"``).  Both moments
    factorize over qubits, so each qubit's 24 x 24 average is enumerated exactly.
    """
    if not 1 <= n <= TWIRL_CAP:
        raise ResourceError(f"twirl moments supported for 1 <= n <= {TWIRL_CAP}")
    psi = list(psi or ["0"] * n)
    phi = list(phi or ["0"] * n)
    if len(psi) != n or len(phi) != n:
        raise ValidationError("psi and phi need one label per qubit")
    cliffords = single_qubit_cliffords()
    x, zm = PAULI["X"], PAULI["Z"]
    m2, mabs2 = 1.0 + 0j, 1.0
    for a, b in zip(psi, phi):
        p, f = SINGLE_QUBIT_STATES[a], SINGLE_QUBIT_STATES[b]
        vals = np.array(
            [
                (f.conj() @ w2 @ x @ w1 @ p) * (p.conj() @ w1.conj().T @ zm @ w2.conj().T @ f)
                for w1 in cliffords
                for w2 in cliffords
            ]
        )
        m2 *= np.mean(vals**2)
        mabs2 *= float(np.mean(np.abs(vals) ** 2))
    if abs(m2.imag) > 1e-12:
        raise NumericError("E[z^2] should be real")
    return float(m2.real), mabs2


# -- distinguishing experiments ---------------------------------------------------


@dataclass
class Measurement:
    input: ProductState
    bases: str
    bits: tuple[int, ...]


@dataclass
class DistinguishRecord:
    n: int
    strategy_id: str
    twirl: str
    budget: int
    trials: int
    successes: int
    seed: int
    tv_bound: float | None = None
    success_bound: float | None = None

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise ValidationError("successes must lie in [0, trials]")

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    def to_record(self) -> dict:
        return asdict(self)


class Strategy:
    """Adaptive product-input / product-measurement strategy.

    ``start`` is called once per trial; ``next`` returns the next (input, bases)
    given the transcript so far; ``guess`` sees the whole transcript and, in the
    twirled task, the revealed local Cliffords ``(W1, W2)``.
    """

    strategy_id = "abstract"

    def start(self, n: int, rng: np.random.Generator) -> None:
        self.n, self.rng = n, rng

    def next(self, history: list[Measurement]) -> tuple[ProductState, str]:
        raise NotImplementedError

    def guess(self, history: list[Measurement], twirl=None) -> int:
        raise NotImplementedError


def _target(n: int, sign: int, twirl) -> GhzLike:
    if twirl is None:
        return GhzLike(n, sign)
    return GhzLike(n, sign, tuple(twirl[0]), tuple(twirl[1]))


def outcome_probabilities(target, inp: ProductState, bases: str) -> np.ndarray:
    """Born distribution over outcome indices (bit q = qubit q) for a product measurement."""
    n = len(bases)
    amps = evolve(target, inp.to_statevector().amps)
    for q, b in enumerate(bases):
        if b != "Z":
            amps = apply_matrix(amps, n, BASIS_ROTATIONS[BASIS_NAMES.index(b)], [q])
    p = np.abs(amps) ** 2
    return p / p.sum()


def _index(bits: Sequence[int]) -> int:
    return sum(int(b) << q for q, b in enumerate(bits))


def log_likelihoods(history: list[Measurement], n: int, twirl=None) -> np.ndarray:
    """Log-likelihood of the transcript under sign +1 and sign -1."""
    out = np.zeros(2)
    for k, sign in enumerate((1, -1)):
        target = _target(n, sign, twirl)
        for m in history:
            p = outcome_probabilities(target, m.input, m.bases)[_index(m.bits)]
            out[k] += np.log(p) if p > 0 else -np.inf
    return out


class _MaximumLikelihood(Strategy):
    def guess(self, history, twirl=None) -> int:
        ll = log_likelihoods(history, self.n, twirl)
        if ll[0] == ll[1]:
            return 1 if self.rng.random() < 0.5 else -1
        return 1 if ll[0] > ll[1] else -1


def _random_stabilizer_input(n: int, rng: np.random.Generator) -> ProductState:
    return product_state([STABILIZER_LABELS[i] for i in rng.integers(0, 6, n)])


class UniformRandomStrategy(_MaximumLikelihood):
    """Uniform stabilizer-product inputs and uniform Pauli bases, ML guess."""

    strategy_id = "uniform-random"

    def next(self, history):
        bases = "".join(BASIS_NAMES[i] for i in self.rng.integers(0, 3, self.n))
        return _random_stabilizer_input(self.n, self.rng), bases


class GreedyAdaptiveStrategy(_MaximumLikelihood):
    """Among ``pool`` random (input, bases) candidates, measure the one whose outcome
    distribution best separates the hypotheses under the current posterior:
    maximize ``sum_b |pi_+ p_+(b) - pi_- p_-(b)|``.  Untwirled task only (the
    twirl is unknown while measuring, so the candidates are scored untwirled)."""

    strategy_id = "greedy-adaptive"

    def __init__(self, pool: int = 8):
        self.pool = pool

    def next(self, history):
        ll = log_likelihoods(history, self.n)
        post = np.exp(ll - ll.max()) if np.isfinite(ll.max()) else np.array([0.5, 0.5])
        post /= post.sum()
        best, best_score = None, -1.0
        for _ in range(self.pool):
            inp = _random_stabilizer_input(self.n, self.rng)
            bases = "".join(BASIS_NAMES[i] for i in self.rng.integers(0, 3, self.n))
            pp = outcome_probabilities(GhzLike(self.n, 1), inp, bases)
            pm = outcome_probabilities(GhzLike(self.n, -1), inp, bases)
            score = float(np.abs(post[0] * pp - post[1] * pm).sum())
            if score > best_score:
                best, best_score = (inp, bases), score
        return best


class CleverStrategy(Strategy):
    """``|+>^n`` (odd n) or ``|+>^(n-1) |i>`` (even n, ``|i>`` on the last qubit),
    measured in the computational basis.

    U_+ and U_- then give outcome distributions with disjoint supports: the
    parity of the bits on the ``|+>`` qubits is even exactly for U_+.
    """

    strategy_id = "clever"

    def next(self, history):
        labels = ["+"] * self.n
        if self.n % 2 == 0:
            labels[-1] = "i"
        return product_state(labels), "Z" * self.n

    def guess(self, history, twirl=None) -> int:
        m = history[0]
        plus = m.bits if self.n % 2 else m.bits[:-1]
        return 1 if sum(plus) % 2 == 0 else -1


def clever_distinguisher(n: int) -> Strategy:
    if n < 1:
        raise ValidationError("n must be >= 1")
    return CleverStrategy()


STRATEGIES = {
    "uniform-random": UniformRandomStrategy,
    "greedy-adaptive": GreedyAdaptiveStrategy,
    "clever": CleverStrategy,
}


def _validate_move(move, n: int) -> tuple[ProductState, str]:
    try:
        inp, bases = move
    except (TypeError, ValueError):
        raise ValidationError("strategy must return (ProductState, bases)") from None
    if not isinstance(inp, ProductState) or inp.n != n:
        raise ValidationError(f"strategy input must be an {n}-qubit ProductState")
    if not isinstance(bases, str) or len(bases) != n or set(bases) - set(BASIS_NAMES):
        raise ValidationError(f"strategy bases must be a length-{n} string over XYZ")
    return inp, bases


def run_distinguishing_experiment(
    n: int,
    strategy: Strategy,
    budget: int,
    trials: int,
    twirl: bool = False,
    seed: int = 0,
    threads: int = 1,
) -> DistinguishRecord:
    """Monte Carlo success rate of ``strategy`` at guessing a uniformly hidden sign.

    Trial ``t`` draws all of its randomness from seeds derived from ``(seed, t)``
    and plays a fresh copy of ``strategy``, so results do not depend on ``threads``.
    """
    from .trainer import derived_seed

    if budget < 1 or trials < 1:
        raise ValidationError("budget and trials must be >= 1")
    cliffords = single_qubit_cliffords()

    def run_trial(trial: int) -> bool:
        rng = np.random.default_rng(derived_seed(seed, trial))
        sign = 1 if rng.random() < 0.5 else -1
        pair = None
        if twirl:
            idx = rng.integers(0, 24, (2, n))
            pair = ([cliffords[i] for i in idx[0]], [cliffords[i] for i in idx[1]])
        target = _target(n, sign, pair)
        player = copy.deepcopy(strategy)
        player.start(n, np.random.default_rng(derived_seed(seed, trial, 1)))
        history: list[Measurement] = []
        for _ in range(budget):
            inp, bases = _validate_move(player.next(history), n)
            p = outcome_probabilities(target, inp, bases)
            outcome = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
            outcome = min(outcome, p.size - 1)
            history.append(Measurement(inp, bases, tuple((outcome >> q) & 1 for q in range(n))))
        guess = player.guess(history, pair)
        if guess not in (1, -1):
            raise ValidationError("strategy guess must be +1 or -1")
        return guess == sign

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            successes = sum(pool.map(run_trial, range(trials)))
    else:
        successes = sum(run_trial(t) for t in range(trials))
    tv = success_bound = None
    if isinstance(strategy, UniformRandomStrategy) and not twirl:
        # Rounds are i.i.d.; TV of the transcript is at most budget times one round's.
        tv = single_measurement_tv(n).exact_tv if n <= TV_ENUMERATION_CAP else (14 / 18) ** n
        success_bound = min(1.0, 0.5 + budget * tv / 2)
    return DistinguishRecord(
        n,
        strategy.strategy_id,
        "local-clifford-pair" if twirl else "none",
        budget,
        trials,
        successes,
        seed,
        tv,
        success_bound,
    )
