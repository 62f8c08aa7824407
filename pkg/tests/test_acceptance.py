"""End-to-end acceptance criteria, one test per criterion.

Each test reports a single PASS/FAIL line (shown in the terminal summary and,
with ``-s``, inline) before asserting, so a failing criterion still reports.
"""

import json
import time
from fractions import Fraction

import numpy as np
import pytest
from conftest import kron_lsb

from incoherent.cli import main as cli_main
from incoherent.costs import (
    backpropagate_site_observable,
    global_cost_exact,
    global_cost_from_shadows,
    local_cost_exact,
    test_loss,
)
from incoherent.hardness import (
    UniformRandomStrategy,
    clever_distinguisher,
    run_distinguishing_experiment,
    single_measurement_tv,
    stabilizer_constant,
    twirl_moments,
)
from incoherent.locality import locality_profile, truncate
from incoherent.shadows import (
    SNAPSHOT_FACTORS,
    SupportOperator,
    clifford_fidelity_values,
    median_of_means,
    pauli_snapshot_values,
    sample_clifford_shadow,
    sample_pauli_shadow,
)
from incoherent.sim import (
    PAULI,
    build_rx_layer,
    build_trotter_heisenberg,
    build_trotter_tfim,
    dense_unitary,
    product_state,
    random_state,
    sample_haar_product,
    target_unitary,
)
from incoherent.trainer import (
    TargetHandle,
    TrainConfig,
    collect_shadows,
    covering_search,
    derived_seed,
    minimize,
    train_incoherent,
)

pytestmark = pytest.mark.acceptance


def _elapsed(start):
    return f"{time.perf_counter() - start:.1f}s"


# 1 -------------------------------------------------------------------------------


def test_criterion_1_closed_form_constants(acceptance):
    start = time.perf_counter()
    c = stabilizer_constant()
    checks = {"7/18": c == Fraction(7, 18) and abs(float(c) - 7 / 18) <= 1e-12}
    for n in (1, 2, 3):
        m2, mabs2 = twirl_moments(n)
        checks[f"twirl n={n}"] = (
            abs(m2 - (-1 / 9) ** n) <= 1e-10 and abs(mabs2 - (2 / 9) ** n) <= 1e-10
        )
        checks[f"|z|-sum n={n}"] = abs(single_measurement_tv(n).abs_sum - (14 / 18) ** n) <= 1e-10
    assert acceptance(1, "closed-form constants", checks, _elapsed(start))


# 2 -------------------------------------------------------------------------------


def test_criterion_2_tv_lecam(acceptance):
    start = time.perf_counter()
    checks = {}
    for n in (1, 2, 3, 4):
        tv = single_measurement_tv(n)
        checks[f"TV n={n}"] = tv.exact_tv <= (14 / 18) ** n
    rec = run_distinguishing_experiment(12, UniformRandomStrategy(), 1, 10_000, seed=2024)
    checks["n=12 success"] = rec.success_rate <= 0.525 + 0.015
    detail = f"n=12 success {rec.success_rate:.4f}, {_elapsed(start)}"
    assert acceptance(2, "TV / LeCam consistency", checks, detail)


# 3 -------------------------------------------------------------------------------


def test_criterion_3_clever_distinguisher(acceptance):
    start = time.perf_counter()
    rates = {
        n: run_distinguishing_experiment(n, clever_distinguisher(n), 1, 1000, seed=n).success_rate
        for n in (3, 4)
    }
    checks = {f"n={n}": r == 1.0 for n, r in rates.items()}
    assert acceptance(3, "clever distinguisher", checks, f"{rates}, {_elapsed(start)}")


# 4 -------------------------------------------------------------------------------


def _pauli_traces(shadow):
    # Trace of a product snapshot is the product of its factor traces.
    factor_traces = np.real(np.trace(SNAPSHOT_FACTORS, axis1=1, axis2=2))
    return np.prod(factor_traces[shadow.outcome_codes], axis=1)


def test_criterion_4_shadow_estimators(acceptance):
    start = time.perf_counter()
    checks = {}
    n = 4
    psi = random_state(n, 40)

    traces = _pauli_traces(sample_pauli_shadow(psi, 100_000, seed=1))
    checks["pauli trace"] = bool(np.all(np.abs(traces - 1) <= 1e-12))
    cs = sample_clifford_shadow(random_state(3, 41), 2000, seed=2)
    v = cs.clifford_rows.conj()
    ctr = (2**3 + 1) * np.sum(np.abs(v) ** 2, axis=1) - 2**3
    checks["clifford trace"] = bool(np.all(np.abs(ctr - 1) <= 1e-12))

    rng = np.random.default_rng(42)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    obs = SupportOperator((0, 2), (g + g.conj().T) / 2)
    # Axes of the state tensor run q3, q2, q1, q0; the operator's are (q2, q0) per side.
    t = psi.amps.reshape(2, 2, 2, 2)
    o = obs.matrix.reshape(2, 2, 2, 2)
    exact = np.einsum("aibj,ijcd,acbd->", t.conj(), o, t).real
    passes = 0
    for seed in range(20):
        vals = pauli_snapshot_values(sample_pauli_shadow(psi, 200_000, seed=100 + seed), obs)
        est, err = median_of_means(vals)
        passes += abs(est - exact) <= 5 * err
    checks["unbiased 5 sigma"] = passes >= 19

    prod = sample_haar_product(n, 43).to_statevector()
    shadow = sample_pauli_shadow(prod, 200_000, seed=3)
    var = []
    for k in (1, 2, 3, 4):
        z = SupportOperator(tuple(range(k)), kron_lsb(*[PAULI["Z"]] * k))
        var.append(pauli_snapshot_values(shadow, z).var())
    ratios = [b / a for a, b in zip(var, var[1:])]
    checks["pauli variance ratios"] = all(2.5 <= r <= 6 for r in ratios)

    fvar = []
    for m in range(2, 7):
        state = random_state(m, 50 + m)
        fvar.append(clifford_fidelity_values(sample_clifford_shadow(state, 20_000, seed=m), state).var())
    checks["clifford variance flat"] = max(fvar) <= 2 * min(fvar)

    detail = (
        f"unbiased {passes}/20, ratios {np.round(ratios, 2).tolist()}, "
        f"fidelity var {np.round(fvar, 2).tolist()}, {_elapsed(start)}"
    )
    assert acceptance(4, "shadow estimator suite", checks, detail)


# 5 -------------------------------------------------------------------------------


def _learn(dt, M, seed, n=6, N=2):
    U = build_trotter_heisenberg(n, dt)
    inputs = [sample_haar_product(n, derived_seed(seed, 1, j)) for j in range(N)]
    shadows = collect_shadows(TargetHandle(U), inputs, M, "pauli", seed=seed)
    trace = train_incoherent(shadows, None, U, inputs, TrainConfig(seed=seed))
    return test_loss(U, U, trace.final_params)


@pytest.mark.slow
def test_criterion_5_incoherent_learning(acceptance):
    start = time.perf_counter()
    seeds = range(10)
    med = {M: float(np.median([_learn(0.1, M, s) for s in seeds])) for M in (100, 1000, 10_000)}
    med_long = float(np.median([_learn(0.5, 10_000, s) for s in seeds]))
    checks = {
        "median <= 0.1 at M=1e4": med[10_000] <= 0.1,
        "monotone in M": med[100] > med[1000] > med[10_000],
        "dt=0.5 worse": med_long > med[10_000],
    }
    detail = (
        f"medians dt=0.1 {{M: loss}} = { {m: round(v, 4) for m, v in med.items()} }, "
        f"dt=0.5 M=1e4 {med_long:.4f}, {_elapsed(start)}"
    )
    assert acceptance(5, "incoherent learning", checks, detail)


# 6 -------------------------------------------------------------------------------


def dense_local_cost(U, V, params, inputs):
    n = V.n
    w = dense_unitary(V, params).conj().T @ target_unitary(U)
    total = 0.0
    for inp in inputs:
        phi = w @ inp.to_statevector().amps
        for i in range(n):
            h = kron_lsb(*(inp.projector(q) if q == i else np.eye(2) for q in range(n)))
            total += np.vdot(phi, h @ phi).real
    return 1 - total / (n * len(inputs))


def _random_circuit(n, rng):
    dt = rng.uniform(0.05, 1.0)
    layers = int(rng.integers(1, 3))
    if rng.random() < 0.5:
        return build_trotter_heisenberg(n, dt, layers)
    return build_trotter_tfim(n, dt, rng.normal(size=n), layers)


def test_criterion_6_exact_cost_realizability(acceptance):
    start = time.perf_counter()
    U = build_trotter_heisenberg(6, 0.1)
    inputs = [sample_haar_product(6, derived_seed(0, 1, j)) for j in range(2)]
    losses = []
    for seed in range(10):
        x, _ = minimize(
            lambda p: local_cost_exact(U, U, p, inputs), TrainConfig(seed=seed), U.num_params
        )
        losses.append(test_loss(U, U, x))

    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 7))
        target, ansatz = _random_circuit(n, rng), _random_circuit(n, rng)
        params = rng.uniform(-np.pi, np.pi, ansatz.num_params)
        ins = [sample_haar_product(n, rng) for _ in range(int(rng.integers(1, 4)))]
        worst = max(
            worst,
            abs(local_cost_exact(target, ansatz, params, ins) - dense_local_cost(target, ansatz, params, ins)),
        )
    checks = {"median test loss <= 1e-2": np.median(losses) <= 1e-2, "oracle 1e-9": worst <= 1e-9}
    detail = f"median {np.median(losses):.2e}, oracle max diff {worst:.1e}, {_elapsed(start)}"
    assert acceptance(6, "exact-cost realizability", checks, detail)


# 7 -------------------------------------------------------------------------------


def test_criterion_7_covering_search(acceptance):
    start = time.perf_counter()
    target, ansatz = build_rx_layer(1, 0.7), build_rx_layer(1)
    # |0> input: X-eigenstate inputs would leave the RX landscape flat.
    inputs = [product_state(["0"])]
    grid = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    step = grid[1]
    hits = 0
    for seed in range(10):
        shadows = collect_shadows(TargetHandle(target), inputs, 20_000, "clifford", seed=seed)
        idx, _ = covering_search(
            lambda i: global_cost_from_shadows(shadows, ansatz, [grid[i]], inputs).value, grid
        )
        hits += abs(grid[idx] - 0.7) <= step

    U = build_trotter_heisenberg(2, 0.3)
    V = build_trotter_heisenberg(2, 0.3)
    ins = [sample_haar_product(2, derived_seed(7, 1, j)) for j in range(2)]
    cands = np.random.default_rng(7).uniform(-np.pi, np.pi, (1000, V.num_params))
    ratios = []
    for seed in range(3):
        shadows = collect_shadows(TargetHandle(U), ins, 2000, "clifford", seed=seed)
        err = np.array(
            [
                abs(global_cost_from_shadows(shadows, V, c, ins).value - global_cost_exact(U, V, c, ins))
                for c in cands
            ]
        )
        ratios.append(err.max() / err[:10].max())
    checks = {"argmin within one step": hits >= 9, "sub-linear in L": max(ratios) < 10}
    detail = f"hits {hits}/10, max-error ratio L=1000/L=10 {np.round(ratios, 2).tolist()}, {_elapsed(start)}"
    assert acceptance(7, "covering search", checks, detail)


# 8 -------------------------------------------------------------------------------


def test_criterion_8_locality_profiles(acceptance):
    start = time.perf_counter()
    factor = sample_haar_product(1, np.random.default_rng(8)).factors[0]
    rng = np.random.default_rng(80)
    states = [sample_haar_product(8, rng) for _ in range(100)]
    profiles, checks = {}, {}
    worst_slack = np.inf
    for layers in (1, 2):
        for dt in (0.1, 0.5):
            circuit = build_trotter_heisenberg(8, dt, layers)
            prof = locality_profile(circuit, None, 4, factor, dt=dt, layers=layers)
            profiles[dt, layers] = prof
            alphas = [a for _, a in prof.entries]
            checks[f"monotone dt={dt} L={layers}"] = all(
                b <= a + 1e-12 for a, b in zip(alphas, alphas[1:])
            )
            obs = backpropagate_site_observable(circuit, None, 4, factor, adjoint=True)
            for k, alpha in prof.entries:
                diff = obs.matrix - truncate(obs, k).matrix
                for s in states:
                    rho = kron_lsb(*(s.projector(q) for q in obs.support))
                    worst_slack = min(worst_slack, alpha - abs(np.trace(rho @ diff)))
        short, long = profiles[0.1, layers], profiles[0.5, layers]
        checks[f"dt ordering L={layers}"] = all(
            al > as_ for (k, as_), (_, al) in zip(short.entries, long.entries) if k < len(short.support)
        )
        checks[f"standard locality L={layers}"] = short.standard_locality == long.standard_locality
    checks["truncation bound"] = worst_slack >= -1e-10
    std = {key: p.standard_locality for key, p in profiles.items()}
    detail = f"standard locality {std}, min slack {worst_slack:.2e}, {_elapsed(start)}"
    assert acceptance(8, "locality profiler", checks, detail)


# 9 -------------------------------------------------------------------------------


def _cli_outputs(root, threads):
    """Run every command in ``root`` (same paths each time) and snapshot the outputs."""
    root.mkdir(exist_ok=True)
    heis = {"type": "heisenberg", "n": 4, "dt": 0.1}
    configs = [
        ("collect", {"target": heis, "kind": "pauli", "N": 2, "M": 500, "out_dir": "pauli"}),
        ("collect", {"target": heis, "kind": "clifford", "N": 2, "M": 100, "out_dir": "cliff"}),
        ("train", {"shadow_dir": "pauli", "ansatz": heis, "max_iters": 10, "out_dir": "train",
                   "diagnostic_target": heis, "N_test": 5}),
        ("eval", {"ansatz": heis, "params": "default", "costs": ["local", "hst"],
                  "shadow_dir": "pauli", "diagnostic_target": heis, "out_dir": "eval"}),
        ("hardness", {"n": [3, 4], "strategy": "uniform-random", "budget": 2, "trials": 200,
                      "twirl": True, "out_dir": "hardness"}),
        ("locality", {"target": {**heis, "n": 8}, "site": 4, "out_dir": "locality"}),
        ("net-search", {"target": {"type": "rx", "n": 1, "angle": 0.7}, "ansatz": {"type": "rx", "n": 1},
                        "kind": "clifford", "N": 1, "M": 500, "inputs": [["0"]], "grid": {"L": 16},
                        "out_dir": "net"}),
    ]
    for i, (command, cfg) in enumerate(configs):
        for key in ("out_dir", "shadow_dir"):
            if key in cfg:
                cfg[key] = str(root / cfg[key])
        path = root / f"cfg{i}.json"
        path.write_text(json.dumps({"format_version": 1, "seed": 9, **cfg}))
        code = cli_main([command, "--config", str(path), "--threads", str(threads)])
        assert code in (0, 2), f"{command} exited with {code}"
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and not p.name.startswith("cfg")
    }


def test_criterion_9_determinism_and_audit(tmp_path, acceptance):
    start = time.perf_counter()
    runs = {t: _cli_outputs(tmp_path / "run", t) for t in (1, 4, 0)}
    same = all(runs[t] == runs[1] for t in (4, 0))
    rerun = _cli_outputs(tmp_path / "run", 1) == runs[1]

    U = build_trotter_heisenberg(4, 0.1)
    ins = [sample_haar_product(4, derived_seed(9, 1, j)) for j in range(3)]
    handle = TargetHandle(U)
    M = 700
    shadows = collect_shadows(handle, ins, M, "pauli", seed=9)
    before = handle.invocations
    train_incoherent(shadows, handle, U, ins, TrainConfig(max_iters=10), N_test=5)
    checks = {
        "threads invariance": same,
        "rerun identical": rerun,
        "invocations = N*M": before == len(ins) * M and handle.invocations == before,
    }
    detail = f"{len(runs[1])} output files, invocations {handle.invocations}, {_elapsed(start)}"
    assert acceptance(9, "determinism and phase separation", checks, detail)
