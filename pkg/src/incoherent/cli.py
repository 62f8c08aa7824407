"""Command-line driver: ``incoherent <command> --config run.json``.

Commands split the protocol into its two phases.  ``collect`` is the only one
that queries the target for training data: it writes N shadow files and a
manifest holding a hash of the target description, never its parameters.
``train`` reads those files back and fits the ansatz.  ``eval``, ``hardness``,
``locality`` and ``net-search`` wrap the remaining experiments.

Every output is JSON Lines headed by a run record (build id, config echo,
seed) and is byte-identical for a fixed config, whatever ``--threads`` says.
Exit codes: 0 ok, 1 validation, 2 non-convergence, 3 integrity, 4 resource cap.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import costs, hardness, locality, trainer
from .errors import IncoherentError, IntegrityError, ValidationError
from .shadow_io import crc64, dumps_line, read_shadow, write_shadow
from .sim import (
    Circuit,
    GhzLike,
    ProductState,
    build_rx_layer,
    build_trotter_heisenberg,
    build_trotter_tfim,
    circuit_from_dict,
    product_state,
    sample_haar_product,
    sample_stabilizer_product,
)

FORMAT_VERSION = 1
COMMANDS = ("collect", "train", "eval", "hardness", "locality", "net-search")
EXIT_NOT_CONVERGED = 2


def load_schema() -> dict:
    return json.loads(resources.files("incoherent").joinpath("schema.json").read_text())


def build_id() -> str:
    """Content hash of the installed package sources."""
    h = hashlib.sha256()
    root = resources.files("incoherent")
    for name in sorted(p.name for p in root.iterdir() if p.name.endswith((".py", ".json"))):
        h.update(name.encode())
        h.update(root.joinpath(name).read_bytes())
    return h.hexdigest()[:12]


def validate_config(command: str, config: dict) -> dict:
    schema = load_schema()
    command_schema = dict(schema["commands"][command])
    command_schema["$defs"] = schema["$defs"]
    validator = jsonschema.Draft202012Validator(command_schema)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "config"
        if err.validator == "additionalProperties":
            unknown = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            raise ValidationError(f"{where}: unknown key(s) {', '.join(unknown)}")
        raise ValidationError(f"{where}: {err.message}")
    return config


# -- config builders ----------------------------------------------------------------


def build_circuit(spec: dict):
    """Target or ansatz object from a config spec."""
    kind = spec["type"]
    if kind == "heisenberg":
        return build_trotter_heisenberg(spec["n"], spec["dt"], spec.get("layers", 1))
    if kind == "tfim":
        n = spec["n"]
        if "alphas" in spec:
            alphas = spec["alphas"]
        else:
            rng = np.random.default_rng(spec.get("alpha_seed", 0))
            alphas = rng.normal(0.0, spec.get("alpha_std", 0.5), n)
        return build_trotter_tfim(n, spec["dt"], alphas, spec.get("layers", 1))
    if kind == "ghz":
        return GhzLike(spec["n"], spec["sign"])
    if kind == "rx":
        return build_rx_layer(spec["n"], spec.get("angle", 0.0))
    try:
        return circuit_from_dict(json.loads(Path(spec["path"]).read_text()))
    except OSError as exc:
        raise ValidationError(f"cannot read circuit file: {exc}") from None


def build_ansatz(spec: dict) -> Circuit:
    circuit = build_circuit(spec)
    if not isinstance(circuit, Circuit) or circuit.num_params == 0:
        raise ValidationError(f"ansatz type {spec['type']!r} has no trainable parameters")
    return circuit


def description_hash(target) -> str:
    desc = target.description
    return "sha256:" + hashlib.sha256(desc.encode()).hexdigest()[:16]


def build_inputs(spec, n: int, N: int, seed: int) -> list[ProductState]:
    spec = spec or "stabilizer"
    if spec == "stabilizer":
        return [sample_stabilizer_product(n, trainer.derived_seed(seed, 1, j)) for j in range(N)]
    if spec == "haar":
        return [sample_haar_product(n, trainer.derived_seed(seed, 1, j)) for j in range(N)]
    if len(spec) != N:
        raise ValidationError(f"inputs lists {len(spec)} states but N = {N}")
    states = [ProductState.from_description(s) for s in spec]
    if any(s.n != n for s in states):
        raise ValidationError(f"every input state needs {n} qubits")
    return states


# -- output -------------------------------------------------------------------------


class Output:
    """JSON Lines writer for one command; the first record is the run header."""

    def __init__(self, out_dir: Path, name: str, command: str, config: dict):
        self.path = out_dir / name
        self._lines = [
            dumps_line(
                {
                    "record": "run_header",
                    "build_id": build_id(),
                    "command": command,
                    "config": config,
                    "seed": config["seed"],
                }
            )
        ]

    def emit(self, kind: str, payload: dict):
        self._lines.append(dumps_line({"record": kind, **payload}))

    def close(self):
        self.path.write_bytes(b"".join(self._lines))


def _out_dir(config: dict) -> Path:
    out = Path(config["out_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {out}: {exc}") from None
    return out


# -- commands -----------------------------------------------------------------------


def cmd_collect(config: dict, threads: int = 1) -> int:
    target = build_circuit(config["target"])
    n, N, M, kind, seed = target.n, config["N"], config["M"], config["kind"], config["seed"]
    inputs = build_inputs(config.get("inputs"), n, N, seed)
    handle = trainer.TargetHandle(target)
    target_hash = description_hash(target)
    shadows = trainer.collect_shadows(handle, inputs, M, kind, seed, threads, target_hash)
    out = _out_dir(config)
    files = []
    for j, shadow in enumerate(shadows):
        name = f"shadow_{j:03d}.jsonl"
        path = write_shadow(shadow, out / name)
        files.append({"path": name, "crc64": crc64(path.read_bytes())})
    manifest = {
        "format_version": FORMAT_VERSION,
        "build_id": build_id(),
        "kind": kind,
        "n": n,
        "N": N,
        "M": M,
        "seed": seed,
        "target_hash": target_hash,
        "target_invocations": handle.invocations,
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return 0


def load_collection(shadow_dir: str | Path):
    """Manifest plus its shadow files, with every checksum and hash cross-checked."""
    shadow_dir = Path(shadow_dir)
    try:
        manifest = json.loads((shadow_dir / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise IntegrityError(f"unreadable manifest in {shadow_dir}: {exc}") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise IntegrityError("manifest format_version mismatch")
    shadows = []
    for entry in manifest["files"]:
        path = shadow_dir / entry["path"]
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise IntegrityError(f"missing shadow file {path}: {exc}") from None
        if crc64(data) != entry["crc64"]:
            raise IntegrityError(f"{entry['path']} does not match the manifest checksum")
        shadow = read_shadow(path, expect_kind=manifest["kind"])
        if shadow.target != manifest["target_hash"] or shadow.n != manifest["n"]:
            raise IntegrityError(f"{entry['path']} was collected for a different target")
        shadows.append(shadow)
    if len(shadows) != manifest["N"]:
        raise IntegrityError("manifest lists the wrong number of shadow files")
    inputs = [ProductState.from_description(s.input_state) for s in shadows]
    return manifest, shadows, inputs


def cmd_train(config: dict, threads: int = 1) -> int:
    manifest, shadows, inputs = load_collection(config["shadow_dir"])
    ansatz = build_ansatz(config["ansatz"])
    if ansatz.n != manifest["n"]:
        raise ValidationError(f"ansatz acts on {ansatz.n} qubits, shadows on {manifest['n']}")
    init = config.get("init", "uniform")
    cfg = trainer.TrainConfig(
        max_iters=config.get("max_iters", 200),
        h=config.get("h", 1e-5),
        tol=config.get("tol", 1e-9),
        init=init,
        seed=config["seed"],
        threads=threads,
    )
    diag = None
    if "diagnostic_target" in config:
        diag = trainer.TargetHandle(build_circuit(config["diagnostic_target"]))
    trace = trainer.train_incoherent(
        shadows,
        diag,
        ansatz,
        inputs,
        cfg,
        K=config.get("K", 10),
        N_test=config.get("N_test", costs.DEFAULT_TEST_STATES),
        test_seed=config.get("test_seed", 0),
        test_every=config.get("test_every"),
        truncate_k=config.get("truncate_k"),
    )
    out = Output(_out_dir(config), "trace.jsonl", "train", config)
    timings = config.get("timings", False)
    for rec in trace.iterations:
        out.emit("iteration", rec.to_record(timings))
    out.emit(
        "footer",
        {
            **trace.footer(),
            "protocol_invocations": manifest["target_invocations"],
            "training_invocations": diag.invocations if diag else 0,
            "test_cost_note": "test_cost is an out-of-protocol diagnostic" if diag else None,
        },
    )
    out.close()
    return EXIT_NOT_CONVERGED if trace.message == "max_iters reached" else 0


def cmd_eval(config: dict, threads: int = 1) -> int:
    ansatz = build_ansatz(config["ansatz"])
    params = None if config["params"] == "default" else np.asarray(config["params"], dtype=float)
    params = ansatz.resolve(params)
    K = config.get("K", 10)
    timings = config.get("timings", False)
    shadows = inputs = None
    if "shadow_dir" in config:
        _, shadows, inputs = load_collection(config["shadow_dir"])
    target = build_circuit(config["diagnostic_target"]) if "diagnostic_target" in config else None
    out = Output(_out_dir(config), "eval.jsonl", "eval", config)
    for kind in config["costs"]:
        if kind in ("local", "global"):
            if shadows is None:
                raise ValidationError(f"cost {kind!r} needs shadow_dir")
            fn = costs.local_cost_from_shadows if kind == "local" else costs.global_cost_from_shadows
            report = fn(shadows, ansatz, params, inputs, K)
        else:
            if target is None:
                raise ValidationError(f"cost {kind!r} needs diagnostic_target")
            if kind == "hst":
                value = costs.hst_cost(target, ansatz, params)
            elif kind == "test":
                value = costs.test_loss(target, ansatz, params, config.get("N_test", 100), config["seed"])
            else:
                if inputs is None:
                    raise ValidationError(f"cost {kind!r} needs shadow_dir for its inputs")
                fn = costs.local_cost_exact if kind == "local_exact" else costs.global_cost_exact
                value = fn(target, ansatz, params, inputs)
            report = costs.CostReport(kind, value, None, 1, costs.params_hash(params))
        rec = report.to_record()
        if not timings:
            rec.pop("wall_time_ms")
        out.emit("cost", rec)
    out.close()
    return 0


def cmd_hardness(config: dict, threads: int = 1) -> int:
    ns = config["n"] if isinstance(config["n"], list) else [config["n"]]
    out = Output(_out_dir(config), "hardness.jsonl", "hardness", config)
    if config.get("constants", True):
        out.emit("stabilizer_constant", {"value": str(hardness.stabilizer_constant())})
        for n in ns:
            if n <= hardness.TV_ENUMERATION_CAP:
                tv = hardness.single_measurement_tv(n)
                out.emit("single_measurement_tv", {"n": n, **tv.__dict__})
            if n <= hardness.TWIRL_CAP:
                m2, mabs2 = hardness.twirl_moments(n)
                out.emit("twirl_moments", {"n": n, "m2": m2, "mabs2": mabs2})
    for n in ns:
        strategy = hardness.STRATEGIES[config["strategy"]]()
        record = hardness.run_distinguishing_experiment(
            n,
            strategy,
            config["budget"],
            config["trials"],
            config.get("twirl", False),
            config["seed"],
            threads,
        )
        out.emit("distinguish", record.to_record())
    out.close()
    return 0


def _factor(spec, seed: int) -> np.ndarray:
    if spec is None or spec == "haar":
        return sample_haar_product(1, seed).factors[0]
    if isinstance(spec, str):
        return product_state([spec]).factors[0]
    return product_state([[complex(re, im) for re, im in spec]]).factors[0]


def cmd_locality(config: dict, threads: int = 1) -> int:
    spec = config["target"]
    circuit = build_ansatz(spec)
    if not 0 <= config["site"] < circuit.n:
        raise ValidationError(f"site {config['site']} outside the register")
    profile = locality.locality_profile(
        circuit,
        None,
        config["site"],
        _factor(config.get("factor"), config["seed"]),
        config.get("cutoffs"),
        adjoint=config.get("direction", "adjoint") == "adjoint",
        dt=spec.get("dt"),
        layers=spec.get("layers", 1),
    )
    out = Output(_out_dir(config), "locality.jsonl", "locality", config)
    for rec in profile.records():
        out.emit("locality", rec)
    out.close()
    return 0


def cmd_net_search(config: dict, threads: int = 1) -> int:
    target = build_circuit(config["target"])
    ansatz = build_ansatz(config["ansatz"])
    if target.n != ansatz.n:
        raise ValidationError("target and ansatz act on different registers")
    seed, N, M, kind = config["seed"], config["N"], config["M"], config["kind"]
    inputs = build_inputs(config.get("inputs"), ansatz.n, N, seed)
    handle = trainer.TargetHandle(target)
    shadows = trainer.collect_shadows(handle, inputs, M, kind, seed, threads)
    grid = config["grid"]
    angles = np.linspace(grid.get("low", 0.0), grid.get("high", 2 * np.pi), grid["L"], endpoint=False)
    candidates = [np.full(ansatz.num_params, a) for a in angles]
    cost = trainer.shadow_cost_function(shadows, ansatz, inputs, config.get("K", 10))
    best, value = trainer.covering_search(lambda i: cost(candidates[i]), candidates)
    exact = (
        costs.local_cost_exact if kind == "pauli" else costs.global_cost_exact
    )(handle.diagnostic, ansatz, candidates[best], inputs)
    out = Output(_out_dir(config), "net_search.jsonl", "net-search", config)
    out.emit(
        "argmin",
        {
            "L": len(candidates),
            "index": best,
            "param": float(angles[best]),
            "shadow_cost": value,
            "exact_cost": exact,
            "target_invocations": handle.invocations,
        },
    )
    out.close()
    return 0


HANDLERS = {
    "collect": cmd_collect,
    "train": cmd_train,
    "eval": cmd_eval,
    "hardness": cmd_hardness,
    "locality": cmd_locality,
    "net-search": cmd_net_search,
}


def _add_global_flags(parser: argparse.ArgumentParser, suppress: bool):
    # Subcommand copies use SUPPRESS so they never overwrite flags given before the command.
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", type=Path, default=d(None), help="JSON config file")
    parser.add_argument(
        "--seed", type=int, default=d(None), help="u64 master seed (overrides the config)"
    )
    parser.add_argument("--out", default=d(None), help="output directory (overrides out_dir)")
    parser.add_argument(
        "--threads", type=int, default=d(1), help="worker threads, 0 = auto (never changes results)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="incoherent", description=__doc__.split("\n\n")[0])
    _add_global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__name__.replace("cmd_", ""))
        _add_global_flags(p, suppress=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config is None:
            raise ValidationError("--config is required")
        try:
            config = json.loads(args.config.read_text())
        except (OSError, ValueError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise ValidationError("config must be a JSON object")
        if args.seed is not None:
            config["seed"] = args.seed
        if args.out is not None:
            config["out_dir"] = args.out
        validate_config(args.command, config)
        threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
        return HANDLERS[args.command](config, threads)
    except IncoherentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
