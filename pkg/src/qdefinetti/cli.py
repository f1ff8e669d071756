"""Command-line batch runner.

Subcommands ``povm``, ``state-tomo``, ``process-tomo`` and ``definetti-demo``
write JSON (and CSV for tomography trajectories) and print short summaries.
Exit codes: 0 success, 1 thresholds unmet, 2 usage or validation error,
3 degenerate runtime condition.  Errors are reported as JSON on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import bayes, channels, exchangeability, povm as povm_mod, process_tomography as pt, states
from .errors import DegeneratePosteriorError, PriorSupportError, QDFError
from .linalg import matrix_from_json, matrix_to_json, permute_systems, transposition

OUT_DIR_ENV = "QDEFINETTI_OUT_DIR"
EXIT_OK, EXIT_UNMET, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

DEFAULTS = {
    "state-tomo": {
        "dim": 2, "shots": 2000, "particles": 4096, "seed": 42, "measure": "hilbert-schmidt",
        "truth": "half-e3", "povm": "minimal-ic", "threshold": 0.08, "tilt_power": 4.0, "support_radius": 0.2,
    },
    "process-tomo": {
        "dim": 2, "shots": 10_000, "particles": 4096, "seed": 7, "truth": "depolarizing:0.3",
        "threshold": 0.06, "tilt_strength": 8.0, "moves": 3,
    },
    "povm": {"dim": 2},
    "definetti-demo": {"seed": 0, "n_max": 200},
}
DEMO_CASES = ("anticorrelated", "ghz", "witness", "tp-filter")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("UsageError", message, EXIT_USAGE)
        sys.exit(EXIT_USAGE)


def _emit_error(kind: str, message: str, code: int) -> None:
    print(json.dumps({"error": {"type": kind, "message": message, "exit_code": code}}), file=sys.stderr)


def load_schema(name: str) -> dict:
    """Shipped JSON schema, e.g. ``load_schema("povm")``."""
    path = resources.files("qdefinetti") / "schemas" / f"{name}.schema.json"
    return json.loads(path.read_text())


# ---------------------------------------------------------------- config plumbing


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Flags override config-file values, which override defaults."""
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - set(cfg) - {"out"}
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(loaded)
    for key in list(cfg) + ["out"]:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _out_path(cfg: dict, default_name: str) -> Path:
    out = cfg.get("out")
    path = Path(out) if out else Path(os.environ.get(OUT_DIR_ENV, ".")) / default_name
    if not path.parent.is_dir():
        raise UsageError(f"output directory does not exist: {path.parent}")
    if not os.access(path.parent, os.W_OK):
        raise UsageError(f"output directory is not writable: {path.parent}")
    return path


def _check_int(cfg: dict, key: str, lo: int, hi: int | None = None) -> int:
    val = cfg[key]
    if isinstance(val, bool) or not isinstance(val, (int, np.integer)):
        raise UsageError(f"{key} must be an integer, got {val!r}")
    if val < lo or (hi is not None and val > hi):
        raise UsageError(f"{key} must lie in [{lo}, {hi if hi is not None else 'inf'}], got {val}")
    return int(val)


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _state_truth(spec, d: int) -> np.ndarray:
    if isinstance(spec, list):
        if d != 2:
            raise UsageError("a Bloch-vector truth needs dim 2")
        return states.bloch_to_rho(spec)
    if isinstance(spec, dict):
        rho = states.validate_density(matrix_from_json(spec))
        if rho.shape[0] != d:
            raise UsageError(f"truth has dim {rho.shape[0]} but --dim is {d}")
        return rho
    if spec == "half-e3":
        if d != 2:
            raise UsageError("preset 'half-e3' is a qubit state")
        return states.bloch_to_rho([0.0, 0.0, 0.5])
    if spec == "maximally-mixed":
        return states.maximally_mixed(d)
    if spec.startswith("basis:"):
        k = int(spec.split(":", 1)[1])
        if not 0 <= k < d:
            raise UsageError(f"basis index {k} out of range for dim {d}")
        return states.basis_state(k, d)
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"truth is neither a preset nor an existing file: {spec}")
    rho = states.validate_density(matrix_from_json(json.loads(path.read_text())))
    if rho.shape[0] != d:
        raise UsageError(f"truth has dim {rho.shape[0]} but --dim is {d}")
    return rho


def _state_povm(spec, d: int) -> povm_mod.Povm:
    if spec == "minimal-ic":
        return povm_mod.build_min_ic_povm(d)
    if isinstance(spec, dict):
        p = povm_mod.Povm.from_json(spec, name="inline")
        if p.dim != d:
            raise UsageError(f"POVM has dim {p.dim} but --dim is {d}")
        return p
    raise UsageError(f"povm must be 'minimal-ic' or an inline POVM object, got {spec!r}")


def _channel_truth(spec, d: int) -> channels.KrausChannel:
    if isinstance(spec, dict):
        ch = channels.channel_from_json(spec)
        if ch.dim != d:
            raise UsageError(f"truth acts on dim {ch.dim} but --dim is {d}")
        return ch
    if spec == "identity":
        return channels.identity_channel(d)
    if spec.startswith("depolarizing:"):
        if d != 2:
            raise UsageError("depolarizing preset is a qubit channel")
        p = float(spec.split(":", 1)[1])
        if not 0 <= p <= 1:
            raise UsageError(f"depolarizing parameter must lie in [0, 1], got {p}")
        return channels.depolarizing_channel(p)
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"truth is neither a preset nor an existing file: {spec}")
    ch = channels.channel_from_json(json.loads(path.read_text()))
    if ch.dim != d:
        raise UsageError(f"truth acts on dim {ch.dim} but --dim is {d}")
    return ch


# ---------------------------------------------------------------- commands


def cmd_povm(cfg: dict) -> int:
    d = _check_int(cfg, "dim", 2, 8)
    path = _out_path(cfg, f"povm-d{d}.json")
    p = povm_mod.build_min_ic_povm(d)
    _write_json(path, p.to_json())
    summary = {
        "command": "povm",
        "dim": d,
        "num_elements": len(p),
        "identity_residual": p.identity_residual(),
        "gram_rank": p.gram_rank(),
        "max_prob_bound": povm_mod.max_prob_bound(d),
        "max_outcome_probability": povm_mod.max_outcome_probability(p),
        "povm": str(path),
    }
    print(json.dumps(summary))
    return EXIT_OK


def cmd_state_tomo(cfg: dict) -> int:
    d = _check_int(cfg, "dim", 2, 8)
    shots = _check_int(cfg, "shots", 0)
    n = _check_int(cfg, "particles", 1)
    seed = _check_int(cfg, "seed", 0)
    if cfg["measure"] not in states.MEASURES:
        raise UsageError(f"measure must be one of {states.MEASURES}, got {cfg['measure']!r}")
    truth = _state_truth(cfg["truth"], d)
    measurement = _state_povm(cfg["povm"], d)
    path = _out_path(cfg, "state-tomo.json")

    rng = np.random.default_rng(seed)
    r1, r2, r3 = rng.spawn(3)
    priors = [
        bayes.hs_prior(d, n, r1, cfg["measure"]),
        bayes.tilted_prior(d, n, r2, states.basis_state(d - 1, d), float(cfg["tilt_power"]), cfg["measure"]),
    ]
    report = bayes.convergence_experiment(
        truth, priors, measurement, shots, r3,
        threshold=float(cfg["threshold"]), support_radius=float(cfg["support_radius"]),
    )
    out = {"command": "state-tomo", "config": _jsonable(cfg), **report.to_json(),
           "predictive": [matrix_to_json(m) for m in report.predictive]}
    _write_json(path, out)
    path.with_suffix(".csv").write_text(report.to_csv())
    s, cross, d1, d2 = report.final
    print(f"state-tomo shots={s} cross={cross:.6f} prior1={d1:.6f} prior2={d2:.6f} "
          f"threshold={report.threshold} passed={report.passed}")
    if any(f.startswith("degenerate") for f in report.flags):
        return EXIT_RUNTIME
    return EXIT_OK if report.passed else EXIT_UNMET


def cmd_process_tomo(cfg: dict) -> int:
    d = _check_int(cfg, "dim", 2, 2)
    shots = _check_int(cfg, "shots", 0)
    n = _check_int(cfg, "particles", 2)
    seed = _check_int(cfg, "seed", 0)
    moves = _check_int(cfg, "moves", 0)
    truth = _channel_truth(cfg["truth"], d)
    path = _out_path(cfg, "process-tomo.json")

    rng = np.random.default_rng(seed)
    r1, r2, r3 = rng.spawn(3)
    priors = [
        pt.sample_channel_prior(n, d, r1),
        pt.sample_channel_prior(n, d, r2, tilt=channels.max_entangled_state(d), strength=float(cfg["tilt_strength"])),
    ]
    report = pt.process_tomography_run(truth, shots, priors, r3, threshold=float(cfg["threshold"]),
                                       rejuvenate=moves > 0, moves=moves)
    out = {"command": "process-tomo", "config": _jsonable(cfg), **report.to_json(),
           "predictive": [matrix_to_json(m) for m in report.predictive]}
    _write_json(path, out)
    path.with_suffix(".csv").write_text(report.to_csv())
    f = report.final
    print(f"process-tomo shots={f['shots']} choi={f['choi_distance']:.6f} "
          f"cross={f['cross_prior_distance']:.6f} prior2={f['prior2_truth']:.6f} "
          f"threshold={report.threshold} passed={report.passed}")
    if any(fl.startswith("degenerate") for fl in report.flags):
        return EXIT_RUNTIME
    return EXIT_OK if report.passed else EXIT_UNMET


def _check(name, value, expected, ok=None) -> dict:
    return {"name": name, "value": value, "expected": expected, "ok": bool(value == expected if ok is None else ok)}


def _demo_anticorrelated(cfg: dict) -> tuple[str, list, dict]:
    p = exchangeability.anticorrelated_pair()
    sym = exchangeability.is_symmetric_distribution(p)
    ext = exchangeability.is_extendible_distribution(p, 1)
    checks = [
        _check("symmetric", sym.symmetric, True),
        _check("extendible_to_3", ext.feasible, False),
        _check("certificate_exact", ext.certificate_exact, True),
    ]
    details = {"distribution": p.to_json(),
               "certificate": [str(c) for c in ext.certificate] if ext.certificate else None}
    return "two trials, outcomes always differ", checks, details


def _demo_ghz(cfg: dict) -> tuple[str, list, dict]:
    rng = np.random.default_rng(_check_int(cfg, "seed", 0))
    ghz = states.ghz_state(3)
    perms = [(i, j) for i in range(3) for j in range(i + 1, 3)]
    per_swap = [bool(np.abs(permute_systems(ghz, (2, 2, 2), transposition(3, i, j)) - ghz).max() <= 1e-10)
                for i, j in perms]
    sigma = states.sample_density(2, rng)
    candidate = np.kron(ghz, sigma)
    sym4 = exchangeability.quantum_symmetric_check(candidate, (2, 2, 2, 2))
    probe = exchangeability.quantum_extendibility_probe(ghz, (2, 2, 2), candidate)
    checks = [
        _check("symmetric_all_transpositions", all(per_swap), True),
        _check("ghz_x_sigma_symmetric", sym4.symmetric, False),
        _check("extension_certificate_valid", probe, False),
    ]
    details = {"transpositions": [list(t) for t in perms], "per_transposition": per_swap,
               "violating_transposition": list(sym4.transposition) if sym4.transposition else None,
               "sigma": matrix_to_json(sigma)}
    return "three-qubit GHZ state and a product candidate extension", checks, details


def _demo_witness(cfg: dict) -> tuple[str, list, dict]:
    n_max = _check_int(cfg, "n_max", 2)
    weights = [0.9, 0.1]
    ops = [np.eye(2) / 2, np.diag([1.2, -0.2])]
    wit = exchangeability.negativity_witness(ops[1])
    first = exchangeability.first_violation(weights, ops, wit.projector, n_max)
    checks = [_check("first_violation_even_n", first, 14 if n_max >= 14 else None)]
    return ("mixture 0.9 I/2 + 0.1 diag(1.2, -0.2)", checks,
            exchangeability.witness_report(weights, ops, wit, n_max))


def _demo_tp_filter(cfg: dict) -> tuple[str, list, dict]:
    rho = states.maximally_mixed(2)
    tp = [channels.identity_channel(2), channels.depolarizing_channel(0.5)]
    scaled = [channels.identity_channel(2), channels.scaled_channel(channels.identity_channel(2), 1.1)]
    ok = channels.tp_filter_demo([0.5, 0.5], tp, rho)
    bad = channels.tp_filter_demo([0.5, 0.5], scaled, rho)
    exact = all(abs(v - (0.5 + 0.5 * 1.1**n)) <= 1e-9 * max(1.0, v) for n, v in bad.rows)
    checks = [
        _check("tp_mixture_violation", ok.violation, False),
        _check("scaled_mixture_violation", bad.violation, True),
        _check("scaled_matches_closed_form", exact, True),
    ]
    return "mixtures of channel powers, one with trace scaled by 1.1", checks, {
        "trace_preserving": ok.to_json(), "scaled": bad.to_json()}


DEMOS = {"anticorrelated": _demo_anticorrelated, "ghz": _demo_ghz, "witness": _demo_witness,
         "tp-filter": _demo_tp_filter}


def cmd_definetti_demo(cfg: dict) -> int:
    case = cfg.get("case")
    if case not in DEMOS:
        raise UsageError(f"unknown case {case!r}; choose from {list(DEMOS)}")
    path = _out_path(cfg, f"definetti-{case}.json")
    source, checks, details = DEMOS[case](cfg)
    passed = all(c["ok"] for c in checks)
    _write_json(path, {"command": "definetti-demo", "case": case, "source": source, "passed": passed,
                       "checks": _jsonable(checks), "details": _jsonable(details)})
    print(f"{case}: {source}")
    for c in checks:
        print(f"  {c['name']:<32} {str(c['value']):<8} expected {str(c['expected']):<8} {'ok' if c['ok'] else 'FAIL'}")
    if case == "witness":
        for n, v in details["growth"][:12]:
            print(f"  N={n:<4d} growth={v:.6f}")
    return EXIT_OK if passed else EXIT_UNMET


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qdefinetti", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("povm", help="build and validate the minimal IC-POVM")
    p.add_argument("--dim", type=int)
    p.add_argument("--out")

    for name, helptext in (("state-tomo", "Bayesian state tomography with two priors"),
                           ("process-tomo", "entanglement-assisted process tomography")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--dim", type=int)
        p.add_argument("--shots", type=int)
        p.add_argument("--particles", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--truth", help="preset name or path to a JSON file")
        p.add_argument("--threshold", type=float)
        p.add_argument("--config", help="JSON config file; flags take precedence")
        p.add_argument("--out", help="report JSON path; the CSV is written alongside")
        if name == "state-tomo":
            p.add_argument("--measure", choices=states.MEASURES)

    p = sub.add_parser("definetti-demo", help="exchangeability demonstrations")
    p.add_argument("--case", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out")
    return parser


COMMANDS = {"povm": cmd_povm, "state-tomo": cmd_state_tomo, "process-tomo": cmd_process_tomo,
            "definetti-demo": cmd_definetti_demo}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        if args.command == "definetti-demo":
            cfg["case"] = args.case
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        _emit_error("UsageError", str(exc), EXIT_USAGE)
        return EXIT_USAGE
    except (PriorSupportError, DegeneratePosteriorError) as exc:
        _emit_error(type(exc).__name__, str(exc), EXIT_RUNTIME)
        return EXIT_RUNTIME
    except (QDFError, ValueError) as exc:
        _emit_error(type(exc).__name__, str(exc), EXIT_USAGE)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
