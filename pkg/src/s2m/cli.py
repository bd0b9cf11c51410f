"""Command-line harness: spectra, reconstruction tables, verification reports.

Subcommands:
  matrix       squared-component identity sweep over a Hermitian matrix
  spectrum     full + split Dirichlet spectra as CSV
  reconstruct  eigenfunction-square tables from eigenvalue data
  verify       operator-identity residual suite as JSON
  convergence  truncation sweeps in long CSV form for external plotting

Configs are JSON, validated against schemas/config.schema.json before any
computation; unknown keys are rejected.  Exit codes: 0 all budgets met,
1 numerical failure, 2 usage/config error.  Floats print at 17 significant
digits so identical configs reproduce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import contextlib
import importlib.resources
import json
import math
import os
import sys

import jsonschema
import numpy as np

from .errors import ConfigError, NonHermitianError, PoleProximityError, S2MError
from .green_trace import run_verification_suite
from .matrix_identity import (
    SymmetricMatrix,
    identity_report,
    random_hermitian,
    write_identity_csv,
)
from .reconstruction import (
    build_pair,
    c_via_limit,
    c_via_ratio,
    esq_thm21,
    esq_thm24,
    pair_split_labels,
    reconstruct_profile,
    sin_product_identity,
    spectral_shift_guard,
    write_reconstruction_rows,
)
from .sl_engine import (
    DEFAULT_GRID,
    ZeroPotential,
    _fmt,
    dirichlet_eigenvalues,
    eigenfunction_squared_at,
    free_spectra,
    problem_from_json,
    split_eigenvalues,
)

DEFAULT_K = 2000
DEFAULT_SWEEP = (250, 500, 1000, 2000)


def _error(msg: str) -> None:
    print(f"s2m: {msg}", file=sys.stderr)


def _load_schema() -> dict:
    ref = importlib.resources.files("s2m").joinpath("schemas/config.schema.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(raw, _load_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected by schema: {exc.message}") from exc
    return raw


def _threads_from_env() -> int:
    raw = os.environ.get("S2M_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ConfigError(f"S2M_THREADS must be an integer, got {raw!r}") from exc
    if threads < 1:
        raise ConfigError(f"S2M_THREADS must be >= 1, got {threads}")
    return threads


def _need(config: dict, key: str):
    if key not in config:
        raise ConfigError(f"subcommand requires the {key!r} config key")
    return config[key]


def _problem_with_x0(config: dict, require_x0: bool):
    problem, x0 = problem_from_json(_need(config, "problem"))
    if require_x0 and x0 is None:
        raise ConfigError("this subcommand requires problem.x0")
    return problem, x0


def _is_free(problem) -> bool:
    return isinstance(problem.potential, ZeroPotential) and problem.shift == 0.0


@contextlib.contextmanager
def _open_out(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------


def cmd_matrix(args, config: dict, threads: int) -> int:
    spec = _need(config, "matrix")
    if "path" in spec:
        matrix = SymmetricMatrix.load(spec["path"])
    elif "entries" in spec:
        entries = spec["entries"]
        obj = {"n": len(entries), "real": entries}
        if "imag" in spec:
            obj["imag"] = spec["imag"]
        matrix = SymmetricMatrix.from_json(obj)
    elif "random" in spec:
        rng = np.random.default_rng(args.seed)
        matrix = random_hermitian(
            spec["random"]["n"], rng, spec["random"].get("complex", True)
        )
    else:
        raise ConfigError("matrix config needs 'path', 'entries', or 'random'")
    report = identity_report(matrix)
    with _open_out(args.out) as fh:
        write_identity_csv(report, fh)
    failures = report.failures()
    if failures:
        for c in failures:
            _error(f"identity cell (k={c.k}, ell={c.ell}) failed: abs_err={c.abs_err:.3e}")
        return 1
    return 0


def cmd_spectrum(args, config: dict, threads: int) -> int:
    problem, x0 = _problem_with_x0(config, require_x0=True)
    K = int(config.get("K", DEFAULT_K))
    grid = int(config.get("grid_size", DEFAULT_GRID))
    full = dirichlet_eigenvalues(problem, K, grid)
    split = split_eigenvalues(problem, x0, K, grid)
    oracle = args.oracle and _is_free(problem)
    if args.oracle and not _is_free(problem):
        raise ConfigError("the closed-form oracle column requires the zero potential")
    free_full = free_spectra(problem.a, problem.b, x0, K)[0] if oracle else None
    header = "k,lambda,multiplicity,tag,residual"
    with _open_out(args.out) as fh:
        fh.write(header + (",closed_form\n" if oracle else "\n"))
        for i, lam in enumerate(full.values, start=1):
            row = f"{i},{_fmt(lam)},1,full,{_fmt(full.residuals[i - 1])}"
            if oracle:
                row += f",{_fmt(free_full.values[i - 1])}"
            fh.write(row + "\n")
        for i, (lam, mult, tag) in enumerate(
            zip(split.values, split.multiplicities, split.tags), start=1
        ):
            row = f"{i},{_fmt(lam)},{int(mult)},{tag},nan"
            if oracle:
                row += ",nan"
            fh.write(row + "\n")
    return 0


def cmd_reconstruct(args, config: dict, threads: int) -> int:
    problem, x0 = _problem_with_x0(config, require_x0=False)
    x0_grid = config.get("x0_grid")
    if x0_grid is None:
        if x0 is None:
            raise ConfigError("reconstruct needs problem.x0 or x0_grid")
        x0_grid = [x0]
    for point in x0_grid:
        if not problem.a < point < problem.b:
            raise ConfigError(f"x0={point} outside the open interval")
    k_list = _need(config, "k_list")
    method = config.get("method", "thm24")
    K = int(config.get("K", DEFAULT_K))
    grid = int(config.get("grid_size", DEFAULT_GRID))
    rows = reconstruct_profile(
        problem, x0_grid, k_list, method=method, K=K, grid_size=grid,
        oracle=args.oracle, threads=threads,
    )
    with _open_out(args.out) as fh:
        write_reconstruction_rows(fh, rows)
    hard_failure = False
    for r in rows:
        if r.error is not None or not math.isfinite(r.esq) or r.esq < -1e-10:
            hard_failure = True
            _error(f"cell (x0={r.x0}, k={r.k}, {r.method}) failed: {r.error or 'invalid esq'}")
        elif r.oracle_esq is not None:
            budget = r.tail_estimate + 1e-5 * (1.0 + abs(r.oracle_esq))
            if abs(r.esq - r.oracle_esq) > budget:
                hard_failure = True
                _error(
                    f"cell (x0={r.x0}, k={r.k}, {r.method}) over budget: "
                    f"|esq - oracle| = {abs(r.esq - r.oracle_esq):.3e} > {budget:.3e}"
                )
    return 1 if hard_failure else 0


def cmd_verify(args, config: dict, threads: int) -> int:
    problem, x0 = _problem_with_x0(config, require_x0=True)
    K = int(config.get("K", 400))
    grid = int(config.get("grid_size", DEFAULT_GRID))
    rows = run_verification_suite(
        problem, x0, K=K, grid_size=grid, z_ref=config.get("z")
    )
    report = {
        "problem": problem.fingerprint(),
        "x0": x0,
        "K": K,
        "rows": rows,
        "all_pass": all(r["pass"] for r in rows),
    }
    with _open_out(args.out) as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not report["all_pass"]:
        for r in rows:
            if not r["pass"]:
                _error(f"check {r['check']} over budget: residual={r['residual']:.3e}")
        return 1
    return 0


def _free_esq_reference(problem, x0: float, k: int) -> float:
    length = problem.b - problem.a
    return 2.0 / length * math.sin(k * math.pi * (x0 - problem.a) / length) ** 2


def cmd_convergence(args, config: dict, threads: int) -> int:
    sweep = _need(config, "sweep")
    kind = sweep["kind"]
    schedule = sorted(int(v) for v in sweep.get("K_schedule", DEFAULT_SWEEP))
    k = int(sweep.get("k", 1))

    values = []
    if kind == "sin_product":
        reference = 0.5 * (-1.0) ** (k + 1)
        for K in schedule:
            values.append((K, kind, sin_product_identity(k, K), reference))
    else:
        problem, x0 = _problem_with_x0(config, require_x0=True)
        grid = int(config.get("grid_size", DEFAULT_GRID))
        pair = spectral_shift_guard(
            build_pair(problem, x0, K=max(schedule), grid_size=grid)
        )
        labels = pair_split_labels(pair.split, x0, (pair.a, pair.b))
        if kind == "c_ratio":
            for K in schedule:
                values.append((K, kind, c_via_ratio(pair, labels, K=K).value, None))
            reference = (
                (x0 - problem.a) * (problem.b - x0) / (problem.b - problem.a)
                if _is_free(problem) else values[-1][2]
            )
        elif kind == "c_limit":
            for K in schedule:
                values.append((K, kind, c_via_limit(pair, K=K).value, None))
            reference = (
                (x0 - problem.a) * (problem.b - x0) / (problem.b - problem.a)
                if _is_free(problem) else values[-1][2]
            )
        else:  # esq_thm21 / esq_thm24
            c = c_via_ratio(pair, labels).value
            for K in schedule:
                if kind == "esq_thm21":
                    val = esq_thm21(pair, k, c, K=K).esq
                else:
                    val = esq_thm24(pair, labels, k, K=K).esq
                values.append((K, kind, val, None))
            if _is_free(problem):
                reference = _free_esq_reference(problem, x0, k)
            elif args.oracle:
                reference = eigenfunction_squared_at(problem, k, x0, grid)
            else:
                reference = values[-1][2]

    with _open_out(args.out) as fh:
        fh.write("K,method,value,error\n")
        for K, method, value, ref in values:
            err = abs(value - (reference if ref is None else ref))
            fh.write(f"{K},{method},{_fmt(value)},{_fmt(err)}\n")
    return 0


# ---------------------------------------------------------------------------
# Entry point.
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s2m",
        description="Squared Dirichlet eigenfunctions from eigenvalue data",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "matrix": cmd_matrix,
        "spectrum": cmd_spectrum,
        "reconstruct": cmd_reconstruct,
        "verify": cmd_verify,
        "convergence": cmd_convergence,
    }
    for name, func in handlers.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--oracle", action="store_true",
                       help="add direct-eigenfunction / closed-form columns")
        p.add_argument("--seed", type=int, default=42,
                       help="seed for random matrix suites")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        config = load_config(args.config)
        threads = _threads_from_env()
        return args.func(args, config, threads)
    except ConfigError as exc:
        _error(f"config error: {exc}")
        return 2
    except (PoleProximityError, NonHermitianError) as exc:
        _error(f"precondition violation: {exc}")
        return 2
    except ValueError as exc:
        _error(f"invalid parameter: {exc}")
        return 2
    except OSError as exc:
        _error(f"i/o error: {exc}")
        return 2
    except S2MError as exc:
        _error(f"numerical failure: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
