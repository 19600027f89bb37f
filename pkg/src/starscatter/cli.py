"""Command-line front end.

Subcommands map onto the library layers: ``scan`` samples the determinant
along the real axis, ``spectrum`` locates the negative eigenvalues,
``coefficients`` tabulates the expansion coefficients, and ``trace-check``
runs the identity suite.  One JSON config file describes the star and the
numerical knobs; outputs are deterministic (sorted keys, fixed float
formatting, no timestamps) so repeated runs are byte-identical.

Exit codes: 0 all requested checks passed, 1 a check ran but missed its
gate, 2 bad configuration or input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .asymptotics import MAX_ORDER, build_coefficient_table
from .errors import ConfigError, HypothesisViolation, StarScatterError
from .pdet import scan
from .potential import FAMILIES, EdgePotential, StarPotential, check_hypotheses
from .spectrum import find_eigenvalues, oracle_eigenvalues
from . import traceform

SCHEMA_VERSION = 1

_EDGE_KEYS = {"family", "c", "a", "s", "p", "max_derivative_order"}
_SOLVER_DEFAULTS = {"tol": 1e-10}
_SCAN_DEFAULTS = {"k_min": 1e-3, "k_max": 100.0, "npoints": 2000}
_SPECTRUM_DEFAULTS = {"kappa_max": None, "oracle_h": None}
_ASYM_DEFAULTS = {"order": 8}
_TRACE_DEFAULTS = {
    "orders": [0.5, 1.0, 1.5],
    "fg_s": [0.25],
    "decay_orders": [1],
    "levinson": "auto",
}


@dataclass
class RunConfig:
    """Validated, fully-resolved run description."""

    potential: StarPotential
    tol: float
    scan_kwargs: dict
    kappa_max: float | None
    oracle_h: float | None
    asym_order: int
    trace_orders: list[float]
    fg_s: list[float]
    decay_orders: list[int]
    levinson: bool
    skip_hypothesis_check: bool
    resolved: dict = field(repr=False)


def _require_mapping(obj, name: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"section '{name}' must be a JSON object")
    return obj


def _merge_section(raw: dict, name: str, defaults: dict) -> dict:
    section = dict(defaults)
    given = _require_mapping(raw.get(name, {}), name)
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(
            f"unknown keys {sorted(unknown)} in section '{name}'; "
            f"expected a subset of {sorted(defaults)}"
        )
    section.update(given)
    return section


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a config file, applying defaults."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {SCHEMA_VERSION}, got {version!r}"
        )
    known_sections = {"schema_version", "potential", "solver", "scan",
                      "spectrum", "asymptotics", "trace",
                      "skip_hypothesis_check"}
    unknown = set(raw) - known_sections
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    pot_section = _require_mapping(raw.get("potential"), "potential")
    edges_raw = pot_section.get("edges")
    if not isinstance(edges_raw, list) or len(edges_raw) < 2:
        raise ConfigError("potential.edges must list at least two edges")
    edges = []
    for i, edge_obj in enumerate(edges_raw):
        edge_obj = _require_mapping(edge_obj, f"potential.edges[{i}]")
        unknown = set(edge_obj) - _EDGE_KEYS
        if unknown:
            raise ConfigError(
                f"edge {i}: unknown keys {sorted(unknown)}; "
                f"families are {FAMILIES} with parameters c, a, s, p"
            )
        if "family" not in edge_obj or "c" not in edge_obj:
            raise ConfigError(f"edge {i}: 'family' and 'c' are required")
        try:
            edges.append(EdgePotential(**edge_obj))
        except TypeError as exc:
            raise ConfigError(f"edge {i}: {exc}") from exc

    solver = _merge_section(raw, "solver", _SOLVER_DEFAULTS)
    scan_sec = _merge_section(raw, "scan", _SCAN_DEFAULTS)
    spectrum_sec = _merge_section(raw, "spectrum", _SPECTRUM_DEFAULTS)
    asym_sec = _merge_section(raw, "asymptotics", _ASYM_DEFAULTS)
    trace_sec = _merge_section(raw, "trace", _TRACE_DEFAULTS)

    tol = float(solver["tol"])
    if not 1e-13 <= tol <= 1e-6:
        raise ConfigError(f"solver.tol {tol} outside [1e-13, 1e-6]")
    order = int(asym_sec["order"])
    if not 1 <= order <= MAX_ORDER:
        raise ConfigError(f"asymptotics.order must be in 1..{MAX_ORDER}")

    for key in ("k_min", "k_max"):
        scan_sec[key] = float(scan_sec[key])
    scan_sec["npoints"] = int(scan_sec["npoints"])

    orders = [float(s) for s in trace_sec["orders"]]
    for s in orders:
        if s <= 0 or abs(2 * s - round(2 * s)) > 1e-12:
            raise ConfigError(f"trace.orders entries must be positive "
                              f"multiples of 1/2, got {s}")
    fg_s = [float(s) for s in trace_sec["fg_s"]]
    for s in fg_s:
        if not 0.0 < s < 0.5:
            raise ConfigError(f"trace.fg_s entries must lie in (0, 1/2), got {s}")
    decay_orders = [int(m) for m in trace_sec["decay_orders"]]
    for m in decay_orders:
        if not 1 <= m <= MAX_ORDER:
            raise ConfigError(f"trace.decay_orders entries must be in "
                              f"1..{MAX_ORDER}, got {m}")

    sp = StarPotential(tuple(edges))
    lev_raw = trace_sec["levinson"]
    if lev_raw == "auto":
        levinson = sp.n == 2
    elif isinstance(lev_raw, bool):
        levinson = lev_raw
    else:
        raise ConfigError("trace.levinson must be true, false, or \"auto\"")
    if levinson and sp.n != 2:
        raise ConfigError("trace.levinson requires exactly two edges")

    kappa_max = spectrum_sec["kappa_max"]
    kappa_max = None if kappa_max is None else float(kappa_max)
    oracle_h = spectrum_sec["oracle_h"]
    oracle_h = None if oracle_h is None else float(oracle_h)

    resolved = {
        "schema_version": SCHEMA_VERSION,
        "potential": {"edges": [
            {"family": e.family, "c": e.c, "a": e.a, "s": e.s, "p": e.p,
             "max_derivative_order": e.max_derivative_order}
            for e in edges
        ]},
        "solver": {"tol": tol},
        "scan": dict(scan_sec),
        "spectrum": {"kappa_max": kappa_max, "oracle_h": oracle_h},
        "asymptotics": {"order": order},
        "trace": {"orders": orders, "fg_s": fg_s,
                  "decay_orders": decay_orders, "levinson": levinson},
        "skip_hypothesis_check": bool(raw.get("skip_hypothesis_check", False)),
    }
    return RunConfig(
        potential=sp, tol=tol, scan_kwargs=dict(scan_sec),
        kappa_max=kappa_max, oracle_h=oracle_h, asym_order=order,
        trace_orders=orders, fg_s=fg_s, decay_orders=decay_orders,
        levinson=levinson,
        skip_hypothesis_check=bool(raw.get("skip_hypothesis_check", False)),
        resolved=resolved,
    )


def _check_hypotheses(cfg: RunConfig, verbose: bool) -> None:
    if cfg.skip_hypothesis_check:
        return
    report = check_hypotheses(cfg.potential)
    if not report.ok:
        raise HypothesisViolation(
            "potential fails the decay hypotheses: "
            + json.dumps(report.as_dict(), sort_keys=True)
        )
    if verbose:
        print("hypothesis check passed", file=sys.stderr)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def cmd_scan(cfg: RunConfig, outdir: Path, threads: int, verbose: bool) -> int:
    _check_hypotheses(cfg, verbose)
    sc = scan(cfg.potential, tol=cfg.tol, **cfg.scan_kwargs)
    out = outdir / "scan.csv"
    sc.to_csv(out)
    if verbose:
        print(f"wrote {out} ({sc.k.size} rows)", file=sys.stderr)
    return 0


def cmd_spectrum(cfg: RunConfig, outdir: Path, threads: int, verbose: bool) -> int:
    _check_hypotheses(cfg, verbose)
    result = find_eigenvalues(cfg.potential, kappa_max=cfg.kappa_max,
                              tol=cfg.tol)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.resolved,
        "spectrum": result.as_dict(),
    }
    if cfg.oracle_h is not None:
        oracle = oracle_eigenvalues(cfg.potential, h=cfg.oracle_h)
        payload["oracle"] = {
            "h": cfg.oracle_h,
            "eigenvalues": [
                {"lambda": lam, "multiplicity": m} for lam, m in oracle
            ],
        }
        if len(oracle) == len(result.eigenvalues):
            diffs = [abs(a - b[0])
                     for a, b in zip(result.eigenvalues, oracle)]
            payload["oracle"]["max_abs_difference"] = max(diffs, default=0.0)
    _write_json(outdir / "spectrum.json", payload)
    if verbose:
        print(f"found {result.total_multiplicity} eigenvalues "
              f"(resonance multiplicity {result.resonance_multiplicity})",
              file=sys.stderr)
    return 0


def cmd_coefficients(cfg: RunConfig, outdir: Path, threads: int,
                     verbose: bool) -> int:
    _check_hypotheses(cfg, verbose)
    table = build_coefficient_table(cfg.potential, cfg.asym_order)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.resolved,
        "coefficients": table.as_dict(),
    }
    _write_json(outdir / "coefficients.json", payload)
    if verbose:
        print(f"coefficients through order {cfg.asym_order} written",
              file=sys.stderr)
    return 0


def cmd_trace_check(cfg: RunConfig, outdir: Path, threads: int,
                    verbose: bool) -> int:
    _check_hypotheses(cfg, verbose)
    sp = cfg.potential
    table_order = MAX_ORDER
    table = build_coefficient_table(sp, table_order)
    sc = scan(sp, tol=cfg.tol, **cfg.scan_kwargs)
    spectrum = find_eigenvalues(sp, kappa_max=cfg.kappa_max, tol=cfg.tol)
    samples = traceform.decay_samples(sp) if cfg.decay_orders else None

    def run_identity(s: float):
        return traceform.verify_trace_identity(
            sp, s, scan_data=sc, table=table, spectrum=spectrum, tol=cfg.tol)

    def run_fg(s: float):
        return traceform.fg_identity(
            sp, s, scan_data=sc, table=table, spectrum=spectrum, tol=cfg.tol)

    def run_decay(m: int):
        return traceform.remainder_decay(sp, m, table=table, samples=samples)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            identities = list(pool.map(run_identity, cfg.trace_orders))
            fg = list(pool.map(run_fg, cfg.fg_s))
            decay = list(pool.map(run_decay, cfg.decay_orders))
    else:
        identities = [run_identity(s) for s in cfg.trace_orders]
        fg = [run_fg(s) for s in cfg.fg_s]
        decay = [run_decay(m) for m in cfg.decay_orders]

    lev = traceform.levinson_check(sp, scan_data=sc, spectrum=spectrum) \
        if cfg.levinson else None

    all_passed = (all(r.passed for r in identities)
                  and all(r.passed for r in fg)
                  and all(r.passed for r in decay)
                  and (lev is None or lev.passed))
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.resolved,
        "identities": [r.as_dict() for r in identities],
        "fractional": [r.as_dict() for r in fg],
        "decay": [r.as_dict() for r in decay],
        "levinson": None if lev is None else lev.as_dict(),
        "spectrum": spectrum.as_dict(),
        "all_passed": all_passed,
    }
    _write_json(outdir / "trace_check.json", payload)
    if verbose:
        for r in identities + fg:
            print(f"order {r.order}: residual {r.residual:.3e} "
                  f"gate {r.gate:.3e} {'pass' if r.passed else 'FAIL'}",
                  file=sys.stderr)
        for r in decay:
            print(f"decay M={r.truncation_order}: "
                  f"{'pass' if r.passed else 'FAIL'}", file=sys.stderr)
        if lev is not None:
            print(f"levinson: residual {lev.residual:.3e} "
                  f"{'pass' if lev.passed else 'FAIL'}", file=sys.stderr)
    return 0 if all_passed else 1


_COMMANDS = {
    "scan": cmd_scan,
    "spectrum": cmd_spectrum,
    "coefficients": cmd_coefficients,
    "trace-check": cmd_trace_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="starscatter",
        description="Scattering determinant tools for star graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for independent checks")
        p.add_argument("--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        return _COMMANDS[args.command](cfg, outdir, args.threads, args.verbose)
    except (ConfigError, HypothesisViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StarScatterError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
