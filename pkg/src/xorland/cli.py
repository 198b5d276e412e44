"""Command-line driver: explore, connect, graph, sensitivity, embed, verify.

Every artifact file embeds a provenance block (tool version, seed,
tolerances, the exact command). Exit codes: 0 success, 1 verification
failure, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, database, explore, graphs, saddles
from .model import (
    Layout,
    LossConfig,
    XorLoss,
    ZERO_EIGENVALUE_RECHECK,
    canonicalize,
    grad_rms,
    matrix_spectrum,
)

log = logging.getLogger("xorland")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3


class CliError(RuntimeError):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _provenance(args: argparse.Namespace, command: str) -> dict:
    skip = {"func", "verbose"}
    params = {
        k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None
    }
    return {
        "tool": "xorland",
        "version": __version__,
        "command": command,
        "parameters": params,
        "tolerances": {
            "grad_rms_tol": 1e-9,
            "zero_cutoff": 1e-9,
            "dedupe_tol": args.dedupe_tol if hasattr(args, "dedupe_tol") else 1e-9,
        },
    }


def _load_db(path: str) -> database.LandscapeDB:
    try:
        return database.load(path)
    except database.DatabaseError as exc:
        raise CliError(f"cannot load database {path}: {exc}", EXIT_IO) from exc


def _save_db(db: database.LandscapeDB, path: str) -> None:
    try:
        database.save(db, path)
    except OSError as exc:
        raise CliError(f"cannot write database {path}: {exc}", EXIT_IO) from exc


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def cmd_explore(args) -> int:
    db = database.LandscapeDB(
        args.nh,
        args.lam,
        dedupe_tol=args.dedupe_tol,
        run_config=_provenance(args, "explore"),
    )
    settings = explore.BasinHoppingSettings(
        steps=args.steps,
        perturbation_scale=args.scale,
        temperature=args.temperature,
        seed=args.seed,
    )
    if args.saturation_window is None:
        # fixed-budget protocol: chains are independent, so they can run in
        # worker processes; the merged result is identical either way
        workers = args.threads if args.threads else (os.cpu_count() or 1)
        total = explore.run_chains_parallel(
            db, settings, n_chains=args.chains, workers=workers
        )
        saturated = True
    else:
        saturated, total = explore.run_chains(
            db,
            settings,
            n_chains=args.chains,
            saturation_window=args.saturation_window,
        )
    _save_db(db, args.db)
    n = len(db.minima)
    print(f"distinct minima: {n} ({len(db.nontrivial_minima())} nontrivial) "
          f"after {total} steps across {args.chains} chains")
    if args.saturation_window is not None and not saturated:
        print("warning: saturation window not reached", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def cmd_connect(args) -> int:
    db = _load_db(args.db)
    db.run_config.setdefault("connect", _provenance(args, "connect"))
    stats = saddles.connect_all(db, pair_budget=args.pair_budget)
    _save_db(db, args.db)
    comps = db.components()
    print(
        f"transition states: {len(db.transition_states)} edges: {len(db.edges)} "
        f"components: {len(comps)} (attempts {stats.attempts}, failures {stats.failures})"
    )
    return EXIT_OK


def cmd_graph(args) -> int:
    db = _load_db(args.db)
    if not db.transition_states and len(db.minima) > 1:
        log.warning("database has no transition states; graph will be a forest of leaves")
    try:
        tree = graphs.build_tree(
            db, delta_e=args.delta_e, top=args.top, include_trivial=args.include_trivial
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    layout = Layout(db.n_hidden)
    auc_by_min = {p.id: analysis.auc(p.params, layout) for p in db.minima}
    style = graphs.RenderStyle(
        width=args.width,
        height=args.height,
        auc_by_min=auc_by_min,
        scale_bar=args.scale_bar,
        provenance=_provenance(args, "graph"),
    )
    out = Path(args.output)
    _write_text(out, graphs.render_svg(tree, style))
    _write_text(out.with_suffix(".dot"), graphs.render_dot(tree, style))
    try:
        graphs.render_figure(tree, str(out.with_suffix(".png")), style)
    except OSError as exc:
        raise CliError(f"cannot write figure: {exc}", EXIT_IO) from exc
    print(f"wrote {out}, {out.with_suffix('.dot')}, {out.with_suffix('.png')} "
          f"({len(tree.leaves)} branches)")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    db = _load_db(args.db)
    layout = Layout(db.n_hidden)
    try:
        point = db.minimum(args.min_id)
    except database.DatabaseError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    grid = analysis.sensitivity(point.params, layout)
    prov = _provenance(args, "sensitivity")
    out = Path(args.output)
    _write_text(out, analysis.sensitivity_csv(grid, prov))
    try:
        out.with_suffix(".pgm").write_bytes(analysis.sensitivity_pgm(grid, prov))
        analysis.sensitivity_figure(
            grid,
            str(out.with_suffix(".png")),
            title=f"min {point.id} loss={point.loss:.6g} "
            f"robustness={grid.robustness_score:.4f}",
        )
    except OSError as exc:
        raise CliError(f"cannot write sensitivity outputs: {exc}", EXIT_IO) from exc
    print(f"robustness score: {grid.robustness_score!r}")
    print(f"wrote {out}, {out.with_suffix('.pgm')}, {out.with_suffix('.png')}")
    return EXIT_OK


def cmd_embed(args) -> int:
    db = _load_db(args.db_from)
    try:
        if db.n_hidden == 2:
            report = analysis.minimal_config_check(db, args.nh_to)
        else:
            best = analysis.best_fit_minimum(db)
            report = analysis.embedding_report(
                best.params, Layout(db.n_hidden), LossConfig(db.lam), args.nh_to
            )
            report["source_min_id"] = best.id
            report["source_loss"] = best.loss
    except analysis.AnalysisError as exc:
        raise CliError(str(exc), EXIT_VERIFY_FAILED) from exc
    report["provenance"] = _provenance(args, "embed")
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        _write_text(Path(args.output), text + "\n")
    print(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    db = _load_db(args.db)
    cutoff = args.zero_cutoff
    layout = Layout(db.n_hidden)
    config = LossConfig(db.lam)
    surface = XorLoss(layout, config)
    failures = []
    for p in db.all_points():
        g = surface.gradient(p.params)
        rms = grad_rms(g)
        spec = matrix_spectrum(surface.hessian(p.params), cutoff)
        expected = {"minimum": 0, "transition_state": 1}.get(p.kind)
        if rms >= 1e-9:
            failures.append(f"point {p.id}: gradient RMS {rms:.3e}")
        if spec.zero_count != 0:
            failures.append(
                f"point {p.id}: {spec.zero_count} zero eigenvalue(s) at cutoff {cutoff:g}"
            )
        if expected is not None and spec.index != expected:
            failures.append(f"point {p.id}: index {spec.index} != {expected}")
        elif expected is None and spec.index < 2:
            failures.append(f"point {p.id}: higher_index record with index {spec.index}")
    for ts_id, a, b in db.edges:
        ts = db.point(ts_id)
        if ts.loss < db.minimum(a).loss or ts.loss < db.minimum(b).loss:
            failures.append(f"edge {ts_id}-({a},{b}): barrier not positive")
    new_points = 0
    if not args.no_reconnect:
        stats = saddles.connect_all(db, pair_budget=args.pair_budget)
        new_points = stats.new_ts + stats.new_minima + stats.new_higher
        if new_points:
            failures.append(f"reconnection discovered {new_points} new stationary points")
    if args.canonicalize:
        _report_canonical_orbits(db, layout)
    for line in failures:
        print(f"FAIL {line}")
    if failures:
        return EXIT_VERIFY_FAILED
    print(
        f"verify OK: {len(db.minima)} minima, {len(db.transition_states)} transition "
        f"states re-certified at cutoff {cutoff:g}; reconnection found nothing new"
        if not args.no_reconnect
        else f"verify OK: certificates re-checked at cutoff {cutoff:g}"
    )
    return EXIT_OK


def _report_canonical_orbits(db: database.LandscapeDB, layout: Layout) -> None:
    """Debug aid: compare canonical forms of same-kind records."""
    for kind, bucket in (("minimum", db.minima), ("ts", db.transition_states)):
        reps = [(p.id, canonicalize(p.params, layout)) for p in bucket]
        for i, (ida, ca) in enumerate(reps):
            for idb, cb in reps[i + 1 :]:
                d = float(np.max(np.abs(ca - cb))) if ca.size == cb.size else np.inf
                if d < 1e-6:
                    print(f"canonical-match {kind} {ida} ~ {idb} (max |dw| = {d:.2e})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xorland",
        description="Loss-landscape characterization for small XOR networks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    threads_parent = argparse.ArgumentParser(add_help=False)
    threads_parent.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker processes for parallel sections (default: all cores); "
        "results are independent of the thread count",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "explore", help="basin-hopping search for minima", parents=[threads_parent]
    )
    p.add_argument("--nh", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chains", type=int, default=16)
    p.add_argument("--scale", type=float, default=1.0, help="perturbation half-width")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--saturation-window", type=int, default=None)
    p.add_argument("--dedupe-tol", dest="dedupe_tol", type=float, default=1e-9)
    p.add_argument("--db", required=True)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser(
        "connect", help="find transition states between minima", parents=[threads_parent]
    )
    p.add_argument("--db", required=True)
    p.add_argument("--pair-budget", type=int, default=2000)
    p.set_defaults(func=cmd_connect)

    p = sub.add_parser("graph", help="render the disconnectivity graph")
    p.add_argument("--db", required=True)
    p.add_argument("--delta-e", dest="delta_e", type=float, default=None)
    p.add_argument("--top", type=float, default=None)
    p.add_argument("--include-trivial", action="store_true")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=800)
    p.add_argument("--scale-bar", type=float, default=None)
    p.add_argument("-o", "--output", required=True, help="SVG path (.dot/.png siblings)")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("sensitivity", help="input-sensitivity grid for one minimum")
    p.add_argument("--db", required=True)
    p.add_argument("--min-id", type=int, required=True)
    p.add_argument("-o", "--output", required=True, help="CSV path (.pgm/.png siblings)")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("embed", help="embed the best minimum into a larger network")
    p.add_argument("--db-from", required=True)
    p.add_argument("--nh-to", type=int, required=True)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser(
        "verify", help="re-certify all stationary points", parents=[threads_parent]
    )
    p.add_argument("--db", required=True)
    p.add_argument("--zero-cutoff", type=float, default=ZERO_EIGENVALUE_RECHECK)
    p.add_argument("--no-reconnect", action="store_true")
    p.add_argument("--pair-budget", type=int, default=2000)
    p.add_argument("--canonicalize", action="store_true")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except database.DatabaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
