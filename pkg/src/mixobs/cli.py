"""Command-line entry point: ``mixobs {analyze,design,simulate,compare,connectivity}``.

Exit codes: 0 success / observable, 1 verdict-negative, 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import graph as g_
from .matrices import (assemble_ahat, build_dc, build_row_stochastic, format_gain, kronecker,
                       neighborhoods, parse_gain, spectral_radius, DimensionError)
from .observer import (DivergenceError, ObservabilityLost, compute_metrics, run_centralized_kalman,
                       run_distributed)
from .scenario import Scenario, ScenarioError, bundled, parse_scenario
from .structural import distributed_structural_observability, numeric_observability_check
from .synthesis import synthesize_gain

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE = 0, 1, 2
GAIN_METHODS = {"ccl": "ccl", "descent": "spectral_descent"}


class UsageError(Exception):
    pass


def _load(path: str) -> Scenario:
    p = Path(path)
    if not p.exists():
        try:
            p = bundled(path)
        except FileNotFoundError:
            raise UsageError(f"scenario file {path!r} not found") from None
    return parse_scenario(p)


def _emit(text: str, out_dir: str | None, filename: str) -> None:
    sys.stdout.write(text)
    if out_dir:
        _write(Path(out_dir) / filename, text)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _network_lines(graph) -> list[str]:
    bare = graph.without_self_loops()
    if graph.node_count < 2:
        return ["cav_count=1"]
    return [f"cav_count={graph.node_count}",
            f"strongly_connected={str(g_.is_strongly_connected(graph)).lower()}",
            f"node_connectivity={g_.node_connectivity(bare)}",
            f"link_connectivity={g_.link_connectivity(bare)}"]


def cmd_analyze(args) -> int:
    scn = _load(args.scenario)
    model, graph, placement = scn.model(), scn.graph(), scn.placement()
    verdict = distributed_structural_observability(model.global_a, graph, placement)
    lines = [f"scenario={scn.name}", *_network_lines(graph)]
    numeric = numeric_observability_check(model.global_a, build_row_stochastic(graph), placement,
                                          rank_tol=args.rank_tol)
    lines.append(f"numeric_full_rank={str(numeric).lower()}")
    text = verdict.report(model.state_names()) + "\n".join(lines) + "\n" + verdict.as_key_values()
    if scn.faults:
        pg, pp, active = scn.post_fault()
        post = distributed_structural_observability(model.global_a, pg, pp)
        text += (f"post_fault.surviving_cavs={','.join(str(c + 1) for c in active)}\n"
                 + "".join(f"post_fault.{l}\n" for l in _network_lines(pg))
                 + "".join(f"post_fault.{l}\n" for l in post.as_key_values().splitlines()))
    _emit(text, args.out_dir, "analysis.txt")
    return EXIT_OK if verdict.observable else EXIT_NEGATIVE


def _design_one(label: str, graph, placement, model, cfg) -> tuple[str, object]:
    w = build_row_stochastic(graph)
    dc = build_dc(placement.measured, neighborhoods(graph), model.state_dim)
    before = spectral_radius(kronecker(w, model.global_a))
    res = synthesize_gain(w, model.global_a, dc, cfg)
    after = spectral_radius(assemble_ahat(w, model.global_a, res.gain, dc))
    text = (f"{label}rho_before={before:.9f}\n{label}rho_after={after:.9f}\n"
            f"{label}method={res.method}\n{label}iterations={res.iterations}\n"
            f"{label}converged={str(res.converged).lower()}\n")
    return text, res


def cmd_design(args) -> int:
    scn = _load(args.scenario)
    cfg = scn.synthesis_config(GAIN_METHODS[args.gain_method] if args.gain_method else None)
    model = scn.model()
    out = Path(args.out_dir)
    text, res = _design_one("", scn.graph(), scn.placement(), model, cfg)
    _write(out / "gain.txt", format_gain(res.gain))
    ok = res.achieved_spectral_radius < 1
    if scn.faults:
        pg, pp, _ = scn.post_fault()
        post_text, post = _design_one("post_fault.", pg, pp, model, cfg)
        _write(out / "gain_postfault.txt", format_gain(post.gain))
        text += post_text
        ok = ok and post.achieved_spectral_radius < 1
    text = f"scenario={scn.name}\n" + text + "gain_file=gain.txt\n"
    _emit(text, args.out_dir, "design.txt")
    return EXIT_OK if ok else EXIT_NEGATIVE


def _gain_for(args, scn: Scenario):
    path = Path(args.gain) if args.gain else Path(args.out_dir) / "gain.txt"
    if not path.exists():
        raise UsageError(f"gain file {path} not found; run "
                         f"`mixobs design {args.scenario} --out-dir {args.out_dir}` first "
                         f"or pass --gain FILE")
    try:
        gain = parse_gain(path.read_text())
    except (DimensionError, ValueError) as exc:
        raise UsageError(f"cannot read gain file {path}: {exc}") from None
    dim = scn.model().state_dim
    if len(gain.blocks) != scn.cav_count or gain.block_dim != dim:
        raise UsageError(f"gain has {len(gain.blocks)} blocks of size {gain.block_dim}; scenario "
                         f"{scn.name} needs {scn.cav_count} of size {dim}")
    return gain


def cmd_simulate(args) -> int:
    scn = _load(args.scenario)
    gain = _gain_for(args, scn)
    run = run_distributed(scn, horizon=args.horizon, seed=args.seed, gain=gain)
    metrics = compute_metrics(run.trace)
    out = Path(args.out_dir)
    _write(out / "truth.csv", run.truth.to_csv())
    _write(out / "trace.csv", run.trace.to_csv())
    radii = ",".join(f"{r:.9f}" for r in run.trace.spectral_radii)
    text = (f"scenario={scn.name}\nseed={scn.seed if args.seed is None else args.seed}\n"
            f"steps={run.trace.steps}\nspectral_radii={radii}\n" + metrics.as_key_values()
            + "".join(f"event: {e}\n" for e in run.trace.events))
    _emit(text, args.out_dir, "metrics.txt")
    return EXIT_OK


def cmd_compare(args) -> int:
    scn = _load(args.scenario)
    gain = _gain_for(args, scn)
    dist = run_distributed(scn, horizon=args.horizon, seed=args.seed, gain=gain)
    cent = run_centralized_kalman(scn, horizon=args.horizon, seed=args.seed)
    md, mc = compute_metrics(dist.trace), compute_metrics(cent.trace)
    rows = ["step,distributed_position,distributed_velocity,centralized_position,centralized_velocity"]
    for k in range(dist.trace.steps + 1):
        rows.append(f"{k},{md.position_series[k]!r},{md.velocity_series[k]!r},"
                    f"{mc.position_series[k]!r},{mc.velocity_series[k]!r}")
    _write(Path(args.out_dir) / "msee.csv", "\n".join(rows) + "\n")
    ordered = (mc.aggregate_position <= md.aggregate_position
               and mc.aggregate_velocity <= md.aggregate_velocity)
    text = (f"scenario={scn.name}\nsteady_from={md.steady_from}\n"
            f"{'':14s}{'position':>14s}{'velocity':>14s}\n"
            f"{'distributed':14s}{md.aggregate_position:14.6g}{md.aggregate_velocity:14.6g}\n"
            f"{'centralized':14s}{mc.aggregate_position:14.6g}{mc.aggregate_velocity:14.6g}\n"
            f"centralized_not_worse={str(ordered).lower()}\n")
    _emit(text, args.out_dir, "compare.txt")
    return EXIT_OK


def cmd_connectivity(args) -> int:
    if bool(args.graph) == bool(args.named):
        raise UsageError("give exactly one of GRAPH_FILE or --named SPEC")
    if args.named:
        graph = g_.build_named(args.named)
    else:
        p = Path(args.graph)
        if not p.exists():
            raise UsageError(f"graph file {args.graph!r} not found")
        graph = g_.parse_graph(p.read_text())
        if args.undirected:
            graph = graph.symmetrized()
    text = "\n".join(_network_lines(graph)) + "\n"
    if args.named:
        name, params = g_.parse_named(args.named)
        node_t, link_t = g_.TABLE_CONVENTION[name](*params)
        text += f"table_node_connectivity={node_t}\ntable_link_connectivity={link_t}\n"
    _emit(text, args.out_dir, "connectivity.txt")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixobs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", help="scenario file or bundled name (fig1, fig9, ...)")
        return p

    p = scenario_cmd("analyze", "structural observability and redundancy report")
    p.add_argument("--rank-tol", type=float, default=None,
                   help="relative singular-value threshold for the numeric rank check")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_analyze)

    p = scenario_cmd("design", "synthesize the block-diagonal observer gain")
    p.add_argument("--gain-method", choices=sorted(GAIN_METHODS), default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_design)

    for name, func, help_text in (("simulate", cmd_simulate, "run the distributed observer"),
                                  ("compare", cmd_compare, "distributed vs centralized KF MSEE")):
        p = scenario_cmd(name, help_text)
        p.add_argument("--gain", default=None, help="gain file (default: OUT_DIR/gain.txt)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--horizon", type=int, default=None)
        p.add_argument("--out-dir", default=".")
        p.set_defaults(func=func)

    p = sub.add_parser("connectivity", help="node/link connectivity of a graph")
    p.add_argument("graph", nargs="?", help="graph text file ('nodes N' then 'i j [w]' lines)")
    p.add_argument("--named", help="named constructor, e.g. 'ring(8, 2)'")
    p.add_argument("--undirected", action="store_true", help="symmetrize the file's links")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_connectivity)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "horizon", None) is not None and args.horizon < 1:
        print("error: --horizon must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ScenarioError as exc:
        print("error: invalid scenario:", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, g_.GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ObservabilityLost, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE


if __name__ == "__main__":
    sys.exit(main())
