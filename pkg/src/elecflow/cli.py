"""Command-line entry points: ``maxflow``, ``matching`` and ``audit``.

Exit status: 0 when the answer passed its certificate check, 1 when an
audit finds a violated law, 2 for unreadable or unsupported input, 3 when
the solver faulted on an internal invariant (the report is still written).
"""

from __future__ import annotations

import contextlib
import logging
import sys
from dataclasses import fields

import click
import numpy as np

from .accel import SmoothnessParams
from .errors import ElecflowError, InvariantFault, ParseError
from .graph import read_dimacs
from .ipm import CenteringParams
from .oracles import max_bmatching
from .pipeline import SolverConfig, solve_bmatching, solve_maxflow
from .precond import PrecondParams
from .reduction import read_bmatching
from .report import RunReport, audit_trace

EXIT_OK, EXIT_AUDIT, EXIT_INPUT, EXIT_FAULT = 0, 1, 2, 3

_SMOOTH_KEYS = {f.name for f in fields(SmoothnessParams)} - {"m_hat"}
_PRECOND_KEYS = {f.name for f in fields(PrecondParams)}


def _parse_constants(items: tuple[str, ...], eta: float | None) -> tuple[dict, dict]:
    smooth: dict[str, float] = {}
    pre: dict[str, object] = {}
    for item in items:
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep:
            raise click.BadParameter(f"expected key=value, got {item!r}", param_hint="--constants")
        if key in _SMOOTH_KEYS:
            smooth[key] = float(val)
        elif key in _PRECOND_KEYS:
            pre[key] = val if key == "certificate" else float(val)
        else:
            known = ", ".join(sorted(_SMOOTH_KEYS | _PRECOND_KEYS))
            raise click.BadParameter(f"unknown constant {key!r}; known: {known}", param_hint="--constants")
    if eta is not None:
        smooth["eta"] = eta
    return smooth, pre


def _header(config: SolverConfig, seed: int | None) -> dict:
    defaults = SmoothnessParams(1)
    out = {k: getattr(defaults, k) for k in ("eta", "c_delta", "c_E", "c_incr", "c_decr", "c_heavy")}
    out.update(config.as_dict())
    out["seed"] = seed
    return out


def _solver_options(f):
    opts = [
        click.option("--eta", type=float, default=None, help="Smoothness exponent (default 1/14)."),
        click.option("--gamma-hat", type=float, default=1 / 400, show_default=True, help="Centrality tolerance."),
        click.option("--eps-solver", type=float, default=None,
                     help="Use conjugate gradients to this relative energy error instead of exact Cholesky."),
        click.option("--seed", type=int, default=None, help="Recorded in the report; the solver is deterministic."),
        click.option("--constants", "constants", multiple=True, metavar="KEY=VALUE",
                     help="Override a solver constant (c_delta, c_E, c_heavy, c_freeze, fix_K, ...). Repeatable."),
        click.option("--no-precondition", is_flag=True, help="Run accelerated phases without auxiliary arcs."),
        click.option("--report", "report_path", type=click.Path(dir_okay=False, writable=True), default=None,
                     help="Write the JSON-lines run report here."),
        click.option("-o", "--output", type=click.Path(dir_okay=False, writable=True), default=None,
                     help="Write 'id value' lines here instead of stdout."),
        click.option("-v", "--verbose", count=True, help="Log progress to stderr."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _config(mode: str, eta, gamma_hat, eps_solver, constants, no_precondition) -> SolverConfig:
    smooth, pre = _parse_constants(constants, eta)
    try:
        centering = CenteringParams(gamma_hat=gamma_hat)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--gamma-hat") from None
    return SolverConfig(mode=mode, precondition=not no_precondition,
                        solver="cg" if eps_solver is not None else "cholesky",
                        eps=eps_solver if eps_solver is not None else 1e-10,
                        centering=centering, constants=smooth, precond=pre)


@contextlib.contextmanager
def _report(mode: str, params: dict, path: str | None):
    fh = open(path, "w") if path else None
    rep = RunReport(mode, params, stream=fh)
    try:
        yield rep
    finally:
        rep.close()
        if fh:
            fh.close()


@contextlib.contextmanager
def _out(path: str | None):
    if path:
        with open(path, "w") as fh:
            yield fh
    else:
        yield sys.stdout


def _logging(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


@click.group()
@click.version_option(package_name="artifact")
def main() -> None:
    """Electrical-flow interior-point solvers for unit-capacity max flow and bipartite b-matching."""


@main.command("maxflow")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["basic", "accelerated", "dinic"]), default="accelerated",
              show_default=True)
@_solver_options
def cmd_maxflow(path, mode, eta, gamma_hat, eps_solver, seed, constants, no_precondition, report_path,
                output, verbose):
    """Maximum s-t flow and minimum cut of a DIMACS max-flow file.

    Prints the flow value and the source side of a minimum cut (1-based),
    then one 'arc_id value' line per arc (1-based, file order).
    """
    _logging(verbose)
    try:
        with open(path) as fh:
            g, s, t = read_dimacs(fh)
    except ParseError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    u = g.require_capacities()
    if mode != "dinic" and np.any(u != 1):
        click.echo(f"error: {mode} mode needs unit capacities; use --mode dinic for general capacities", err=True)
        sys.exit(EXIT_INPUT)
    config = None if mode == "dinic" else _config(mode, eta, gamma_hat, eps_solver, constants, no_precondition)
    params = _header(config, seed) if config else {"mode": "dinic", "seed": seed}
    code = EXIT_OK
    with _report(mode, params, report_path) as rep:
        rep.results.update(instance={"n": g.n, "m": g.m, "s": s, "t": t})
        try:
            res = solve_maxflow(g, s, t, u, mode=mode, config=config, report=rep)
        except InvariantFault as exc:
            rep.results["fault"] = {"law": exc.name, "step": exc.step, "message": str(exc)}
            click.echo(f"fault: {exc}", err=True)
            code = EXIT_FAULT
    if code:
        sys.exit(code)
    click.echo(f"value {res.value}")
    click.echo("cut " + " ".join(str(v + 1) for v in sorted(res.cut)))
    with _out(output) as fh:
        for e, val in enumerate(res.flow):
            fh.write(f"{e + 1} {int(round(float(val)))}\n")


@main.command("matching")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["basic", "accelerated", "oracle"]), default="accelerated",
              show_default=True)
@click.option("--via", type=click.Choice(["direct", "flow"]), default="direct", show_default=True,
              help="Solve the b-matching program directly, or through max flow on the bipartite network.")
@_solver_options
def cmd_matching(path, mode, via, eta, gamma_hat, eps_solver, seed, constants, no_precondition, report_path,
                 output, verbose):
    """Maximum b-matching of a bipartite instance ('p bmatch' format).

    Prints the matching size and whether it is perfect, then one
    'edge_id multiplicity' line per used edge (1-based).
    """
    _logging(verbose)
    try:
        with open(path) as fh:
            inst = read_bmatching(fh)
    except (ParseError, ElecflowError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    config = None if mode == "oracle" else _config(mode, eta, gamma_hat, eps_solver, constants, no_precondition)
    params = _header(config, seed) if config else {"mode": "oracle", "seed": seed}
    code = EXIT_OK
    with _report(mode, params, report_path) as rep:
        rep.results.update(instance={"n_p": inst.n_p, "n_q": inst.n_q, "m": inst.m, "norm_b": inst.norm_b})
        try:
            if mode == "oracle":
                x = max_bmatching(inst)
            elif via == "direct":
                x = solve_bmatching(inst, config, rep).x
            else:
                x = _matching_via_flow(inst, config, rep)
        except InvariantFault as exc:
            rep.results["fault"] = {"law": exc.name, "step": exc.step, "message": str(exc)}
            click.echo(f"fault: {exc}", err=True)
            code = EXIT_FAULT
        else:
            perfect = inst.is_perfect(x)
            rep.results.update(matching_size=int(x.sum()), perfect=bool(perfect))
    if code:
        sys.exit(code)
    click.echo(f"size {int(x.sum())}")
    click.echo(f"perfect {'yes' if perfect else 'no'}")
    with _out(output) as fh:
        for e in np.flatnonzero(x):
            fh.write(f"{e + 1} {int(x[e])}\n")


def _matching_via_flow(inst, config: SolverConfig, rep: RunReport) -> np.ndarray:
    """Source to P (capacity b), P to Q (capacity of the thinner end), Q to sink (capacity b)."""
    from .graph import DirectedMultigraph

    n_p, n_q = inst.n_p, inst.n_q
    s, t = n_p + n_q, n_p + n_q + 1
    tails = np.concatenate([np.full(n_p, s), inst.edge_p, n_p + np.arange(n_q)])
    heads = np.concatenate([np.arange(n_p), n_p + inst.edge_q, np.full(n_q, t)])
    u = np.concatenate([inst.b_p, inst.thickness, inst.b_q]).astype(np.int64)
    g = DirectedMultigraph(n_p + n_q + 2, tails, heads)
    res = solve_maxflow(g, s, t, u, mode=config.mode, config=config, report=rep)
    x = np.rint(res.flow[n_p: n_p + inst.m]).astype(np.int64)
    return x


@main.command("audit")
@click.argument("report_path", type=click.Path(exists=True, dir_okay=False))
def cmd_audit(report_path):
    """Recheck every logged inequality of a run report from its raw values."""
    try:
        table = audit_trace(report_path)
    except ParseError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    width = max([len(k) for k in table] + [4])
    click.echo(f"{'law':<{width}}  {'checked':>8}  {'failed':>7}  verdict")
    bad = 0
    for law, row in sorted(table.items()):
        verdict = "PASS" if row["failed"] == 0 else "FAIL"
        bad += row["failed"] > 0
        click.echo(f"{law:<{width}}  {row['checked']:>8}  {row['failed']:>7}  {verdict}")
    if not table:
        click.echo("no checkable records")
    sys.exit(EXIT_AUDIT if bad else EXIT_OK)


if __name__ == "__main__":  # pragma: no cover
    main()
