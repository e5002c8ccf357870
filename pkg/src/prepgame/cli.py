"""Command-line front end.

Every subcommand prints a JSON summary on stdout and writes, under --out,
``<stem>.csv``, ``<stem>.json`` and ``<stem>.provenance.json`` (stem defaults
to the subcommand name). Exit codes: 0 success, 2 invalid input or failed
validation, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import compose, gradgame, qmat, sim
from . import io as gio
from .design import demon, oneshot, rounds
from .game import GameError, max_score_constrained, validate
from .sdp import SolverError
from .sets import AllStates, EpsBall, NegativityBall, SepOuter

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
DEFAULT_REPETITIONS = ("30,22", "30,25", "30,28", "10,8")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers

def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


class Artifacts:
    """Collects outputs of one run and writes them atomically."""

    def __init__(self, args, argv):
        self.dir = Path(args.out)
        self.stem = args.stem or args.command
        self.args, self.argv = args, list(argv)
        self.inputs, self.seeds, self.tolerances = [], {}, {}
        self.extra = {}

    def path(self, suffix: str) -> Path:
        return self.dir / f"{self.stem}{suffix}"

    def finish(self, summary: dict, header=None, rows=None) -> None:
        prov = gio.provenance(self.args.command, self.argv, self.inputs, self.seeds, self.tolerances)
        written = []
        if header is not None:
            gio.write_atomic(self.path(".csv"), _csv_text(header, rows))
            written.append(str(self.path(".csv")))
        for suffix, text in self.extra.items():
            gio.write_atomic(self.path(suffix), text)
            written.append(str(self.path(suffix)))
        summary = {"command": self.args.command, **summary}
        gio.write_atomic(self.path(".json"), json.dumps(summary, indent=1))
        written.append(str(self.path(".json")))
        prov["outputs"] = written
        gio.write_atomic(self.path(".provenance.json"), json.dumps(prov, indent=1))
        print(json.dumps(summary, indent=1))


def _states(names) -> list:
    out = []
    for nm in names or ["phi"]:
        try:
            out.append(qmat.named_state(nm))
        except (KeyError, ValueError) as e:
            raise UsageError(f"--state {nm!r}: {e}") from None
    return out


def _strategy(args, g):
    if args.strategy:
        return gio.load_strategy(args.strategy, g.dims)
    if args.state:
        rho = _states([args.state])[0]
        if rho.dim != g.dim:
            raise UsageError(f"state dimension {rho.dim} does not match game dimension {g.dim}")
        return sim.Iid(rho)
    raise UsageError("give --state NAME or --strategy FILE")


def _state_set(spec: str, dims, state=None):
    """'sep', 'sep:LEVEL', 'all', 'negativity:N' or 'eps:E' (ball around --state)."""
    name, _, arg = spec.partition(":")
    try:
        if name == "sep":
            return SepOuter(dims, int(arg) if arg else 1)
        if name == "all":
            return AllStates(dims)
        if name == "negativity":
            return NegativityBall(dims, float(arg))
        if name == "eps":
            if state is None:
                raise UsageError("eps:E needs --state")
            return EpsBall(_states([state])[0], float(arg))
    except ValueError as e:
        raise UsageError(f"--constrained {spec!r}: {e}") from None
    raise UsageError(f"--constrained {spec!r}: expected sep[:LEVEL], all, negativity:N or eps:E")


def _load_game(path, art: Artifacts):
    art.inputs.append(path)
    g = gio.load_game(path)
    bad = validate(g)
    if bad:
        raise GameError(bad)
    return g


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate(args, art: Artifacts) -> int:
    art.inputs.append(args.game)
    g = gio.load_game(args.game)
    bad = validate(g)
    for v in bad:
        print(f"{args.game}: {v}", file=sys.stderr)
    art.finish(
        {"game": args.game, "valid": not bad, "violations": bad, "rounds": g.n, "dims": list(g.dims)},
        ["violation"],
        [[v] for v in bad],
    )
    return EXIT_INVALID if bad else EXIT_OK


def cmd_score(args, art: Artifacts) -> int:
    g = _load_game(args.game, art)
    if args.strategy:
        art.inputs.append(args.strategy)
    if args.constrained:
        C = _state_set(args.constrained, g.dims, args.state)
        art.tolerances["sdp"] = 1e-9
        value = max_score_constrained(g, C, record=False, cache={}).value
        label = repr(C)
    else:
        strat = _strategy(args, g)
        value = sim.analytic_score(g, strat)
        label = type(strat).__name__
    art.finish({"game": args.game, "strategy": label, "score": value}, ["game", "strategy", "score"], [[args.game, label, value]])
    return EXIT_OK


def cmd_simulate(args, art: Artifacts) -> int:
    g = _load_game(args.game, art)
    if args.strategy:
        art.inputs.append(args.strategy)
    strat = _strategy(args, g)
    art.seeds["philox_key"] = args.seed
    res = sim.simulate(g, strat, args.shots, args.seed, keep_shots=args.trajectories)
    if args.trajectories:
        labels = g.configs[g.n]
        rows = ((i, labels[f], float(s)) for i, (f, s) in enumerate(zip(res.finals, res.scores)))
        art.extra[".trajectories.csv"] = _csv_text(["shot", "final_config", "score"], rows)
    summary = {
        "game": args.game,
        "strategy": type(strat).__name__,
        "shots": res.shots,
        "seed": res.seed,
        "mean_score": res.mean_score,
        "std_error": res.std_error,
        "frequencies": res.frequencies,
    }
    if args.compare:
        a = sim.analytic_score(g, strat)
        summary["analytic_score"] = a
        summary["within_4_sigma"] = res.within(a)
    rows = [[s, f] for s, f in res.frequencies.items()]
    art.finish(summary, ["final_config", "frequency"], rows)
    return EXIT_OK


def cmd_design_oneshot(args, art: Artifacts) -> int:
    E = _states(args.state)
    sep = SepOuter(E[0].dims, args.level)
    art.tolerances["sdp"] = 1e-9
    grid = np.linspace(0.0, 1.0, args.grid)
    rows, best = [], None
    for eI in grid:
        if args.eps is None:
            r = oneshot.design_oneshot(E, float(eI), args.cls, sep)
        else:
            r = oneshot.design_oneshot_eps(E[0], args.eps, float(eI), args.cls, sep)
        rows.append([float(eI), r.e_II, float(eI) + r.e_II, args.cls])
        if best is None or rows[-1][2] < best[0]:
            best = (rows[-1][2], r)
    total, r = best
    if args.save_game:
        gio.save_game(args.save_game, r.game, {"command": "design-oneshot", "argv": art.argv})
    art.finish(
        {"states": args.state or ["phi"], "class": args.cls, "grid": args.grid, "eps": args.eps,
         "min_total": total, "argmin_e_I": r.e_I, "e_II_at_min": r.e_II},
        ["e_I", "e_II", "total", "class"],
        rows,
    )
    return EXIT_OK


def cmd_design_demon(args, art: Artifacts) -> int:
    E = _states(args.state)
    sep = SepOuter(E[0].dims, args.level)
    art.tolerances["sdp"] = 1e-8
    points = [args.e_I] if args.e_I is not None else list(np.linspace(0.0, 1.0, args.grid))
    rows, best = [], None
    for eI in points:
        r = demon.design_demon(args.n, args.cls, E, float(eI), sep=sep, adaptive=not args.non_adaptive, replay=False)
        rows.append([float(eI), r.e_II, float(eI) + r.e_II, args.cls, args.n, int(not args.non_adaptive)])
        if best is None or rows[-1][2] < best[0]:
            best = (rows[-1][2], r)
    total, r = best
    if args.save_game:
        gio.save_game(args.save_game, r.game, {"command": "design-demon", "argv": art.argv})
    art.finish(
        {"states": args.state or ["phi"], "class": args.cls, "n": args.n, "adaptive": not args.non_adaptive,
         "min_total": total, "argmin_e_I": r.e_I, "e_II_at_min": r.e_II},
        ["e_I", "e_II", "total", "class", "n", "adaptive"],
        rows,
    )
    return EXIT_OK


def cmd_optimize_rounds(args, art: Artifacts) -> int:
    spec = rounds.InstanceSpec(n=args.n, m=args.m, d_A=args.d_A, tau=args.tau, e_I=args.e_I, level=args.level)
    art.seeds["restart_seed"] = args.seed
    art.tolerances.update({"sdp": 1e-8, "feasibility": rounds.FEAS_TOL})
    results = rounds.run_restarts(spec, args.restarts, args.seed, L=args.iterations)
    rows = []
    for res in results:
        rows.append([res.seed, -1, 0, 1, res.trace[0], float("nan"), res.trace[0]])
        for st in res.steps:
            rows.append([res.seed, st.iteration, st.round + 1, int(st.accepted), st.candidate, st.candidate_sep, st.objective])
    best = min(results, key=lambda r: r.objective)
    if args.save_game:
        gio.save_game(args.save_game, best.game, {"command": "optimize-rounds", "argv": art.argv, "restart": best.seed})
    art.finish(
        {"instance": vars(spec), "restarts": args.restarts, "seed": args.seed, "iterations": args.iterations,
         "best_restart": best.seed, "best_e_II": best.objective, "best_sep_score": best.sep_value,
         "objectives": [r.objective for r in results]},
        ["restart", "iteration", "round", "accepted", "candidate_e_II", "candidate_sep", "objective"],
        rows,
    )
    return EXIT_OK


def _parse_mv(text: str) -> tuple[int, int]:
    try:
        m, v = (int(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--repeat {text!r}: expected M,V") from None
    return m, v


def cmd_compose(args, art: Artifacts) -> int:
    if args.base_csv:
        art.inputs.append(args.base_csv)
        with open(args.base_csv, newline="") as fh:
            rd = csv.DictReader(fh)
            if not rd.fieldnames or not {"e_I", "e_II"} <= set(rd.fieldnames):
                raise UsageError(f"{args.base_csv}: needs e_I and e_II columns")
            try:
                base = np.array([(float(r["e_I"]), float(r["e_II"])) for r in rd])
            except ValueError as e:
                raise UsageError(f"{args.base_csv}:{rd.line_num}: {e}") from None
    else:
        E = _states(args.state)
        art.tolerances["sdp"] = 1e-9
        base = oneshot.error_curve(E, args.cls, args.grid, SepOuter(E[0].dims, args.level))
    curves, best = {}, {}
    for text in args.repeat or DEFAULT_REPETITIONS:
        m, v = _parse_mv(text)
        rows = compose.repetition_curve(base, m, v)
        lab = f"G({m},{v})"
        curves[lab] = (m, v, rows)
        tot = rows[:, 2] + rows[:, 3]
        j = int(np.argmin(tot))
        best[lab] = {"min_total": float(tot[j]), "base_e_I": float(rows[j, 0]), "e_I": float(rows[j, 2]), "e_II": float(rows[j, 3])}
    out = []
    for lab, (m, v, rows) in curves.items():
        for b1, b2, e1, e2 in rows:
            out.append([lab, m, v, b1, b2, e1, e2, e1 + e2])
    art.finish(
        {"base": args.base_csv or {"states": args.state or ["phi"], "class": args.cls, "grid": args.grid}, "curves": best},
        ["game", "m", "v", "base_e_I", "base_e_II", "e_I", "e_II", "total"],
        out,
    )
    return EXIT_OK


def cmd_gradient_game(args, art: Artifacts) -> int:
    spec = gradgame.EntQuantSpec(lam=args.lam, n=args.n, eps=args.eps, theta0=args.theta0, level=args.level)
    thetas = np.linspace(0.0, np.pi / 2, args.thetas + 2)[1:-1]
    Ns = [float(x) for x in args.negativity.split(",")] if args.negativity else []
    art.tolerances["sdp"] = 1e-9
    curves = gradgame.gradient_curves(spec, thetas, Ns)
    j = int(np.argmax(curves.iid))
    rows = [[t, v, curves.separable] + [curves.negativity[N] for N in sorted(curves.negativity)] for t, v in zip(curves.thetas, curves.iid)]
    art.finish(
        {"n": args.n, "lambda": args.lam, "eps": args.eps, "theta0": args.theta0,
         "peak_theta": float(curves.thetas[j]), "peak_score": float(curves.iid[j]),
         "separable_bound": curves.separable, "negativity_bounds": {repr(N): v for N, v in curves.negativity.items()}},
        ["theta", "iid_score", "separable_bound"] + [f"negativity_bound[{N:g}]" for N in sorted(curves.negativity)],
        rows,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prepgame", description="Preparation games: scoring, design and simulation.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--stem", default=None, help="output file stem (default: subcommand name)")
        return p

    def strategy_opts(p):
        p.add_argument("game", help="game document (JSON)")
        p.add_argument("--state", help="named state played i.i.d. (phi, psi-adapt, singlet, phi-plus, psi-theta(T))")
        p.add_argument("--strategy", help="strategy document (JSON)")

    p = common(sub.add_parser("validate", help="check a game document"))
    p.add_argument("game")
    p.set_defaults(func=cmd_validate)

    p = common(sub.add_parser("score", help="analytic score of a strategy, or the constrained maximum"))
    strategy_opts(p)
    p.add_argument("--constrained", help="maximize over a set: sep[:LEVEL], all, negativity:N, eps:E")
    p.set_defaults(func=cmd_score)

    p = common(sub.add_parser("simulate", help="Monte-Carlo estimate of the score"))
    strategy_opts(p)
    p.add_argument("--shots", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trajectories", action="store_true", help="also write per-shot final configuration and score")
    p.add_argument("--compare", action="store_true", help="report the analytic score next to the estimate")
    p.set_defaults(func=cmd_simulate)

    def design_opts(p):
        p.add_argument("--state", action="append", help="target state (repeatable; default phi)")
        p.add_argument("--class", dest="cls", default="global", help="global, one-way-lpcc or local-pauli")
        p.add_argument("--grid", type=int, default=oneshot.DEFAULT_GRID, help="points of the e_I grid on [0, 1]")
        p.add_argument("--level", type=int, default=1, help="symmetric-extension level of the separable proxy")
        p.add_argument("--save-game", help="write the minimum-total-error game to this path")

    p = common(sub.add_parser("design-oneshot", help="single-round error curve"))
    design_opts(p)
    p.add_argument("--eps", type=float, default=None, help="type-II error over the ε-ball around the (single) state")
    p.set_defaults(func=cmd_design_oneshot)

    p = common(sub.add_parser("design-demon", help="n-round adaptive (Maxwell demon) error curve"))
    design_opts(p)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--e-I", dest="e_I", type=float, default=None, help="single e_I instead of a grid")
    p.add_argument("--non-adaptive", action="store_true")
    p.set_defaults(func=cmd_design_demon, cls="local-pauli")

    p = common(sub.add_parser("optimize-rounds", help="coordinate descent over rounds on the environment instance"))
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--m", type=int, default=6, help="configurations per intermediate round")
    p.add_argument("--d-A", dest="d_A", type=int, default=10)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--e-I", dest="e_I", type=float, default=0.5)
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=40)
    p.add_argument("--save-game", help="write the best game to this path")
    p.set_defaults(func=cmd_optimize_rounds)

    p = common(sub.add_parser("compose", help="error curves of repeated one-shot games"))
    p.add_argument("--state", action="append")
    p.add_argument("--class", dest="cls", default="one-way-lpcc")
    p.add_argument("--grid", type=int, default=oneshot.DEFAULT_GRID)
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--base-csv", help="base curve with e_I, e_II columns instead of designing one")
    p.add_argument("--repeat", action="append", help="M,V: M repetitions, at least V wins (repeatable)")
    p.set_defaults(func=cmd_compose)

    p = common(sub.add_parser("gradient-game", help="entanglement-quantification gradient game curves"))
    p.add_argument("--n", type=int, default=41)
    p.add_argument("--lam", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--thetas", type=int, default=49, help="interior points of the θ grid on (0, π/2)")
    p.add_argument("--negativity", default="", help="comma-separated negativity bounds")
    p.add_argument("--level", type=int, default=1)
    p.set_defaults(func=cmd_gradient_game)
    return ap


def cli_main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    art = Artifacts(args, argv)
    try:
        return args.func(args, art)
    except (gio.DocumentError, UsageError, qmat.DimensionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except GameError as e:
        for v in e.violations:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_INVALID
    except (FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
