"""Command-line front end.

Every output starts with a ``#`` line holding the full resolved command, so
re-running that line reproduces the output byte for byte.

Exit codes: 0 success, 1 parameter error, 2 numerical failure or divergence,
3 verification failure.

CSV schemas
  profile: time_step,expected_count,scheme[,mc_count,mc_stderr]
  train:   episode,return,lhs_error,rhs_bound,eps_q,w1,scheme,seed,
           buffer_size,lhs_weighted,rhs_weighted,eps_q_weighted,w1_weighted,
           lipschitz,clip_violation,episode_return
  bound:   key=value lines, one per term plus total
"""

from __future__ import annotations

import argparse
import io
import math
import os
import shlex
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .errors import ParameterError

EXIT_OK, EXIT_PARAM, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

SCHEME_FLAGS = ("N0", "L0", "eta", "c_min", "K", "alpha")
TRAIN_COLUMNS = (
    "episode", "return", "lhs_error", "rhs_bound", "eps_q", "w1", "scheme", "seed",
    "buffer_size", "lhs_weighted", "rhs_weighted", "eps_q_weighted", "w1_weighted",
    "lipschitz", "clip_violation", "episode_return",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARAM, f"{self.prog}: error: {message}\n")


def _num(x: float) -> str:
    return repr(float(x))


def _header(command: str, opts: dict) -> str:
    parts = ["replaylab", command]
    for key, value in opts.items():
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            parts.append(flag)
        elif isinstance(value, (list, tuple)):
            for v in value:
                parts += [flag, str(v)]
        else:
            parts += [flag, _num(value) if isinstance(value, float) else str(value)]
    return "# " + shlex.join(parts) + "\n"


def _emit(text: str, output) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        Path(output).write_text(text)
    except OSError as exc:
        raise ParameterError(f"cannot write {output}: {exc.strerror}") from None


def _scheme_opts(args, defaults=None) -> dict:
    opts = {"scheme": args.scheme}
    for name in SCHEME_FLAGS:
        value = getattr(args, name)
        if value is None and defaults is not None:
            value = getattr(defaults, name)
        opts[name] = value
    return opts


def _scheme(opts: dict):
    from .weighting import WeightScheme

    kw = {k: opts[k] for k in SCHEME_FLAGS if opts.get(k) is not None}
    return WeightScheme(opts["scheme"], **kw)


def cmd_profile(args) -> int:
    from .profile import expected_selection_profile, monte_carlo_selection

    opts = {**_scheme_opts(args), "horizon": args.horizon, "batch": args.batch,
            "updates": args.updates, "mc_runs": args.mc_runs, "seed": args.seed}
    scheme = _scheme(opts)
    prof = expected_selection_profile(scheme, args.horizon, args.batch, args.updates)
    out = io.StringIO()
    out.write(_header("profile", opts))
    mc = None
    if args.mc_runs:
        mc = monte_carlo_selection(scheme, args.horizon, args.batch, args.updates, args.mc_runs, args.seed)
        out.write("time_step,expected_count,scheme,mc_count,mc_stderr\n")
    else:
        out.write("time_step,expected_count,scheme\n")
    name = scheme.kind.value
    for s, c in enumerate(prof.expected_count):
        row = f"{s + 1},{_num(c)},{name}"
        if mc is not None:
            row += f",{_num(mc[0][s])},{_num(mc[1][s])}"
        out.write(row + "\n")
    _emit(out.getvalue(), args.output)
    return EXIT_OK


def _parse_weights(text):
    if text is None:
        return None
    if text.startswith("@"):
        text = Path(text[1:]).read_text().replace("\n", ",")
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ParameterError("weights must be comma-separated numbers") from None


def cmd_bound(args) -> int:
    from .analysis import BoundInputs, corollary1_terms, corollary2_terms

    opts = {k: getattr(args, k) for k in (
        "r_max", "gamma", "lipschitz", "diam_a", "delta", "episodes", "step",
        "horizon", "bellman_err", "w1_err", "weights")}
    weights = _parse_weights(args.weights)
    inputs = BoundInputs(
        r_max=args.r_max, gamma=args.gamma, lipschitz=args.lipschitz, diam_A=args.diam_a,
        delta=args.delta, episodes=args.episodes, step=args.step, horizon=args.horizon,
        bellman_err=args.bellman_err, w1_err=args.w1_err, episode_weights=weights,
    )
    terms = corollary2_terms(inputs) if weights is not None else corollary1_terms(inputs)
    lines = [_header("bound", opts).rstrip("\n")]
    lines.append("form=" + ("weighted" if weights is not None else "unweighted"))
    lines += [f"{k}={_num(v)}" for k, v in terms.items()]
    _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def _train_one(job):
    from . import envs, lab

    env, lab_config, seed, scheme_name, path = job
    mdp = envs.get_env(env)
    rows = []
    for rec in lab.run_off_policy_loop(mdp, lab_config, seed):
        rows.append(",".join([
            str(rec.episode), _num(rec.value), _num(rec.lhs_error), _num(rec.rhs_bound),
            _num(rec.eps_q), _num(rec.w1), scheme_name, str(seed), str(rec.buffer_size),
            _num(rec.lhs_weighted), _num(rec.rhs_weighted), _num(rec.eps_q_weighted),
            _num(rec.w1_weighted), _num(rec.lipschitz), _num(rec.clip_violation),
            _num(rec.episode_return),
        ]))
    Path(path).write_text("".join(r + "\n" for r in rows))
    return path


def cmd_train(args) -> int:
    from . import envs, lab

    desk = lab.desk_scheme(args.scheme, args.traj_len)
    opts = {"env": args.env, **_scheme_opts(args, desk), "episodes": args.episodes,
            "traj_len": args.traj_len, "delta": args.delta, "step": args.step,
            "batches": args.batches, "batch_size": args.batch_size, "lr": args.lr,
            "seed": args.seed}
    config = lab.LabConfig(
        _scheme(opts), episodes=args.episodes, traj_len=args.traj_len, delta=args.delta,
        step=args.step, fit=lab.FitSettings(batches=args.batches, batch_size=args.batch_size, lr=args.lr),
    )
    envs.get_env(args.env)  # fail early on a bad environment
    seeds = sorted(set(args.seed))
    with tempfile.TemporaryDirectory(prefix="replaylab-") as tmp:
        jobs = [(args.env, config, s, config.scheme.kind.value, os.path.join(tmp, f"{s}.csv")) for s in seeds]
        if args.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(args.workers) as pool:
                paths = list(pool.map(_train_one, jobs))
        else:
            paths = [_train_one(j) for j in jobs]
        body = "".join(Path(p).read_text() for p in paths)
    _emit(_header("train", opts) + ",".join(TRAIN_COLUMNS) + "\n" + body, args.output)
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify

    names = args.suite or list(verify.SUITES)
    unknown = [n for n in names if n not in verify.SUITES]
    if unknown:
        raise ParameterError(f"unknown suite(s): {', '.join(unknown)}; known: {', '.join(verify.SUITES)}")
    out = io.StringIO()
    out.write(_header("verify", {"suite": args.suite, "seed": args.seed}))
    failed = []
    for res in verify.run_suites(names, seed=args.seed):
        out.write(f"{res.name}: {'PASS' if res.passed else 'FAIL'}\n")
        for c in res.checks:
            out.write(f"  {'ok  ' if c.ok else 'FAIL'} {c.name} = {c.value:.6g} ({c.kind} {c.limit:.3g})\n")
        if not res.passed:
            failed.append(res.name)
    out.write(f"summary: {len(names) - len(failed)}/{len(names)} suites passed\n")
    if failed:
        out.write("failed: " + ", ".join(failed) + "\n")
    _emit(out.getvalue(), args.output)
    return EXIT_VERIFY if failed else EXIT_OK


def _add_scheme_flags(p, default_scheme="uniform"):
    p.add_argument("--scheme", default=default_scheme,
                   choices=["uniform", "one-over-age", "ere-staged", "ere-exact", "ere-approx", "priority"])
    p.add_argument("--N0", type=int, default=None, help="buffer size for ERE formulas")
    p.add_argument("--L0", type=int, default=None, help="maximum episode horizon")
    p.add_argument("--eta", type=float, default=None, help="ERE decay")
    p.add_argument("--c-min", dest="c_min", type=int, default=None, help="minimum ERE window")
    p.add_argument("--K", type=int, default=None, help="updates per episode")
    p.add_argument("--alpha", type=float, default=None, help="priority exponent")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="replaylab", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter, allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"replaylab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", help="key=value file; flags override it")
    common.add_argument("--output", default="-", help="output path, '-' for stdout")

    p = sub.add_parser("profile", parents=[common], allow_abbrev=False,
                       help="expected selection count per insertion step (CSV)")
    _add_scheme_flags(p)
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--updates", type=int, default=1)
    p.add_argument("--mc-runs", dest="mc_runs", type=int, default=0, help="add Monte Carlo columns")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("bound", parents=[common], allow_abbrev=False, help="evaluate the error bound terms")
    p.add_argument("--r-max", dest="r_max", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--lipschitz", type=float, default=1.0)
    p.add_argument("--diam-a", dest="diam_a", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--step", type=int, default=0)
    p.add_argument("--horizon", type=float, default=math.inf)
    p.add_argument("--bellman-err", dest="bellman_err", type=float, default=0.0)
    p.add_argument("--w1-err", dest="w1_err", type=float, default=0.0)
    p.add_argument("--weights", default=None, help="comma-separated episode weights or @file")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("train", parents=[common], allow_abbrev=False,
                       help="off-policy loop with exact error bookkeeping (CSV)")
    p.add_argument("--env", default="chain", help="chain, gridworld or an environment file")
    _add_scheme_flags(p, "ere-approx")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--traj-len", dest="traj_len", type=int, default=40)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--step", type=int, default=0)
    p.add_argument("--batches", type=int, default=50)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--seed", type=int, action="append", default=None, help="repeat for a seed sweep")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", parents=[common], allow_abbrev=False, help="run property suites")
    p.add_argument("--suite", action="append", default=None, help="repeat to pick suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def read_config(path) -> dict:
    """Parse a key=value file; keys use flag names with or without dashes."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    return values


def _apply_config(parser, sub_name, argv):
    """Re-parse with config-file values installed as defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    subparser = parser._subparsers._group_actions[0].choices[sub_name]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in read_config(args.config).items():
        if key == "c-min":
            key = "c_min"
        action = known.get(key)
        if action is None or key in ("config", "help"):
            raise ParameterError(f"unknown config key {key!r}")
        conv = action.type or str
        try:
            if isinstance(action, argparse._AppendAction):
                if any(opt in argv for opt in action.option_strings):
                    continue  # flags replace, not extend, the file's list
                defaults[key] = [conv(v) for v in value.split(",")]
            else:
                defaults[key] = conv(value)
        except ValueError:
            raise ParameterError(f"bad value for {key}: {value!r}") from None
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    from .errors import DivergenceError, FormulaDomainError

    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
            args = _apply_config(parser, args.command, argv)
        except SystemExit as exc:  # argparse usage errors, --help, --version
            return int(exc.code or 0)
        if args.command == "train" and args.seed is None:
            args.seed = [0]
        return args.func(args)
    except (DivergenceError, FormulaDomainError, ArithmeticError, FloatingPointError) as exc:
        print(f"replaylab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParameterError, ValueError) as exc:
        print(f"replaylab: parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAM


if __name__ == "__main__":
    sys.exit(main())
