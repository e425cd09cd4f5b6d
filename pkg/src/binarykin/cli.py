"""``binarykin`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  BINARYKIN_THREADS
caps the numba worker count (0 or unset = all cores).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from .errors import BinaryKinError
from .kinematics import MassPair

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _json_default(x):
    if isinstance(x, Path):
        return str(x)
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _clean(x):
    """NaN and inf are not JSON; emit them as strings."""
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def _emit_json(obj) -> None:
    print(json.dumps(_clean(obj), indent=2, default=_json_default))


def _apply_threads() -> None:
    raw = os.environ.get("BINARYKIN_THREADS", "").strip()
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        raise _UsageError(f"BINARYKIN_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise _UsageError(f"BINARYKIN_THREADS must be >= 0, got {n}")
    import numba

    if n > 0:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


# ------------------------------------------------------------- commands


def _cmd_kinematics(args) -> int:
    from .diagnostics import kinematics_check

    if (args.mass_a is None) != (args.mass_b is None):
        raise _UsageError("give both --mass-a and --mass-b or neither")
    masses = None if args.mass_a is None else MassPair(args.mass_a, args.mass_b)
    _emit_json(kinematics_check(args.samples, args.seed, masses, jacobian_samples=args.jacobian_samples))
    return EXIT_OK


def _cmd_qtest(args) -> int:
    from .diagnostics import QTEST_HEADER, qtest
    from .fieldio import table_to_text

    rows = qtest(MassPair(args.mass_a, args.mass_b), args.gamma, resolutions=args.resolutions,
                 pairing_resolutions=args.pairing_resolutions, states=args.states, seed=args.seed)
    text = table_to_text(QTEST_HEADER, rows, {"gamma": args.gamma, "mass_a": args.mass_a, "mass_b": args.mass_b})
    _write_or_print(text, args.output)
    if args.plot:
        from .report import plot_qtest

        plot_qtest(rows, args.plot)
    return EXIT_OK


def _cmd_moments(args) -> int:
    from .diagnostics import moments_report
    from .fieldio import read_field

    f, meta = read_field(args.state)
    try:
        ma = args.mass_a if args.mass_a is not None else float(meta["mass_a"])
        mb = args.mass_b if args.mass_b is not None else float(meta["mass_b"])
    except KeyError:
        raise _UsageError("the state file carries no masses; pass --mass-a and --mass-b") from None
    _emit_json(moments_report(f, MassPair(ma, mb)))
    return EXIT_OK


def _cmd_coercivity(args) -> int:
    from .collision import AngularKernel
    from .diagnostics import coercivity_report
    from .fieldio import write_table

    rep = coercivity_report(MassPair(args.mass_a, args.mass_b), args.gamma, args.grid, epsilon=args.eps,
                            m_trunc=args.mtrunc, kernel=AngularKernel(args.kernel),
                            full_spectrum=args.spectrum is not None)
    if args.spectrum is not None:
        write_table(args.spectrum, ["index", "eigenvalue", "tolerance"],
                    [[int(i), v, t] for i, v, t in rep.spectrum], {"gamma": args.gamma, "grid": args.grid})
        from .report import plot_spectrum

        plot_spectrum(rep.spectrum[:, 1], Path(args.spectrum).with_suffix(".png"))
        rep.summary["spectrum_csv"] = str(args.spectrum)
    _emit_json(rep.summary)
    return EXIT_OK


def _cmd_decay(args) -> int:
    from .diagnostics import DECAY_HEADER, kernel_decay_rows
    from .fieldio import table_to_text

    rows = kernel_decay_rows(MassPair(args.mass_a, args.mass_b), args.gamma, args.speeds, args.weight_power,
                             epsilon=args.eps, m_trunc=args.mtrunc)
    meta = {"gamma": args.gamma, "weight_power": args.weight_power, "mass_a": args.mass_a, "mass_b": args.mass_b,
            "epsilon": args.eps}
    _write_or_print(table_to_text(DECAY_HEADER, rows, meta), args.output)
    if args.plot:
        from .report import plot_decay

        plot_decay(rows, args.plot)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    from .config import load_config
    from .diagnostics import simulate

    cfg = load_config(args.config)
    out = simulate(cfg, args.output_dir)
    _emit_json(out.summary)
    if out.summary["status"] != "ok":
        print(f"simulate: {out.summary['status']}: {out.summary['diagnosis']}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from .diagnostics import selftest

    passed, rows = selftest(args.output_dir, args.seed)
    for name, value, tol, ok in rows:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.3e} (limit {tol:.1e})")
    return EXIT_OK if passed else EXIT_FAILURE


def _write_or_print(text: str, path) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="binarykin", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def masses(sp, a=7.0, b=8.0):
        sp.add_argument("--mass-a", type=float, default=a)
        sp.add_argument("--mass-b", type=float, default=b)

    k = sub.add_parser("kinematics-check", help="conservation and Jacobian residuals of the collision map")
    k.add_argument("--samples", type=int, default=10**6)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--jacobian-samples", type=int, default=100)
    masses(k, None, None)
    k.set_defaults(func=_cmd_kinematics)

    q = sub.add_parser("qtest", help="equilibrium annihilation and invariant pairing convergence (CSV)")
    q.add_argument("--gamma", type=float, default=-1.0)
    masses(q)
    q.add_argument("--resolutions", type=_ints, default=[17, 25, 33])
    q.add_argument("--pairing-resolutions", type=_ints, default=[9, 11, 13])
    q.add_argument("--states", type=int, default=5)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--output", help="CSV path (default stdout)")
    q.add_argument("--plot", help="PNG path")
    q.set_defaults(func=_cmd_qtest)

    m = sub.add_parser("moments", help="conservation functionals and macroscopic fields of a state file (JSON)")
    m.add_argument("--state", required=True)
    m.add_argument("--mass-a", type=float)
    m.add_argument("--mass-b", type=float)
    m.set_defaults(func=_cmd_moments)

    c = sub.add_parser("coercivity", help="coercivity constant of the linearized operator (JSON)")
    c.add_argument("--gamma", type=float, default=-1.0)
    masses(c)
    c.add_argument("--grid", type=int, default=9, help="velocity points per axis (odd)")
    c.add_argument("--eps", type=float, default=0.25)
    c.add_argument("--mtrunc", type=float, default=6.0)
    c.add_argument("--kernel", choices=("abscos", "cos2"), default="abscos")
    c.add_argument("--spectrum", help="write the full deflated spectrum to this CSV")
    c.set_defaults(func=_cmd_coercivity)

    d = sub.add_parser("kernel-decay", help="weighted integral of the kernel along a ray (CSV)")
    d.add_argument("--gamma", type=float, default=-1.0)
    d.add_argument("--speeds", type=_floats, default=[1.0, 2.0, 4.0, 8.0])
    d.add_argument("--weight-power", type=float, default=0.0)
    d.add_argument("--eps", type=float, default=0.25)
    d.add_argument("--mtrunc", type=float, default=6.0)
    masses(d)
    d.add_argument("--output", help="CSV path (default stdout)")
    d.add_argument("--plot", help="PNG path")
    d.set_defaults(func=_cmd_decay)

    s = sub.add_parser("simulate", help="run the perturbation solver from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir", help="overrides output_dir from the config")
    s.set_defaults(func=_cmd_simulate)

    t = sub.add_parser("selftest", help="quick deterministic property suite")
    t.add_argument("--output-dir", default="selftest-out")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        _apply_threads()
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"binarykin: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BinaryKinError, OSError, ValueError) as exc:
        print(f"binarykin {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
