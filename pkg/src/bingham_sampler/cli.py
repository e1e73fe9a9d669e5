"""Command-line front end: `bingham sample | posterior | validate`.

Output is JSON-lines on stdout (or --out); diagnostics go to stderr.  Exit
codes: 0 success, 2 parse/usage error, 3 dimension or validation error,
4 nonpositive noise level on the posterior path.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import validation
from .linalg import eigendecompose
from .matrix_io import FORMATS, MatrixFile, MatrixFormatError, \
    MatrixValidationError, infer_format, read_matrix
from .posterior import Observation, mmse_estimate, posterior_sample
from .sampler import SamplerConfig, sample_bingham, shift_spectrum

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_BAD_GAMMA = 4


def _resolve_seed(value) -> int:
    if value is not None:
        return value
    env = os.environ.get("BINGHAM_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise MatrixFormatError(f"BINGHAM_SEED is not an integer: {env!r}")


def _load(path: str, fmt: str | None):
    mf = MatrixFile(path, fmt if fmt is not None else infer_format(path))
    return read_matrix(mf)


def _emit(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _sample_lines(a, count: int, cfg: SamplerConfig):
    batch = sample_bingham(a, count, cfg)
    shift = shift_spectrum(eigendecompose(a))
    lines = [
        json.dumps({"x": x.tolist(), "proposals": int(k)})
        for x, k in zip(batch.samples, batch.proposals_used)
    ]
    lines.append(json.dumps({
        "acceptance_rate": batch.total_acceptance_rate,
        "seed": batch.seed,
        "n": shift.n,
        "gap": shift.gap,
    }))
    return lines, batch


def cmd_sample(args) -> int:
    try:
        a = _load(args.matrix, args.format)
        cfg = SamplerConfig(seed=_resolve_seed(args.seed),
                            max_rejections=args.max_rejections,
                            cdf_tolerance=args.tolerance)
    except (MatrixFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (MatrixValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        lines, _ = _sample_lines(a, args.count, cfg)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    _emit(lines, args.out)
    print(f"{args.count} samples", file=sys.stderr)
    return EXIT_OK


def cmd_posterior(args) -> int:
    if args.gamma <= 0.0:
        print("error: gamma must be positive", file=sys.stderr)
        return EXIT_BAD_GAMMA
    try:
        y = _load(args.observation, args.format)
        cfg = SamplerConfig(seed=_resolve_seed(args.seed),
                            max_rejections=args.max_rejections,
                            cdf_tolerance=args.tolerance)
    except (MatrixFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (MatrixValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        obs = Observation(y, args.gamma)
        batch = posterior_sample(obs, args.count, cfg)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    summary = mmse_estimate(batch)
    lines = [
        json.dumps({"x": x.tolist(), "proposals": int(k)})
        for x, k in zip(batch.samples, batch.proposals_used)
    ]
    lines.append(json.dumps({
        "mmse": summary.mmse.tolist(),
        "top_direction": summary.top_direction.tolist(),
        "trace": float(np.trace(summary.mmse)),
    }))
    a = obs.Y.array / (2.0 * args.gamma * args.gamma)
    shift = shift_spectrum(eigendecompose(a))
    lines.append(json.dumps({
        "acceptance_rate": batch.total_acceptance_rate,
        "seed": batch.seed,
        "n": shift.n,
        "gap": shift.gap,
    }))
    _emit(lines, args.out)
    print(f"{args.count} samples", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        seed = _resolve_seed(args.seed)
    except MatrixFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        result = validation.run_suite(args.suite, seed=seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    _emit([json.dumps(result.report)], args.out)
    if args.figures is not None:
        from . import report

        paths = report.render_figures(result, args.figures)
        for p in paths:
            print(f"figure: {p}", file=sys.stderr)
    return EXIT_OK if result.passed else 1


def _add_sampling_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=FORMATS, default=None,
                   help="input format (default: by file extension)")
    p.add_argument("--count", type=int, default=100,
                   help="number of samples (default 100)")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default: $BINGHAM_SEED, else 0)")
    p.add_argument("--out", default=None,
                   help="output path (default standard output)")
    p.add_argument("--max-rejections", type=int, default=1_000_000,
                   help="abort after this many rejection rounds")
    p.add_argument("--tolerance", type=float, default=1e-13,
                   help="CDF inversion tolerance")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bingham",
        description="Exact sampling from p(x) ∝ exp(x'Ax) on the unit sphere",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("sample", help="draw samples for a matrix file")
    ps.add_argument("--matrix", required=True, help="path to the matrix A")
    _add_sampling_flags(ps)
    ps.set_defaults(func=cmd_sample)

    pp = sub.add_parser("posterior",
                        help="posterior over unit vectors given Y = xx' + noise")
    pp.add_argument("--observation", required=True,
                    help="path to the observed matrix Y")
    pp.add_argument("--gamma", type=float, required=True,
                    help="noise standard deviation (must be > 0)")
    _add_sampling_flags(pp)
    pp.set_defaults(func=cmd_posterior)

    pv = sub.add_parser("validate", help="run a validation suite")
    pv.add_argument("--suite", default="all",
                    choices=validation.SUITE_NAMES,
                    help="which suite to run (default all)")
    pv.add_argument("--seed", type=int, default=None)
    pv.add_argument("--out", default=None,
                    help="report path (default standard output)")
    pv.add_argument("--figures", default=None, metavar="DIR",
                    help="also render figures into DIR")
    pv.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
