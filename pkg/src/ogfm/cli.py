"""Command-line interface: fit, cross-validate, trace paths, run scenarios.

All numeric output uses 17 significant digits so files round-trip exactly
and downstream regression tests can compare bytes.  Files are written
atomically (temp file then rename) into the output directory; on any
failure the partial outputs of the current command are removed and a
one-line diagnostic goes to stderr.  Outcome and variable indices in text
files are 1-based.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import ProblemData
from .grouping import build_grouping, parse_group_file
from .path import PathSpec, cross_validate, fit_path
from .simulate import parse_scenario_file, results_to_csv, run_scenario
from .solver import SolverOptions, fit
from .weights import WeightScheme, build_penalty_config

FMT = "%.17g"


def parse_matrix(path):
    """Read a delimited numeric matrix, dense or triplet-sparse.

    Dense: comma- or whitespace-delimited rows, one optional header row
    (detected by a non-numeric first line).  Sparse: a ``%%sparse rows cols``
    header followed by ``i j value`` lines with 1-based indices; the result
    stays a sparse matrix.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines()]
    content = [(i, ln.strip()) for i, ln in enumerate(lines, 1) if ln.strip()]
    if not content:
        raise ValueError(f"{path}: empty file")

    first_no, first = content[0]
    if first.startswith("%%sparse"):
        parts = first.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{first_no}: header must be "
                             "'%%sparse rows cols'")
        try:
            rows, cols = int(parts[1]), int(parts[2])
        except ValueError:
            raise ValueError(f"{path}:{first_no}: bad sparse dimensions") from None
        ii, jj, vv = [], [], []
        for ln_no, line in content[1:]:
            cells = line.split()
            if len(cells) != 3:
                raise ValueError(f"{path}:{ln_no}: sparse entries are 'i j value'")
            try:
                i, j, v = int(cells[0]), int(cells[1]), float(cells[2])
            except ValueError:
                raise ValueError(f"{path}:{ln_no}: non-numeric sparse entry") from None
            if not (1 <= i <= rows and 1 <= j <= cols):
                raise ValueError(f"{path}:{ln_no}: index ({i},{j}) outside "
                                 f"{rows}x{cols}")
            ii.append(i - 1)
            jj.append(j - 1)
            vv.append(v)
        return sp.csr_matrix((vv, (ii, jj)), shape=(rows, cols))

    delim = "," if "," in first else None

    def parse_row(line, ln_no):
        cells = [c for c in line.split(delim)] if delim else line.split()
        out = []
        for ci, cell in enumerate(cells, 1):
            cell = cell.strip()
            try:
                out.append(float(cell))
            except ValueError:
                raise ValueError(
                    f"{path}:{ln_no}: non-numeric cell {cell!r} "
                    f"(row {ln_no}, column {ci})") from None
        return out

    start = 0
    try:
        first_row = parse_row(first, first_no)
    except ValueError:
        start = 1  # header row
        first_row = None
    rows = [] if first_row is None else [first_row]
    width = None if first_row is None else len(first_row)
    for ln_no, line in content[start if first_row is None else 1:]:
        row = parse_row(line, ln_no)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ValueError(f"{path}:{ln_no}: ragged row "
                             f"({len(row)} cells, expected {width})")
        rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


class _OutputTracker:
    """Atomic file writes with rollback of everything written on failure."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written = []

    def write_text(self, name, text):
        target = self.out_dir / name
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=f".{name}.")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(target)
        return target

    def rollback(self):
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass


def _coefficients_csv(coef):
    K = coef.n_outcomes
    header = ",".join(f"outcome_{k + 1}" for k in range(K))
    lines = [header, ",".join(FMT % v for v in coef.intercept)]
    for j in range(coef.p):
        lines.append(",".join(FMT % v for v in coef.beta[j]))
    return "\n".join(lines) + "\n"


def _load_problem(args):
    X = parse_matrix(args.x)
    Y = parse_matrix(args.y)
    if sp.issparse(Y):
        Y = np.asarray(Y.todense())
    data = ProblemData(X, Y, standardize=not args.no_standardize)
    if args.groups:
        user_levels, fuse = parse_group_file(args.groups, data.n_outcomes)
    else:
        user_levels, fuse = None, None
    grouping = build_grouping(data.n_outcomes, user_levels, fuse)
    return data, grouping


def _scheme(args):
    return WeightScheme(adaptive=args.adaptive, gamma1=args.gamma1,
                        gamma2=args.gamma2)


def _path_spec(args):
    return PathSpec(n_lambda=args.nlambda,
                    lambda_min_ratio=args.lambda_min_ratio,
                    alphas=tuple(float(s) for s in args.alphas.split(",")))


def cmd_fit(args, out):
    data, grouping = _load_problem(args)
    config = build_penalty_config(data, grouping, _scheme(args),
                                  lam=args.lam, alpha=args.alpha)
    result = fit(data, grouping, config, SolverOptions())
    out.write_text("coefficients.csv", _coefficients_csv(result.coef))
    summary = "\n".join([
        f"lambda={FMT % result.lam}",
        f"alpha={FMT % result.alpha}",
        f"objective={FMT % result.objective}",
        f"iterations={result.iterations}",
        f"converged={result.converged}",
        f"support_size={result.support_size}",
        f"fused_pairs={result.n_fused}",
    ]) + "\n"
    out.write_text("fit_summary.txt", summary)
    return 0


def cmd_cv(args, out):
    data, grouping = _load_problem(args)
    spec = _path_spec(args)
    scheme = _scheme(args)
    cv = cross_validate(data, grouping, scheme, spec, k=args.kfolds,
                        seed=args.seed, options=SolverOptions(),
                        n_jobs=args.threads)
    lines = ["lambda,alpha,mean_mse,se_mse"]
    for ai in range(cv.alphas.size):
        for li in range(cv.lambdas.shape[1]):
            lines.append(",".join(FMT % v for v in (
                cv.lambdas[ai, li], cv.alphas[ai],
                cv.mean_mse[ai, li], cv.se_mse[ai, li])))
    out.write_text("cv_table.csv", "\n".join(lines) + "\n")

    config = build_penalty_config(data, grouping, scheme,
                                  lam=cv.best_lambda, alpha=cv.best_alpha)
    result = fit(data, grouping, config, SolverOptions())
    out.write_text("coefficients.csv", _coefficients_csv(result.coef))
    print(f"best lambda={FMT % cv.best_lambda} alpha={FMT % cv.best_alpha} "
          f"mean_mse={FMT % cv.mean_mse[cv.best]}")
    return 0


def cmd_path(args, out):
    data, grouping = _load_problem(args)
    spec = _path_spec(args)
    scheme = _scheme(args)
    cv = cross_validate(data, grouping, scheme, spec, k=args.kfolds,
                        seed=args.seed, options=SolverOptions(),
                        n_jobs=args.threads)
    config = build_penalty_config(data, grouping, scheme)
    # trace the path on the exact grid the CV surface was computed on
    results = fit_path(data, grouping, config, spec, SolverOptions(),
                       lambdas=cv.lambdas)
    lines = ["lambda,alpha,variable,outcome,coefficient,is_cv_min"]
    for res in results:
        mark = int(res.lam == cv.best_lambda and res.alpha == cv.best_alpha)
        lam_s, alpha_s = FMT % res.lam, FMT % res.alpha
        beta = res.coef.beta
        for j in range(beta.shape[0]):
            for k in range(beta.shape[1]):
                lines.append(f"{lam_s},{alpha_s},{j + 1},{k + 1},"
                             f"{FMT % beta[j, k]},{mark}")
    out.write_text("path_long.csv", "\n".join(lines) + "\n")
    return 0


def cmd_simulate(args, out):
    scenario, run_kwargs = parse_scenario_file(args.scenario)
    if args.seed is not None:
        run_kwargs["seed"] = args.seed
    run_kwargs["protocol"] = replace(run_kwargs["protocol"],
                                     n_jobs=args.threads)
    rows = run_scenario(scenario, **run_kwargs)
    out.write_text("results.csv", results_to_csv(rows))
    return 0


def _add_common(sub):
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--seed", type=int, default=None, help="random seed")
    sub.add_argument("--threads", type=int,
                     default=int(os.environ.get("OGFM_THREADS",
                                                os.cpu_count() or 1)),
                     help="parallel tasks (default: OGFM_THREADS or cores)")


def _add_data(sub):
    sub.add_argument("--x", required=True, help="predictor matrix file")
    sub.add_argument("--y", required=True, help="response matrix file")
    sub.add_argument("--groups", default=None, help="group specification file")
    sub.add_argument("--no-standardize", action="store_true",
                     help="skip scaling X columns to unit variance")
    sub.add_argument("--adaptive", action="store_true",
                     help="data-adaptive penalty weights")
    sub.add_argument("--gamma1", type=float, default=0.5)
    sub.add_argument("--gamma2", type=float, default=0.5)


def _add_grid(sub):
    sub.add_argument("--nlambda", type=int, default=50)
    sub.add_argument("--lambda-min-ratio", type=float, default=None)
    sub.add_argument("--alphas", default="0,1e-5,1e-3,1e-2,0.1,0.5",
                     help="comma-separated mixing values")
    sub.add_argument("--kfolds", type=int, default=10)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ogfm",
        description="Multi-response regression with overlapping group and "
                    "fused sparsity")
    subs = parser.add_subparsers(dest="command", required=True)

    p_fit = subs.add_parser("fit", help="fit one penalty configuration")
    _add_data(p_fit)
    p_fit.add_argument("--lambda", dest="lam", type=float, required=True,
                       help="overall penalty strength")
    p_fit.add_argument("--alpha", type=float, default=0.0,
                       help="fused fraction of the penalty")
    _add_common(p_fit)

    p_cv = subs.add_parser("cv", help="cross-validate the penalty grid")
    _add_data(p_cv)
    _add_grid(p_cv)
    _add_common(p_cv)

    p_path = subs.add_parser("path", help="trace coefficient paths")
    _add_data(p_path)
    _add_grid(p_path)
    _add_common(p_path)

    p_sim = subs.add_parser("simulate", help="run a synthetic scenario")
    p_sim.add_argument("--scenario", required=True,
                       help="key=value scenario file")
    _add_common(p_sim)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and args.command in ("cv", "path"):
        args.seed = 0
    out = _OutputTracker(args.out)
    handlers = {"fit": cmd_fit, "cv": cmd_cv, "path": cmd_path,
                "simulate": cmd_simulate}
    try:
        return handlers[args.command](args, out)
    except Exception as exc:  # one-line diagnostic, partial outputs removed
        out.rollback()
        print(f"ogfm {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
