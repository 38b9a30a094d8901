"""Command line interface: ``oem {fit,cv,predict,bench,convert}``.

Exit status is 0 on success, 2 on usage errors and 1 on data or numeric
errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench as _bench
from .cv import cv_generic, select, xval_fast
from .errors import DimensionMismatchError, OEMError, PenaltyError
from .glm import LogisticConfig, canonical_mode, fit_logistic_path
from .io import (
    ModelArtifact,
    export_csv,
    import_csv,
    load_matrix,
    load_model,
    open_mmapped,
    predict,
    read_binary,
    read_vector,
    save_model,
    write_binary,
)
from .prox import GROUP_FAMILIES, canonical_family, make_specs
from .solver import PathConfig, fit

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Parsing helpers (all run before any data file is opened)
# ---------------------------------------------------------------------------


def _number_list(text: str, what: str) -> list[float]:
    src = text
    if text.startswith("@"):
        try:
            src = Path(text[1:]).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read {what} file {text[1:]!r}: {exc.strerror}") from None
    toks = [t for t in src.replace("\n", ",").replace(" ", ",").split(",") if t.strip()]
    try:
        return [float(t) for t in toks]
    except ValueError as exc:
        raise UsageError(f"bad {what}: {exc}") from None


def parse_groups(text: str) -> np.ndarray:
    """Group labels inline (``"1,1,2,2"``) or from ``@file``; labels must be gap-free integers."""
    vals = _number_list(text, "groups")
    if not vals:
        raise UsageError("groups list is empty")
    if any(v != int(v) for v in vals):
        raise UsageError("group labels must be integers")
    labels = np.array(vals, dtype=np.int64)
    present = np.unique(labels)
    expected = np.arange(present[0], present[0] + present.size)
    if not np.array_equal(present, expected):
        missing = sorted(int(v) for v in set(expected) - set(present))
        raise UsageError(f"group labels must be consecutive; missing {missing[:5]}")
    return labels


def _config(args) -> dict:
    """Validate everything that does not depend on the data."""
    try:
        fams = [canonical_family(t) for t in args.penalty.split(",") if t.strip()]
    except PenaltyError as exc:
        raise UsageError(str(exc)) from None
    if not fams:
        raise UsageError("--penalty is empty")
    groups = parse_groups(args.groups) if args.groups else None
    if groups is None and any(f in GROUP_FAMILIES for f in fams):
        raise UsageError("group penalties need --groups")
    vw = np.array(_number_list(args.var_weights, "variable weights")) if args.var_weights else None
    gw = np.array(_number_list(args.grp_weights, "group weights")) if args.grp_weights else None
    lam = tuple(_number_list(args.lambdas, "lambdas")) if args.lambdas else None
    try:
        path = PathConfig(nlambda=args.nlambda, lambda_min_ratio=args.lambda_min_ratio,
                          user_lambda=lam, tol=args.tol, maxit=args.maxit,
                          compute_loss=args.compute_loss)
        mode = canonical_mode(args.hessian)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if args.alpha is not None and not 0 <= args.alpha <= 1:
        raise UsageError("--alpha must lie in [0, 1]")
    if not 0 <= args.tau <= 1:
        raise UsageError("--tau must lie in [0, 1]")
    return {"families": fams, "groups": groups, "var_weights": vw, "grp_weights": gw,
            "path": path, "mode": mode}


def _is_binary(path) -> bool:
    return str(path).endswith((".oemx", ".bin"))


def _load_xy(args):
    if _is_binary(args.x) and not args.y:
        raise UsageError("binary --x files hold features only; give the response with --y")
    X, y, names = load_matrix(args.x, has_header=not args.no_header,
                              response=None if args.y else args.response)
    if args.y:
        y = read_vector(args.y)
    if y is None:
        raise UsageError("no response: give --y or --response")
    if y.shape[0] != X.n_rows:
        raise DimensionMismatchError(f"X has {X.n_rows} rows but the response has {y.shape[0]}")
    return X, y, names


def _specs(conf, p, args):
    return make_specs(conf["families"], p, gamma=args.gamma,
                      alpha=0.5 if args.alpha is None else args.alpha, tau=args.tau,
                      groups=conf["groups"], var_weights=conf["var_weights"],
                      grp_weights=conf["grp_weights"])


def _fit_any(X, y, specs, conf, args):
    intercept, standardize = not args.no_intercept, not args.no_standardize
    if args.family == "logistic":
        lc = LogisticConfig(hessian_mode=conf["mode"], outer_tol=args.outer_tol,
                            outer_maxit=args.outer_maxit, path=conf["path"])
        return fit_logistic_path(X, y, specs, lc, intercept=intercept, standardize=standardize,
                                 threads=args.threads), lc
    return fit(X, y, specs, conf["path"], intercept=intercept, standardize=standardize,
               threads=args.threads), conf["path"]


def _emit(args, summary: dict, text: str) -> None:
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    elif not args.quiet:
        print(text)


def _path_table(res) -> str:
    lines = []
    for lab, pf in res.paths.items():
        nz = pf.nonzero
        L = pf.lambdas.shape[0]
        lines.append(f"{lab}: {L} lambdas from {pf.lambdas[0]:.6g} to {pf.lambdas[-1]:.6g}; "
                     f"{int((~pf.converged).sum())} not converged")
        picks = sorted(set(np.linspace(0, L - 1, min(L, 10)).round().astype(int)))
        lines.append("  lambda        nonzero")
        for i in picks:
            lines.append(f"  {pf.lambdas[i]:<12.6g}  {int(nz[i])}")
    return "\n".join(lines)


def _write_paths_csv(path, res, names):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "lambda", "variable", "coef"])
        for lab, pf in res.paths.items():
            for i, lam in enumerate(pf.lambdas):
                w.writerow([lab, repr(float(lam)), "(intercept)", repr(float(pf.intercepts[i]))])
                for j in range(res.n_vars):
                    w.writerow([lab, repr(float(lam)), names[j] if names else f"x{j + 1}",
                                repr(float(pf.coef[j, i]))])


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    conf = _config(args)
    X, y, names = _load_xy(args)
    specs = _specs(conf, X.n_cols, args)
    res, _ = _fit_any(X, y, specs, conf, args)
    if args.out:
        save_model(args.out, res)
    if args.paths_csv:
        _write_paths_csv(args.paths_csv, res, names)
    summary = {"models": {lab: {"nlambda": int(pf.lambdas.shape[0]),
                                "nonzero": pf.nonzero.tolist(),
                                "not_converged": int((~pf.converged).sum())}
                          for lab, pf in res.paths.items()},
               "family": res.family, "n_obs": res.n_obs, "n_vars": res.n_vars}
    _emit(args, summary, _path_table(res))
    return EXIT_OK


def cmd_cv(args) -> int:
    conf = _config(args)
    method = args.method or ("xval" if args.family == "linear" else "cv")
    if method == "xval" and args.family != "linear":
        raise UsageError("fast cross-validation (--method xval) is only available for linear models")
    if args.folds < 2:
        raise UsageError("--folds must be >= 2")
    X, y, _ = _load_xy(args)
    specs = _specs(conf, X.n_cols, args)
    kw = dict(K=args.folds, seed=args.seed, intercept=not args.no_intercept,
              standardize=not args.no_standardize, threads=args.threads)
    if method == "xval":
        res = xval_fast(X, y, specs, conf["path"], **kw)
    else:
        cfg = conf["path"] if args.family == "linear" else LogisticConfig(
            hessian_mode=conf["mode"], outer_tol=args.outer_tol, outer_maxit=args.outer_maxit,
            path=conf["path"])
        res = cv_generic(X, y, args.family, specs, cfg, **kw)
    res.meta = {"seed": args.seed}
    if args.out:
        save_model(args.out, ModelArtifact(fit=res.fit, cv=res))
    if args.curves_csv:
        with open(args.curves_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "lambda", "cvm", "cvsd", "cvup", "cvlo"])
            for lab in res.labels:
                up, lo = res.cvup(lab), res.cvlo(lab)
                for i, lam in enumerate(res.lambdas[lab]):
                    w.writerow([lab, repr(float(lam)), repr(float(res.cvm[lab][i])),
                                repr(float(res.cvsd[lab][i])), repr(float(up[i])), repr(float(lo[i]))])
    sel = select(res)
    rows = []
    for lab in res.labels:
        i = res.index_min(lab)
        rows.append((lab, float(res.cvm[lab][i]), res.lambda_min(lab), res.lambda_1se(lab),
                     int(res.fit[lab].nonzero[i])))
    lines = [f"{'model':<18}{'min cv error':>16}{'lambda.min':>14}{'lambda.1se':>14}{'nonzero':>9}"]
    lines += [f"{r[0]:<18}{r[1]:>16.6g}{r[2]:>14.6g}{r[3]:>14.6g}{r[4]:>9d}" for r in rows]
    lines.append(f"best model: {sel['best_model']}")
    summary = dict(sel, method=method, nfolds=res.nfolds,
                   nonzero_at_min={r[0]: r[4] for r in rows})
    _emit(args, summary, "\n".join(lines))
    return EXIT_OK


def cmd_predict(args) -> int:
    s = None
    if args.s:
        s = [t.strip() for t in args.s.split(",") if t.strip()]
        s = [t if t.replace("_", ".") in ("lambda.min", "lambda.1se") else _number_list(t, "s")[0]
             for t in s]
    model = load_model(args.model)
    X, _, _ = load_matrix(args.x, has_header=not args.no_header,
                          response=args.drop_column if args.drop_column is not None else None)
    pred = predict(model, X, which=args.which, s=s, type=args.type)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow([f"s{i + 1}" for i in range(pred.shape[1])])
        for row in pred:
            w.writerow([repr(float(v)) for v in row])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_bench(args) -> int:
    timings, checks = {}, {}
    if "multi" in args.suite:
        t, c = _bench.bench_multi_penalty(n=args.n, p=args.p, seed=args.seed, repeat=args.repeat,
                                          threads=args.threads)
        timings["multi_penalty"], checks["multi_penalty"] = t, c
    if "backends" in args.suite:
        t, c = _bench.bench_backends(n=args.n, p=args.sparse_p, density=args.density,
                                     seed=args.seed, repeat=args.repeat)
        timings["backends"], checks["backends"] = t, c
    if "cv" in args.suite:
        t, c = _bench.bench_cv(n=min(args.n, args.cv_n), p=min(args.p, 50), K=args.folds,
                               seed=args.seed)
        timings["cv"], checks["cv"] = t, c
    record = {"config": {"n": args.n, "p": args.p, "sparse_p": args.sparse_p,
                         "density": args.density, "seed": args.seed, "folds": args.folds,
                         "threads": args.threads, "suite": sorted(args.suite)},
              "checks": checks}
    if args.out:
        Path(args.out).write_text(json.dumps(record, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    if args.json:
        print(json.dumps({"timings": timings, "checks": checks}, sort_keys=True))
    elif not args.quiet:
        for name, t in timings.items():
            print(name + ": " + ", ".join(f"{k}={v:.4g}" for k, v in t.items()))
        for name, c in checks.items():
            print(name + " checks: " + json.dumps(c, sort_keys=True))
    ok = all([checks.get("multi_penalty", {}).get("multi_lasso_bitwise_equal_single", True),
              checks.get("cv", {}).get("cvm_agree_1e-8", True),
              checks.get("backends", {}).get("sparse_vs_dense_max_diff", 0.0) <= 1e-10,
              checks.get("backends", {}).get("mmapped_vs_dense_max_diff", 0.0) <= 1e-10])
    if not ok:
        print("error: a benchmark cross-check failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_convert(args) -> int:
    src, dst = str(args.input), str(args.output)
    to_bin, from_bin = _is_binary(dst), _is_binary(src)
    if to_bin == from_bin:
        raise UsageError("convert needs exactly one .oemx/.bin side and one CSV side")
    if to_bin:
        X, y, _ = import_csv(src, has_header=not args.no_header, response=args.response)
        write_binary(dst, X)
        if y is not None and args.y_out:
            export_csv(args.y_out, y[:, None], names=["y"])
        elif y is not None:
            print("warning: response column dropped; use --y-out to keep it", file=sys.stderr)
    else:
        if args.response is not None:
            raise UsageError("--response applies only when converting from CSV")
        X = read_binary(src) if args.in_memory else open_mmapped(src)
        export_csv(dst, X)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parser
# ---------------------------------------------------------------------------


def _add_data(p):
    p.add_argument("--x", required=True, help="design: CSV or binary .oemx file")
    p.add_argument("--y", help="response file (one column); otherwise taken from the CSV")
    p.add_argument("--response", default="y", help="response column name or 0-based index (default: y)")
    p.add_argument("--no-header", action="store_true", help="CSV files have no header row")


def _add_model(p):
    p.add_argument("--penalty", default="lasso", help="comma separated penalties, e.g. lasso,mcp,grp.lasso")
    p.add_argument("--gamma", type=float, default=None, help="MCP/SCAD gamma (defaults 3 and 3.7)")
    p.add_argument("--alpha", type=float, default=None, help="elastic net mixing (default 0.5)")
    p.add_argument("--tau", type=float, default=0.5, help="sparse group lasso mixing")
    p.add_argument("--groups", help="group labels inline '1,1,2,...' or @file")
    p.add_argument("--var-weights", help="variable penalty weights inline or @file")
    p.add_argument("--grp-weights", help="group penalty weights inline or @file")
    p.add_argument("--nlambda", type=int, default=100)
    p.add_argument("--lambda-min-ratio", type=float, default=1e-3)
    p.add_argument("--lambdas", help="explicit lambda values inline or @file")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--maxit", type=int, default=500)
    p.add_argument("--compute-loss", action="store_true")
    p.add_argument("--family", choices=["linear", "logistic"], default="linear")
    p.add_argument("--hessian", default="exact", help="logistic Hessian: exact or upper_bound")
    p.add_argument("--outer-tol", type=float, default=1e-6)
    p.add_argument("--outer-maxit", type=int, default=100)
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--threads", type=int, default=1)


def _add_output(p):
    p.add_argument("--out", help="output file")
    p.add_argument("--json", action="store_true", help="print a machine readable summary")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oem", description="Penalized regression by orthogonalizing EM")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit regularization paths")
    _add_data(p)
    _add_model(p)
    _add_output(p)
    p.add_argument("--paths-csv", help="write coefficient paths as tidy CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="cross-validate and select lambda")
    _add_data(p)
    _add_model(p)
    _add_output(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=["xval", "cv"], help="xval (fast, linear) or cv (refit)")
    p.add_argument("--curves-csv", help="write CV curves as tidy CSV")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="predict from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--drop-column", help="column of --x to ignore (e.g. a response)")
    p.add_argument("--which", help="model label (default: CV best model or first)")
    p.add_argument("--s", help="lambda values, lambda_min or lambda_1se (comma separated)")
    p.add_argument("--type", choices=["link", "response"], default="link")
    p.add_argument("--out", help="CSV output (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="internal timing comparisons with cross-checks")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--sparse-p", type=int, default=200)
    p.add_argument("--density", type=float, default=0.01)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--cv-n", type=int, default=20_000, help="rows used by the CV comparison")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--suite", nargs="+", choices=["multi", "backends", "cv"],
                   default=["multi", "backends", "cv"])
    _add_output(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("convert", help="convert between CSV and the binary matrix format")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--response", default=None, help="CSV column to split off as the response")
    p.add_argument("--y-out", help="where to write the split-off response")
    p.add_argument("--in-memory", action="store_true", help="load the binary file instead of mapping it")
    p.set_defaults(func=cmd_convert)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"oem {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OEMError as exc:
        print(f"oem {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError) as exc:
        print(f"oem {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
