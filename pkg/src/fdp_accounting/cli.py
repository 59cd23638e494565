"""Command-line interface: ``fdp-account <command> [flags]``.

Commands:
    account       CLT and moments-accountant privacy of a training run.
    calibrate     smallest noise whose CLT accounting meets an (eps, delta) target.
    tradeoff-csv  trade-off curves as ``alpha,beta,curve`` rows.
    verify        numeric-oracle checks of the CLT and accountant gap.
    train-demo    NoisySGD or NoisyAdam logistic regression on a small dataset.

Exit codes: 0 success, 2 invalid flags or dataset, 3 noise below the
supported floor or infeasible calibration, 4 I/O failure, 5 failed check.

Structured reports (``--json-out``) follow schema ``fdp-accounting/report``
version 1: an object with keys ``schema``, ``version``, ``command``,
``inputs``, ``outputs`` (absent when the computation failed) and
``diagnostics``.  Non-finite numbers are written as the strings "inf",
"-inf" and "nan".

Datasets for ``train-demo`` are delimited numeric text with one example per
line and the 0/1 label in the last column.  Commas or whitespace separate
fields and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from importlib import resources

import numpy as np

from . import __version__
from ._validation import check_sigma
from .accounting import AccountantQuery, clt_report, ma_report
from .composition import DEFAULT_SPACING, compose_subsampled_gaussian, gap_check
from .duality import EpsDeltaPoint, calibrate_sigma
from .exceptions import (CalibrationError, DomainError, InfeasibleError, SigmaFloorError,
                         TailMassError)
from .moments import MomentsAccountantConfig, eps_ma, ma_tradeoff_envelope
from .optimizers import LogisticLoss, TrainConfig, run
from .tradeoff import EpsDelta, Gaussian, evaluate, sup_distance

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SIGMA = 3
EXIT_IO = 4
EXIT_VERIFY = 5

SCHEMA = "fdp-accounting/report"
SCHEMA_VERSION = 1
CURVES = ("clt", "ma-point", "ma-envelope", "oracle")
CSV_POINTS = 1000


class _UsageError(Exception):
    pass


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def report_document(command, inputs, outputs=None, diagnostics=None):
    doc = {"schema": SCHEMA, "version": SCHEMA_VERSION, "command": command,
           "inputs": inputs, "diagnostics": diagnostics or {}}
    if outputs is not None:
        doc["outputs"] = outputs
    return _jsonable(doc)


def _write_json(path, doc):
    if path is None:
        return
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _fmt(x, digits=6):
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.{digits}g}"
    return str(x)


def _table(rows):
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


# ---------------------------------------------------------------------------
# shared flags


def _add_run_flags(sp, need_sigma=True):
    g = sp.add_argument_group("run")
    g.add_argument("--n", type=int, help="dataset size")
    g.add_argument("--batch", type=int, help="expected batch size (p = batch / n)")
    g.add_argument("--p", type=float, help="Poisson sampling probability")
    if need_sigma:
        g.add_argument("--sigma", type=float, required=True, help="noise multiplier")
    g.add_argument("--epochs", type=float, help="passes over the data (T = round(epochs / p))")
    g.add_argument("--T", type=int, help="number of iterations")


def _query(args, **extra):
    try:
        return AccountantQuery(sigma=getattr(args, "sigma", 1.0), p=args.p, n=args.n,
                               batch=args.batch, T=args.T, epochs=args.epochs, **extra)
    except DomainError as exc:
        raise _UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# commands


def cmd_account(args):
    if args.delta is None and args.eps is None:
        raise _UsageError("give --delta or --eps")
    q = _query(args, delta=args.delta, eps=args.eps)
    clt = clt_report(q, kappa3=args.kappa3)
    ma = ma_report(q, mode=args.ma_mode)
    rows = [("p", _fmt(q.p, 8)), ("sigma", _fmt(q.sigma)), ("T", str(q.T)),
            ("mu_CLT", _fmt(clt.mu, 6))]
    if q.delta is not None:
        rows += [("delta", _fmt(q.delta)), ("eps_CLT", _fmt(clt.eps, 6)),
                 ("eps_MA", _fmt(ma.eps, 6))]
    else:
        rows += [("eps", _fmt(q.eps)), ("delta_CLT", _fmt(clt.delta, 6)),
                 ("delta_MA", _fmt(ma.delta, 6))]
    for k, v in clt.diagnostics.items():
        if k.startswith("kappa3"):
            rows.append((k, _fmt(v)))
    print(_table(rows))
    outputs = {"clt": clt.as_dict(), "ma": ma.as_dict()}
    diag = {"ma_mode": args.ma_mode, **{k: v for k, v in clt.diagnostics.items()}}
    _write_json(args.json_out, report_document("account", q.inputs(), outputs, diag))
    return EXIT_OK


def cmd_calibrate(args):
    q = _query(args, delta=args.delta)
    res = calibrate_sigma(EpsDeltaPoint(args.eps, args.delta), q.p, q.T)
    inputs = {**q.inputs(), "eps": args.eps, "sigma": None}
    print(_table([("p", _fmt(q.p, 8)), ("T", str(q.T)), ("eps", _fmt(args.eps)),
                  ("delta", _fmt(args.delta)), ("mu_tilde", _fmt(res.mu_tilde, 12)),
                  ("sigma_tilde", _fmt(res.sigma_tilde, 12))]))
    outputs = {"mu_tilde": res.mu_tilde, "sigma_tilde": res.sigma_tilde}
    diag = {"iterations": res.iterations, "residual": res.residual}
    _write_json(args.json_out, report_document("calibrate", inputs, outputs, diag))
    return EXIT_OK


def _curves(args, q, alphas):
    wanted = [c.strip() for c in args.curves.split(",") if c.strip()]
    for c in wanted:
        if c not in CURVES:
            raise _UsageError(f"unknown curve {c!r}; choose from {', '.join(CURVES)}")
    out = []
    cfg = MomentsAccountantConfig(q.sigma, q.p, q.T)
    for c in wanted:
        if c == "clt":
            beta = evaluate(Gaussian(clt_report(q).mu), alphas)
        elif c == "ma-point":
            beta = evaluate(EpsDelta(eps_ma(q.delta, cfg, args.ma_mode), q.delta), alphas)
        elif c == "ma-envelope":
            beta = ma_tradeoff_envelope(cfg, alphas)
        else:
            beta = evaluate(compose_subsampled_gaussian(q.sigma, q.p, q.T, args.spacing), alphas)
        out.append((c, beta))
    return out


def cmd_tradeoff_csv(args):
    q = _query(args, delta=args.delta)
    check_sigma(q.sigma)
    alphas = np.linspace(0.0, 1.0, CSV_POINTS)
    buf = io.StringIO()
    buf.write("alpha,beta,curve\n")
    for name, beta in _curves(args, q, alphas):
        for a, b in zip(alphas.tolist(), beta.tolist()):
            buf.write(f"{a:.12g},{b:.12g},{name}\n")
    text = buf.getvalue()
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK


def _verify_checks(args):
    checks = []
    wanted = args.check or ["clt-oracle", "gaussian", "gap"]
    h = args.spacing
    if "clt-oracle" in wanted:
        T = 234
        p = 0.5028 / math.sqrt(T)
        f = compose_subsampled_gaussian(1.1, p, T, h)
        d = sup_distance(f, Gaussian(0.57))
        checks.append(("oracle vs G_0.57 (sigma=1.1, T=234)", d, args.tol, d <= args.tol))
    if "gaussian" in wanted:
        f = compose_subsampled_gaussian(1.0, 1.0, 4, h)
        d = sup_distance(f, Gaussian(2.0))
        checks.append(("p=1 Gaussian oracle vs G_2 (sigma=1, T=4)", d, 2 * h, d <= 2 * h))
    if "gap" in wanted:
        T = 100_000
        g = gap_check(1.0, 1.0 / math.sqrt(T), T, 1.0)
        margin = g.gap - g.lower_bound
        checks.append(("MA-CLT delta gap at T=1e5, nu=1, sigma=1, eps=1", margin, -1e-4,
                       g.satisfied(1e-4)))
    return checks


def cmd_verify(args):
    checks = _verify_checks(args)
    ok = True
    results = []
    for name, value, limit, passed in checks:
        ok &= passed
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: measured {value:.6g} (limit {limit:.3g})")
        results.append({"check": name, "measured": value, "limit": limit, "passed": passed})
    _write_json(args.json_out, report_document(
        "verify", {"checks": args.check or ["clt-oracle", "gaussian", "gap"],
                   "spacing": args.spacing, "tol": args.tol},
        {"passed": ok, "results": results}))
    return EXIT_OK if ok else EXIT_VERIFY


def load_dataset(path):
    """Read a delimited numeric file; returns (X, y) with y in {0, 1}."""
    if path is None:
        text = resources.files("fdp_accounting").joinpath("data/synthetic_logistic.csv").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise _UsageError(f"line {lineno}: non-numeric field") from exc
    if not rows:
        raise _UsageError("dataset is empty")
    width = len(rows[0])
    if width < 2 or any(len(r) != width for r in rows):
        raise _UsageError("dataset rows must all have the same number (>= 2) of columns")
    data = np.asarray(rows)
    X, y = data[:, :-1], data[:, -1]
    if not np.all(np.isfinite(data)) or not np.all(np.isin(y, (0.0, 1.0))):
        raise _UsageError("features must be finite and labels 0 or 1")
    return X, y


def cmd_train_demo(args):
    X, y = load_dataset(args.data)
    X = np.hstack([X, np.ones((X.shape[0], 1))])
    try:
        cfg = TrainConfig(eta=args.eta, R=args.R, sigma=args.sigma, p=args.p, T=args.T,
                          seed=args.seed, optimizer=args.optimizer)
    except DomainError as exc:
        raise _UsageError(str(exc)) from exc
    if cfg.sigma > 0:
        check_sigma(cfg.sigma)
    res = run((X, y), LogisticLoss(), cfg, delta=args.delta, record_loss=True)
    every = max(1, args.every)
    for t in range(every - 1, len(res.losses), every):
        print(f"step {t + 1:6d}  loss {res.losses[t]:.6f}")
    rep = res.report
    acc = float(np.mean(((X @ res.theta) > 0) == (y > 0.5)))
    rows = [("optimizer", cfg.optimizer), ("n", str(X.shape[0])), ("T", str(cfg.T)),
            ("final loss", _fmt(res.losses[-1] if res.losses else LogisticLoss().value(
                res.theta, X, y))),
            ("train accuracy", _fmt(acc, 4))]
    if rep.private:
        rows += [("mu_CLT", _fmt(rep.mu, 10)), ("delta", _fmt(args.delta)),
                 ("eps_CLT", _fmt(rep.eps, 6))]
    else:
        rows += [("privacy", "NON-PRIVATE (sigma = 0, mu = inf)")]
    print(_table(rows))
    inputs = {"data": args.data or "bundled:synthetic_logistic.csv", "sigma": cfg.sigma,
              "p": cfg.p, "T": cfg.T, "eta": cfg.eta, "R": cfg.R, "seed": cfg.seed,
              "optimizer": cfg.optimizer, "delta": args.delta}
    outputs = {"privacy": rep.as_dict(), "theta": res.theta.tolist(),
               "losses": res.losses}
    _write_json(args.json_out, report_document("train-demo", inputs, outputs,
                                               {"batch_sizes": res.batch_sizes}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(prog="fdp-account",
                                     description="f-DP / Gaussian-DP privacy accounting")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("account", help="CLT and moments-accountant privacy of a run")
    _add_run_flags(sp)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--ma-mode", choices=("grid", "continuous"), default="grid")
    sp.add_argument("--kappa3", action="store_true", help="report third-moment diagnostics")
    sp.add_argument("--json-out")
    sp.set_defaults(func=cmd_account)

    sp = sub.add_parser("calibrate", help="noise multiplier meeting an (eps, delta) target")
    _add_run_flags(sp, need_sigma=False)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--json-out")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("tradeoff-csv", help="write trade-off curves as CSV")
    _add_run_flags(sp)
    sp.add_argument("--delta", type=float, default=1e-5)
    sp.add_argument("--curves", default="clt,ma-point,ma-envelope",
                    help=f"comma-separated subset of {', '.join(CURVES)}")
    sp.add_argument("--ma-mode", choices=("grid", "continuous"), default="grid")
    sp.add_argument("--spacing", type=float, default=DEFAULT_SPACING)
    sp.add_argument("--out", default="-", help="output path, '-' for stdout")
    sp.set_defaults(func=cmd_tradeoff_csv)

    sp = sub.add_parser("verify", help="compare the numeric oracle with the CLT")
    sp.add_argument("--check", action="append", choices=("clt-oracle", "gaussian", "gap"))
    sp.add_argument("--spacing", type=float, default=DEFAULT_SPACING)
    sp.add_argument("--tol", type=float, default=0.01)
    sp.add_argument("--json-out")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("train-demo", help="noisy logistic regression demo")
    sp.add_argument("--data", help="dataset path (bundled synthetic data by default)")
    sp.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    sp.add_argument("--sigma", type=float, default=1.1)
    sp.add_argument("--p", type=float, default=0.05)
    sp.add_argument("--T", type=int, default=400)
    sp.add_argument("--eta", type=float, default=0.5)
    sp.add_argument("--R", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--delta", type=float, default=1e-5)
    sp.add_argument("--every", type=int, default=50, help="print the loss every N steps")
    sp.add_argument("--json-out")
    sp.set_defaults(func=cmd_train_demo)
    return parser


def _fail(args, exc, code):
    print(f"error: {exc}", file=sys.stderr)
    path = getattr(args, "json_out", None)
    if path is not None and code != EXIT_IO:
        inputs = {k: v for k, v in vars(args).items()
                  if k not in ("func", "command", "json_out")}
        try:
            _write_json(path, report_document(
                args.command, inputs, None,
                {"error": type(exc).__name__, "message": str(exc), "exit_code": code}))
        except OSError:
            return EXIT_IO
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        return _fail(args, exc, EXIT_SIGMA)
    except (_UsageError, DomainError, CalibrationError) as exc:
        return _fail(args, exc, EXIT_USAGE)
    except SigmaFloorError as exc:
        return _fail(args, exc, EXIT_SIGMA)
    except TailMassError as exc:
        return _fail(args, exc, EXIT_VERIFY)
    except OSError as exc:
        return _fail(args, exc, EXIT_IO)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
