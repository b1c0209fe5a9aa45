"""Batch command-line front end.

Every run writes its declared outputs plus a manifest JSON recording the
argument vector, input and output SHA-256 digests, the effective seed and
the package version. ``smartrel report --manifest M --verify`` re-executes
the recorded run and checks that every output hash matches.

Exit codes: 0 success, 2 invalid input, 3 estimation failure (partial
diagnostics are still written to ``--out``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FitError, InputError, NonConvergence, SmartRelError

SEED_ENV = "SMARTREL_SEED"

EXIT_OK, EXIT_INPUT, EXIT_FIT = 0, 2, 3


class _Run:
    """Tracks inputs, outputs and the seed of one invocation."""

    def __init__(self, args):
        self.args = args
        self.inputs: list = []
        self.outputs: list = []
        self.seed = None

    def read(self, path):
        if path is None:
            return None
        p = Path(path)
        if not p.is_file():
            raise InputError(f"{path}: no such file")
        self.inputs.append(str(path))
        return str(path)

    def write(self, path) -> str:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(str(path))
        return str(path)

    def resolve_seed(self):
        if self.args.seed is not None:
            self.seed = int(self.args.seed)
        elif os.environ.get(SEED_ENV):
            try:
                self.seed = int(os.environ[SEED_ENV])
            except ValueError:
                raise InputError(f"{SEED_ENV} must be an integer") from None
        else:
            self.seed = 0
        return self.seed


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])


def _grid(arg: str | None, hi: float, n: int = 101) -> np.ndarray:
    """``start:stop:num`` or a comma list; default ``n`` points on [0, hi]."""
    if not arg:
        return np.linspace(0.0, hi, n)
    if ":" in arg:
        a, b, k = arg.split(":")
        return np.linspace(float(a), float(b), int(k))
    return np.array([float(v) for v in arg.split(",")])


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


MODEL_TAGS = ("power_law", "musa_okumoto", "gompertz", "weibull_srgm", "ispline")


def _fit_config(run: _Run, allowed: set) -> dict:
    """Read ``--config`` for the fit commands; flags win over config values."""
    a = run.args
    if not a.config:
        return {}
    path = run.read(a.config)
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: config must be a JSON object")
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise InputError(f"{path}: unknown config fields {unknown}; allowed {sorted(allowed)}")
    if a.seed is None and "seed" in cfg and not os.environ.get(SEED_ENV):
        a.seed = int(cfg["seed"])
    return cfg


def _tol(cfg: dict) -> dict:
    tols = cfg.get("tolerances", {})
    if not isinstance(tols, dict) or set(tols) - {"fit"}:
        raise InputError('config "tolerances" must be an object with an optional "fit" field')
    return {"tol": float(tols["fit"])} if "fit" in tols else {}


def cmd_fit_lifetime(run: _Run):
    from .distfit import fit_lifetime, fit_report
    from .relcore import load_dataset

    a = run.args
    cfg = _fit_config(run, {"family", "seed", "tolerances"})
    family = a.family or cfg.get("family", "weibull")
    data = load_dataset(run.read(a.data), "lifetime")
    fit = fit_lifetime(data, family, **_tol(cfg))
    report = fit_report(fit)
    _dump_json(report, run.write(a.out))
    if not fit.converged:
        raise NonConvergence("lifetime fit did not converge", fit)


def cmd_fit_degradation(run: _Run):
    from .degpath import PathModel, failure_time_cdf, fit_gpm
    from .relcore import load_dataset

    a = run.args
    cfg = json.loads(Path(run.read(a.config)).read_text()) if a.config else {}
    model_tag = a.model or cfg.get("model", "random_intercept_slope")
    D_f = a.threshold if a.threshold is not None else cfg.get("D_f")
    n_sim = a.n_sim or cfg.get("n_sim", 10_000)
    if a.seed is None and "seed" in cfg and not os.environ.get(SEED_ENV):
        a.seed = int(cfg["seed"])
    seed = run.resolve_seed()
    paths = load_dataset(run.read(a.data), "degradation")
    model = PathModel(model_tag)
    fit = fit_gpm(paths, model)
    report = fit.to_dict()
    report["loglik_quadrature"] = fit.diagnostics["loglik_quadrature"]
    report["n_units"] = len(paths)
    _dump_json(report, run.write(a.out))
    if not fit.converged:
        raise NonConvergence("degradation fit did not converge", fit)
    if a.cdf:
        if D_f is None:
            raise InputError("--cdf needs a threshold (--threshold or D_f in --config)")
        t_max = max(float(p.times[-1]) for p in paths)
        t = _grid(a.t_grid, 2 * t_max)
        t = t[t > 0]
        fc = failure_time_cdf(fit.diagnostics["params"], model, float(D_f), t, int(n_sim), seed)
        _write_csv(run.write(a.cdf), ["t", "cdf", "mc_se"], zip(fc.t, fc.cdf, fc.mc_se))


def cmd_fit_nhpp(run: _Run):
    from .nhpp import (
        bif_curve,
        bootstrap_pointwise_bands,
        expected_vs_observed,
        fit_nhpp,
        model_of,
    )
    from .relcore import load_recurrent

    a = run.args
    cfg = _fit_config(run, {"model", "knots", "seed", "bootstrap_B", "tolerances"})
    tag = a.model or cfg.get("model")
    if tag not in MODEL_TAGS:
        raise InputError(f"NHPP model must be one of {', '.join(MODEL_TAGS)} (--model or config), got {tag!r}")
    knots = a.knots if a.knots is not None else int(cfg.get("knots", 5))
    n_boot = a.bootstrap if a.bootstrap is not None else int(cfg.get("bootstrap_B", 0))
    seed = run.resolve_seed()
    hist, expo = load_recurrent(run.read(a.events), run.read(a.followup), run.read(a.exposure))
    fit = fit_nhpp(hist, expo, tag, n_basis=knots, **_tol(cfg))
    report = fit.to_dict()
    if "knots" in fit.diagnostics:
        report["knots"] = list(fit.diagnostics["knots"])
    if fit.diagnostics.get("pinned"):
        report["pinned"] = list(fit.diagnostics["pinned"])
    report["n_units"] = len(hist)
    report["n_events"] = sum(h.n_events for h in hist)
    _dump_json(report, run.write(a.out))
    if not fit.converged:
        raise NonConvergence("NHPP fit did not converge", fit)
    tau = max(h.follow_up_end for h in hist)
    t = _grid(a.t_grid, tau)
    model = model_of(fit)
    if a.curve:
        cur = expected_vs_observed(fit, hist, expo, t)
        lower = upper = [None] * t.size
        if n_boot > 0:
            bands = bootstrap_pointwise_bands(fit, hist, expo, t, B=n_boot, seed=seed, min_B=1)
            lower, upper = bands.expected_lower, bands.expected_upper
            report["bootstrap"] = {"B": bands.n_replicates, "failed": bands.n_failed, "level": bands.level}
            _dump_json(report, a.out)
        _write_csv(
            run.write(a.curve),
            ["t", "expected", "observed", "lower", "upper"],
            zip(cur.t, cur.expected, cur.observed, lower, upper),
        )
    if a.bif:
        tb = np.minimum(t, model.basis.tau) if model.tag == "ispline" else t
        _write_csv(run.write(a.bif), ["t", "lambda0"], zip(t, bif_curve(model, tb)))


def _read_gate_rows(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["label", "failed"]:
            raise InputError(f"{path}:1: header must start with label,failed")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            if row[1] not in ("0", "1"):
                raise InputError(f"{path}:{lineno}: failed must be 0 or 1")
            try:
                z = tuple(float(v) for v in row[2:])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric covariate") from None
            rows.append((row[0], z, row[1] == "1"))
    return rows


def cmd_fit_gates(run: _Run):
    from .smartframe import fit_gates

    a = run.args
    fits = fit_gates(_read_gate_rows(run.read(a.data)))
    out = {
        label: {"beta": g.beta, "std_errors": g.std_errors, "loglik": g.loglik, "n": g.n, "n_failed": g.n_failed}
        for label, g in sorted(fits.items())
    }
    _dump_json(out, run.write(a.out))


def cmd_simulate(run: _Run):
    from .smartframe import GatingModel, process_from_dict, simulate_smart

    a = run.args
    sc = json.loads(Path(run.read(a.scenario)).read_text())
    if a.seed is None and not os.environ.get(SEED_ENV) and "seed" in sc:
        a.seed = int(sc["seed"])
    seed = run.resolve_seed()
    try:
        procs = [process_from_dict(p) for p in sc["processes"]]
        gating = GatingModel({g["label"]: g["beta"] for g in sc["gates"]})
        z, horizon = sc.get("z", []), float(sc["horizon"])
    except (KeyError, TypeError) as e:
        raise InputError(f"{a.scenario}: malformed scenario ({e})") from None
    stream = simulate_smart(procs, gating, z, horizon, seed)
    _write_csv(run.write(a.out), ["time", "label", "failed"], ((e.time, e.label, int(e.failed)) for e in stream.events))
    if a.summary:
        _dump_json(
            {
                "n_events": len(stream.events),
                "n_failures": len(stream.failures()),
                "horizon": horizon,
                "z": list(stream.z),
                "seed": seed,
                "metadata": stream.metadata,
            },
            run.write(a.summary),
        )


def _read_features(path):
    labels, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "label" or len(header) < 2:
            raise InputError(f"{path}:1: header must be label,f_1,...,f_d")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric feature") from None
            labels.append(row[0])
    return np.array(labels, dtype=object), np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)


def cmd_ood(run: _Run):
    from .oodguard import auc, calibrate_threshold, confidence_score, fit_lda, roc_sweep

    a = run.args
    labels, X = _read_features(run.read(a.features))
    train = labels != "?"
    est = fit_lda(X[train], labels[train])
    in_scores = confidence_score(est, X[train])
    thr = a.threshold if a.threshold is not None else calibrate_threshold(est, in_scores, a.target_fpr)
    summary = {"threshold": thr, "ridge": est.ridge, "ridge_applied": est.ridge_applied,
               "classes": list(est.labels), "counts": list(est.counts)}
    score_labels, S = labels, X
    if a.score:
        score_labels, S = _read_features(run.read(a.score))
    s = np.atleast_1d(confidence_score(est, S))
    _write_csv(
        run.write(a.out),
        ["row_id", "score", "flag"],
        ((i + 1, float(v), "ood" if v < thr else "in_distribution") for i, v in enumerate(s)),
    )
    if a.roc:
        known = {str(c) for c in est.labels}
        is_ood = np.array([str(l) not in known and l != "?" for l in score_labels])
        is_in = np.array([str(l) in known for l in score_labels])
        if not is_ood.any() or not is_in.any():
            raise InputError("--roc needs scored rows from both training classes and unseen classes")
        thr_s, fpr, tpr = roc_sweep(s[is_in], s[is_ood])
        _write_csv(run.write(a.roc), ["threshold", "fpr", "tpr"], zip(thr_s, fpr, tpr))
        summary["auc"] = auc(s[is_in], s[is_ood])
    if a.summary:
        _dump_json(summary, run.write(a.summary))


def cmd_doe(run: _Run):
    from . import doelab

    a = run.args
    levels = doelab.CAPTION_LEVELS if a.levels == "caption" else doelab.DEFAULT_LEVELS
    if a.design_out:
        design = doelab.gen_mixture_design(min_prop=a.min_prop, replicates=a.replicates, levels=levels)
        doelab.write_design_csv(design, run.write(a.design_out))
    if a.design and a.responses:
        design = doelab.read_design_csv(run.read(a.design), a.min_prop)
        y = doelab.read_responses_csv(run.read(a.responses), design)
        fit = doelab.fit_surrogate(design, y)
        if not a.out:
            raise InputError("--out is required when fitting")
        _dump_json(fit.to_dict(), run.write(a.out))
        if a.grid_prefix:
            for z in doelab.level_combinations():
                pts, yhat = doelab.predict_simplex_grid(fit, z, a.resolution, a.min_prop)
                doelab.write_grid_csv(pts, yhat, run.write(f"{a.grid_prefix}_z1{z[0]}_z2{z[1]}.csv"))
    elif not a.design_out:
        raise InputError("doe needs --design-out, or --design with --responses")


def _read_xy(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "y":
            raise InputError(f"{path}:1: header must be y,x_1,...,x_d")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric value") from None
    M = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return M[:, 0], M[:, 1:]


def cmd_uq(run: _Run):
    from .uqvi import BayesLinearModel, fit_vi, posterior_predict

    a = run.args
    cfg = json.loads(Path(run.read(a.config)).read_text()) if a.config else {}
    y, X = _read_xy(run.read(a.data))
    model = BayesLinearModel(X, y, float(cfg.get("s0_sq", 1.0)), float(cfg.get("sigma_sq", 1.0)))
    res = fit_vi(model)
    out = {
        "m": res.q.m,
        "log_var": res.q.log_var,
        "elbo": res.elbo_trace[-1],
        "n_iter": res.n_iter,
        "converged": res.converged,
        "s0_sq": model.s0_sq,
        "sigma_sq": model.sigma_sq,
    }
    _dump_json(out, run.write(a.out))
    if not res.converged:
        raise NonConvergence("VI did not converge")
    if a.predict:
        Xn = _read_predictors(run.read(a.predict))
        mean, var = posterior_predict(model, res.q, Xn)
        _write_csv(run.write(a.pred_out or a.out + ".pred.csv"), ["row_id", "mean", "variance"],
                   ((i + 1, float(m), float(v)) for i, (m, v) in enumerate(zip(np.atleast_1d(mean), np.atleast_1d(var)))))


def _read_predictors(path):
    """Rows of x_1..x_d; a leading ``y`` column is ignored."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None) or []
        skip = 1 if header and header[0] == "y" else 0
        try:
            rows = [[float(v) for v in row[skip:]] for row in reader if row]
        except ValueError:
            raise InputError(f"{path}: non-numeric value") from None
    return np.array(rows, dtype=float).reshape(len(rows), len(header) - skip)


def cmd_report(run: _Run):
    a = run.args
    man = json.loads(Path(run.read(a.manifest)).read_text())
    lines = [f"command: {man['command']}", f"seed: {man['seed']}", f"version: {man['version']}"]
    for p, h in man["inputs"].items():
        lines.append(f"input  {p} {h[:12]}")
    for p, h in man["outputs"].items():
        lines.append(f"output {p} {h[:12]}")
    ok = True
    if a.verify:
        base = man.get("cwd", ".")
        for p, h in man["inputs"].items():
            q = Path(base, p)
            if not q.is_file() or _sha256(q) != h:
                raise InputError(f"input {p} is missing or changed since the recorded run")
        argv = list(man["argv"])
        if man["seed"] is not None and "--seed" not in argv:
            argv += ["--seed", str(man["seed"])]
        prev = os.getcwd()
        try:
            os.chdir(base)
            code = main(argv, _manifest=False)
            if code != man.get("exit_code", 0):
                ok = False
                lines.append(f"re-run exit code {code} != recorded {man.get('exit_code', 0)}")
            for p, h in man["outputs"].items():
                same = Path(p).is_file() and _sha256(p) == h
                ok &= same
                lines.append(f"verify {p} {'ok' if same else 'MISMATCH'}")
        finally:
            os.chdir(prev)
    text = "\n".join(lines) + "\n"
    if a.out:
        Path(run.write(a.out)).write_text(text)
    sys.stdout.write(text)
    if not ok:
        raise InputError("re-run outputs differ from the manifest")


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smartrel", description="Reliability analysis for AI systems.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--seed", type=int, default=None, help=f"RNG seed (default ${SEED_ENV}, else 0)")
        sp.add_argument("--manifest", default=None, help="manifest path (default <out>.manifest.json)")
        return sp

    sp = add("fit-lifetime", cmd_fit_lifetime, "censored Weibull/lognormal MLE")
    sp.add_argument("--data", required=True)
    sp.add_argument("--config", default=None, help="JSON {family, seed, tolerances: {fit}}")
    sp.add_argument("--family", choices=("weibull", "lognormal"), default=None, help="default weibull")
    sp.add_argument("--out", required=True)

    sp = add("fit-degradation", cmd_fit_degradation, "general path model fit and failure-time cdf")
    sp.add_argument("--data", required=True)
    sp.add_argument("--config", default=None, help="JSON {model, D_f, n_sim, seed}")
    sp.add_argument("--model", choices=("random_intercept_slope", "random_slope"), default=None)
    sp.add_argument("--threshold", type=float, default=None, help="failure threshold D_f")
    sp.add_argument("--n-sim", type=int, default=None)
    sp.add_argument("--t-grid", default=None, help="start:stop:num or comma list")
    sp.add_argument("--out", required=True)
    sp.add_argument("--cdf", default=None, help="cdf CSV (t, cdf, mc_se)")

    sp = add("fit-nhpp", cmd_fit_nhpp, "NHPP recurrent-event fit")
    sp.add_argument("--events", required=True)
    sp.add_argument("--followup", required=True)
    sp.add_argument("--exposure", default=None)
    sp.add_argument("--config", default=None, help="JSON {model, knots, seed, bootstrap_B, tolerances: {fit}}")
    sp.add_argument("--model", default=None, choices=MODEL_TAGS)
    sp.add_argument("--knots", type=int, default=None, help="number of I-spline basis functions (default 5)")
    sp.add_argument("--t-grid", default=None)
    sp.add_argument("--bootstrap", type=int, default=None, help="bootstrap replicates for curve bands (default 0 = none)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--curve", default=None, help="CSV (t, expected, observed, lower, upper)")
    sp.add_argument("--bif", default=None, help="CSV (t, lambda0)")

    sp = add("fit-gates", cmd_fit_gates, "logistic gate fits per process")
    sp.add_argument("--data", required=True, help="CSV label,failed,z_1..z_h")
    sp.add_argument("--out", required=True)

    sp = add("simulate", cmd_simulate, "simulate a composite interruptive-event scenario")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--summary", default=None)

    sp = add("ood", cmd_ood, "Mahalanobis confidence scores and OOD flags")
    sp.add_argument("--features", required=True, help="training CSV label,f_1..f_d ('?' rows are scored only)")
    sp.add_argument("--score", default=None, help="rows to score (default: the features file)")
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--target-fpr", type=float, default=0.05)
    sp.add_argument("--out", required=True)
    sp.add_argument("--roc", default=None, help="threshold sweep CSV (unseen labels are OOD)")
    sp.add_argument("--summary", default=None)

    sp = add("doe", cmd_doe, "mixture design generation and surrogate fit")
    sp.add_argument("--design-out", default=None)
    sp.add_argument("--levels", choices=("full", "caption"), default="full")
    sp.add_argument("--replicates", type=int, default=2)
    sp.add_argument("--min-prop", type=float, default=0.01)
    sp.add_argument("--design", default=None)
    sp.add_argument("--responses", default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--grid-prefix", default=None)
    sp.add_argument("--resolution", type=int, default=50)

    sp = add("uq", cmd_uq, "mean-field VI for Bayesian linear regression")
    sp.add_argument("--data", required=True, help="CSV y,x_1..x_d")
    sp.add_argument("--config", default=None, help="JSON {s0_sq, sigma_sq}")
    sp.add_argument("--out", required=True)
    sp.add_argument("--predict", default=None)
    sp.add_argument("--pred-out", default=None)

    sp = sub.add_parser("report", help="summarize or re-verify a manifest")
    sp.set_defaults(func=cmd_report, seed=None)
    sp.add_argument("--manifest", required=True, help="manifest JSON written by an earlier run")
    sp.add_argument("--verify", action="store_true")
    sp.add_argument("--out", default=None)
    return p


def _write_manifest(run: _Run, argv, code):
    a = run.args
    if a.command == "report":
        return
    path = a.manifest or (f"{a.out}.manifest.json" if getattr(a, "out", None) else
                          f"{getattr(a, 'design_out', None) or 'smartrel'}.manifest.json")
    argv = [v for i, v in enumerate(argv) if v != "--manifest" and (i == 0 or argv[i - 1] != "--manifest")]
    man = {
        "command": a.command,
        "argv": argv,
        "cwd": os.getcwd(),
        "seed": run.seed,
        "version": __version__,
        "exit_code": code,
        "inputs": {p: _sha256(p) for p in dict.fromkeys(run.inputs)},
        "outputs": {p: _sha256(p) for p in dict.fromkeys(run.outputs) if Path(p).is_file()},
    }
    _dump_json(man, path)


def main(argv=None, *, _manifest: bool = True) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    run = _Run(args)
    code = EXIT_OK
    try:
        args.func(run)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_INPUT
    except FitError as e:
        print(f"fit failed: {e}", file=sys.stderr)
        out = getattr(args, "out", None)
        if out and e.result is not None:
            _dump_json({"error": str(e), "partial": e.result.to_dict(), "diagnostics": {
                k: v for k, v in e.result.diagnostics.items() if isinstance(v, (int, float, str))}}, out)
            if out not in run.outputs:
                run.outputs.append(out)
        code = EXIT_FIT
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_INPUT
    except SmartRelError as e:
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_INPUT
    if _manifest:
        _write_manifest(run, argv, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
