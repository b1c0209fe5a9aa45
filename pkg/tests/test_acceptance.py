"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict that the conftest hook prints
in the terminal summary. Seeds are fixed up front; Monte Carlo outcomes are
reported as they fall.
"""

import filecmp
import json
import math
import shutil
import time

import numpy as np
from scipy import stats

from smartrel import cli
from smartrel.degpath import GpmParams, PathModel, fit_gpm, gpm_loglik_grad, pack
from smartrel.distfit import LocScaleParams, fit_lifetime, lifetime_loglik_grad
from smartrel.doelab import fit_surrogate, gen_mixture_design, model_matrix
from smartrel.errors import SmartRelError
from smartrel.ispline import SplineBasis
from smartrel.nhpp import (
    IntensityModel,
    bootstrap_pointwise_bands,
    fit_nhpp,
    internal_params,
    model_of,
    nhpp_loglik_grad,
)
from smartrel.oodguard import (
    LinearClassifier,
    auc,
    confidence_score,
    fit_lda,
    min_adversarial_perturbation,
)
from smartrel.relcore import ExposureStep, LifetimeRecord, write_dataset
from smartrel.simgen import (
    apply_use_rate_acceleration,
    simulate_degradation,
    simulate_fleet,
    simulate_lifetime,
    simulate_nhpp,
)
from smartrel.smartframe import (
    GatingModel,
    InterruptiveProcess,
    fit_composite,
    gate_loglik_grad,
    gate_prob,
    simulate_smart,
)
from smartrel.uqvi import BayesLinearModel, MeanFieldGaussian, elbo, elbo_grad, fit_vi

TAU = 730.0
NHPP_TRUTHS = {
    "power_law": (0.7, 2.0),
    "musa_okumoto": (0.05, 0.5),
    "gompertz": (20.0, 0.995, 0.1),
    "weibull_srgm": (20.0, 0.01, 0.8),
}


def verdict(record_property, n, ok, detail, t0, budget=None):
    elapsed = time.perf_counter() - t0
    if budget is not None and elapsed > budget:
        ok = False
        detail += f"; over the {budget:.0f} s budget"
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.1f} s)"
    record_property("acceptance", line)
    print(line)
    assert ok, line


def _fleet(tag, theta, seed, n=50, tau=TAU):
    return simulate_fleet(IntensityModel(tag, theta), None, {f"u{i + 1}": tau for i in range(n)}, seed)


# --------------------------------------------------------------------------


def test_criterion_01_closed_form_oracles(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    t = rng.exponential(10.0, 500)
    c = rng.uniform(5.0, 25.0, 500)
    recs = [LifetimeRecord(f"u{i}", float(min(a, b)), int(a <= b)) for i, (a, b) in enumerate(zip(t, c))]
    fit = fit_lifetime(recs, "weibull", fixed_sigma=1.0)
    ttt = sum(r.time for r in recs) / sum(r.status for r in recs)
    err_exp = abs(math.exp(fit.theta_hat[0]) - ttt) / ttt

    fu = {f"u{i}": float(v) for i, v in enumerate(rng.uniform(100, 400, 30))}
    hist = simulate_fleet(IntensityModel("power_law", (1.0, 7.0)), None, fu, 102)
    hpp = fit_nhpp(hist, None, "power_law", fixed={"beta": 1.0})
    eta_oracle = sum(fu.values()) / sum(h.n_events for h in hist)
    err_hpp = abs(hpp.theta_hat[1] - eta_oracle) / eta_oracle
    ok = err_exp < 1e-6 and err_hpp < 1e-6
    verdict(record_property, 1, ok, f"exponential rel err {err_exp:.1e}, HPP rel err {err_hpp:.1e}", t0, budget=1.0)


def _lifetime_recovery(family):
    mu, sigma = 2.0, 0.7
    zc = math.log(-math.log(0.2)) if family == "weibull" else stats.norm.ppf(0.8)
    censor = math.exp(mu + sigma * zc)  # 20% censored in expectation
    hits = 0
    for seed in range(100):
        fit = fit_lifetime(simulate_lifetime(family, LocScaleParams(mu, sigma), 2000, censor, seed), family)
        hits += fit.converged and abs(fit.theta_hat[0] - mu) < 0.05 and abs(fit.theta_hat[1] - sigma) < 0.05
    return hits


def _gpm_recovery():
    model = PathModel("random_intercept_slope")
    truth = GpmParams([5.0, 1.0], np.diag([0.25, 0.04]), 0.01)
    grid = np.linspace(0.5, 4.0, 8)
    errs = []
    for seed in range(100):
        fit = fit_gpm(simulate_degradation(model, truth, 200, grid, seed), model)
        p = fit.diagnostics["params"]
        S = p.Sigma
        errs.append([
            abs(p.alpha[0] / 5.0 - 1), abs(p.alpha[1] / 1.0 - 1),
            abs(S[0, 0] / 0.25 - 1), abs(S[1, 1] / 0.04 - 1),
            abs(S[0, 1]) / math.sqrt(0.25 * 0.04),  # true covariance is 0: judged on the correlation scale
            abs(p.sigma_eps2 / 0.01 - 1),
        ])
    return np.median(np.array(errs), axis=0)


def _nhpp_recovery(tag):
    theta = np.array(NHPP_TRUTHS[tag])
    est, n_conv = [], 0
    for seed in range(100):
        fit = fit_nhpp(_fleet(tag, tuple(theta), seed), None, tag)
        if fit.converged:
            n_conv += 1
            est.append(fit.theta_hat)
    return np.median(np.array(est), axis=0), n_conv


def test_criterion_02_simulation_recovery(record_property):
    t0 = time.perf_counter()
    parts, ok = [], True
    for family in ("weibull", "lognormal"):
        hits = _lifetime_recovery(family)
        ok &= hits >= 95
        parts.append(f"{family} {hits}/100")
    med = _gpm_recovery()
    ok &= bool(np.all(med < 0.15))
    parts.append(f"GPM worst median rel err {med.max():.3f}")
    for tag, theta in NHPP_TRUTHS.items():
        m, n_conv = _nhpp_recovery(tag)
        ok &= n_conv >= 95
        if tag == "power_law":
            good = 0.6 <= m[0] <= 0.8 and abs(m[1] / theta[1] - 1) < 0.2
        else:
            good = bool(np.all(np.abs(m / np.array(theta) - 1) < 0.2))
        ok &= good
        parts.append(f"{tag} median {np.round(m, 4).tolist()} conv {n_conv}")
    verdict(record_property, 2, ok, "; ".join(parts), t0, budget=600.0)


def test_criterion_03_spline_pipeline(record_property):
    t0 = time.perf_counter()
    hist = _fleet("musa_okumoto", NHPP_TRUTHS["musa_okumoto"], seed=0)
    events = np.concatenate([h.event_times for h in hist])
    grid = np.linspace(0.0, TAU, 10_000)
    ok = True
    for basis in (SplineBasis.from_events(events, TAU), SplineBasis((0.0, 5.0, 40.0, 300.0, TAU)), SplineBasis((0.0, TAU), 2)):
        I = basis.ivalues(grid)
        ok &= bool(np.all(I[0] == 0) and np.all(np.diff(I, axis=0) >= 0) and np.all((I >= 0) & (I <= 1)))
    fit = fit_nhpp(hist, None, "ispline")
    truth = IntensityModel("musa_okumoto", NHPP_TRUTHS["musa_okumoto"])
    mid = np.linspace(0.1 * TAU, 0.9 * TAU, 200)
    rel = np.max(np.abs(model_of(fit).cif(mid) - truth.cif(mid)) / truth.cif(mid))
    ok &= fit.converged and rel <= 0.10
    verdict(record_property, 3, ok, f"basis properties on 1e4 points hold={ok}, ispline max rel err {rel:.3f}", t0)


def test_criterion_04_bootstrap_coverage(record_property):
    t0 = time.perf_counter()
    truth = IntensityModel("power_law", NHPP_TRUTHS["power_law"])
    grid = np.array([0.1, 0.3, 0.5, 0.7, 0.9]) * TAU
    target = truth.cif(grid)
    cover = np.zeros(grid.size)
    failed = 0
    outer = np.random.SeedSequence(404).spawn(200)
    for ss in outer:
        data_seed, boot_seed = ss.spawn(2)
        hist = simulate_fleet(truth, None, {f"u{i + 1}": TAU for i in range(50)}, data_seed)
        try:
            fit = fit_nhpp(hist, None, "power_law")
            bands = bootstrap_pointwise_bands(fit, hist, None, grid, B=300, level=0.95, seed=boot_seed)
        except SmartRelError:  # a failed replicate counts as a miss at every grid point
            failed += 1
            continue
        cover += (bands.lower <= target) & (target <= bands.upper)
    cover /= len(outer)
    ok = bool(np.all((cover >= 0.90) & (cover <= 0.99)))
    verdict(record_property, 4, ok, f"coverage {np.round(cover, 3).tolist()}, failed {failed}", t0, budget=900.0)


def test_criterion_05_composite_round_trip(record_property):
    t0 = time.perf_counter()
    procs = [
        InterruptiveProcess("ood_shift", IntensityModel("power_law", (0.8, 5.0))),
        InterruptiveProcess("adversarial", IntensityModel("musa_okumoto", (0.05, 0.5))),
    ]
    betas = {"ood_shift": [-0.5, 1.0], "adversarial": [0.5, -1.0]}
    gating = GatingModel(betas)
    families = {"ood_shift": "power_law", "adversarial": "musa_okumoto"}
    z0 = [0.3]
    truth = sum(gate_prob(z0, betas[p.label]) * p.intensity.cif(TAU) for p in procs)
    errs = []
    for seed in range(100):
        ss = np.random.SeedSequence(5000 + seed)
        zs = np.random.default_rng(ss.spawn(1)[0]).standard_normal(20)
        systems = [simulate_smart(procs, gating, [float(z)], TAU, s) for z, s in zip(zs, ss.spawn(20))]
        fit = fit_composite(systems, families)
        errs.append(abs(fit.expected_failures(z0, TAU) / truth - 1))
    med = float(np.median(errs))
    verdict(record_property, 5, med < 0.10, f"median rel err {med:.4f} over 100 seeds", t0)


def test_criterion_06_ood_protocol(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    d, k, n = 10, 10, 300
    A = rng.standard_normal((d, d))
    cov = A @ A.T / d + 0.5 * np.eye(d)
    L = np.linalg.cholesky(cov)
    means = rng.normal(0, 3.0, (k, d))
    held = [0, 1]
    shifted = {}
    for j in held:
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        shifted[j] = means[j] + 6.0 * L @ u  # 6 sigma in the shared metric

    def draw(mu, m):
        return mu + rng.standard_normal((m, d)) @ L.T

    train = [j for j in range(k) if j not in held]
    X = np.vstack([draw(means[j], n) for j in train])
    y = np.repeat(train, n)
    est = fit_lda(X, y)
    Xin = np.vstack([draw(means[j], 100) for j in train])
    Xood = np.vstack([draw(shifted[j], 400) for j in held])
    a = auc(confidence_score(est, Xin), confidence_score(est, Xood))

    B = rng.standard_normal((d, d)) + 3 * np.eye(d)
    c = rng.normal(0, 10, d)
    pts = np.vstack([Xin[:50], Xood[:50]])
    s1 = confidence_score(est, pts)
    s2 = confidence_score(fit_lda(X @ B.T + c, y), pts @ B.T + c)
    dev = float(np.max(np.abs(s1 - s2)))
    verdict(record_property, 6, a >= 0.95 and dev <= 1e-8, f"AUC {a:.4f}, affine max dev {dev:.1e}", t0)


def test_criterion_07_adversarial_margin(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    d = 10
    worst = np.inf
    ok = True
    for _ in range(20):
        clf = LinearClassifier(rng.standard_normal(d), float(rng.normal(0, 2)))
        x = rng.normal(0, 3, d)
        p = min_adversarial_perturbation(clf, x)
        g = clf.decision(x)
        ok &= np.sign(clf.decision(p.x_star)) != np.sign(g)
        u = rng.standard_normal((100_000, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        # shortest flipping length along each random direction
        wu = u @ clf.w
        steps = np.where(np.sign(wu) == -np.sign(g), np.abs(g) / np.maximum(np.abs(wu), 1e-300), np.inf)
        ratio = steps.min() / np.linalg.norm(p.r)
        worst = min(worst, ratio)
    ok &= worst >= 1 - 1e-3
    verdict(record_property, 7, bool(ok), f"shortest random-direction flip / closed form = {worst:.5f}", t0)


def test_criterion_08_doe(record_property):
    t0 = time.perf_counter()
    d = gen_mixture_design()
    base = [r.x for r in d.runs if r.rep == 1 and r.run <= 7]
    expected = [(0.01, 0.01, 0.98), (0.01, 0.98, 0.01), (0.98, 0.01, 0.01),
                (0.01, 0.495, 0.495), (0.495, 0.01, 0.495), (0.495, 0.495, 0.01), (1 / 3, 1 / 3, 1 / 3)]
    rows_ok = all(np.allclose(a, b, rtol=0, atol=1e-15) for a, b in zip(base, expected)) and len(base) == 7
    n_runs = d.n_runs
    coef = np.random.default_rng(808).normal(0, 1, 13)
    fit = fit_surrogate(d, model_matrix(d.X(), d.Z()) @ coef)
    coef_err = float(np.max(np.abs(fit.coef - coef)))
    sz = float(np.max(np.abs(fit.constraint_residual())))
    ok = rows_ok and n_runs == 28 and coef_err <= 1e-8 and sz <= 1e-10
    verdict(record_property, 8, ok, f"base rows {rows_ok}, runs {n_runs}, coef err {coef_err:.1e}, sum-to-zero {sz:.1e}", t0)


def test_criterion_09_vi_vs_conjugate(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(909)

    def exact(model):
        prec = model.X.T @ model.X / model.sigma_sq + np.eye(model.d) / model.s0_sq
        cov = np.linalg.inv(prec)
        K = model.sigma_sq * np.eye(model.n) + model.s0_sq * model.X @ model.X.T
        ev = stats.multivariate_normal(np.zeros(model.n), K).logpdf(model.y)
        return cov @ model.X.T @ model.y / model.sigma_sq, cov, ev

    Q, _ = np.linalg.qr(rng.standard_normal((50, 5)))
    Xo = Q * rng.uniform(1, 4, 5)
    mo = BayesLinearModel(Xo, Xo @ rng.normal(0, 1, 5) + rng.normal(0, 0.5, 50), 2.0, 0.25)
    ro = fit_vi(mo)
    mean, cov, ev = exact(mo)
    orth_err = max(np.max(np.abs(ro.q.m - mean)), np.max(np.abs(ro.q.var - np.diag(cov))))

    A = rng.standard_normal((60, 4))
    Xc = A + 0.9 * A[:, [0]]
    mc = BayesLinearModel(Xc, Xc @ rng.normal(0, 1, 4) + rng.normal(0, 0.5, 60), 1.0, 0.25)
    rc = fit_vi(mc)
    mean_c, cov_c, ev_c = exact(mc)
    corr_err = float(np.max(np.abs(rc.q.m - mean_c)))
    under = bool(np.all(rc.q.var <= np.diag(cov_c) + 1e-12))

    mono = all(np.all(np.diff(r.elbo_trace) >= 0) for r in (ro, rc))
    bound = all(elbo(m, MeanFieldGaussian(rng.normal(0, 2, m.d), rng.normal(-1, 1, m.d))) <= e + 1e-9
                for m, e in ((mo, ev), (mc, ev_c)) for _ in range(50))
    bound &= ro.elbo_trace[-1] <= ev + 1e-9 and rc.elbo_trace[-1] <= ev_c + 1e-9
    gap = abs(ro.elbo_trace[-1] - ev)
    ok = orth_err <= 1e-8 and gap <= 1e-8 and corr_err <= 1e-6 and under and mono and bound
    verdict(record_property, 9, ok,
            f"orthogonal err {orth_err:.1e} (evidence gap {gap:.1e}), correlated mean err {corr_err:.1e}, "
            f"variances under={under}, monotone={mono}, bound={bound}", t0)


def _fd_rel_err(f, u, h=1e-6):
    u = np.asarray(u, dtype=float)
    _, g = f(u)
    fd = np.empty_like(u)
    for k in range(u.size):
        step = h * max(1.0, abs(u[k]))
        e = np.zeros_like(u)
        e[k] = step
        fd[k] = (f(u + e)[0] - f(u - e)[0]) / (2 * step)
    return float(np.linalg.norm(np.asarray(g) - fd) / np.linalg.norm(fd))


def test_criterion_10_gradient_audit(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1010)
    worst = {}

    for family in ("weibull", "lognormal"):
        data = simulate_lifetime(family, LocScaleParams(2.0, 0.7), 300, 10.0, 1)
        pts = [np.array([rng.uniform(1, 3), rng.uniform(-1, 0.5)]) for _ in range(10)]
        worst[family] = max(_fd_rel_err(lambda u: lifetime_loglik_grad(data, family, u), p) for p in pts)

    for tag, theta in NHPP_TRUTHS.items():
        hist = _fleet(tag, theta, seed=3, n=10)
        base = internal_params(IntensityModel(tag, theta))
        m = IntensityModel(tag, theta)
        pts = [base + rng.normal(0, 0.1, base.size) for _ in range(10)]
        worst[tag] = max(_fd_rel_err(lambda u: nhpp_loglik_grad(hist, None, m, u), p) for p in pts)
    hist = _fleet("musa_okumoto", NHPP_TRUTHS["musa_okumoto"], seed=4, n=10)
    sfit = fit_nhpp(hist, None, "ispline")
    sm = model_of(sfit)
    worst["ispline"] = max(_fd_rel_err(lambda u: nhpp_loglik_grad(hist, None, sm, u), rng.uniform(0.5, 20, 5))
                           for _ in range(10))

    for tag in ("random_intercept_slope", "random_slope"):
        pm = PathModel(tag)
        S = np.diag([0.25, 0.04]) if pm.q == 2 else np.array([[0.04]])
        paths = simulate_degradation(pm, GpmParams([5.0, 1.0], S, 0.01), 30, np.linspace(0.5, 4, 6), 2)
        base = pack(GpmParams([5.0, 1.0], S, 0.01))
        worst[tag] = max(_fd_rel_err(lambda u: gpm_loglik_grad(paths, pm, u), base + rng.normal(0, 0.2, base.size))
                         for _ in range(10))

    Z = np.column_stack([np.ones(200), rng.standard_normal((200, 2))])
    yb = (rng.random(200) < 0.4).astype(float)
    worst["gates"] = max(_fd_rel_err(lambda b: gate_loglik_grad(Z, yb, b), rng.normal(0, 1, 3)) for _ in range(10))

    X = rng.standard_normal((40, 3))
    vm = BayesLinearModel(X, X @ [1.0, -1.0, 0.5] + rng.normal(0, 0.3, 40), 1.0, 0.09)

    def vi_f(u):
        q = MeanFieldGaussian(u[:3], u[3:])
        gm, gl = elbo_grad(vm, q)
        return elbo(vm, q), np.concatenate([gm, gl])

    worst["elbo"] = max(_fd_rel_err(vi_f, rng.normal(0, 1, 6)) for _ in range(10))
    top = max(worst, key=worst.get)
    ok = all(v <= 1e-4 for v in worst.values())
    verdict(record_property, 10, ok, f"{len(worst)} objectives, worst {top} rel err {worst[top]:.1e}", t0)


def test_criterion_11_use_rate_acceleration(record_property):
    t0 = time.perf_counter()
    m = IntensityModel("power_law", (1.0, 4.0))
    steps = [ExposureStep("u1", 0.0, 30.0, 1.0), ExposureStep("u1", 30.0, 60.0, 0.5)]
    fast = apply_use_rate_acceleration(steps, 10.0)
    seeds = np.random.SeedSequence(1111).spawn(4000)
    base = np.mean([simulate_nhpp(m, steps, 60.0, s).n_events for s in seeds[:2000]])
    accel = np.mean([simulate_nhpp(m, fast, 60.0, s).n_events for s in seeds[2000:]])
    ratio = accel / base
    verdict(record_property, 11, abs(ratio / 10 - 1) <= 0.05, f"count ratio {ratio:.3f} (expected 10)", t0)


# --------------------------------------------------------------------------
# CLI determinism: every subcommand twice in twin directories, then verify
# --------------------------------------------------------------------------


def _cli_inputs(d):
    rng = np.random.default_rng(1212)
    write_dataset(simulate_lifetime("weibull", LocScaleParams(2.0, 0.7), 200, 12.0, 1), d / "life.csv", "lifetime")
    pm = PathModel("random_intercept_slope")
    paths = simulate_degradation(pm, GpmParams([5.0, 1.0], np.diag([0.25, 0.04]), 0.01), 40, np.linspace(0.5, 4, 6), 2)
    write_dataset(paths, d / "deg.csv", "degradation")
    (d / "deg.json").write_text(json.dumps({"model": "random_intercept_slope", "D_f": 9.0, "n_sim": 2000}))
    fu = {f"u{i}": 365.0 for i in range(15)}
    steps = [ExposureStep(u, 0.0, 200.0, 1.0) for u in fu] + [ExposureStep(u, 200.0, 365.0, 2.0) for u in fu]
    hist = simulate_fleet(IntensityModel("power_law", (0.8, 3.0)), steps, fu, 3)
    write_dataset(hist, d / "e.csv", "events")
    write_dataset(hist, d / "f.csv", "followup")
    write_dataset(steps, d / "x.csv", "exposure")
    gz = rng.standard_normal(300)
    gy = rng.random(300) < 1 / (1 + np.exp(-(0.3 + gz)))
    (d / "gates.csv").write_text("label,failed,z1\n" + "".join(f"ood_shift,{int(b)},{z!r}\n" for z, b in zip(gz.tolist(), gy)))
    scen = {
        "processes": [{"label": "ood_shift", "intensity": {"tag": "power_law", "theta": [1.1, 10.0]}}],
        "gates": [{"label": "ood_shift", "beta": [0.0, 1.0]}], "z": [0.5], "horizon": 200.0,
    }
    (d / "s.json").write_text(json.dumps(scen))
    feats = ["label,f1,f2"] + [f"{lab},{a!r},{b!r}" for lab, mu in (("a", 0.0), ("b", 4.0))
                               for a, b in rng.normal(mu, 1, (60, 2)).tolist()]
    (d / "feat.csv").write_text("\n".join(feats) + "\n")
    X = rng.standard_normal((30, 2))
    y = X @ [1.0, -1.0] + rng.normal(0, 0.3, 30)
    (d / "uq.csv").write_text("y,x1,x2\n" + "".join(f"{a!r},{b!r},{c!r}\n" for a, (b, c) in zip(y.tolist(), X.tolist())))


CLI_RUNS = [
    ["fit-lifetime", "--data", "life.csv", "--out", "life.json"],
    ["fit-degradation", "--data", "deg.csv", "--config", "deg.json", "--out", "deg_fit.json", "--cdf", "deg_cdf.csv"],
    ["fit-nhpp", "--events", "e.csv", "--followup", "f.csv", "--exposure", "x.csv", "--model", "ispline",
     "--bootstrap", "200", "--out", "nhpp.json", "--curve", "curve.csv", "--bif", "bif.csv"],
    ["fit-gates", "--data", "gates.csv", "--out", "gates.json"],
    ["simulate", "--scenario", "s.json", "--out", "events.csv", "--summary", "sim.json"],
    ["ood", "--features", "feat.csv", "--out", "scores.csv", "--summary", "ood.json"],
    ["doe", "--design-out", "design.csv"],
    ["uq", "--data", "uq.csv", "--out", "q.json", "--predict", "uq.csv", "--pred-out", "pred.csv"],
]


def test_criterion_12_cli_determinism(record_property, tmp_path, monkeypatch):
    t0 = time.perf_counter()
    monkeypatch.delenv("SMARTREL_SEED", raising=False)
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    _cli_inputs(a)
    shutil.copytree(a, b)
    codes = {}
    for d in (a, b):
        monkeypatch.chdir(d)
        for argv in CLI_RUNS:
            codes[(d.name, argv[0])] = cli.main(argv + ["--seed", "7"])
    bad_codes = [k for k, v in codes.items() if v != 0]
    outputs = sorted(p.name for p in a.iterdir() if not p.name.endswith(".manifest.json"))
    diff = [n for n in outputs if not filecmp.cmp(a / n, b / n, shallow=False)]
    monkeypatch.chdir(a)
    manifests = sorted(a.glob("*.manifest.json"))
    unverified = [m.name for m in manifests if cli.main(["report", "--manifest", m.name, "--verify"]) != 0]
    ok = not bad_codes and not diff and not unverified and len(manifests) == len(CLI_RUNS)
    verdict(record_property, 12, ok,
            f"{len(CLI_RUNS)} commands, {len(outputs)} files compared, differing {diff or 'none'}, "
            f"nonzero exits {bad_codes or 'none'}, manifests verified {len(manifests) - len(unverified)}/{len(manifests)}", t0)
