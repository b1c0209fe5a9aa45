import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from smartrel import nhpp
from smartrel.errors import (
    ConstraintViolation,
    EventOutsideExposure,
    InputError,
    NonConvergence,
    OutOfDomain,
    TooFewEvents,
)
from smartrel.ispline import SplineBasis, ispline_basis_eval
from smartrel.nhpp import IntensityModel, baseline_cif, fit_nhpp, model_of, nhpp_loglik
from smartrel.relcore import ExposureStep, RecurrentHistory
from smartrel.simgen import simulate_fleet

TRUTHS = {
    "power_law": (0.7, 2.0),
    "musa_okumoto": (0.05, 0.5),
    "gompertz": (20.0, 0.995, 0.1),
    "weibull_srgm": (20.0, 0.01, 0.8),
}


def fleet(tag, theta, n=50, tau=730.0, seed=0):
    follow = {f"u{i + 1}": tau for i in range(n)}
    return simulate_fleet(IntensityModel(tag, theta), None, follow, seed)


# -- baseline forms ---------------------------------------------------------------


def test_musa_okumoto_reference_value():
    m = IntensityModel("musa_okumoto", (1.0, 2.0))
    assert baseline_cif(m, 0.0) == 0.0
    assert baseline_cif(m, (math.e - 1) / 2) == pytest.approx(1.0, abs=1e-14)


def test_gompertz_zero_at_origin_and_formula():
    th = (5.0, 0.9, 0.3)
    m = IntensityModel("gompertz", th)
    assert baseline_cif(m, 0.0) == pytest.approx(0.0, abs=1e-15)
    t = 7.5
    assert baseline_cif(m, t) == pytest.approx(th[0] * th[2] ** (th[1] ** t) - th[0] * th[2], rel=1e-13)


def test_power_law_unit_shape_is_homogeneous():
    m = IntensityModel("power_law", (1.0, 4.0))
    t = np.array([0.0, 1.0, 10.0, 123.4])
    np.testing.assert_allclose(m.cif(t), t / 4.0, rtol=1e-15)
    np.testing.assert_allclose(m.rate(t[1:]), 0.25, rtol=1e-15)


def test_weibull_srgm_formula():
    th = (10.0, 0.2, 1.5)
    m = IntensityModel("weibull_srgm", th)
    t = 3.3
    assert m.cif(t) == pytest.approx(th[0] * (1 - math.exp(-th[1] * t ** th[2])), rel=1e-14)


@pytest.mark.parametrize(
    "tag,theta",
    [
        ("power_law", (0.0, 1.0)),
        ("power_law", (1.0, -1.0)),
        ("musa_okumoto", (1.0, 0.0)),
        ("gompertz", (1.0, 1.0, 0.5)),
        ("gompertz", (1.0, 0.5, 0.0)),
        ("weibull_srgm", (1.0, 1.0, -0.1)),
        ("power_law", (1.0,)),
    ],
)
def test_constraint_violation(tag, theta):
    with pytest.raises(ConstraintViolation):
        IntensityModel(tag, theta)


def test_ispline_negative_coefficient_rejected():
    b = SplineBasis((0.0, 5.0, 10.0))
    with pytest.raises(ConstraintViolation):
        IntensityModel("ispline", (1.0, -0.1, 0.0, 0.0, 0.0), b)


pos = st.floats(0.05, 20.0)
unit = st.floats(0.01, 0.99)


@st.composite
def models(draw):
    tag = draw(st.sampled_from(["power_law", "musa_okumoto", "gompertz", "weibull_srgm", "ispline"]))
    if tag == "power_law" or tag == "musa_okumoto":
        th = (draw(pos), draw(pos))
    elif tag == "gompertz":
        th = (draw(pos), draw(unit), draw(unit))
    elif tag == "weibull_srgm":
        th = (draw(pos), draw(st.floats(0.01, 2.0)), draw(st.floats(0.2, 3.0)))
    else:
        b = SplineBasis((0.0, 3.0, 10.0))
        return IntensityModel(tag, tuple(draw(st.lists(st.floats(0, 10), min_size=5, max_size=5))), b)
    return IntensityModel(tag, th)


@settings(max_examples=1000, deadline=None)
@given(models(), st.lists(st.floats(0.0, 10.0), min_size=2, max_size=8))
def test_cif_zero_at_origin_and_nondecreasing(m, ts):
    assert m.cif(0.0) == pytest.approx(0.0, abs=1e-12)
    v = m.cif(np.sort(ts))
    assert np.all(np.diff(v) >= -1e-12 * (1 + np.abs(v).max()))
    assert np.all(v >= -1e-12)


# -- I-spline basis ----------------------------------------------------------------


BASIS = SplineBasis((0.0, 2.0, 5.0, 7.0, 10.0))


def test_ispline_zero_at_origin():
    np.testing.assert_array_equal(ispline_basis_eval(BASIS, 0.0), np.zeros(BASIS.n_basis))


def test_ispline_one_at_tau_matches_integrated_mspline():
    at_tau = ispline_basis_eval(BASIS, BASIS.tau)
    knots = BASIS.knots
    for l in range(BASIS.n_basis):
        f = lambda x: BASIS.mvalues(x)[l]
        total = sum(integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-13)[0] for a, b in zip(knots, knots[1:]))
        assert abs(at_tau[l] - total) < 1e-8
        assert abs(total - 1.0) < 1e-8


def test_ispline_monotone_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b = np.sort(rng.uniform(0, BASIS.tau, 2))
        assert np.all(ispline_basis_eval(BASIS, a) <= ispline_basis_eval(BASIS, b) + 1e-15)


def test_ispline_out_of_domain():
    with pytest.raises(OutOfDomain):
        ispline_basis_eval(BASIS, 10.5)
    with pytest.raises(OutOfDomain):
        ispline_basis_eval(BASIS, -0.1)


def test_ispline_range_dense():
    v = ispline_basis_eval(BASIS, np.linspace(0, BASIS.tau, 10_000))
    assert v.min() >= 0 and v.max() <= 1
    assert np.all(np.diff(v, axis=0) >= 0)


def test_ispline_intensity_nonnegative():
    m = IntensityModel("ispline", (0.0, 3.0, 0.0, 1.0, 2.0, 0.5, 4.0), BASIS)
    assert np.all(m.rate(np.linspace(0, BASIS.tau, 5001)) >= 0)


def test_basis_from_events_places_interior_quantile():
    ev = np.arange(1, 100, dtype=float)
    b = SplineBasis.from_events(ev, 100.0, n_basis=5)
    assert b.n_basis == 5
    assert b.knots[0] == 0 and b.knots[-1] == 100
    assert b.knots[1] == pytest.approx(np.median(ev))


# -- likelihood --------------------------------------------------------------------------


def test_hpp_loglik_closed_form():
    ev = (1.0, 4.0, 9.0, 12.5)
    h = [RecurrentHistory("u", ev, 20.0)]
    for eta in (0.5, 2.0, 5.0):
        ll = nhpp_loglik(h, None, IntensityModel("power_law", (1.0, eta)))
        assert ll == pytest.approx(len(ev) * math.log(1 / eta) - 20.0 / eta, abs=1e-12)


def test_hpp_mle_is_tau_over_n():
    rng = np.random.default_rng(8)
    ev = tuple(np.sort(rng.uniform(0, 300, 41)))
    fit = fit_nhpp([RecurrentHistory("u", ev, 300.0)], None, "power_law", fixed={"beta": 1.0})
    assert fit.converged
    assert abs(fit.theta_hat[1] - 300 / 41) / (300 / 41) < 1e-6


def test_constant_exposure_scaling_identity():
    h = [RecurrentHistory("u", (1.0, 3.0, 8.0), 10.0)]
    m = IntensityModel("musa_okumoto", (0.4, 0.7))
    c = 2.5
    ll_c = nhpp_loglik(h, [ExposureStep("u", 0, 10, c)], m)
    base_events = np.sum(np.log(m.rate(np.array(h[0].event_times))))
    assert ll_c == pytest.approx(base_events - c * m.cif(10.0) + 3 * math.log(c), abs=1e-12)


def test_piecewise_exposure_integral():
    h = [RecurrentHistory("u", (1.0, 6.0), 9.0)]
    steps = [ExposureStep("u", 0, 4, 2.0), ExposureStep("u", 4, 12, 0.5)]
    m = IntensityModel("power_law", (1.3, 3.0))
    expect = (np.log(m.rate(1.0) * 2.0) + np.log(m.rate(6.0) * 0.5)
              - 2.0 * m.cif(4.0) - 0.5 * (m.cif(9.0) - m.cif(4.0)))
    assert nhpp_loglik(h, steps, m) == pytest.approx(expect, abs=1e-12)


def test_event_in_zero_rate_step():
    h = [RecurrentHistory("u", (5.0,), 9.0)]
    steps = [ExposureStep("u", 0, 4, 1.0), ExposureStep("u", 4, 9, 0.0)]
    with pytest.raises(EventOutsideExposure):
        nhpp_loglik(h, steps, IntensityModel("power_law", (1.0, 1.0)))


@pytest.mark.parametrize("tag", list(TRUTHS) + ["ispline"])
def test_gradient_matches_finite_differences(tag):
    src = "musa_okumoto" if tag == "ispline" else tag
    hist = fleet(src, TRUTHS[src], n=10, seed=4)
    steps = [ExposureStep(h.unit_id, 0.0, 300.0, 1.5) for h in hist] + \
            [ExposureStep(h.unit_id, 300.0, 730.0, 0.7) for h in hist]
    if tag == "ispline":
        basis = SplineBasis((0.0, 200.0, 730.0))
        base = IntensityModel(tag, (1.0,) * basis.n_basis, basis)
    else:
        base = IntensityModel(tag, TRUTHS[tag])
    u0 = nhpp.internal_params(base)
    rng = np.random.default_rng(2)
    for _ in range(10):
        u = u0 + rng.normal(0, 0.1, u0.size)
        if tag == "ispline":
            u = np.abs(u) + 0.1
        _, g = nhpp.nhpp_loglik_grad(hist, steps, base, u)
        fd = np.empty_like(u)
        for k in range(u.size):
            e = np.zeros_like(u)
            e[k] = 1e-6 * max(1.0, abs(u[k]))
            fd[k] = (nhpp.nhpp_loglik_grad(hist, steps, base, u + e)[0]
                     - nhpp.nhpp_loglik_grad(hist, steps, base, u - e)[0]) / (2 * e[k])
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-4 * max(1.0, np.abs(fd).max()))


# -- fitting -----------------------------------------------------------------------------


@pytest.mark.parametrize("tag", list(TRUTHS))
def test_recovery_single_seed(tag):
    fit = fit_nhpp(fleet(tag, TRUTHS[tag], seed=21), None, tag)
    assert fit.converged
    assert np.all(np.abs(fit.theta_hat - TRUTHS[tag]) < 4 * fit.std_errors)


def test_too_few_events():
    with pytest.raises(TooFewEvents):
        fit_nhpp([RecurrentHistory("u", (1.0,), 5.0)], None, "gompertz")


def test_identical_event_times_honest():
    hist = [RecurrentHistory(f"u{i}", (5.0,), 10.0) for i in range(20)]
    # one event per unit keeps the power-law MLE interior: beta = n / sum log(tau / t)
    fit = fit_nhpp(hist, None, "power_law")
    assert fit.converged
    assert fit.theta_hat[0] == pytest.approx(1 / np.log(2), rel=1e-5)
    for tag in ("gompertz", "weibull_srgm"):
        with np.errstate(all="ignore"):
            try:
                fit = fit_nhpp(hist, None, tag)
            except NonConvergence:
                continue
        assert not fit.converged


def test_unknown_fixed_name():
    hist = fleet("power_law", (1.0, 10.0), n=3)
    with pytest.raises(InputError):
        fit_nhpp(hist, None, "power_law", fixed={"gamma": 1.0})


def test_ispline_recovers_musa_okumoto():
    truth = IntensityModel("musa_okumoto", TRUTHS["musa_okumoto"])
    hist = fleet("musa_okumoto", TRUTHS["musa_okumoto"], seed=3)
    fit = fit_nhpp(hist, None, "ispline")
    assert fit.converged
    t = np.linspace(0.1 * 730, 0.9 * 730, 200)
    rel = np.abs(model_of(fit).cif(t) - truth.cif(t)) / truth.cif(t)
    assert rel.max() <= 0.10


def test_time_unit_equivariance():
    a = 24.0
    hist = fleet("power_law", (0.8, 3.0), n=20, tau=400.0, seed=6)
    steps = [ExposureStep(h.unit_id, 0.0, 400.0, 1.7) for h in hist]
    f1 = fit_nhpp(hist, steps, "power_law", tol=1e-10)
    hist2 = [RecurrentHistory(h.unit_id, tuple(a * t for t in h.event_times), a * h.follow_up_end) for h in hist]
    steps2 = [ExposureStep(s.unit_id, a * s.start, a * s.end, s.rate / a) for s in steps]
    f2 = fit_nhpp(hist2, steps2, "power_law", tol=1e-10)
    lam1 = 1.7 * model_of(f1).cif(400.0)
    lam2 = (1.7 / a) * model_of(f2).cif(a * 400.0)
    assert abs(lam1 - lam2) / lam1 < 1e-6
    assert f2.loglik == pytest.approx(f1.loglik - sum(h.n_events for h in hist) * math.log(a), abs=1e-6)


def test_time_unit_equivariance_ispline():
    a = 0.1
    hist = fleet("musa_okumoto", (0.05, 0.5), n=10, tau=730.0, seed=9)
    b1 = SplineBasis((0.0, 150.0, 730.0))
    b2 = SplineBasis(tuple(a * k for k in b1.knots))
    f1 = fit_nhpp(hist, None, "ispline", basis=b1, tol=1e-10)
    hist2 = [RecurrentHistory(h.unit_id, tuple(a * t for t in h.event_times), a * h.follow_up_end) for h in hist]
    steps2 = [ExposureStep(h.unit_id, 0.0, h.follow_up_end, 1 / a) for h in hist2]
    f2 = fit_nhpp(hist2, steps2, "ispline", basis=b2, tol=1e-10)
    lam1 = model_of(f1).cif(730.0)
    lam2 = (1 / a) * model_of(f2).cif(a * 730.0)
    assert abs(lam1 - lam2) / lam1 < 1e-6


# -- curves and bands ---------------------------------------------------------------------


def test_expected_vs_observed_definitions():
    truth = IntensityModel("power_law", (0.7, 2.0))
    hist = fleet("power_law", (0.7, 2.0), n=30, seed=12)
    cur = nhpp.expected_vs_observed(truth, hist, None, [0.0, 100.0, 730.0, 800.0])
    assert cur.expected[0] == 0 and cur.observed[0] == 0
    total = sum(h.n_events for h in hist)
    assert cur.observed[2] == total
    assert abs(cur.expected[-1] - total) < 3 * math.sqrt(cur.expected[-1])
    assert cur.expected[-1] == cur.expected[2]


def test_observed_is_counting_step():
    hist = [RecurrentHistory("a", (1.0, 3.0), 10.0), RecurrentHistory("b", (2.0,), 10.0)]
    m = IntensityModel("power_law", (1.0, 5.0))
    cur = nhpp.expected_vs_observed(m, hist, None, [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 9.0])
    np.testing.assert_array_equal(cur.observed, [0, 1, 1, 2, 2, 3, 3])


def test_expected_needs_converged_fit():
    hist = fleet("power_law", (1.0, 10.0), n=3)
    fit = fit_nhpp(hist, None, "power_law")
    bad = type(fit)(fit.model_tag, fit.theta_hat, fit.loglik, converged=False, diagnostics=fit.diagnostics)
    with pytest.raises(NonConvergence):
        nhpp.expected_vs_observed(bad, hist, None, [1.0])


def test_bands_zero_at_origin_contain_estimate_and_stable():
    hist = fleet("power_law", (0.7, 2.0), n=10, seed=30)
    fit = fit_nhpp(hist, None, "power_law")
    grid = [0.0, 100.0, 365.0, 730.0]
    b1 = nhpp.bootstrap_pointwise_bands(fit, hist, None, grid, B=200, seed=5)
    assert b1.lower[0] == 0 and b1.upper[0] == 0
    assert np.all(b1.lower <= b1.estimate) and np.all(b1.estimate <= b1.upper)
    b2 = nhpp.bootstrap_pointwise_bands(fit, hist, None, grid, B=400, seed=5)
    width = b1.upper[1:] - b1.lower[1:]
    assert np.all(np.abs(b2.lower[1:] - b1.lower[1:]) < 0.1 * width)
    assert np.all(np.abs(b2.upper[1:] - b1.upper[1:]) < 0.1 * width)


def test_bands_require_enough_replicates():
    hist = fleet("power_law", (1.0, 10.0), n=3)
    fit = fit_nhpp(hist, None, "power_law")
    with pytest.raises(InputError):
        nhpp.bootstrap_pointwise_bands(fit, hist, None, [1.0], B=50)


def test_bif_curve_is_derivative_of_cif():
    m = IntensityModel("ispline", (0.5, 1.0, 2.0, 0.0, 1.5, 0.3, 0.7), BASIS)
    t = np.linspace(0.5, 9.5, 50)
    h = 1e-5
    fd = (m.cif(t + h) - m.cif(t - h)) / (2 * h)
    np.testing.assert_allclose(nhpp.bif_curve(m, t), fd, rtol=1e-6, atol=1e-8)


def test_bands_accept_seed_sequence():
    hist = fleet("power_law", (0.7, 2.0), n=5, seed=31)
    fit = fit_nhpp(hist, None, "power_law")
    a = nhpp.bootstrap_pointwise_bands(fit, hist, None, [365.0], B=200, seed=np.random.SeedSequence(9))
    b = nhpp.bootstrap_pointwise_bands(fit, hist, None, [365.0], B=200, seed=9)
    assert a.lower[0] == b.lower[0] and a.upper[0] == b.upper[0]
