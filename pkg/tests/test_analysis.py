import numpy as np
import pytest

from kdvlab import analysis
from kdvlab.conventions import LOWER, UPPER
from kdvlab.grid import WaveField, l2_norm, make_grid
from kdvlab.operators import GeneratorTag
from kdvlab.propagator import free_evolve


def test_target_rate():
    assert analysis.target_rate(1.0) == 3.0
    assert analysis.target_rate(0.5) == pytest.approx(1.875)


@pytest.mark.parametrize("alpha", np.round(np.arange(0.1, 1.01, 0.1), 10))
@pytest.mark.parametrize("branch", [UPPER, LOWER])
def test_symbol_rate_is_exact(alpha, branch):
    rep = analysis.symbol_decay_rate(make_grid(30, 1024), alpha, branch=branch)
    assert abs(rep.rate - alpha * (4 - alpha**2)) <= 1e-10
    assert rep.residual < 1e-10


def test_battery_is_deterministic():
    g = make_grid(30, 512)
    a = analysis.seed_battery(g, rng_seed=3)
    b = analysis.seed_battery(g, rng_seed=3)
    assert list(a) == [
        "gauss_x0=0",
        "gauss_x0=+5",
        "gauss_x0=-5",
        "modgauss_k=1",
        "modgauss_k=3",
        "bandlimited_rng=3",
        "bandlimited_rng=4",
    ]
    for k in a:
        np.testing.assert_array_equal(a[k].values, b[k].values)
    assert l2_norm(a["bandlimited_rng=3"]) == pytest.approx(1.0, rel=1e-14)
    assert not np.allclose(a["bandlimited_rng=3"].values, a["bandlimited_rng=4"].values)


def test_band_limited_random_band():
    g = make_grid(30, 512)
    f = analysis.band_limited_random(g, 0, xi_band=2.0)
    assert np.all(np.abs(f.hat()[np.abs(g.xi) > 2.0]) < 1e-12)


def test_ls_fit_recovers_parameters():
    t = np.linspace(1, 10, 50)
    y = 2.0 * t**-0.5 * np.exp(-1.25 * t)
    lc, q, r, rms = analysis._ls_fit(t, y)
    assert (np.exp(lc), q, r) == pytest.approx((2.0, 0.5, 1.25), rel=1e-12)
    assert rms < 1e-12


def test_stability_scan_free_and_unitary_controls():
    g = make_grid(20, 256)
    seeds = {"g": analysis.gaussian(g), "m": analysis.gaussian(g, k=1.0)}
    rep = analysis.stability_scan(seeds, T=2.0, coupling=0.0)
    assert rep.max_abs_rho < 1e-12
    rep = analysis.stability_scan(seeds, T=2.0, dt=2.5e-4, generator="Htilde0")
    for s in rep.seeds:
        assert abs(s.max_ratio - 1) < 1e-9
    d = rep.to_dict()
    assert set(d["ratios"]) == {"g", "m"} and len(d["times"]) == len(d["ratios"]["g"])


def test_stability_round_trip():
    g = make_grid(30, 512)
    rep = analysis.stability_scan({"g": analysis.gaussian(g)}, T=2.0, dt=5e-4, round_trip=True)
    assert rep.seeds[0].round_trip_error < 1e-8
    with pytest.raises(ValueError):
        analysis.stability_scan({"g": analysis.gaussian(g)}, T=1.0, generator="Htilde0", round_trip=True)


def test_stability_rejects_zero_seed():
    g = make_grid(20, 128)
    with pytest.raises(ValueError):
        analysis.stability_scan({"z": WaveField(g, np.zeros(128))}, T=1.0)


def test_smoothing_ladder_is_monotone():
    g = make_grid(30, 512)
    reps = analysis.smoothing_scan({"g": analysis.gaussian(g)}, (0.5, 1.0), T_ladder=(1.0, 2.0, 4.0))
    assert len(reps) == 4
    for r in reps:
        S = r.partial_integrals
        assert all(b >= a for a, b in zip(S, S[1:]))
        assert S[0] > 0


def test_smoothing_free_flow_matches_exact_quadrature():
    g = make_grid(30, 512)
    phi = analysis.gaussian(g)
    r = analysis.smoothing_integral(phi, 1.0, T_ladder=(1.0,), coupling=0.0, dt=1e-3)
    t = np.linspace(0, 1, 1001)
    w = np.exp(-np.abs(g.x))
    vals = [g.dx * np.sum(np.abs(w * free_evolve(phi, s).values) ** 2) for s in t]
    assert r.partial_integrals[0] == pytest.approx(np.trapezoid(vals, t), rel=1e-10)


def test_smoothing_branch_and_generator_checks():
    g = make_grid(20, 128)
    with pytest.raises(ValueError):
        analysis.smoothing_scan({"g": analysis.gaussian(g)}, branch=0)
    with pytest.raises(ValueError):
        analysis.smoothing_scan({"g": analysis.gaussian(g)}, generator="H0")
    with pytest.raises(ValueError):
        analysis.smoothing_scan({"g": analysis.gaussian(g)}, alphas=(0.0,))


def test_free_smoothing_monotone_in_weight():
    g = make_grid(200, 4096)
    phi = analysis.gaussian(g)
    ladder = (5.0, 10.0)
    s0 = analysis.free_smoothing_integral(phi, 0.0, ladder).partial_integrals
    s1 = analysis.free_smoothing_integral(phi, 1.0, ladder).partial_integrals
    sp = analysis.free_smoothing_integral(phi, "abs_p", ladder).partial_integrals
    assert all(a <= b for a, b in zip(s0, s1))
    assert all(a <= b for a, b in zip(sp, s1))
    with pytest.raises(ValueError):
        analysis.free_smoothing_integral(phi, 1.5)


def test_decay_fit_gaussian_rate():
    g = make_grid(60, 1024)
    rep = analysis.decay_fit(1.0, 0, analysis.gaussian(g))
    assert rep.rate_rel_error < 0.05
    with pytest.raises(ValueError):
        analysis.decay_fit(1.0, 3, analysis.gaussian(g))


def test_cook_integrand_zero_coupling():
    g = make_grid(30, 256)
    y = analysis.cook_integrand(analysis.gaussian(g), [0.0, 1.0], coupling=0.0)
    assert np.all(y == 0)


def test_cook_at_zero_coupling_is_identity():
    g = make_grid(30, 512)
    phi = analysis.gaussian(g)
    r = analysis.cook_wave_operator(phi, 1, checkpoints=(1.0, 2.0), coupling=0.0)
    assert max(r.relative_increments) < 1e-12
    np.testing.assert_allclose(r.limit_state.values, phi.values, atol=1e-12)


def test_inverse_wave_at_zero_coupling_is_identity():
    g = make_grid(30, 512)
    phi = analysis.gaussian(g)
    r = analysis.inverse_wave_check(phi, -1, checkpoints=(1.0, 2.0), coupling=0.0)
    assert max(r.relative_increments) < 1e-12
    assert max(r.scattering_residuals) < 1e-12
    with pytest.raises(ValueError):
        analysis.inverse_wave_check(phi, 1, checkpoints=(1.0, 2.0), limit_time=1.5)


def test_direction_parsing():
    assert analysis._direction("+") == 1 and analysis._direction(-3) == -1
    with pytest.raises(ValueError):
        analysis._direction(0)
