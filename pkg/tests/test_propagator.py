import numpy as np
import pytest

from kdvlab.conventions import LOWER, UPPER
from kdvlab.grid import WaveField, inner, l2_norm, make_grid
from kdvlab.operators import GeneratorTag, h0_symbol, spectral_ops
from kdvlab.propagator import (
    DENSE_MAX_N,
    EvolveConfig,
    InstabilityError,
    conjugated_flow_norm,
    conjugated_free_evolve,
    conjugated_multiplier_values,
    default_dt,
    dense_generator,
    evolve,
    free_evolve,
    matrix_exponential_oracle,
)

from conftest import smooth_random


def gauss(g, w=1.0, x0=0.0):
    return WaveField(g, np.exp(-((g.x - x0) ** 2) / (2 * w * w)))


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# -- exact flows ------------------------------------------------------------


def test_free_evolve_identity_and_inverse(grid30, rng):
    f = smooth_random(grid30, rng)
    np.testing.assert_array_equal(free_evolve(f, 0.0).values, f.values)
    back = free_evolve(free_evolve(f, 3.7), -3.7)
    assert rel(back.values, f.values) < 1e-12


@pytest.mark.parametrize("t", [-100.0, -1.0, 0.3, 42.0, 100.0])
def test_free_evolve_unitary(grid30, rng, t):
    f = smooth_random(grid30, rng)
    assert l2_norm(free_evolve(f, t)) == pytest.approx(l2_norm(f), rel=1e-12)


def test_free_evolve_single_mode():
    g = make_grid(np.pi, 32)
    f = WaveField(g, np.exp(1j * g.x))
    t = 0.37
    np.testing.assert_allclose(free_evolve(f, t).values, np.exp(5j * t) * f.values, atol=1e-13)


def test_conjugated_identity_at_zero(grid30, rng):
    f = smooth_random(grid30, rng)
    for b in (UPPER, LOWER):
        np.testing.assert_allclose(conjugated_free_evolve(f, 0.0, 0.7, b).values, f.values, atol=1e-15)


def test_conjugated_rejects_negative_time(grid30):
    with pytest.raises(ValueError):
        conjugated_multiplier_values(grid30, -0.1, 0.5, UPPER)


def test_conjugated_operator_norm():
    g = make_grid(30, 1024)
    assert conjugated_flow_norm(g, 2.0, 1.0, UPPER) == pytest.approx(np.exp(-6), rel=1e-14)
    assert conjugated_flow_norm(g, 2.0, 1.0, LOWER) == pytest.approx(np.exp(-6), rel=1e-14)
    assert np.exp(-6) == pytest.approx(2.4788e-3, rel=1e-4)


@pytest.mark.parametrize("branch", [UPPER, LOWER])
def test_conjugated_modulus(grid30, branch):
    a, t = 0.6, 1.3
    xi = grid30.xi
    m = np.abs(conjugated_multiplier_values(grid30, t, a, branch))
    np.testing.assert_allclose(m, np.exp(t * (-3 * a * xi**2 + a**3 - 4 * a)), rtol=1e-12, atol=0)


@pytest.mark.parametrize("branch", [UPPER, LOWER])
def test_conjugated_flow_matches_explicit_conjugation(branch):
    """e^{+-ax} e^{-+itH0} e^{-+ax} psi computed with explicit weights on a small box."""
    # wide seed and short time so the dispersive tail cannot wrap around the box
    g = make_grid(30, 512)
    a, t = 0.5, 0.2
    psi = gauss(g, 2.0)
    inner_state = WaveField(g, np.exp(-branch * a * g.x) * psi.values)
    moved = free_evolve(inner_state, branch * t)
    explicit = np.exp(branch * a * g.x) * moved.values
    got = conjugated_free_evolve(psi, t, a, branch).values
    window = np.abs(g.x) < 10
    assert np.max(np.abs(got - explicit)[window]) < 1e-10


# -- Lawson stepper -----------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        EvolveConfig(GeneratorTag.H, 1.0, -1e-3)
    with pytest.raises(ValueError):
        EvolveConfig(GeneratorTag.H, -1.0, 1e-3)
    with pytest.raises(ValueError):
        EvolveConfig(GeneratorTag.H, 1.0, 1e-3, scheme="euler")
    with pytest.raises(ValueError):
        EvolveConfig("bogus", 1.0, 1e-3)


def test_dealias_is_harmless_on_resolved_fields(grid30, rng):
    f = smooth_random(grid30, rng)
    a = evolve(f, EvolveConfig(GeneratorTag.H, 0.5)).final.values
    b = evolve(f, EvolveConfig(GeneratorTag.H, 0.5, dealias=False)).final.values
    assert rel(a, b) < 1e-10


def test_step_count_and_short_last_step():
    assert EvolveConfig(GeneratorTag.H, 1.0, 1e-3).steps() == (1000, 1e-3)
    n, last = EvolveConfig(GeneratorTag.H, 1.0, 0.3).steps()
    assert n == 4 and last == pytest.approx(0.1)


def test_short_last_step_lands_on_T():
    g = make_grid(12, 64)
    f = gauss(g, 1.5)
    tr = evolve(f, EvolveConfig(GeneratorTag.H, 0.25, 1.1e-3, dealias=False))
    assert len(tr.norm_times) == 229
    assert tr.norm_times[-1] == pytest.approx(0.25, abs=1e-15)
    ref = matrix_exponential_oracle(dense_generator(g, GeneratorTag.H), 0.25, f)
    assert rel(tr.final.values, ref.values) < 1e-6


def test_h0_stepper_is_exact(grid30, rng):
    f = smooth_random(grid30, rng)
    tr = evolve(f, EvolveConfig(GeneratorTag.H0, 1.0, 1e-2))
    assert rel(tr.final.values, free_evolve(f, 1.0).values) < 1e-12


def test_zero_coupling_is_free_flow(grid30, rng):
    f = smooth_random(grid30, rng)
    tr = evolve(f, EvolveConfig(GeneratorTag.H, 1.0, 1e-2, coupling=0.0))
    assert rel(tr.final.values, free_evolve(f, 1.0).values) < 1e-12


@pytest.mark.parametrize("tag", ["H", "Hstar", "NegH", "Htilde0"])
def test_stepper_matches_oracle(tag):
    g = make_grid(12, 64)
    f = gauss(g, 1.5)
    tr = evolve(f, EvolveConfig(tag, 0.3, 1e-3, dealias=False))
    ref = matrix_exponential_oracle(dense_generator(g, tag), 0.3, f)
    assert rel(tr.final.values, ref.values) < 1e-7


def test_dense_scheme_matches_oracle():
    g = make_grid(12, 64)
    f = gauss(g, 1.5)
    tr = evolve(f, EvolveConfig(GeneratorTag.H, 0.3, 0.1, scheme="dense_oracle", record_every=1))
    assert len(tr.times) == 4
    ref = matrix_exponential_oracle(dense_generator(g, GeneratorTag.H), 0.3, f)
    assert rel(tr.final.values, ref.values) < 1e-12


def test_htilde0_preserves_norm():
    g = make_grid(30, 1024)
    f = gauss(g)
    tr = evolve(f, EvolveConfig(GeneratorTag.HTILDE0, 10.0, 5e-4))
    assert np.max(np.abs(tr.ratios - 1)) < 1e-8


def test_flow_adjoint_duality(grid30, rng):
    u = smooth_random(grid30, rng)
    v = smooth_random(grid30, rng)
    t = 0.5
    a = inner(evolve(u, EvolveConfig(GeneratorTag.H, t)).final, v)
    b = inner(u, evolve(v, EvolveConfig(GeneratorTag.NEG_HSTAR, t)).final)
    assert abs(a - b) <= 1e-8 * abs(a)


def test_batch_equals_individual(grid30):
    seeds = [gauss(grid30), gauss(grid30, x0=3.0)]
    cfg = EvolveConfig(GeneratorTag.H, 0.2)
    batch = evolve(seeds, cfg)
    for i, s in enumerate(seeds):
        one = evolve(s, cfg)
        np.testing.assert_allclose(batch.states[-1, i], one.final.values, atol=1e-14)


def test_record_every_and_monitors(grid30):
    f = gauss(grid30)
    cfg = EvolveConfig(GeneratorTag.H, 0.1, 0.01, record_every=3)
    tr = evolve(f, cfg, {"sq": lambda u, t: np.abs(u[:, :2]) ** 2})
    assert list(np.round(tr.times, 12)) == [0.0, 0.03, 0.06, 0.09, 0.1]
    assert tr.monitors["sq"].shape == (11, 1, 2)
    assert np.all(np.diff(tr.times) > 0)


def test_crude_bound_holds(grid30):
    tr = evolve(gauss(grid30), EvolveConfig(GeneratorTag.H, 2.0))
    assert tr.crude_bound_ratio()[0] <= 1.0


def test_default_dt():
    g = make_grid(30, 1024)
    assert default_dt(g) == pytest.approx(1.3 / g.xi_max**2)
    assert default_dt(g, coupling=0.0) == pytest.approx(0.5 / g.xi_max)
    g = make_grid(12, 64)
    assert default_dt(g) == pytest.approx(0.5 / (12 * g.xi_max))


def test_instability_detected():
    g = make_grid(30, 1024)
    with pytest.raises(InstabilityError):
        evolve(gauss(g), EvolveConfig(GeneratorTag.H, 2.0, 0.05))


def test_instability_in_top_band_detected():
    # moderate dt: slow spurious growth just below the spectral cutoff
    g = make_grid(30, 1024)
    with pytest.raises(InstabilityError, match="top of the spectrum"):
        evolve(gauss(g), EvolveConfig(GeneratorTag.H, 20.0, 4e-3))


def test_long_run_at_default_dt_is_quiet():
    g = make_grid(30, 512)
    tr = evolve(gauss(g), EvolveConfig(GeneratorTag.HSTAR, 50.0))
    assert np.all(np.isfinite(tr.norms))


# -- dense generator and oracle -----------------------------------------------


def test_dense_generator_structure():
    g = make_grid(12, 128)
    Ht = dense_generator(g, GeneratorTag.HTILDE0)
    assert np.max(np.abs(Ht - Ht.conj().T)) < 1e-12
    H = dense_generator(g, GeneratorTag.H)
    Hs = dense_generator(g, GeneratorTag.HSTAR)
    assert np.max(np.abs(Hs - H.conj().T)) < 1e-12


def test_dense_generator_matches_apply(grid30, rng):
    g = make_grid(12, 128)
    f = smooth_random(g, rng)
    ops = spectral_ops(g)
    for tag in ("H", "Hstar", "Htilde0"):
        A = dense_generator(g, tag)
        np.testing.assert_allclose(A @ f.values, ops.apply(tag, f.values), atol=1e-11)


def test_dense_difference_on_resolved_fields(rng):
    g = make_grid(30, 512)
    f = smooth_random(g, rng)
    D = dense_generator(g, "H") - dense_generator(g, "Hstar")
    expect = -12j * spectral_ops(g).dV * f.values
    assert np.linalg.norm(D @ f.values - expect) <= 1e-11 * np.linalg.norm(dense_generator(g, "H") @ f.values)


def test_dense_free_generator_is_circulant():
    g = make_grid(12, 32)
    A = dense_generator(g, GeneratorTag.H, coupling=0.0)
    np.testing.assert_allclose(A, np.roll(np.roll(A, 1, 0), 1, 1), atol=1e-12)
    ev = np.sort_complex(np.linalg.eigvals(A))
    np.testing.assert_allclose(ev, np.sort_complex(h0_symbol(g.xi).astype(complex)), atol=1e-10)


def test_dense_guard():
    with pytest.raises(ValueError):
        dense_generator(make_grid(30, 2 * DENSE_MAX_N), GeneratorTag.H)


def test_oracle_properties():
    g = make_grid(12, 64)
    f = gauss(g, 1.5)
    H = dense_generator(g, GeneratorTag.H)
    np.testing.assert_array_equal(matrix_exponential_oracle(H, 0.0, f).values, f.values)
    Ht = dense_generator(g, GeneratorTag.HTILDE0)
    assert l2_norm(matrix_exponential_oracle(Ht, 1.0, f)) == pytest.approx(l2_norm(f), rel=1e-10)
    once = matrix_exponential_oracle(H, 1.0, f)
    twice = matrix_exponential_oracle(H, 0.5, matrix_exponential_oracle(H, 0.5, f))
    assert rel(twice.values, once.values) < 1e-9


def test_oracle_squaring_guard():
    g = make_grid(12, 64)
    H = dense_generator(g, GeneratorTag.H)
    with pytest.raises(ValueError):
        matrix_exponential_oracle(H, 1e18, gauss(g, 1.5))
