import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdvlab import spectral
from kdvlab.grid import make_grid
from kdvlab.operators import GeneratorTag, h0_symbol
from kdvlab.propagator import dense_generator

# roots of mu^3 - 4 mu - i*i = mu^3 - 4 mu + 1, from mpmath at 30 digits
ROOTS_AT_I = (1.8608058531117035, 0.2541016883650524, -2.1149075414767559)
# regression baseline for E(i) at L_ode=15, tol=1e-10
E_AT_I = 7.79788637694666e-4


def test_roots_at_i_frozen():
    mpmath.mp.dps = 30
    ref = sorted((complex(r) for r in mpmath.polyroots([1, 0, -4, 1])), key=lambda z: -z.real)
    np.testing.assert_allclose([r.real for r in ref], ROOTS_AT_I, atol=1e-15)
    mu = spectral.asymptotic_roots(1j)
    np.testing.assert_allclose(mu, ROOTS_AT_I, atol=1e-10)


def test_roots_match_companion_matrix_oracle():
    C = np.array([[0, 4, -1], [1, 0, 0], [0, 1, 0]], dtype=complex)
    ev = np.linalg.eigvals(C)
    ev = ev[np.argsort(-ev.real)]
    np.testing.assert_allclose(spectral.asymptotic_roots(1j), ev, atol=1e-10)


def test_roots_at_zero():
    np.testing.assert_allclose(spectral.asymptotic_roots(0.0), [2.0, 0.0, -2.0], atol=1e-12)


finite = st.floats(-20, 20, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(finite, finite)
def test_roots_solve_the_cubic(re, im):
    lam = complex(re, im)
    mu = spectral.asymptotic_roots(lam)
    assert np.all(spectral.cubic_residual(mu, lam) <= 1e-12 * (1 + abs(lam)))
    assert np.all(np.diff(mu.real) <= 0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3, allow_nan=False))
def test_plane_wave_root_on_essential_spectrum(k):
    lam = h0_symbol(k)
    mu = spectral.asymptotic_roots(lam)
    assert np.min(np.abs(mu - 1j * k)) < 1e-8 * (1 + abs(lam))


def test_evans_is_one_without_potential():
    for lam in (1j, 0.7 + 0.4j, -2 - 1.5j):
        assert spectral.evans_function(lam, coupling=0.0).E == pytest.approx(1.0, abs=1e-10)


def test_evans_at_i_regression():
    s = spectral.evans_function(1j)
    assert (s.n_plus, s.n_minus) == (2, 1)
    assert s.E.real == pytest.approx(E_AT_I, rel=1e-5)
    assert abs(s.E.imag) < 1e-12


def test_evans_reflection_symmetry():
    for lam in (0.3 + 0.7j, 2.1 + 0.2j, 0.5 - 1.1j):
        a = spectral.evans_function(lam).E
        b = spectral.evans_function(-np.conj(lam)).E
        assert abs(a - np.conj(b)) <= 1e-8 * abs(a)


def test_evans_converges_in_domain_length():
    a = spectral.evans_function(0.4 + 0.6j, L_ode=15).E
    b = spectral.evans_function(0.4 + 0.6j, L_ode=25).E
    assert abs(a - b) <= 1e-6 * abs(b)


def test_evans_refusals():
    with pytest.raises(spectral.EvansRefusal):
        spectral.evans_function(1.0 + 0.01j)
    with pytest.raises(ValueError):
        spectral.evans_function(1j, L_ode=5)
    with pytest.raises(spectral.EvansRefusal):
        spectral.evans_sweep((-1, 1, -1, 1), 4, 4)
    assert issubclass(spectral.EvansRefusal, ValueError)


def test_mirror_box():
    assert spectral.mirror_box((-5, 5, 0.1, 2)) == (-5.0, 5.0, -2.0, -0.1)
    with pytest.raises(ValueError):
        spectral.parse_box("1,0,0,1")


def test_small_sweep_has_no_zeros_and_is_analytic():
    r = spectral.evans_sweep((-2, 2, 0.2, 1.5), 8, 5)
    assert r.winding == 0
    assert abs(r.winding_raw) < 1e-6
    assert r.max_phase_step <= np.pi / 4
    assert r.cauchy_riemann_residual < 1e-4
    assert r.min_abs_E > 0


def test_eigen_scan_free_operator():
    rep = spectral.eigen_scan(12, (32, 64), coupling=0.0)
    assert rep.persistent == []
    assert max(rep.max_abs_imag.values()) < 1e-10


def test_eigen_scan_guards():
    with pytest.raises(ValueError):
        spectral.eigen_scan(30, (512, 256))
    with pytest.raises(ValueError):
        spectral.eigen_scan(30, (512, 2048))


def test_adjoint_spectrum_is_conjugate():
    g = make_grid(30, 128)
    a = np.linalg.eigvals(dense_generator(g, "H"))
    b = np.conj(np.linalg.eigvals(dense_generator(g, "Hstar")))
    # nearest-neighbour match; sorting would scramble the cluster at zero
    gap = np.abs(a[:, None] - b[None, :]).min(axis=1)
    assert np.max(gap) < 1e-6 * np.max(np.abs(a))


def test_pseudospectrum_normal_control():
    g = make_grid(12, 32)
    rep = spectral.pseudospectrum((-3, 3, 0.5, 1), (4, 3), g, tag=GeneratorTag.HTILDE0)
    ev = np.linalg.eigvalsh(dense_generator(g, GeneratorTag.HTILDE0))
    for x, y, s in rep.rows():
        assert s == pytest.approx(np.min(np.abs(ev - (x + 1j * y))), abs=1e-8)
    assert rep.minimum > 0
    with pytest.raises(ValueError):
        spectral.pseudospectrum((-1, 1, 1, 2), (2, 2), make_grid(30, 1024))
