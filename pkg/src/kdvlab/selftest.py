"""Fast sanity battery: exact identities that must hold on any checkout."""

from __future__ import annotations

import tempfile
import time
import traceback
from dataclasses import dataclass

import numpy as np

from . import analysis, io, spectral
from .conventions import LOWER, UPPER
from .grid import ExpAbs, InvBracket, WaveField, l2_norm, make_grid, weighted_norm
from .operators import GeneratorTag, apply, conjugated_symbol, deriv_potential, h0_symbol, potential
from .propagator import (
    EvolveConfig,
    conjugated_free_evolve,
    dense_generator,
    evolve,
    free_evolve,
    matrix_exponential_oracle,
)

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _close(a, b, tol, what=""):
    err = np.max(np.abs(np.asarray(a) - np.asarray(b)))
    assert err <= tol, f"{what} error {err:.3e} > {tol:.1e}"


def _gauss(g, w=1.0):
    return WaveField(g, np.exp(-g.x**2 / (2 * w * w)))


@check
def grid_arithmetic():
    g = make_grid(np.pi, 8)
    _close(g.x, -np.pi + np.pi / 4 * np.arange(8), 1e-15, "x")
    _close(g.xi_symmetric, np.arange(-4, 4), 1e-15, "xi")
    g = make_grid(10, 8)
    assert g.dx == 2.5
    _close(g.dxi, np.pi / 10, 1e-16, "xi spacing")


@check
def grid_rejects_odd_n():
    try:
        make_grid(10, 7)
    except ValueError:
        return
    raise AssertionError("odd N accepted")


@check
def norms_trivial():
    g = make_grid(1, 8)
    assert l2_norm(WaveField(g, np.zeros(8))) == 0
    _close(l2_norm(WaveField(g, np.ones(8))), np.sqrt(2), 1e-15, "constant norm")
    assert weighted_norm(WaveField(g, np.zeros(8)), ExpAbs(1.0)) == 0
    assert InvBracket()(0.0) == 1.0


@check
def potential_trivial():
    assert potential(0.0) == 1.0
    assert deriv_potential(0.0) == 0.0
    x = np.linspace(0, 400, 4001)
    v = potential(x)
    assert np.all(np.diff(v) <= 0) and v[-1] == 0.0
    _close(potential(-x), v, 0, "evenness")


@check
def symbols_trivial():
    assert h0_symbol(0.0) == 0.0
    xi = np.linspace(-5, 5, 41)
    for b in (UPPER, LOWER):
        _close(conjugated_symbol(xi, 1e-12, b), h0_symbol(xi), 1e-9, "alpha -> 0")


@check
def apply_zero_field():
    g = make_grid(12, 64)
    z = WaveField(g, np.zeros(64))
    for tag in GeneratorTag:
        assert np.all(apply(tag, z).values == 0)


@check
def free_flow_identity_and_unitarity():
    g = make_grid(30, 256)
    f = _gauss(g) * np.exp(1j * g.x)
    _close(free_evolve(f, 0.0).values, f.values, 0, "t=0")
    n = l2_norm(f)
    for t in (-100.0, -3.3, 0.7, 100.0):
        _close(l2_norm(free_evolve(f, t)), n, 1e-12 * n, f"norm at t={t}")
    _close(conjugated_free_evolve(f, 0.0, 0.5, UPPER).values, f.values, 1e-15, "conjugated t=0")


@check
def lawson_exact_for_h0():
    g = make_grid(30, 256)
    f = _gauss(g)
    tr = evolve(f, EvolveConfig(GeneratorTag.H0, 1.0, 1e-2))
    _close(tr.final.values, free_evolve(f, 1.0).values, 1e-12, "H0 stepper")


@check
def dense_free_generator_is_circulant():
    g = make_grid(12, 32)
    A = dense_generator(g, GeneratorTag.H, coupling=0.0)
    ev = np.sort_complex(np.linalg.eigvals(A))
    _close(ev, np.sort_complex(h0_symbol(g.xi).astype(complex)), 1e-10, "eigenvalues")


@check
def oracle_trivial():
    g = make_grid(12, 64)
    f = _gauss(g)
    A = dense_generator(g, GeneratorTag.HTILDE0)
    _close(matrix_exponential_oracle(A, 0.0, f).values, f.values, 0, "t=0")
    _close(l2_norm(matrix_exponential_oracle(A, 1.0, f)), l2_norm(f), 1e-10, "Hermitian norm")


@check
def stability_controls():
    g = make_grid(20, 256)
    seeds = {"g": _gauss(g), "m": _gauss(g) * np.exp(1j * g.x)}
    rep = analysis.stability_scan(seeds, T=1.0, coupling=0.0)
    for s in rep.seeds:
        assert abs(s.max_ratio - 1) < 1e-10 and abs(s.min_ratio - 1) < 1e-10
        assert abs(s.rho) < 1e-10
    rep = analysis.stability_scan(seeds, T=1.0, dt=2.5e-4, generator=GeneratorTag.HTILDE0)
    for s in rep.seeds:
        assert abs(s.max_ratio - 1) < 1e-8 and abs(s.min_ratio - 1) < 1e-8


@check
def smoothing_zero_seed():
    g = make_grid(20, 128)
    z = WaveField(g, np.zeros(128))
    r = analysis.smoothing_integral(z, 1.0, T_ladder=(0.5, 1.0))
    assert r.partial_integrals == [0.0, 0.0]
    r = analysis.free_smoothing_integral(z, 0.0, T_ladder=(0.5, 1.0))
    assert r.partial_integrals == [0.0, 0.0]


@check
def free_smoothing_monotone_in_theta():
    g = make_grid(30, 256)
    f = _gauss(g)
    s0 = analysis.free_smoothing_integral(f, 0.0, T_ladder=(1.0, 2.0)).partial_integrals
    s1 = analysis.free_smoothing_integral(f, 1.0, T_ladder=(1.0, 2.0)).partial_integrals
    assert all(a <= b for a, b in zip(s0, s1))


@check
def wave_operators_at_zero():
    g = make_grid(20, 128)
    f = _gauss(g)
    r = analysis.cook_wave_operator(f, 1, checkpoints=(0.0,))
    assert np.array_equal(r.limit_state.values, f.values)
    r = analysis.inverse_wave_check(f, -1, checkpoints=(0.0,))
    assert np.array_equal(r.limit_state.values, f.values)


@check
def free_spectrum_is_real():
    rep = spectral.eigen_scan(12, (32, 64), coupling=0.0)
    for n, ev in rep.eigenvalues.items():
        g = make_grid(12, int(n))
        assert np.max(np.abs(ev.imag)) < 1e-10
        _close(np.sort(ev.real), np.sort(h0_symbol(g.xi)), 1e-9, "free eigenvalues")
    rep = spectral.eigen_scan(12, (32, 64), tag=GeneratorTag.HTILDE0)
    assert max(rep.max_abs_imag.values()) < 1e-10


@check
def pseudospectrum_controls():
    g = make_grid(12, 32)
    p = spectral.pseudospectrum((-3, 3, 5, 6), (3, 2), g)
    assert np.min(p.sigma_min) > 0
    p = spectral.pseudospectrum((-3, 3, 0.5, 1), (3, 2), g, tag=GeneratorTag.HTILDE0)
    ev = np.linalg.eigvalsh(dense_generator(g, GeneratorTag.HTILDE0))
    for x, y, s in p.rows():
        _close(s, np.min(np.abs(ev - (x + 1j * y))), 1e-8, "normal resolvent")


@check
def evans_trivial():
    mu = spectral.asymptotic_roots(0.0)
    _close(np.sort(mu.real), [-2, 0, 2], 1e-12, "roots at 0")
    s = spectral.evans_function(0.7 + 0.4j, coupling=0.0)
    _close(s.E, 1.0, 1e-10, "free E")
    r = spectral.evans_sweep((-2, 2, 0.2, 1), 4, 3, coupling=0.0, cr_points=1)
    assert r.winding == 0
    _close([abs(x.E) for x in r.samples], 1.0, 1e-10, "|E|")


@check
def plotdata_projections():
    g = make_grid(20, 256)
    reps = {
        "stability": analysis.stability_scan({"g": _gauss(g)}, T=0.05),
        "decay": analysis.decay_fit(1.0, 0, _gauss(make_grid(60, 512))),
        "pseudospec": spectral.pseudospectrum((-1, 1, 1, 2), (2, 2), make_grid(12, 16)),
    }
    with tempfile.TemporaryDirectory() as d:
        for name, rep in reps.items():
            path = io.write_report(d, name, rep, {"experiment": name})
            assert io.emit_plotdata(path), name


@dataclass
class CheckResult:
    name: str
    ok: bool
    seconds: float
    message: str = ""


def run_selftest(verbose=False):
    results = []
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            fn()
            res = CheckResult(fn.__name__, True, time.perf_counter() - t0)
        except Exception as e:  # report every failure, keep going
            msg = f"{type(e).__name__}: {e}"
            if verbose:
                msg += "\n" + traceback.format_exc()
            res = CheckResult(fn.__name__, False, time.perf_counter() - t0, msg)
        results.append(res)
    return results
