"""Dense spectrum scans, pseudospectra and an Evans function for H u = lambda u.

The eigenvalue equation H u = lambda u reads, with p = -i d/dx,

    u''' - 4 u' + c (V u)' = i lambda u,

whose constant-coefficient limit has the characteristic cubic
mu^3 - 4 mu - i lambda = 0.  For Im lambda != 0 no root is imaginary, and
the roots split into n_plus with Re mu > 0 (decaying at -inf) and n_minus
with Re mu < 0 (decaying at +inf).  The real axis is essential spectrum
and is never sampled.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.spatial import cKDTree

from .conventions import COUPLING
from .grid import Grid, make_grid
from .operators import GeneratorTag, deriv_potential, potential
from .propagator import dense_generator

EIG_MAX_N = 1024
PSEUDO_MAX_N = 512
MATCH_TOL = 1e-6
IM_TOL = 1e-6
NEAR_ZERO = 1e-2
MIN_IM_LAMBDA = 0.05
MIN_L_ODE = 15.0
ROOT_GAP = 1e-8


# ----------------------------------------------------------------------------
# dense eigenvalue scan


@dataclass
class SpectrumReport:
    generator: str
    L: float
    N_pair: list
    coupling: float
    eigenvalues: dict
    matched: list
    persistent: list
    off_real_counts: dict
    max_abs_imag: dict
    near_zero: dict
    tol_match: float
    im_tol: float

    def to_dict(self):
        d = asdict(self)
        d["eigenvalues"] = {
            n: {"re": np.real(v).tolist(), "im": np.imag(v).tolist()} for n, v in self.eigenvalues.items()
        }
        return d


def _sorted_eigs(A):
    try:
        w = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as e:
        raise np.linalg.LinAlgError(f"{e}; matrix 1-norm condition estimate {np.linalg.cond(A, 1):.3e}") from e
    return w[np.lexsort((w.imag, w.real))]


def eigen_scan(
    L=30.0,
    N_pair=(256, 512),
    tag=GeneratorTag.H,
    coupling=COUPLING,
    tol_match=MATCH_TOL,
    im_tol=IM_TOL,
) -> SpectrumReport:
    """Dense eigenvalues at N and 2N with nearest-neighbour matching.

    A candidate is persistent when the coarse eigenvalue has a fine partner
    closer than ``tol_match`` and both lie off the real axis by more than
    ``im_tol``.  Eigenvalues within NEAR_ZERO of the origin are listed
    separately; they show how a defective zero eigenvalue splits.
    """
    N_pair = tuple(int(n) for n in N_pair)
    if len(N_pair) != 2 or N_pair[1] <= N_pair[0]:
        raise ValueError(f"N_pair must be (N, N_fine) with N_fine > N, got {N_pair}")
    if N_pair[1] > EIG_MAX_N:
        raise ValueError(f"dense eigensolver limited to N <= {EIG_MAX_N}")
    tag = GeneratorTag.parse(tag)
    eigs = {}
    for n in N_pair:
        eigs[n] = _sorted_eigs(dense_generator(make_grid(L, n), tag, coupling))
    coarse, fine = eigs[N_pair[0]], eigs[N_pair[1]]
    tree = cKDTree(np.column_stack([fine.real, fine.imag]))
    dist, idx = tree.query(np.column_stack([coarse.real, coarse.imag]))
    matched, persistent = [], []
    for lam, d, j in zip(coarse, dist, idx):
        mu = fine[j]
        if abs(lam.imag) <= im_tol and abs(mu.imag) <= im_tol:
            continue
        pair = {"coarse": [lam.real, lam.imag], "fine": [mu.real, mu.imag], "displacement": float(d)}
        matched.append(pair)
        if d < tol_match and abs(lam.imag) > im_tol and abs(mu.imag) > im_tol:
            persistent.append(pair)
    return SpectrumReport(
        generator=tag.value,
        L=float(L),
        N_pair=list(N_pair),
        coupling=float(coupling),
        eigenvalues={str(n): v for n, v in eigs.items()},
        matched=matched,
        persistent=persistent,
        off_real_counts={str(n): int(np.sum(np.abs(v.imag) > im_tol)) for n, v in eigs.items()},
        max_abs_imag={str(n): float(np.abs(v.imag).max()) for n, v in eigs.items()},
        near_zero={
            str(n): [[z.real, z.imag] for z in v[np.abs(v) < NEAR_ZERO]] for n, v in eigs.items()
        },
        tol_match=tol_match,
        im_tol=im_tol,
    )


# ----------------------------------------------------------------------------
# pseudospectrum


@dataclass
class PseudospectrumReport:
    generator: str
    grid: dict
    box: list
    re: list
    im: list
    sigma_min: list  # row-major, shape (len(im), len(re))
    coupling: float

    @property
    def minimum(self):
        return float(np.min(self.sigma_min))

    def to_dict(self):
        d = asdict(self)
        d["minimum"] = self.minimum
        return d

    def rows(self):
        s = np.asarray(self.sigma_min)
        for i, y in enumerate(self.im):
            for j, x in enumerate(self.re):
                yield x, y, float(s[i, j])


def parse_box(box):
    """'re0,re1,im0,im1' or a 4-sequence -> tuple of floats."""
    if isinstance(box, str):
        box = [float(v) for v in box.split(",")]
    box = tuple(float(v) for v in box)
    if len(box) != 4 or box[0] >= box[1] or box[2] >= box[3]:
        raise ValueError(f"box must be re0,re1,im0,im1 with re0<re1 and im0<im1, got {box}")
    return box


def pseudospectrum(box, resolution, grid: Grid, tag=GeneratorTag.H, coupling=COUPLING) -> PseudospectrumReport:
    """sigma_min(A - z) on an nx-by-ny lattice covering the box.

    The matrix is reduced to complex Schur form once; the shifted triangular
    matrices share its singular values.
    """
    if grid.N > PSEUDO_MAX_N:
        raise ValueError(f"pseudospectrum limited to N <= {PSEUDO_MAX_N}, got N={grid.N}")
    box = parse_box(box)
    nx, ny = (int(r) for r in resolution)
    if nx < 1 or ny < 1:
        raise ValueError("resolution must be positive")
    tag = GeneratorTag.parse(tag)
    T, _ = sla.schur(dense_generator(grid, tag, coupling), output="complex")
    re = np.linspace(box[0], box[1], nx)
    im = np.linspace(box[2], box[3], ny)
    eye = np.eye(grid.N)
    s = np.empty((ny, nx))
    for i, y in enumerate(im):
        for j, x in enumerate(re):
            s[i, j] = sla.svdvals(T - (x + 1j * y) * eye, check_finite=False)[-1]
    return PseudospectrumReport(
        generator=tag.value,
        grid=grid.describe(),
        box=list(box),
        re=re.tolist(),
        im=im.tolist(),
        sigma_min=s.tolist(),
        coupling=float(coupling),
    )


# ----------------------------------------------------------------------------
# Evans function


class EvansRefusal(ValueError):
    """lambda too close to the essential spectrum or a degenerate root set."""


def asymptotic_roots(lam):
    """Roots of mu^3 - 4 mu - i lam, ordered by decreasing real part.

    Companion-matrix eigenvalues polished by two Newton steps.
    """
    lam = complex(lam)
    C = np.array([[0, 4, 1j * lam], [1, 0, 0], [0, 1, 0]], dtype=complex)
    mu = np.linalg.eigvals(C)
    for _ in range(2):
        mu = mu - (mu**3 - 4 * mu - 1j * lam) / (3 * mu**2 - 4)
    return mu[np.argsort(-mu.real, kind="stable")]


def cubic_residual(mu, lam):
    mu = np.asarray(mu)
    return np.abs(mu**3 - 4 * mu - 1j * lam)


@dataclass
class EvansSample:
    lam: complex
    roots: list
    n_plus: int  # Re mu > 0, decaying at -inf
    n_minus: int  # Re mu < 0, decaying at +inf
    E: complex
    tol: float
    L_ode: float
    coupling: float
    adjoint: bool = False

    def to_dict(self):
        return {
            "lam": [self.lam.real, self.lam.imag],
            "roots": [[complex(m).real, complex(m).imag] for m in self.roots],
            "n_plus": self.n_plus,
            "n_minus": self.n_minus,
            "E": [self.E.real, self.E.imag],
            "tol": self.tol,
            "L_ode": self.L_ode,
            "coupling": self.coupling,
            "adjoint": self.adjoint,
        }


def _vec(mu):
    return np.array([np.ones_like(mu), mu, mu * mu])


def _det_wedge_first(w, v):
    # det[y1, y2, v] with w = y1 ^ y2 in the basis (12, 13, 23)
    return w[0] * v[2] - w[1] * v[1] + w[2] * v[0]


def _det_vec_first(y, w):
    # det[y, z1, z2] with w = z1 ^ z2
    return y[0] * w[2] - y[1] * w[1] + y[2] * w[0]


def _wedge(a, b):
    return np.array([a[0] * b[1] - a[1] * b[0], a[0] * b[2] - a[2] * b[0], a[1] * b[2] - a[2] * b[1]])


def _prepare(lams):
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    roots = np.array([asymptotic_roots(l) for l in lams])  # (M, 3)
    for l, r in zip(lams, roots):
        if abs(l.imag) < MIN_IM_LAMBDA:
            raise EvansRefusal(f"|Im lambda| = {abs(l.imag):.3g} < {MIN_IM_LAMBDA}: on or near the essential spectrum")
        if np.min(np.abs(r.real)) < ROOT_GAP:
            raise EvansRefusal(f"lambda={l}: a root has |Re mu| < {ROOT_GAP}; split is ambiguous")
        gaps = [abs(r[0] - r[1]), abs(r[0] - r[2]), abs(r[1] - r[2])]
        if min(gaps) < ROOT_GAP:
            raise EvansRefusal(f"lambda={l}: repeated asymptotic roots")
    n_plus = np.sum(roots.real > 0, axis=1)
    return lams, roots, n_plus


def _rhs_factory(lams, shifts, compound, c, adjoint):
    """Stripped first-order systems for all lambdas at once.

    Plain:    y' = (A(x) - s) y,   A = [[0,1,0],[0,0,1],[a,b,0]]
    Compound: w' = (A2(x) - s) w,  A2 = [[0,1,0],[b,0,1],[-a,0,0]]
    with b = 4 - cV and a = i lam - cV' (the adjoint problem drops cV').
    """
    il = 1j * lams
    M = len(lams)

    def f(x, Y):
        Y = Y.reshape(3, M)
        V = c * potential(x)
        dV = 0.0 if adjoint else c * deriv_potential(x)
        a = il - dV
        b = 4.0 - V
        plain = np.array([Y[1], Y[2], a * Y[0] + b * Y[1]])
        comp = np.array([Y[1], b * Y[0] + Y[2], -a * Y[0]])
        out = np.where(compound, comp, plain) - shifts * Y
        return out.ravel()

    return f


def _integrate(x0, Y0, lams, shifts, compound, c, adjoint, tol):
    f = _rhs_factory(lams, shifts, compound, c, adjoint)
    sol = solve_ivp(f, (x0, 0.0), Y0.ravel(), method="DOP853", rtol=tol, atol=tol * 1e-3)
    if not sol.success:
        raise RuntimeError(f"Evans integration failed: {sol.message}")
    return sol.y[:, -1].reshape(3, len(lams))


def evans_values(lams, L_ode=MIN_L_ODE, tol=1e-10, coupling=COUPLING, adjoint=False):
    """E(lambda) for an array of lambdas, plus roots and split per lambda.

    Normalized by the same determinant built from the asymptotic
    eigenvectors (1, mu, mu^2), so that E = 1 at coupling 0.
    """
    if L_ode < MIN_L_ODE:
        raise ValueError(f"L_ode must be at least {MIN_L_ODE}, got {L_ode}")
    lams, roots, n_plus = _prepare(lams)
    r = roots.T  # (3, M), decreasing real part
    two_left = n_plus == 2
    # left side: two unstable directions (compound) or one (plain)
    sl = np.where(two_left, r[0] + r[1], r[0])
    wl = np.where(two_left, _wedge(_vec(r[0]), _vec(r[1])), _vec(r[0]))
    # right side: one stable direction (plain) or two (compound)
    sr = np.where(two_left, r[2], r[1] + r[2])
    wr = np.where(two_left, _vec(r[2]), _wedge(_vec(r[1]), _vec(r[2])))
    yl = _integrate(-L_ode, wl, lams, sl, two_left, coupling, adjoint, tol)
    yr = _integrate(L_ode, wr, lams, sr, ~two_left, coupling, adjoint, tol)
    D = np.where(two_left, _det_wedge_first(yl, yr), _det_vec_first(yl, yr))
    norm = np.where(two_left, _det_wedge_first(wl, wr), _det_vec_first(wl, wr))
    return lams, roots, n_plus, D / norm


def evans_function(lam, L_ode=MIN_L_ODE, tol=1e-10, coupling=COUPLING, adjoint=False) -> EvansSample:
    lams, roots, n_plus, E = evans_values([lam], L_ode, tol, coupling, adjoint)
    return EvansSample(
        lam=complex(lams[0]),
        roots=[complex(m) for m in roots[0]],
        n_plus=int(n_plus[0]),
        n_minus=int(3 - n_plus[0]),
        E=complex(E[0]),
        tol=tol,
        L_ode=float(L_ode),
        coupling=float(coupling),
        adjoint=adjoint,
    )


@dataclass
class EvansSweepReport:
    box: list
    nx: int
    ny: int
    coupling: float
    adjoint: bool
    L_ode: float
    tol: float
    winding: int
    winding_raw: float
    boundary_points: int
    max_phase_step: float
    min_abs_E: float
    argmin_lambda: complex
    cauchy_riemann_residual: float
    samples: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["argmin_lambda"] = [self.argmin_lambda.real, self.argmin_lambda.imag]
        d["samples"] = [s.to_dict() for s in self.samples]
        return d

    def rows(self):
        for s in self.samples:
            yield s.lam.real, s.lam.imag, abs(s.E)


def _boundary(box, nx, ny):
    re0, re1, im0, im1 = box
    xs = np.linspace(re0, re1, nx)
    ys = np.linspace(im0, im1, ny)
    # counter-clockwise, closed
    pts = np.concatenate(
        [xs + 1j * im0, re1 + 1j * ys[1:], xs[::-1][1:] + 1j * im1, re0 + 1j * ys[::-1][1:]]
    )
    return pts


def _winding(box, nx, ny, fn, max_step=np.pi / 4, max_rounds=12):
    pts = _boundary(box, nx, ny)
    vals = fn(pts)
    for _ in range(max_rounds):
        d = np.angle(vals[1:] / vals[:-1])
        bad = np.nonzero(np.abs(d) > max_step)[0]
        if len(bad) == 0:
            break
        mids = 0.5 * (pts[bad] + pts[bad + 1])
        mv = fn(mids)
        pts = np.insert(pts, bad + 1, mids)
        vals = np.insert(vals, bad + 1, mv)
    d = np.angle(vals[1:] / vals[:-1])
    raw = float(np.sum(d) / (2 * np.pi))
    return int(round(raw)), raw, len(pts), float(np.abs(d).max())


def evans_sweep(
    box,
    nx=40,
    ny=20,
    L_ode=MIN_L_ODE,
    tol=1e-10,
    coupling=COUPLING,
    adjoint=False,
    cr_points=5,
    cr_step=1e-3,
) -> EvansSweepReport:
    """Sample E on an nx-by-ny lattice over the box and count zeros.

    The winding number comes from the argument principle on the boundary,
    refined by bisection until successive phase steps stay below pi/4.  A
    Cauchy-Riemann residual |E_y - i E_x| / |E_x| from central differences
    on an interior sub-lattice checks the construction is analytic.
    """
    box = parse_box(box)
    if box[2] < MIN_IM_LAMBDA and box[3] > -MIN_IM_LAMBDA:
        raise EvansRefusal(f"box {box} meets the strip |Im lambda| < {MIN_IM_LAMBDA}")
    if nx < 2 or ny < 2:
        raise ValueError("nx and ny must be at least 2")

    def fn(z):
        return evans_values(z, L_ode, tol, coupling, adjoint)[3]

    xs = np.linspace(box[0], box[1], nx)
    ys = np.linspace(box[2], box[3], ny)
    Z = (xs[None, :] + 1j * ys[:, None]).ravel()
    lams, roots, n_plus, E = evans_values(Z, L_ode, tol, coupling, adjoint)
    samples = [
        EvansSample(complex(l), [complex(m) for m in r], int(k), int(3 - k), complex(e), tol, float(L_ode), float(coupling), adjoint)
        for l, r, k, e in zip(lams, roots, n_plus, E)
    ]
    wind, raw, nb, step = _winding(box, nx, ny, fn)
    # Cauchy-Riemann check on an interior sub-lattice
    h = cr_step
    cx = np.linspace(box[0], box[1], cr_points + 2)[1:-1]
    cy = np.linspace(box[2], box[3], cr_points + 2)[1:-1]
    C = (cx[None, :] + 1j * cy[:, None]).ravel()
    F = fn(np.concatenate([C + h, C - h, C + 1j * h, C - 1j * h])).reshape(4, -1)
    Ex = (F[0] - F[1]) / (2 * h)
    Ey = (F[2] - F[3]) / (2 * h)
    cr = float(np.max(np.abs(Ey - 1j * Ex) / np.maximum(np.abs(Ex), 1e-300)))
    k = int(np.argmin(np.abs(E)))
    return EvansSweepReport(
        box=list(box),
        nx=nx,
        ny=ny,
        coupling=float(coupling),
        adjoint=adjoint,
        L_ode=float(L_ode),
        tol=tol,
        winding=wind,
        winding_raw=raw,
        boundary_points=nb,
        max_phase_step=step,
        min_abs_E=float(np.abs(E).min()),
        argmin_lambda=complex(lams[k]),
        cauchy_riemann_residual=cr,
        samples=samples,
    )


def mirror_box(box):
    """Reflection of a box across the real axis."""
    re0, re1, im0, im1 = parse_box(box)
    return (re0, re1, -im1, -im0)
