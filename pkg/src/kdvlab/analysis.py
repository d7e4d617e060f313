"""Verification harness: stability scans, smoothing integrals, decay fits and
wave-operator convergence.

Infinite time integrals are replaced by partial integrals S(T_k) on a ladder
of horizons; convergence is judged from the tail increments.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .conventions import COUPLING, UPPER, branch_name, check_branch
from .grid import Grid, WaveField, l2_norm, l2_norm_hat
from .operators import GeneratorTag, _check_alpha, spectral_ops
from .propagator import (
    CRUDE_BOUND_RATE,
    EvolveConfig,
    conjugated_multiplier_values,
    evolve,
    free_evolve,
)

NOISE_FLOOR = 1e-13
MIN_FIT_TIME = 0.5
DEFAULT_LADDER = (25.0, 50.0, 100.0)


def target_rate(alpha):
    """Contraction rate alpha (4 - alpha^2) of the conjugated free flow."""
    return alpha * (4.0 - alpha * alpha)


# ----------------------------------------------------------------------------
# seeds


def gaussian(grid, x0=0.0, k=0.0, width=1.0):
    x = grid.x
    return WaveField(grid, np.exp(1j * k * x) * np.exp(-((x - x0) ** 2) / (2.0 * width**2)))


def band_limited_random(grid, seed, xi_band=3.0):
    """Random complex field whose Fourier coefficients vanish for |xi| > xi_band."""
    rng = np.random.default_rng(seed)
    mask = np.abs(grid.xi) <= xi_band
    coef = np.zeros(grid.N, complex)
    m = int(mask.sum())
    coef[mask] = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    v = np.fft.ifft(coef)
    f = WaveField(grid, v)
    return f * (1.0 / l2_norm(f))


def seed_battery(grid: Grid, rng_seed: int = 0, n_random: int = 2) -> dict:
    """Fixed deterministic battery of initial states, keyed by name."""
    seeds = {
        "gauss_x0=0": gaussian(grid),
        "gauss_x0=+5": gaussian(grid, x0=5.0),
        "gauss_x0=-5": gaussian(grid, x0=-5.0),
        "modgauss_k=1": gaussian(grid, k=1.0),
        "modgauss_k=3": gaussian(grid, k=3.0),
    }
    for i in range(n_random):
        seeds[f"bandlimited_rng={rng_seed + i}"] = band_limited_random(grid, rng_seed + i)
    return seeds


def _named(seeds):
    if isinstance(seeds, WaveField):
        return {"seed": seeds}
    if isinstance(seeds, dict):
        return dict(seeds)
    return {f"seed{i}": s for i, s in enumerate(seeds)}


def _ls_fit(t, y, power=True):
    """Fit log y = log C - q log t - r t; returns (logC, q, r, rms residual)."""
    t = np.asarray(t, float)
    ly = np.log(np.asarray(y, float))
    cols = [np.ones_like(t)]
    if power:
        cols.append(-np.log(t))
    cols.append(-t)
    M = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(M, ly, rcond=None)
    res = ly - M @ coef
    rms = float(np.sqrt(np.mean(res**2))) if len(res) else float("nan")
    if power:
        return float(coef[0]), float(coef[1]), float(coef[2]), rms
    return float(coef[0]), 0.0, float(coef[1]), rms


def _decimate(a, every):
    a = np.asarray(a)
    if every <= 1:
        return a
    idx = np.arange(0, len(a), every)
    if idx[-1] != len(a) - 1:
        idx = np.append(idx, len(a) - 1)
    return a[idx]


# ----------------------------------------------------------------------------
# Stability


@dataclass
class SeedStability:
    name: str
    max_ratio: float
    min_ratio: float
    final_ratio: float
    rho: float
    crude_bound_ratio: float
    round_trip_error: float | None = None


@dataclass
class StabilityReport:
    generator: str
    T: float
    dt: float
    coupling: float
    grid: dict
    seeds: list
    times: list = field(default_factory=list)
    ratios: dict = field(default_factory=dict)

    @property
    def max_abs_rho(self):
        return max(abs(s.rho) for s in self.seeds)

    def to_dict(self):
        d = asdict(self)
        d["max_abs_rho"] = self.max_abs_rho
        return d


def stability_scan(
    seeds,
    T,
    dt=None,
    generator=GeneratorTag.H,
    coupling=COUPLING,
    round_trip=False,
    keep_every=None,
) -> StabilityReport:
    """Evolve every seed, record ||u(t)||/||u(0)|| each step and fit its growth.

    rho is the least-squares slope of log ratio against t.  With
    ``round_trip`` each seed is also evolved back with the negated generator
    and the relative return error is recorded.
    """
    named = _named(seeds)
    names = list(named)
    fields = [named[k] for k in names]
    for k, f in named.items():
        if l2_norm(f) == 0:
            raise ValueError(f"seed {k!r} is zero")
    tag = GeneratorTag.parse(generator)
    cfg = EvolveConfig(tag, T, dt, coupling=coupling)
    tr = evolve(fields, cfg)
    cfg = tr.config
    ratios = tr.ratios
    t = tr.norm_times
    crude = tr.crude_bound_ratio()
    back_err = [None] * len(names)
    if round_trip:
        if tag in (GeneratorTag.H0, GeneratorTag.HTILDE0):
            raise ValueError("round trip needs a generator with a negated partner")
        back = evolve(tr.final_fields(), EvolveConfig(tag.negated, T, cfg.dt, coupling=coupling))
        back_err = [
            l2_norm(b - f) / l2_norm(f) for b, f in zip(back.final_fields(), fields)
        ]
        crude = np.maximum(crude, back.crude_bound_ratio())
    every = keep_every or max(1, len(t) // 2000)
    rows = []
    for i, name in enumerate(names):
        _, _, r, _ = _ls_fit(np.maximum(t, 1e-300), ratios[:, i], power=False)
        rows.append(
            SeedStability(
                name=name,
                max_ratio=float(ratios[:, i].max()),
                min_ratio=float(ratios[:, i].min()),
                final_ratio=float(ratios[-1, i]),
                rho=-r,
                crude_bound_ratio=float(crude[i]),
                round_trip_error=None if back_err[i] is None else float(back_err[i]),
            )
        )
    return StabilityReport(
        generator=tag.value,
        T=float(T),
        dt=float(cfg.dt),
        coupling=float(coupling),
        grid=fields[0].grid.describe(),
        seeds=rows,
        times=_decimate(t, every).tolist(),
        ratios={n: _decimate(ratios[:, i], every).tolist() for i, n in enumerate(names)},
    )


# ----------------------------------------------------------------------------
# Smoothing


@dataclass
class SmoothingReport:
    seed: str
    generator: str
    branch: str
    derivative: bool
    weight: dict
    T_ladder: list
    partial_integrals: list
    tail_increments: list
    norm_sq: float
    C_estimate: float
    nondecreasing: bool
    dt: float | None = None
    crude_bound_ratio: float | None = None
    grid: dict = field(default_factory=dict)

    @property
    def tail_fraction(self):
        """(S(T_last) - S(T_prev)) / S(T_last)."""
        S = self.partial_integrals
        if len(S) < 2 or S[-1] == 0:
            return 0.0
        return (S[-1] - S[-2]) / S[-1]

    def to_dict(self):
        d = asdict(self)
        d["tail_fraction"] = self.tail_fraction
        return d


def _ladder(T_ladder):
    lad = [float(t) for t in T_ladder]
    if not lad or any(b <= a for a, b in zip(lad, lad[1:])) or lad[0] <= 0:
        raise ValueError(f"T_ladder must be positive and strictly increasing, got {T_ladder}")
    return lad


def _partials(times, integrand, ladder):
    """Trapezoid partial integrals of integrand(t) up to each ladder horizon."""
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (integrand[1:] + integrand[:-1]))])
    return [float(np.interp(T, times, cum)) for T in ladder]


def _report(name, gen, branch, deriv, weight, ladder, S, nsq, **kw):
    S = list(S)
    inc = [S[0]] + [b - a for a, b in zip(S, S[1:])]
    return SmoothingReport(
        seed=name,
        generator=gen,
        branch=branch,
        derivative=deriv,
        weight=weight,
        T_ladder=list(ladder),
        partial_integrals=S,
        tail_increments=inc,
        norm_sq=nsq,
        C_estimate=S[-1] / nsq if nsq > 0 else 0.0,
        nondecreasing=all(b >= a for a, b in zip(S, S[1:])),
        **kw,
    )


def smoothing_scan(
    seeds,
    alphas=(1.0,),
    branch=UPPER,
    generator=GeneratorTag.H,
    T_ladder=DEFAULT_LADDER,
    dt=None,
    coupling=COUPLING,
) -> list:
    """Smoothing integrals int_0^T ||e^{-a|x|} p^d u(t)||^2 dt for d in {0, 1}.

    One run per (generator, branch) serves every seed, alpha and derivative
    flag.  The upper branch evolves with e^{-itG}, the lower with e^{+itG}.
    """
    named = _named(seeds)
    names = list(named)
    fields = [named[k] for k in names]
    ladder = _ladder(T_ladder)
    for a in alphas:
        _check_alpha(a)
    b = check_branch(branch)
    tag = GeneratorTag.parse(generator)
    if tag not in (GeneratorTag.H, GeneratorTag.HSTAR):
        raise ValueError("smoothing integrals are defined for H and Hstar")
    run_tag = tag if b == UPPER else tag.negated
    grid = fields[0].grid
    ops = spectral_ops(grid, coupling)
    weights = np.array([np.exp(-a * np.abs(grid.x)) for a in alphas])
    dx = grid.dx

    def integrands(u, t):
        pu = ops.p(u)
        out = np.empty((u.shape[0], len(alphas), 2))
        for j in range(len(alphas)):
            w = weights[j]
            out[:, j, 0] = dx * np.sum(np.abs(w * u) ** 2, axis=-1)
            out[:, j, 1] = dx * np.sum(np.abs(w * pu) ** 2, axis=-1)
        return out

    tr = evolve(fields, EvolveConfig(run_tag, ladder[-1], dt, coupling=coupling), {"s": integrands})
    crude = tr.crude_bound_ratio()
    data = tr.monitors["s"]
    reports = []
    for i, name in enumerate(names):
        nsq = l2_norm(fields[i]) ** 2
        for j, a in enumerate(alphas):
            for d in (0, 1):
                S = _partials(tr.norm_times, data[:, i, j, d], ladder)
                reports.append(
                    _report(
                        name,
                        tag.value,
                        branch_name(b),
                        bool(d),
                        {"kind": "exp_abs", "alpha": a},
                        ladder,
                        S,
                        nsq,
                        dt=float(tr.config.dt),
                        crude_bound_ratio=float(crude[i]),
                        grid=grid.describe(),
                    )
                )
    return reports


def smoothing_integral(
    phi: WaveField,
    alpha,
    branch=UPPER,
    derivative=False,
    T_ladder=DEFAULT_LADDER,
    generator=GeneratorTag.H,
    dt=None,
    coupling=COUPLING,
) -> SmoothingReport:
    reps = smoothing_scan({"seed": phi}, (alpha,), branch, generator, T_ladder, dt, coupling)
    return next(r for r in reps if r.derivative == bool(derivative))


def free_smoothing_integral(
    phi: WaveField,
    theta=0.0,
    T_ladder=DEFAULT_LADDER,
    dt_sample=0.01,
    name="seed",
) -> SmoothingReport:
    """int_{-T}^{T} ||<x>^{-1} m(p) e^{-itH0} phi||^2 dt with m = <xi>^theta or |xi|.

    ``theta="abs_p"`` selects |xi|.  Both time directions are computed exactly
    with multipliers and summed.
    """
    if isinstance(theta, str):
        if theta != "abs_p":
            raise ValueError(f"theta must be in [0, 1] or 'abs_p', got {theta!r}")
        fac = np.abs
        label = "abs_p"
    else:
        if not (0.0 <= theta <= 1.0):
            raise ValueError(f"theta must lie in [0, 1], got {theta}")
        th = float(theta)
        fac = lambda xi: (1.0 + xi**2) ** (th / 2.0)  # noqa: E731
        label = th
    ladder = _ladder(T_ladder)
    grid = phi.grid
    ops = spectral_ops(grid)
    w = 1.0 / np.sqrt(1.0 + grid.x**2)
    base = fac(ops.xi) * np.fft.fft(phi.values)
    n = int(np.ceil(ladder[-1] / dt_sample))
    times = np.linspace(0.0, ladder[-1], n + 1)
    total = np.zeros_like(times)
    for sign in (1.0, -1.0):
        for s in range(0, len(times), 256):
            tt = times[s : s + 256]
            spec = base[None, :] * np.exp(-1j * sign * tt[:, None] * ops.h0[None, :])
            u = np.fft.ifft(spec, axis=-1)
            total[s : s + 256] += grid.dx * np.sum(np.abs(w * u) ** 2, axis=-1)
    S = _partials(times, total, ladder)
    return _report(
        name,
        GeneratorTag.H0.value,
        "both",
        label != 0.0,
        {"kind": "inv_bracket", "fourier_factor": label},
        ladder,
        S,
        l2_norm(phi) ** 2,
        dt=dt_sample,
        grid=grid.describe(),
    )


# ----------------------------------------------------------------------------
# Decay of the conjugated free flow


@dataclass
class DecayFitReport:
    alpha: float
    n: int
    branch: str
    window: list
    rate: float
    target_rate: float
    power: float
    target_power: float
    residual: float
    times: list
    log_norm: list
    fit: list
    level: str = "state"

    @property
    def rate_rel_error(self):
        return abs(self.rate - self.target_rate) / self.target_rate

    def to_dict(self):
        d = asdict(self)
        d["rate_rel_error"] = self.rate_rel_error
        return d


def _window(t_grid, window):
    t = np.asarray(t_grid if t_grid is not None else np.linspace(window[0], window[1], 91), float)
    lo = max(window[0], MIN_FIT_TIME)
    return t[(t >= lo) & (t <= window[1])]


def decay_fit(alpha, n, psi: WaveField, t_grid=None, branch=UPPER, window=(1.0, 10.0)) -> DecayFitReport:
    """Fit ||p^n e^{+-ax} e^{-+itH0} e^{-+ax} psi|| = C t^{-q} e^{-r t}.

    ``psi`` stands for the weighted state e^{+-ax} phi, which is what the
    conjugated flow acts on.  Norms are computed on the frequency side, so
    there is no position-space roundoff floor; samples below NOISE_FLOOR
    relative to ||psi|| are dropped anyway.
    """
    _check_alpha(alpha)
    if n not in (0, 1, 2):
        raise ValueError(f"n must be 0, 1 or 2, got {n}")
    t = _window(t_grid, window)
    grid = psi.grid
    xi = np.asarray(grid.xi)
    ph = psi.hat()
    y = np.array(
        [l2_norm_hat(grid, xi**n * conjugated_multiplier_values(grid, s, alpha, branch) * ph) for s in t]
    )
    keep = y > NOISE_FLOOR * l2_norm(psi)
    t, y = t[keep], y[keep]
    if len(t) < 4:
        raise ValueError("fewer than four samples above the noise floor")
    lc, q, r, rms = _ls_fit(t, y)
    return DecayFitReport(
        alpha=float(alpha),
        n=int(n),
        branch=branch_name(branch),
        window=[float(t[0]), float(t[-1])],
        rate=r,
        target_rate=target_rate(alpha),
        power=q,
        target_power=n / 2.0,
        residual=rms,
        times=t.tolist(),
        log_norm=np.log(y).tolist(),
        fit=(lc - q * np.log(t) - r * t).tolist(),
    )


def symbol_decay_rate(grid: Grid, alpha, t_grid=None, branch=UPPER, window=(1.0, 10.0)) -> DecayFitReport:
    """Exponential rate of the operator norm max_xi |multiplier(t, xi)|."""
    _check_alpha(alpha)
    t = _window(t_grid, window)
    y = np.array([np.abs(conjugated_multiplier_values(grid, s, alpha, branch)).max() for s in t])
    lc, _, r, rms = _ls_fit(t, y, power=False)
    return DecayFitReport(
        alpha=float(alpha),
        n=0,
        branch=branch_name(branch),
        window=[float(t[0]), float(t[-1])],
        rate=r,
        target_rate=target_rate(alpha),
        power=0.0,
        target_power=0.0,
        residual=rms,
        times=t.tolist(),
        log_norm=np.log(y).tolist(),
        fit=(lc - r * t).tolist(),
        level="symbol",
    )


# ----------------------------------------------------------------------------
# Wave operators


@dataclass
class WaveOperatorReport:
    kind: str
    direction: int
    checkpoints: list
    increments: list
    relative_increments: list
    phi_norm: float
    grid: dict
    dt: float
    limit_time: float
    limit_norm: float
    integrand_times: list = field(default_factory=list)
    integrand: list = field(default_factory=list)
    integrand_rate: float | None = None
    integrand_power: float | None = None
    residual_times: list = field(default_factory=list)
    scattering_residuals: list = field(default_factory=list)
    crude_bound_ratio: float | None = None
    limit_state: WaveField | None = field(default=None, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("limit_state")
        if self.limit_state is not None and self.limit_state.grid.N <= 4096:
            d["limit_state_re"] = self.limit_state.values.real.tolist()
            d["limit_state_im"] = self.limit_state.values.imag.tolist()
        return d


def _direction(direction):
    d = int(np.sign(direction)) if not isinstance(direction, str) else (1 if direction.strip() in ("+", "+1", "1") else -1)
    if d not in (1, -1):
        raise ValueError(f"direction must be +1 or -1, got {direction!r}")
    return d


def _checkpoints(cps):
    cps = sorted({float(c) for c in cps})
    if not cps or cps[0] < 0:
        raise ValueError(f"checkpoints must be nonnegative, got {cps}")
    return cps


def cook_integrand(phi: WaveField, times, direction=1, coupling=COUPLING):
    """||c p V e^{-+itH0} phi|| at each time (upper sign for direction +1)."""
    d = _direction(direction)
    ops = spectral_ops(phi.grid, coupling)
    ph = np.fft.fft(phi.values)
    out = []
    for t in times:
        u = np.fft.ifft(np.exp(-1j * d * t * ops.h0) * ph)
        out.append(np.sqrt(phi.grid.dx) * np.linalg.norm(coupling * ops.p(ops.V * u)))
    return np.array(out)


def cook_wave_operator(
    phi: WaveField,
    direction=1,
    checkpoints=(5.0, 10.0, 20.0, 40.0),
    dt=None,
    coupling=COUPLING,
    integrand_times=None,
    fit_window=(1.0, 10.0),
) -> WaveOperatorReport:
    """Omega(t) phi = e^{itH} e^{-itH0} phi (direction +1) or its t -> -inf mirror.

    The free factor is exact; e^{itH} runs with the negated generator.
    Records Cauchy increments between consecutive checkpoints and fits the
    decay of the Cook integrand ||c p V e^{-itH0} phi||.
    """
    d = _direction(direction)
    cps = _checkpoints(checkpoints)
    nphi = l2_norm(phi)
    back = GeneratorTag.NEG_H if d == 1 else GeneratorTag.H
    states = []
    crude = 0.0
    used_dt = None
    for t in cps:
        if t == 0:
            states.append(WaveField(phi.grid, phi.values.copy()))
            continue
        w = free_evolve(phi, d * t)
        tr = evolve(w, EvolveConfig(back, t, dt, coupling=coupling))
        used_dt = tr.config.dt
        crude = max(crude, float(tr.crude_bound_ratio()[0]))
        states.append(tr.final)
    inc = [l2_norm(b - a) for a, b in zip(states, states[1:])]
    it = np.asarray(integrand_times if integrand_times is not None else np.linspace(0.0, fit_window[1], 201))
    y = cook_integrand(phi, it, d, coupling)
    m = (it >= max(fit_window[0], MIN_FIT_TIME)) & (it <= fit_window[1]) & (y > NOISE_FLOOR * nphi)
    rate = power = None
    if m.sum() >= 4:
        _, power, rate, _ = _ls_fit(it[m], y[m])
    return WaveOperatorReport(
        kind="wave_operator",
        direction=d,
        checkpoints=cps,
        increments=inc,
        relative_increments=[i / nphi for i in inc],
        phi_norm=nphi,
        grid=phi.grid.describe(),
        dt=float(used_dt) if used_dt else 0.0,
        limit_time=cps[-1],
        limit_norm=l2_norm(states[-1]),
        integrand_times=it.tolist(),
        integrand=y.tolist(),
        integrand_rate=rate,
        integrand_power=power,
        crude_bound_ratio=crude,
        limit_state=states[-1],
    )


def inverse_wave_check(
    phi: WaveField,
    direction=1,
    checkpoints=(10.0, 20.0, 40.0, 80.0),
    limit_time=None,
    dt=None,
    coupling=COUPLING,
) -> WaveOperatorReport:
    """Omega_In(t) phi = e^{itH0} e^{-itH} phi along the checkpoints.

    One interacting run (continued segment by segment) serves every
    checkpoint.  The limit u_+- is estimated by Omega_In(limit_time) phi and the
    scattering residual ||e^{-itH} phi - e^{-itH0} u_+-|| is reported at each
    checkpoint before ``limit_time``.
    """
    d = _direction(direction)
    cps = _checkpoints(checkpoints)
    T_lim = float(limit_time) if limit_time is not None else cps[-1]
    if T_lim < cps[-1]:
        raise ValueError("limit_time must not precede the last checkpoint")
    times = sorted(set(cps) | {T_lim})
    nphi = l2_norm(phi)
    fwd = GeneratorTag.H if d == 1 else GeneratorTag.NEG_H
    cur = phi
    t_prev = 0.0
    raw = {}
    crude = 0.0
    n_ref = None
    used_dt = None
    for t in times:
        if t > t_prev:
            tr = evolve(cur, EvolveConfig(fwd, t - t_prev, dt, coupling=coupling))
            used_dt = tr.config.dt
            if n_ref is None:
                n_ref = tr.norms[0, 0]
            # segments restart the clock; measure against phi in log form
            with np.errstate(divide="ignore", invalid="ignore"):
                seg = np.log(tr.norms[:, 0] / n_ref) - CRUDE_BOUND_RATE * (t_prev + tr.norm_times)
            crude = max(crude, float(np.exp(np.nanmax(seg))))
            cur = tr.final
        raw[t] = cur
        t_prev = t
    omega = {t: free_evolve(raw[t], -d * t) for t in times}
    inc = [l2_norm(omega[b] - omega[a]) for a, b in zip(cps, cps[1:])]
    u_lim = omega[T_lim]
    res_t = [t for t in cps if t < T_lim]
    res = [l2_norm(raw[t] - free_evolve(u_lim, d * t)) for t in res_t]
    return WaveOperatorReport(
        kind="inverse_wave_operator",
        direction=d,
        checkpoints=cps,
        increments=inc,
        relative_increments=[i / nphi for i in inc],
        phi_norm=nphi,
        grid=phi.grid.describe(),
        dt=float(used_dt) if used_dt else 0.0,
        limit_time=T_lim,
        limit_norm=l2_norm(u_lim),
        residual_times=res_t,
        scattering_residuals=res,
        crude_bound_ratio=crude,
        limit_state=u_lim,
    )
