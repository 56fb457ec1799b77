"""Experiment harness: regime classification, explicit solutions, rate
fitting, phase sweeps, and the closed-form validation battery."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .errors import InsufficientDataError
from .fractional_ops import (SpaceTimeField, TimeHistory, frac_laplacian,
                             marchaud, marchaud_power_rule, master_apply_slice)
from .grids import BoxGrid
from .kernels import (KernelParams, green_kernel, heat_kernel, master_kernel,
                      poisson_kernel, time_kernel)
from .memory import SelfSimilarMemory, StationaryMemory, ZeroMemory
from .extension_solver import ExtGrid, conormal_trace, poisson_extend

GLOBAL_ALL = "global-all"
BLOWUP_ALL = "blowup-all"
CONDITIONAL = "conditional"
INDETERMINATE = "indeterminate"


# ---------------------------------------------------------------------------
# regimes and explicit solutions
# ---------------------------------------------------------------------------

def p_star(sigma: float, dim: int) -> float:
    """Fujita exponent 1 + 2 sigma / (N + 2 (1 - sigma))."""
    return 1.0 + 2.0 * sigma / (dim + 2.0 * (1.0 - sigma))


@dataclass(frozen=True)
class Regime:
    label: str
    p_star: float


def fujita_classify(p: float, sigma: float, dim: int) -> Regime:
    """Regime of the reaction exponent: every solution global (p <= 1),
    every nontrivial solution blows up (1 < p <= p*), or data-dependent
    (p > p*).  Both boundaries belong to the lower regime."""
    if p <= 0.0:
        raise ValueError("p must be positive")
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    ps = p_star(sigma, dim)
    if p <= 1.0:
        return Regime(GLOBAL_ALL, ps)
    if p <= ps:
        return Regime(BLOWUP_ALL, ps)
    return Regime(CONDITIONAL, ps)


@dataclass(frozen=True)
class ExplicitBlowup:
    """z(t) = c (T - t)^{-sigma/(p-1)}, the space-free blow-up solution.

    c^{p-1} = Gamma(sigma p/(p-1)) / Gamma(sigma/(p-1)); the fractional
    derivative of z is exactly z^p.
    """

    sigma: float
    p: float
    horizon: float

    @property
    def beta(self) -> float:
        return self.sigma / (self.p - 1.0)

    @property
    def coefficient(self) -> float:
        b = self.beta
        return (special.gamma(b + self.sigma)
                / special.gamma(b)) ** (1.0 / (self.p - 1.0))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.coefficient * (self.horizon - t) ** (-self.beta)


def explicit_blowup(p: float, sigma: float, horizon: float) -> ExplicitBlowup:
    if p <= 1.0:
        raise ValueError("explicit blow-up needs p > 1")
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    return ExplicitBlowup(sigma=sigma, p=p, horizon=horizon)


@dataclass(frozen=True)
class ExplicitGlobal:
    """u(t) = c_* (t + t1)_+^{sigma/(1-p)}, the global sublinear solution."""

    sigma: float
    p: float
    shift: float

    @property
    def nu(self) -> float:
        return self.sigma / (1.0 - self.p)

    @property
    def coefficient(self) -> float:
        n = self.nu
        return (special.gamma(1.0 + n)
                / special.gamma(1.0 + n - self.sigma)) ** (1.0 / (self.p - 1.0))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.coefficient * np.maximum(t + self.shift, 0.0) ** self.nu


def explicit_global(p: float, sigma: float, shift: float) -> ExplicitGlobal:
    if not 0.0 < p < 1.0:
        raise ValueError("explicit global solution needs 0 < p < 1")
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    return ExplicitGlobal(sigma=sigma, p=p, shift=shift)


# ---------------------------------------------------------------------------
# blow-up rate fitting
# ---------------------------------------------------------------------------

@dataclass
class BlowupReport:
    detected: bool
    t_est: float
    rate_exp: float
    rate_ci: float
    window: tuple[float, float]
    residual: float
    n_points: int


def _series_of(traj_or_series):
    if hasattr(traj_or_series, "times"):
        return np.asarray(traj_or_series.times), np.asarray(traj_or_series.sup_norms)
    times, sups = traj_or_series
    return np.asarray(times, dtype=float), np.asarray(sups, dtype=float)


def fit_rate(traj_or_series, min_points: int = 8, window_decades: float = 2.0,
             initial_scale: float | None = None) -> BlowupReport:
    """Joint least-squares fit of (T_est, beta) for m(t) ~ (T_est - t)^{-beta}.

    m is the running maximum of the sup-norms; only times with m above ten
    times the initial scale and within the final ``window_decades`` decades
    of growth enter the fit.
    """
    times, sups = _series_of(traj_or_series)
    m = np.maximum.accumulate(sups)
    scale0 = initial_scale if initial_scale is not None else max(m[0], 1e-300)
    mask = (m >= 10.0 * scale0) & (m >= m[-1] / 10.0**window_decades)
    mask &= np.concatenate(([True], np.diff(m) > 0.0))
    t_w = times[mask]
    m_w = m[mask]
    if len(t_w) < min_points:
        raise InsufficientDataError(
            f"only {len(t_w)} points in the fit window, need {min_points}")

    t_last = float(t_w[-1])
    span = t_last - float(t_w[0])
    log_m = np.log(m_w)

    def rss(delta):
        x = np.log(t_last + delta - t_w)
        sl, ic = np.polyfit(x, log_m, 1)
        return float(np.sum((log_m - (sl * x + ic)) ** 2))

    # coarse log scan then local refinement (in log space, so the tolerance
    # is relative) for the horizon offset
    deltas = np.geomspace(1e-7 * span, 1.0 * span, 240)
    values = [rss(d) for d in deltas]
    i_best = int(np.argmin(values))
    lo = deltas[max(0, i_best - 2)]
    hi = deltas[min(len(deltas) - 1, i_best + 2)]
    res = optimize.minimize_scalar(lambda u: rss(np.exp(u)),
                                   bounds=(np.log(lo), np.log(hi)),
                                   method="bounded",
                                   options={"xatol": 1e-12})
    delta = float(np.exp(res.x))

    x = np.log(t_last + delta - t_w)
    slope, intercept = np.polyfit(x, log_m, 1)
    resid = log_m - (slope * x + intercept)
    dof = max(len(t_w) - 2, 1)
    s2 = float(np.sum(resid**2)) / dof
    sxx = float(np.sum((x - np.mean(x)) ** 2))
    slope_se = np.sqrt(s2 / sxx) if sxx > 0 else np.inf

    return BlowupReport(
        detected=True,
        t_est=t_last + delta,
        rate_exp=float(-slope),
        rate_ci=float(1.96 * slope_se),
        window=(float(t_w[0]), t_last),
        residual=float(np.sqrt(s2)),
        n_points=int(len(t_w)),
    )


# ---------------------------------------------------------------------------
# lower bound and the critical-case mechanism
# ---------------------------------------------------------------------------

def lower_bound_check(traj, params: KernelParams, t_frac: float = 0.5,
                      kernel_floor: float = 1e-6) -> dict:
    """Largest c with u(x,t) >= c t^{sigma-1} K_t(x) over the late window.

    Skipped for trivial runs.  The fit uses only points where the Gauss
    kernel carries mass (relative level above kernel_floor).
    """
    if traj.slices is None:
        raise ValueError("lower_bound_check needs stored slices")
    if float(np.max(traj.sup_norms)) < 1e-14:
        return {"skipped": True, "c_fit": 0.0}
    grid = traj.grid
    nt = len(traj.times)
    j0 = max(1, int(t_frac * (nt - 1)))
    c_fit = np.inf
    r2 = grid.sq_radius()
    for j in range(j0, nt):
        t = float(traj.times[j])
        k = (4.0 * np.pi * t) ** (-grid.dim / 2) * np.exp(-r2 / (4.0 * t))
        bound = t ** (params.sigma - 1.0) * k
        sel = k >= kernel_floor * np.max(k)
        ratio = traj.slices[j][sel] / bound[sel]
        c_fit = min(c_fit, float(np.min(ratio)))
    return {"skipped": False, "c_fit": c_fit,
            "window": (float(traj.times[j0]), float(traj.times[-1]))}


def critical_log_growth(sigma: float, dim: int, t0: float = 10.0,
                        factors=(10.0, 100.0, 1000.0)) -> dict:
    """Quadrature of the reaction mass of the homogeneous lower bound at the
    Fujita exponent: grows like log t (the critical blow-up mechanism).

    The space integral of (s^{sigma-1} K_s)^p is closed-form; its time
    exponent equals -1 exactly at p = p*.
    """
    p = p_star(sigma, dim)
    const = p ** (-dim / 2)

    def integrand(s):
        return const * s ** ((sigma - 1.0) * p) * (4.0 * np.pi * s) ** (
            dim * (1.0 - p) / 2)

    exponent = (sigma - 1.0) * p + dim * (1.0 - p) / 2.0
    ratios = []
    for f in factors:
        val, _ = integrate.quad(integrand, t0, f * t0, limit=200)
        ratios.append(val / np.log(f))
    ratios = np.asarray(ratios)
    return {"p_star": p, "time_exponent": exponent, "log_ratios": ratios,
            "ratio_spread": float(np.max(ratios) / np.min(ratios) - 1.0)}


def holder_seminorm(field: SpaceTimeField, order: float, n_pairs: int = 400,
                    seed: int = 0) -> float:
    """Sampled parabolic Hoelder seminorm sup |du| / (|dx|^2 + |dt|)^{order/2}.

    Diagnostic for trajectory regularity; distances in x use the torus
    metric.
    """
    rng = np.random.default_rng(seed)
    grid = field.grid
    nt = len(field.times)
    best = 0.0
    coords = grid.coords()
    for _ in range(n_pairs):
        j1, j2 = rng.integers(0, nt, size=2)
        i1 = tuple(rng.integers(0, grid.n, size=grid.dim))
        i2 = tuple(rng.integers(0, grid.n, size=grid.dim))
        if j1 == j2 and i1 == i2:
            continue
        dx = coords[i1] - coords[i2]
        dx = dx - grid.length * np.round(dx / grid.length)
        dist = float(np.sum(dx**2) + abs(field.times[j1] - field.times[j2]))
        du = abs(float(field.values[j1][i1] - field.values[j2][i2]))
        best = max(best, du / dist ** (order / 2.0))
    return best


# ---------------------------------------------------------------------------
# phase sweeps
# ---------------------------------------------------------------------------

@dataclass
class PhaseRow:
    sigma: float
    dim: int
    p: float
    data_scale: float
    status: str
    t_est: float | None
    rate_exp: float | None
    rate_ci: float | None


def classify_cell(small_escaped: bool, large_escaped: bool, p: float,
                  sigma: float, dim: int, near_crit_frac: float = 0.05) -> str:
    """Cell label from the two-amplitude protocol.

    blowup-all only if the small run escapes too; near the critical
    exponent a surviving small run is labeled indeterminate (critical
    blow-up is logarithmically slow, not resolvable at desk scale).
    """
    ps = p_star(sigma, dim)
    if p <= 1.0:
        return GLOBAL_ALL
    if small_escaped:
        return BLOWUP_ALL
    if abs(p - ps) <= near_crit_frac * ps:
        return INDETERMINATE
    return CONDITIONAL if large_escaped else INDETERMINATE


def sweep_phase(sigmas, ps, scales, spec_factory: Callable,
                near_crit_frac: float = 0.05,
                fit_kwargs: dict | None = None,
                runner: Callable | None = None) -> tuple[list[PhaseRow], dict]:
    """Run the two-amplitude protocol over the (sigma, p) grid.

    spec_factory(sigma, p, amp) builds the ProblemSpec for one run; runner
    (default the mild marcher) maps a spec to a trajectory.  Returns one row
    per run plus a cell-label dict keyed by (sigma, p).  Hard contradictions
    of the regime theorem (escape at p <= 1) raise.
    """
    from .mild_solver import BLOWUP, mild_march

    runner = runner or mild_march
    small_amp, large_amp = min(scales), max(scales)
    rows: list[PhaseRow] = []
    cells: dict[tuple[float, float], str] = {}
    for sg in sigmas:
        for p in ps:
            escaped = {}
            for amp in (small_amp, large_amp):
                spec = spec_factory(sg, p, amp)
                traj = runner(spec)
                esc = traj.status == BLOWUP
                escaped[amp] = esc
                t_est = rate_exp = rate_ci = None
                if esc:
                    try:
                        rep = fit_rate(traj, **(fit_kwargs or {}))
                        t_est, rate_exp, rate_ci = rep.t_est, rep.rate_exp, rep.rate_ci
                    except InsufficientDataError:
                        t_est = float(traj.times[-1])
                rows.append(PhaseRow(sigma=sg, dim=spec.grid.dim, p=p,
                                     data_scale=amp,
                                     status="blowup" if esc else traj.status,
                                     t_est=t_est, rate_exp=rate_exp,
                                     rate_ci=rate_ci))
                if p <= 1.0 and esc:
                    raise AssertionError(
                        f"regime contradiction: escape at p={p} <= 1")
            cells[(sg, p)] = classify_cell(escaped[small_amp],
                                           escaped[large_amp], p, sg,
                                           spec.grid.dim, near_crit_frac)
    return rows, cells


# ---------------------------------------------------------------------------
# validation battery
# ---------------------------------------------------------------------------

@dataclass
class ValidationEntry:
    name: str
    error: float
    tol: float
    passed: bool
    order: float | None = None

    def as_dict(self) -> dict:
        return {"name": self.name, "error": self.error, "tol": self.tol,
                "order": self.order, "passed": self.passed}


@dataclass
class ValidationReport:
    entries: list[ValidationEntry] = dc_field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def add(self, name, error, tol, order=None):
        self.entries.append(ValidationEntry(
            name=name, error=float(error), tol=float(tol),
            passed=bool(error < tol), order=None if order is None else float(order)))

    def as_dict(self) -> dict:
        return {"all_passed": self.all_passed,
                "entries": [e.as_dict() for e in self.entries]}


def _gauss_normalization_error(params, t, n):
    box = BoxGrid(length=max(16.0, 14.0 * np.sqrt(t)), n=n, dim=params.dim)
    k = heat_kernel(box.coords(), t, params)
    return abs(box.integrate(k) - 1.0)


def _semigroup_error(params, s, t, n):
    box = BoxGrid(length=max(20.0, 14.0 * np.sqrt(t)), n=n, dim=params.dim)
    ks = heat_kernel(box.coords(), s, params)
    kts = heat_kernel(box.coords(), t - s, params)
    conv = box.ifft(box.fft(ks) * box.fft(kts))
    kt = heat_kernel(box.coords(), t, params)
    return float(np.max(np.abs(conv - kt)))


def _poisson_normalization_error(params, y):
    sg, n = params.sigma, params.dim

    def x_integral(t):
        # grid quadrature of the spatial factor, per time
        r = 12.0 * np.sqrt(t)
        xs = np.linspace(-r, r, 801)
        vals = np.exp(-(xs**2) / (4.0 * t))
        one_d = np.trapezoid(vals, xs)
        return one_d**n

    def integrand(t):
        return (params.d_pois * y ** (2 * sg) * t ** (-n / 2 - 1 - sg)
                * np.exp(-y * y / (4 * t)) * x_integral(t))

    val, _ = integrate.quad(integrand, 0.0, np.inf, limit=400)
    return abs(val - 1.0)


def _marchaud_power_errors(sigma, nu, t, ns):
    errs = []
    for n in ns:
        ts = t * (np.linspace(0.0, 1.0, n + 1)) ** 1.5
        h = TimeHistory(times=ts, values=np.maximum(ts, 0.0) ** nu)
        approx = marchaud(h, t, sigma)
        exact = marchaud_power_rule(nu, sigma, t)
        errs.append(abs(approx - exact) / abs(exact))
    return errs


def _master_psi_error(params, eta, n_x, length, dt, t_eval, t_start):
    grid = BoxGrid(length=length, n=n_x, dim=params.dim)
    times = np.arange(t_start, t_eval + 0.5 * dt, dt)
    mem = SelfSimilarMemory(eta=eta, shift=0.0, scale=1.0)
    vals = np.stack([
        s**eta * heat_kernel(grid.coords(), s, params) for s in times])
    field = SpaceTimeField(grid, times, vals, mem)
    got = master_apply_slice(field, times[-1], params)
    t = times[-1]
    want = (special.gamma(eta + 1.0) / special.gamma(eta + 1.0 - params.sigma)
            * t ** (eta - params.sigma) * heat_kernel(grid.coords(), t, params))
    return float(np.max(np.abs(got - want)) / np.max(np.abs(want)))


def _fundamental_oracle_error(params, eta=None, t=1.0):
    """Reconstruct the self-similar profile from its own history action
    through the fundamental solution; pins the amplitude a_green."""
    sg = params.sigma
    if eta is None:
        eta = sg
    c_eta = special.gamma(eta + 1.0) / special.gamma(eta + 1.0 - sg)
    val, _ = integrate.quad(
        lambda s: s ** (eta - sg) * (t - s) ** (sg - 1.0), 0.0, t,
        points=[0.0, t], limit=200)
    recon = c_eta * params.a_green * (4.0 * np.pi) ** (params.dim / 2) * val
    return abs(recon - t**eta) / t**eta


def _c_flap_error(params, x_abs=1.3):
    sg, n = params.sigma, params.dim

    def integrand(t):
        return float(master_kernel(np.array([x_abs] + [0.0] * (n - 1))
                                   if n > 1 else x_abs, t, params))

    val, _ = integrate.quad(integrand, 0.0, np.inf, limit=400)
    want = params.c_flap * x_abs ** (-n - 2 * sg)
    return abs(val - want) / want


def _conormal_error(params, n_y, n_x=64, length=16.0, height=8.0, width=0.5):
    box = BoxGrid(length=length, n=n_x, dim=params.dim)
    grid = ExtGrid.create(box, n_y=n_y, height=height, params=params)
    mem = StationaryMemory(amp=1.0, width=width)
    ext = poisson_extend(mem, grid, params)
    got = conormal_trace(ext, grid, params)
    want = frac_laplacian(mem.initial_slice(box), params.sigma, box)
    return float(np.max(np.abs(got - want)) / np.max(np.abs(want)))


def validation_battery(params_factory: Callable[[float, int], KernelParams] = KernelParams.create,
                       resolution: str = "default") -> ValidationReport:
    """Closed-form identity battery; failures are report entries, not raises.

    ``params_factory`` exists so sensitivity tests can inject perturbed
    constants and watch the gated entries fail.
    """
    quick = resolution == "quick"
    rep = ValidationReport()
    sigmas = (0.5,) if quick else (0.25, 0.5, 0.75)

    for sg in sigmas:
        params = params_factory(sg, 1)
        tag = f"s{sg:g}"

        n_lo, n_hi = (128, 256) if quick else (192, 384)
        e_lo = max(_gauss_normalization_error(params, t, n_lo) for t in (0.25, 1.0, 4.0))
        e_hi = max(_gauss_normalization_error(params, t, n_hi) for t in (0.25, 1.0, 4.0))
        order = np.log2(max(e_lo, 1e-17) / max(e_hi, 1e-17))
        rep.add(f"gauss-normalization-{tag}", e_hi, 1e-6, order=order)

        e_semi = max(_semigroup_error(params, s, t, n_hi)
                     for s, t in ((0.25, 1.0), (0.5, 1.0), (1.0, 2.0)))
        rep.add(f"semigroup-{tag}", e_semi, 1e-6)

        lam_scale = 1.7
        x0 = np.array([0.9]) if params.dim == 1 else np.array([0.9] * params.dim)
        g1 = green_kernel(lam_scale * x0, lam_scale**2 * 2.0, params)
        g0 = green_kernel(x0, 2.0, params)
        e_hom_g = abs(g1 - lam_scale ** (-params.dim - 2.0 + 2.0 * sg) * g0) / abs(g0)
        m1 = master_kernel(lam_scale * x0, lam_scale**2 * 2.0, params)
        m0 = master_kernel(x0, 2.0, params)
        e_hom_m = abs(m1 - lam_scale ** (-params.dim - 2.0 - 2.0 * sg) * m0) / abs(m0)
        rep.add(f"homogeneity-{tag}", max(float(e_hom_g), float(e_hom_m)), 1e-12)

        e_pois = max(_poisson_normalization_error(params, y) for y in (0.1, 1.0, 10.0))
        rep.add(f"poisson-normalization-{tag}", e_pois, 1e-5)

        ns = (2000, 4000) if quick else (4000, 8000)
        errs = _marchaud_power_errors(sg, nu=0.5 if sg != 0.5 else 0.75, t=1.0, ns=ns)
        order = np.log2(errs[0] / errs[1]) / np.log2(ns[1] / ns[0])
        rep.add(f"marchaud-power-{tag}", errs[-1], 1e-3, order=order)

        rep.add(f"fundamental-oracle-{tag}", _fundamental_oracle_error(params), 1e-6)
        rep.add(f"flap-constant-{tag}", _c_flap_error(params), 1e-6)

    params_h = params_factory(0.5, 1)
    rep.add("kappa-at-half", abs(params_h.kappa - 1.0), 1e-14)

    e_psi = _master_psi_error(params_h, eta=0.5, n_x=64, length=16.0,
                              dt=0.01 if quick else 0.005, t_eval=1.0, t_start=0.1)
    rep.add("master-psi-identity", e_psi, 5e-2)

    e_con = _conormal_error(params_h, n_y=32 if quick else 64)
    rep.add("conormal-consistency", e_con, 5e-2)

    box = BoxGrid(length=16.0, n=32, dim=1)
    grid = ExtGrid.create(box, n_y=24, height=6.0, params=params_h)
    ones = poisson_extend(StationaryMemory(amp=1.0, width=None), grid, params_h)
    rep.add("extension-of-one", float(np.max(np.abs(ones - 1.0))), 1e-10)

    return rep
