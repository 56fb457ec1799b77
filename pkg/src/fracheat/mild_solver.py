"""Time marching of the mild-solution representation.

Each new slice is the history forcing plus the fundamental-solution
convolution of the reaction over all past panels.  Per Fourier mode the
panel integrals use exact moments of exp(-lam tau) tau^{sigma-1} against
piecewise-linear reaction data; the newest panel's unknown endpoint is
resolved by fixed-point (Picard) iteration, accepted only on measured
contraction.  Steps adapt toward blow-up: dt shrinks with the natural
time scale sup^{-(p-1)/sigma}, and detection means the step size has
collapsed below the floor while the sup-norm sits above the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy import special

from .errors import InvalidHistoryError
from .fractional_ops import SpaceTimeField, master_apply_slice
from .grids import BoxGrid
from .kernels import KernelParams
from .memory import MemoryData
from .quadrature import exp_power_moment, panel_weights

COMPLETED = "completed-horizon"
BLOWUP = "blowup-detected"
STEP_FAILURE = "step-failure"


@dataclass(frozen=True)
class ProblemSpec:
    """Everything a nonlinear run needs.

    reaction is "power" (u^p with u clipped at 0) or "none" (pure history
    relaxation); prescribed forcing enters through mild_march's ``forcing``
    argument instead.
    """

    params: KernelParams
    p: float
    memory: MemoryData
    grid: BoxGrid
    t_max: float
    dt_init: float = 1e-3
    dt_floor: float | None = None
    dt_max: float = 0.25
    dt_growth: float = 1.15
    rate_safety: float = 0.1
    blowup_threshold: float = 1e5
    picard_max_iter: int = 30
    picard_tol: float = 1e-9
    containment_frac: float = 0.05
    coarsen_age: float = 16.0
    reaction: str = "power"
    store_slices: bool = True

    def __post_init__(self):
        if self.p <= 0.0:
            raise ValueError("p must be positive")
        if self.t_max <= 0.0 or self.dt_init <= 0.0:
            raise ValueError("t_max and dt_init must be positive")
        if self.reaction not in ("power", "none"):
            raise ValueError("reaction must be 'power' or 'none'")
        if self.dt_floor is not None and self.dt_floor <= 0.0:
            raise ValueError("dt_floor must be positive")

    @property
    def dt_floor_effective(self) -> float:
        """Default floor: just below the natural step at the blow-up threshold,
        so the rate-based shrink collapses the step right past detection."""
        if self.dt_floor is not None:
            return self.dt_floor
        if self.reaction == "power" and self.p > 1.0:
            expo = (self.p - 1.0) / self.params.sigma
            return 0.99 * self.rate_safety * self.blowup_threshold ** (-expo)
        return 1e-10 * self.t_max

    @property
    def dt_floor_hard(self) -> float:
        """Absolute stop well below the detection floor; transient step
        halving (a struggling fixed-point iteration) may dip below the
        detection floor without ending the run."""
        return 1e-3 * self.dt_floor_effective

    def validate_threshold(self) -> None:
        sup0 = self.memory.sup_initial(self.grid)
        if self.blowup_threshold <= sup0:
            raise ValueError(
                f"blowup_threshold={self.blowup_threshold} must exceed the "
                f"initial sup-norm {sup0}")


@dataclass
class Trajectory:
    """Marching output: times, slices, sup-norms, step diagnostics, status."""

    grid: BoxGrid
    times: np.ndarray
    sup_norms: np.ndarray
    dts: np.ndarray
    picard_iters: np.ndarray
    status: str
    slices: np.ndarray | None = None
    containment_max: float = 0.0
    forcing_tail_max: float = 0.0
    notes: dict = dc_field(default_factory=dict)

    def as_field(self, memory: MemoryData) -> SpaceTimeField:
        if self.slices is None:
            raise ValueError("trajectory was run without stored slices")
        return SpaceTimeField(self.grid, self.times, self.slices, memory)


class _HistoryNodes:
    """Reaction values at accepted times, coarsened logarithmically.

    Adjacent panels are merged (middle node dropped, exact kernel moments
    kept) once their age exceeds coarsen_age times their combined span; the
    kernel varies slowly there, so linear data across the merged panel stays
    accurate while the panel count grows only logarithmically.
    """

    def __init__(self, coarsen_age: float):
        self.times: list[float] = []
        self.hats: list[np.ndarray] = []
        self.age = coarsen_age

    def append(self, t: float, v_hat: np.ndarray) -> None:
        self.times.append(t)
        self.hats.append(v_hat)

    def coarsen(self, t_now: float) -> None:
        if self.age <= 0.0:
            return
        i = 0
        while i + 2 < len(self.times):
            span = self.times[i + 2] - self.times[i]
            if t_now - self.times[i + 2] >= self.age * span:
                del self.times[i + 1]
                del self.hats[i + 1]
            else:
                i += 1

    def convolve(self, t_new: float, lam: np.ndarray, sigma: float) -> np.ndarray:
        """Sum of all closed panels against the fundamental kernel at t_new."""
        acc = np.zeros(lam.shape, dtype=complex)
        g_s = special.gamma(sigma)
        for j in range(len(self.times) - 1):
            a = t_new - self.times[j + 1]
            b = t_new - self.times[j]
            w_near, w_far = panel_weights(a, b, lam, sigma - 1.0)
            acc += (w_near * self.hats[j + 1] + w_far * self.hats[j]) / g_s
        return acc


def _reaction_slice(u: np.ndarray, p: float) -> np.ndarray:
    return np.maximum(u, 0.0) ** p


def mild_march(spec: ProblemSpec,
               forcing: Callable[[BoxGrid, float], np.ndarray] | None = None
               ) -> Trajectory:
    """March the mild representation until the horizon, blow-up, or failure.

    ``forcing`` replaces the reaction with a prescribed h(grid, t) slice
    (linear mode: no Picard iteration).
    """
    grid, params, p = spec.grid, spec.params, spec.p
    sigma = params.sigma
    lam = grid.lam
    spec.memory.validate_mild(params)
    if forcing is None and spec.reaction == "power":
        spec.validate_threshold()

    def reaction_of(u, t):
        if forcing is not None:
            return forcing(grid, t)
        if spec.reaction == "none":
            return np.zeros(grid.shape)
        return _reaction_slice(u, p)

    u = spec.memory.initial_slice(grid)
    t = 0.0
    nodes = _HistoryNodes(spec.coarsen_age)
    nodes.append(0.0, grid.fft(reaction_of(u, 0.0)))

    times = [0.0]
    slices = [u]
    sups = [float(np.max(np.abs(u)))]
    dts = [0.0]
    iters = [0]
    containment_max = grid.boundary_band_fraction(u)
    tail_max = 0.0
    status = None
    dt = min(spec.dt_init, spec.t_max)
    g_s = special.gamma(sigma)
    floor = spec.dt_floor_effective

    while True:
        t_new = t + dt
        forcing_hat, halfwidth = spec.memory.forcing_hat(grid, t_new, params)
        base_hat = forcing_hat + nodes.convolve(t_new, lam, sigma)

        # newest panel [t, t_new]: known left node now, unknown right node
        m0 = exp_power_moment(0.0, dt, lam, sigma - 1.0)
        m1 = exp_power_moment(0.0, dt, lam, sigma)
        theta = m1 / dt
        w_unknown = (m0 - theta) / g_s
        base_hat = base_hat + (theta / g_s) * nodes.hats[-1]

        ok = True
        n_iter = 0
        if forcing is not None or spec.reaction == "none":
            v_new = reaction_of(u, t_new)
            u_new = grid.ifft(base_hat + w_unknown * grid.fft(v_new))
        else:
            u_guess = u
            prev_diff = np.inf
            grew = 0
            u_new = None
            for n_iter in range(1, spec.picard_max_iter + 1):
                v_new = _reaction_slice(u_guess, p)
                u_next = grid.ifft(base_hat + w_unknown * grid.fft(v_new))
                diff = float(np.max(np.abs(u_next - u_guess)))
                scale = max(float(np.max(np.abs(u_next))), 1e-300)
                u_guess = u_next
                if not np.isfinite(diff):
                    break
                if diff <= spec.picard_tol * scale:
                    u_new = u_next
                    break
                grew = grew + 1 if diff >= prev_diff else 0
                if grew >= 2:
                    break  # persistent non-contraction
                prev_diff = diff
            ok = u_new is not None

        if ok and not np.all(np.isfinite(u_new)):
            ok = False

        if not ok:
            dt *= 0.5
            if sups[-1] >= spec.blowup_threshold and dt < floor:
                status = BLOWUP
                break
            if dt < spec.dt_floor_hard:
                status = STEP_FAILURE
                break
            continue

        # accept
        t = t_new
        u = u_new
        sup = float(np.max(np.abs(u)))
        nodes.append(t, grid.fft(reaction_of(u, t)))
        nodes.coarsen(t)
        times.append(t)
        sups.append(sup)
        dts.append(dt)
        iters.append(n_iter)
        if spec.store_slices:
            slices.append(u)
        containment_max = max(containment_max, grid.boundary_band_fraction(u))
        tail_max = max(tail_max, halfwidth)

        if t >= spec.t_max * (1.0 - 1e-12):
            status = COMPLETED
            break

        dt_next = min(dt * spec.dt_growth, spec.dt_max, spec.t_max - t)
        if forcing is None and spec.reaction == "power" and p > 1.0 and sup > 0.0:
            expo = (p - 1.0) / sigma
            dt_next = min(dt_next, spec.rate_safety * sup ** (-expo))
        if dt_next < floor and dt_next < dt:
            # a genuine collapse, not the initial ramp
            if sup >= spec.blowup_threshold:
                status = BLOWUP
                break
            if dt_next < spec.dt_floor_hard:
                status = STEP_FAILURE
                break
        dt = dt_next

    return Trajectory(
        grid=grid,
        times=np.asarray(times),
        sup_norms=np.asarray(sups),
        dts=np.asarray(dts),
        picard_iters=np.asarray(iters),
        status=status,
        slices=np.asarray(slices) if spec.store_slices else None,
        containment_max=containment_max,
        forcing_tail_max=tail_max,
        notes={"containment_frac_limit": spec.containment_frac,
               "containment_ok": containment_max <= spec.containment_frac},
    )


def linear_representation(grid: BoxGrid, params: KernelParams,
                          memory: MemoryData,
                          forcing: Callable[[BoxGrid, float], np.ndarray],
                          t: float, n_panels: int = 2048) -> np.ndarray:
    """Direct dense quadrature of the representation formula for Mu = h.

    Independent of the marching state: a fresh graded product integration
    of the prescribed forcing against the fundamental kernel, used as the
    reference for the marcher's linear consistency.
    """
    sigma = params.sigma
    lam = grid.lam
    g_s = special.gamma(sigma)
    s_nodes = t * (1.0 - (1.0 - np.linspace(0.0, 1.0, n_panels + 1)) ** 2)
    hats = [grid.fft(forcing(grid, s)) for s in s_nodes]
    acc, _ = memory.forcing_hat(grid, t, params)
    acc = acc.astype(complex)
    for j in range(n_panels):
        a = t - s_nodes[j + 1]
        b = t - s_nodes[j]
        if b <= 0.0:
            continue
        if a <= 0.0:
            m0 = exp_power_moment(0.0, b, lam, sigma - 1.0)
            m1 = exp_power_moment(0.0, b, lam, sigma)
            th = m1 / b
            acc += ((m0 - th) * hats[j + 1] + th * hats[j]) / g_s
        else:
            w_near, w_far = panel_weights(a, b, lam, sigma - 1.0)
            acc += (w_near * hats[j + 1] + w_far * hats[j]) / g_s
    return grid.ifft(acc)


def residual_check(traj: Trajectory, spec: ProblemSpec,
                   n_samples: int = 16, seed: int = 0,
                   t_window: tuple[float, float] = (0.3, 0.95)) -> dict:
    """Evaluate M u - u^p at random interior nodes of a completed run.

    Reports the maximum relative residual (relative to the local reaction
    scale).  Samples stay inside t_window (fractions of the final time) so
    the initial layer is excluded.
    """
    if traj.slices is None:
        raise ValueError("residual_check needs stored slices")
    field = traj.as_field(spec.memory)
    rng = np.random.default_rng(seed)
    nt = len(traj.times)
    lo = max(1, int(t_window[0] * (nt - 1)))
    hi = max(lo + 1, int(t_window[1] * (nt - 1)))
    entries = []
    for _ in range(n_samples):
        j = int(rng.integers(lo, hi + 1))
        t = float(traj.times[j])
        mu = master_apply_slice(field, t, spec.params)
        if spec.reaction == "power":
            rhs = _reaction_slice(traj.slices[j], spec.p)
        else:
            rhs = np.zeros(spec.grid.shape)
        idx = tuple(rng.integers(0, spec.grid.n, size=spec.grid.dim))
        scale = max(float(np.max(np.abs(rhs))), 1e-14)
        res = abs(float(mu[idx] - rhs[idx])) / scale
        entries.append({"t": t, "idx": tuple(int(i) for i in idx), "rel_residual": res})
    max_rel = max(e["rel_residual"] for e in entries) if entries else 0.0
    return {"max_rel_residual": max_rel, "entries": entries}
