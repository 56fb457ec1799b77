"""Marchaud derivative, master operator, and fractional Laplacian.

The master operator applied to u at (x, t) integrates u(x,t) - u(z,s)
against the space-time kernel over all past times.  On the periodic box
the spatial convolution diagonalizes per Fourier mode, which splits the
operator into an exact |xi|^{2 sigma} part plus a damped history-difference
integral handled by product integration (exact moments of
exp(-lam tau) tau^{-1-sigma} against piecewise-linear data).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import InvalidHistoryError
from .grids import BoxGrid
from .kernels import KernelParams
from .memory import MemoryData, ZeroMemory
from .quadrature import exp_power_moment, exp_power_tail, panel_weights


# ---------------------------------------------------------------------------
# scalar histories and the Marchaud derivative
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroBefore:
    """History vanishes identically before the first sample."""


@dataclass(frozen=True)
class PowerDecay:
    """History behaves like coeff * |s|^{-gamma_h} before the first sample.

    gamma_h must exceed the order sigma of any derivative taken of this
    history (decay hypothesis); enforced at evaluation time.
    """

    coeff: float
    gamma_h: float


@dataclass(frozen=True)
class TimeHistory:
    """Sampled scalar history with an analytic tail model for the deep past."""

    times: np.ndarray
    values: np.ndarray
    tail: ZeroBefore | PowerDecay = field(default_factory=ZeroBefore)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("need matching 1-d arrays with at least 2 samples")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("sample times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("history samples must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if isinstance(self.tail, PowerDecay):
            if t[0] >= 0.0:
                raise ValueError("power-decay tail needs a negative first sample time")
            if self.tail.gamma_h <= 0.0:
                raise ValueError("gamma_h must be positive")


def marchaud(h: TimeHistory, t: float, sigma: float) -> float:
    """Marchaud derivative of order sigma of the sampled history at time t.

    Product integration: h is piecewise linear between samples and the
    singular weight (t-s)^{-1-sigma} is integrated exactly on each panel;
    the deep past enters through the tail model.
    """
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    if isinstance(h.tail, PowerDecay) and h.tail.gamma_h <= sigma:
        raise InvalidHistoryError(
            f"power-decay tail with gamma_h={h.tail.gamma_h} <= sigma={sigma}: "
            "history integral diverges")
    times, values = h.times, h.values
    if t < times[0] or t > times[-1] * (1 + 1e-12) + 1e-300:
        raise ValueError("t must lie within the sampled range")
    v_t = float(np.interp(t, times, values))

    keep = times < t * (1 - 1e-15) if t > 0 else times < t
    ts = np.append(times[keep], t)
    vs = np.append(values[keep], v_t)

    lam0 = np.zeros(1)
    acc = 0.0
    n = len(ts)
    for j in range(n - 1):
        a = t - ts[j + 1]
        b = t - ts[j]
        if b <= 0.0:
            continue
        d_near = v_t - vs[j + 1]
        d_far = v_t - vs[j]
        if a <= 0.0:
            # newest panel: the difference vanishes linearly at the
            # singularity, so only the slope moment survives
            m1 = float(exp_power_moment(0.0, b, lam0, -sigma)[0])
            acc += d_far * m1 / b
        else:
            w_near, w_far = panel_weights(a, b, lam0, -1.0 - sigma)
            acc += d_near * float(w_near[0]) + d_far * float(w_far[0])

    # tail before the first sample
    b0 = t - times[0]
    acc += v_t * b0 ** (-sigma) / sigma
    if isinstance(h.tail, PowerDecay):
        c, g = h.tail.coeff, h.tail.gamma_h
        tail_val, _ = integrate.quad(
            lambda s: np.abs(s) ** (-g) * (t - s) ** (-1.0 - sigma),
            -np.inf, times[0], limit=200)
        acc -= c * tail_val

    abs_gamma = special.gamma(1.0 - sigma) / sigma
    return acc / abs_gamma


def marchaud_power_rule(nu: float, sigma: float, t: float) -> float:
    """Exact Marchaud derivative of s -> s_+^nu at t > 0.

    Equals Gamma(nu+1)/Gamma(nu+1-sigma) * t^{nu-sigma}; requires
    nu > sigma - 1, below which the defining integral diverges.
    """
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    if nu <= sigma - 1.0:
        raise ValueError(f"nu={nu} <= sigma-1={sigma - 1.0}: divergent integral")
    if t <= 0.0:
        raise ValueError("t must be positive")
    return (special.gamma(nu + 1.0) / special.gamma(nu + 1.0 - sigma)
            * t ** (nu - sigma))


# ---------------------------------------------------------------------------
# gridded space-time fields and the master operator
# ---------------------------------------------------------------------------

class SpaceTimeField:
    """u on a periodic box at increasing times, with analytic history before.

    values has shape (len(times), *grid.shape).  The memory family supplies
    u for s <= times[0]; Fourier slices are cached since the field is
    immutable by convention.
    """

    def __init__(self, grid: BoxGrid, times, values, memory: MemoryData | None = None):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or np.any(np.diff(times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if values.shape != (times.size, *grid.shape):
            raise ValueError("values shape must be (n_times, *grid.shape)")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.times = times
        self.values = values
        self.memory = memory if memory is not None else ZeroMemory()
        self._hat_cache: dict[int, np.ndarray] = {}

    def slice_hat(self, j: int) -> np.ndarray:
        if j not in self._hat_cache:
            self._hat_cache[j] = self.grid.fft(self.values[j])
        return self._hat_cache[j]

    def time_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a stored time")
        return j

    def containment_fraction(self, j: int | None = None) -> float:
        j = len(self.times) - 1 if j is None else j
        return self.grid.boundary_band_fraction(self.values[j])


def frac_laplacian(u: np.ndarray, sigma: float, grid: BoxGrid) -> np.ndarray:
    """Fractional Laplacian via the spectral multiplier |xi|^{2 sigma}."""
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    return grid.ifft(grid.lam**sigma * grid.fft(u))


def master_apply_slice(field: SpaceTimeField, t: float, params: KernelParams) -> np.ndarray:
    """Master operator applied to the field, full spatial slice at time t.

    Per mode: lam^sigma u_hat(t) plus the damped history-difference integral
    (product integration over the stored panels, analytic family tail).
    """
    sigma = params.sigma
    grid = field.grid
    idx = field.time_index(t)
    if idx == 0:
        raise ValueError("t must exceed the first stored time")
    lam = grid.lam
    u_hat_t = field.slice_hat(idx)

    acc = np.zeros(grid.shape, dtype=complex)
    for j in range(idx):
        a = t - field.times[j + 1]
        b = t - field.times[j]
        d_near = u_hat_t - field.slice_hat(j + 1)
        d_far = u_hat_t - field.slice_hat(j)
        if j == idx - 1:
            m1 = exp_power_moment(0.0, b, lam, -sigma)
            acc += d_far * (m1 / b)
        else:
            w_near, w_far = panel_weights(a, b, lam, -1.0 - sigma)
            acc += d_near * w_near + d_far * w_far

    b0 = t - field.times[0]
    acc += u_hat_t * exp_power_tail(b0, lam, -1.0 - sigma)
    acc -= field.memory.history_tail_integral(grid, t, b0, sigma)

    abs_gamma = special.gamma(1.0 - sigma) / sigma
    out_hat = lam**sigma * u_hat_t + acc / abs_gamma
    return grid.ifft(out_hat)


def master_apply(field: SpaceTimeField, x, t: float, params: KernelParams) -> float:
    """Master operator value at a single grid point (x, t)."""
    idx = field.grid.nearest_index(x)
    return float(master_apply_slice(field, t, params)[idx])


# ---------------------------------------------------------------------------
# history term of the mild representation
# ---------------------------------------------------------------------------

def memory_forcing(f: MemoryData, grid: BoxGrid, t: float,
                   params: KernelParams) -> tuple[np.ndarray, float]:
    """History term of the mild representation at time t > 0.

    Returns (physical slice, tail_halfwidth).  The halfwidth is the rigorous
    bound on any analytically truncated far-tail contribution; exact closed
    forms report 0.
    """
    if t <= 0.0:
        raise ValueError("memory forcing is defined for t > 0")
    f.validate_mild(params)
    coeffs, halfwidth = f.forcing_hat(grid, t, params)
    return grid.ifft(coeffs), halfwidth
