"""Analytic memory-data families for the history t <= 0.

The nonlocal operator needs the solution on all past times, so runs are
driven by families whose history action is known in closed form per
Fourier mode on the periodic box.  Each family exposes:

  * physical values at t = 0 (the initial slice),
  * exact-in-time Fourier slices f_hat(xi, s),
  * the history term of the mild representation (forcing_hat),
  * the tail of the singular history integral used by the master operator,
  * its own Poisson extension to the upper half space.

Families either satisfy the decay hypothesis |Mf(z,s)| <= c |s|^{-gamma_H}
with gamma_H > sigma (so the mild representation converges), or declare
themselves invalid for mild marching and raise InvalidHistoryError there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import InvalidHistoryError
from .grids import BoxGrid
from .kernels import KernelParams
from .quadrature import exp_power_tail


def bessel_decay_profile(r, sigma: float):
    """Vertical decay of a single extension mode: phi(r) = 2^{1-s}/Gamma(s) r^s K_s(r).

    phi(0) = 1, phi(r) = 1 - c_s r^{2s} + O(r^2) near zero, exponential decay
    at infinity.  ``r = y * sqrt(lam)``.
    """
    r = np.asarray(r, dtype=float)
    out = np.empty(r.shape, dtype=float)
    g_s = special.gamma(sigma)
    small = r < 1e-4
    if np.any(small):
        c_small = special.gamma(1.0 - sigma) / (sigma * g_s * 4.0**sigma)
        out[small] = 1.0 - c_small * r[small] ** (2.0 * sigma)
    big = ~small
    if np.any(big):
        rb = r[big]
        out[big] = (2.0 ** (1.0 - sigma) / g_s) * rb**sigma * special.kv(sigma, rb)
    return out


def _zero_mode_array(grid: BoxGrid, value: float) -> np.ndarray:
    """Fourier coefficients of a spatially constant field."""
    out = np.zeros(grid.shape, dtype=complex)
    out.flat[0] = value * grid.length**grid.dim
    return out


class MemoryData:
    """Interface for analytic history families (see module docstring)."""

    def initial_slice(self, grid: BoxGrid) -> np.ndarray:
        raise NotImplementedError

    def sup_initial(self, grid: BoxGrid) -> float:
        return float(np.max(np.abs(self.initial_slice(grid))))

    def fourier_slice(self, grid: BoxGrid, s: float) -> np.ndarray:
        """f_hat(xi, s); exact in time, discrete transform in space."""
        raise NotImplementedError

    def validate_mild(self, params: KernelParams) -> None:
        """Raise InvalidHistoryError unless the mild history term converges."""

    def forcing_hat(self, grid: BoxGrid, t: float, params: KernelParams):
        """History term of the mild representation, per mode, at time t > 0.

        Returns (coefficients, tail_halfwidth); the halfwidth bounds any
        analytically truncated far-tail contribution (0 for exact paths).
        """
        raise NotImplementedError

    def history_tail_integral(self, grid: BoxGrid, t: float, b: float, sigma: float):
        """integral_b^inf exp(-lam tau) f_hat(xi, t - tau) tau^{-1-sigma} dtau."""
        raise NotImplementedError

    def extension_hat(self, grid: BoxGrid, y: float, params: KernelParams):
        """Poisson extension of the history, per mode, at height y, time 0."""
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroMemory(MemoryData):
    """Identically zero history."""

    def initial_slice(self, grid):
        return np.zeros(grid.shape)

    def fourier_slice(self, grid, s):
        return np.zeros(grid.shape, dtype=complex)

    def forcing_hat(self, grid, t, params):
        return np.zeros(grid.shape, dtype=complex), 0.0

    def history_tail_integral(self, grid, t, b, sigma):
        return np.zeros(grid.shape, dtype=complex)

    def extension_hat(self, grid, y, params):
        return np.zeros(grid.shape, dtype=complex)

    def describe(self):
        return {"family": "zero"}


@dataclass(frozen=True)
class ExpBumpMemory(MemoryData):
    """Gaussian bump in space, exponential ramp-up in time.

    f(z, s) = amp * exp(rate * s) * exp(-|z|^2 / (4 * width)).

    The workhorse family: its history action is a closed-form multiplier
    (lam + rate)^sigma per mode, so the linear problem it drives has an
    exact solution on the grid.
    """

    amp: float = 1.0
    rate: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if self.rate <= 0.0:
            raise ValueError("rate must be positive (history must fade)")
        if self.width <= 0.0:
            raise ValueError("width must be positive")

    def _bump(self, grid: BoxGrid) -> np.ndarray:
        return np.exp(-grid.sq_radius() / (4.0 * self.width))

    def _bump_hat(self, grid: BoxGrid) -> np.ndarray:
        return grid.fft(self._bump(grid))

    def initial_slice(self, grid):
        return self.amp * self._bump(grid)

    def fourier_slice(self, grid, s):
        return self.amp * np.exp(self.rate * s) * self._bump_hat(grid)

    def mhat_slice(self, grid, s, params):
        mult = (grid.lam + self.rate) ** params.sigma
        return self.amp * np.exp(self.rate * s) * mult * self._bump_hat(grid)

    def forcing_hat(self, grid, t, params):
        z = (grid.lam + self.rate) * t
        vals = self.amp * np.exp(self.rate * t) * special.gammaincc(params.sigma, z)
        return vals * self._bump_hat(grid), 0.0

    def history_tail_integral(self, grid, t, b, sigma):
        tail = exp_power_tail(b, grid.lam + self.rate, -1.0 - sigma)
        return self.amp * np.exp(self.rate * t) * tail * self._bump_hat(grid)

    def extension_hat(self, grid, y, params):
        r = y * np.sqrt(grid.lam + self.rate)
        return self._bump_hat(grid) * self.amp * bessel_decay_profile(r, params.sigma)

    def describe(self):
        return {"family": "exp_bump", "amp": self.amp, "rate": self.rate,
                "width": self.width}


@dataclass(frozen=True)
class StationaryMemory(MemoryData):
    """Time-constant history: f(z, s) = amp * exp(-|z|^2/(4 width)), or the
    constant amp when width is None.

    Valid for the master operator (its action is the fractional Laplacian)
    and for Poisson extension, but NOT for mild marching: a non-decaying
    history makes the representation integral diverge on the zero mode.
    """

    amp: float = 1.0
    width: float | None = 1.0

    def _profile(self, grid: BoxGrid) -> np.ndarray:
        if self.width is None:
            return np.full(grid.shape, 1.0)
        return np.exp(-grid.sq_radius() / (4.0 * self.width))

    def initial_slice(self, grid):
        return self.amp * self._profile(grid)

    def fourier_slice(self, grid, s):
        return self.amp * grid.fft(self._profile(grid))

    def mhat_slice(self, grid, s, params):
        return self.amp * grid.lam**params.sigma * grid.fft(self._profile(grid))

    def validate_mild(self, params):
        raise InvalidHistoryError(
            "stationary history does not decay: the mild history integral "
            "diverges on the zero mode")

    def forcing_hat(self, grid, t, params):
        self.validate_mild(params)

    def history_tail_integral(self, grid, t, b, sigma):
        tail = exp_power_tail(b, grid.lam, -1.0 - sigma)
        return self.amp * tail * grid.fft(self._profile(grid))

    def extension_hat(self, grid, y, params):
        r = y * np.sqrt(grid.lam)
        return self.amp * grid.fft(self._profile(grid)) * bessel_decay_profile(
            r, params.sigma)

    def describe(self):
        return {"family": "stationary", "amp": self.amp, "width": self.width}


@dataclass(frozen=True)
class SelfSimilarMemory(MemoryData):
    """Shifted self-similar profile f(z, s) = scale (s+shift)_+^eta K_{s+shift}(z).

    The master operator maps it to a multiple of itself with time exponent
    eta - sigma, which makes it both a supersolution generator and an
    exacting oracle for the operator quadrature.  eta = sigma - 1 recovers
    the fundamental solution (up to 1/Gamma(sigma)); closed forms that
    divide by Gamma(eta + 1 - sigma) require eta > sigma - 1.
    """

    eta: float = 0.0
    shift: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.eta <= -1.0:
            raise ValueError("eta must exceed -1")
        if self.shift < 0.0:
            raise ValueError("shift must be nonnegative")

    def _amp(self, s: float) -> float:
        u = s + self.shift
        return self.scale * u**self.eta if u > 0.0 else 0.0

    def initial_slice(self, grid):
        if self.shift == 0.0:
            return np.zeros(grid.shape)
        u = self.shift
        k = (4.0 * np.pi * u) ** (-grid.dim / 2) * np.exp(-grid.sq_radius() / (4.0 * u))
        return self.scale * u**self.eta * k

    def fourier_slice(self, grid, s):
        u = s + self.shift
        if u <= 0.0:
            return np.zeros(grid.shape, dtype=complex)
        return (self.scale * u**self.eta
                * np.exp(-grid.lam * u)).astype(complex)

    def _power_coeff(self, sigma: float) -> float:
        if self.eta <= sigma - 1.0:
            raise InvalidHistoryError(
                f"eta={self.eta} <= sigma-1: no closed-form history action")
        return special.gamma(self.eta + 1.0) / special.gamma(self.eta + 1.0 - sigma)

    def mhat_slice(self, grid, s, params):
        u = s + self.shift
        if u <= 0.0:
            return np.zeros(grid.shape, dtype=complex)
        c = self._power_coeff(params.sigma)
        return (self.scale * c * u ** (self.eta - params.sigma)
                * np.exp(-grid.lam * u)).astype(complex)

    def validate_mild(self, params):
        self._power_coeff(params.sigma)

    def forcing_hat(self, grid, t, params):
        # closed form: the s-integral collapses to an incomplete Beta because
        # the exponential factors combine to exp(-lam (t + shift)).
        s = params.sigma
        c = self._power_coeff(s)
        if self.shift == 0.0:
            return np.zeros(grid.shape, dtype=complex), 0.0
        u = t + self.shift
        x = self.shift / u
        a = self.eta - s + 1.0
        beta_part = special.betainc(a, s, x) * special.beta(a, s)
        vals = (self.scale * c * np.exp(-grid.lam * u) * u**self.eta
                * beta_part / special.gamma(s))
        return vals.astype(complex), 0.0

    def history_tail_integral(self, grid, t, b, sigma):
        # the exponential factors combine to exp(-lam (t + shift)); what is
        # left is an incomplete Beta with negative parameter, written through
        # the Gauss hypergeometric function.
        upper = t + self.shift
        if upper <= b:
            return np.zeros(grid.shape, dtype=complex)
        x = (upper - b) / upper
        hyp = special.hyp2f1(self.eta + 1.0, 1.0 + sigma, self.eta + 2.0, x)
        scalar = (upper ** (self.eta - sigma) * x ** (self.eta + 1.0)
                  / (self.eta + 1.0) * hyp)
        return (self.scale * scalar * np.exp(-grid.lam * upper)).astype(complex)

    def extension_hat(self, grid, y, params):
        # same collapse: the mode dependence is pure exp(-lam shift), and a
        # scalar Poisson-weight integral over the history remains.
        if self.shift == 0.0 or y == 0.0:
            return self.fourier_slice(grid, 0.0)
        s = params.sigma
        pref = params.d_pois * (4.0 * np.pi) ** (grid.dim / 2) * y ** (2.0 * s)
        val, _ = integrate.quad(
            lambda tau: tau ** (-1.0 - s) * (self.shift - tau) ** self.eta
            * np.exp(-y * y / (4.0 * tau)),
            0.0, self.shift, points=[self.shift], limit=200)
        return (self.scale * pref * val
                * np.exp(-grid.lam * self.shift)).astype(complex)

    def describe(self):
        return {"family": "self_similar", "eta": self.eta, "shift": self.shift,
                "scale": self.scale}


@dataclass(frozen=True)
class PowerRampMemory(MemoryData):
    """Space-constant ramp f(s) = coeff * (s + shift)_+^nu.

    With coeff = c_* and nu = sigma/(1-p) this is the explicit global
    solution of the sublinear problem restricted to the past.
    """

    coeff: float
    nu: float
    shift: float

    def __post_init__(self):
        if self.nu <= 0.0:
            raise ValueError("nu must be positive")
        if self.shift <= 0.0:
            raise ValueError("shift must be positive")

    @classmethod
    def global_solution(cls, sigma: float, p: float, shift: float) -> "PowerRampMemory":
        if not 0.0 < p < 1.0:
            raise ValueError("global ramp requires 0 < p < 1")
        nu = sigma / (1.0 - p)
        c_star = (special.gamma(1.0 + nu)
                  / special.gamma(1.0 + nu - sigma)) ** (1.0 / (p - 1.0))
        return cls(coeff=c_star, nu=nu, shift=shift)

    def value(self, s: float) -> float:
        u = s + self.shift
        return self.coeff * u**self.nu if u > 0.0 else 0.0

    def initial_slice(self, grid):
        return np.full(grid.shape, self.value(0.0))

    def fourier_slice(self, grid, s):
        return _zero_mode_array(grid, self.value(s))

    def _power_coeff(self, sigma):
        if self.nu <= sigma - 1.0:
            raise InvalidHistoryError("nu <= sigma - 1: divergent history")
        return special.gamma(self.nu + 1.0) / special.gamma(self.nu + 1.0 - sigma)

    def validate_mild(self, params):
        self._power_coeff(params.sigma)

    def forcing_hat(self, grid, t, params):
        s = params.sigma
        c = self._power_coeff(s)
        u = t + self.shift
        x = self.shift / u
        a = self.nu - s + 1.0
        val = (self.coeff * c * u**self.nu
               * special.betainc(a, s, x) * special.beta(a, s) / special.gamma(s))
        return _zero_mode_array(grid, val), 0.0

    def history_tail_integral(self, grid, t, b, sigma):
        upper = t + self.shift
        if upper <= b:
            return np.zeros(grid.shape, dtype=complex)
        # zero mode only: integral_b^upper (t - tau + shift)^nu tau^{-1-sigma} dtau
        val, _ = integrate.quad(
            lambda tau: (upper - tau) ** self.nu * tau ** (-1.0 - sigma), b, upper)
        return _zero_mode_array(grid, self.coeff * val)

    def extension_hat(self, grid, y, params):
        if y == 0.0:
            return self.fourier_slice(grid, 0.0)
        s = params.sigma
        pref = params.d_pois * (4.0 * np.pi) ** (grid.dim / 2) * y ** (2.0 * s)
        val, _ = integrate.quad(
            lambda tau: (self.shift - tau) ** self.nu
            * pref * tau ** (-1.0 - s) * np.exp(-y * y / (4.0 * tau)),
            0.0, self.shift)
        return _zero_mode_array(grid, self.coeff * val)

    def describe(self):
        return {"family": "power_ramp", "coeff": self.coeff, "nu": self.nu,
                "shift": self.shift}


@dataclass(frozen=True)
class BlowupTailMemory(MemoryData):
    """The explicit blow-up solution z(s) = c (T - s)^{-beta} restricted to s <= 0.

    Space-constant; marching it forward with reaction exponent p must track
    z itself until the horizon T.  Its history action is z^p, so the decay
    hypothesis holds with gamma_H = beta + sigma > sigma.
    """

    sigma: float
    p: float
    horizon: float

    def __post_init__(self):
        if self.p <= 1.0:
            raise ValueError("blow-up tail requires p > 1")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (0, 1)")

    @property
    def beta(self) -> float:
        return self.sigma / (self.p - 1.0)

    @property
    def coefficient(self) -> float:
        b = self.beta
        return (special.gamma(b + self.sigma) / special.gamma(b)) ** (1.0 / (self.p - 1.0))

    def value(self, s: float) -> float:
        return self.coefficient * (self.horizon - s) ** (-self.beta)

    def initial_slice(self, grid):
        return np.full(grid.shape, self.value(0.0))

    def fourier_slice(self, grid, s):
        return _zero_mode_array(grid, self.value(s))

    def forcing_hat(self, grid, t, params):
        if abs(params.sigma - self.sigma) > 1e-12:
            raise ValueError("params.sigma must match the family's sigma")
        s, b, T = self.sigma, self.beta, self.horizon
        a = b + s
        z = 1.0 - t / T
        val = (self.coefficient**self.p * t**s * T ** (-a)
               * special.hyp2f1(a, 1.0, b + 1.0, z) / (b * special.gamma(s)))
        return _zero_mode_array(grid, val), 0.0

    def forcing_zero_mode_numeric(self, t: float, params: KernelParams,
                                  s_cut: float = 1e6):
        """Quadrature route for the zero mode with an explicit far-tail bound.

        Returns (midpoint, halfwidth): history is integrated out to
        s = -s_cut (log substitution for the slowly decaying far range), and
        the remainder is bracketed by the decay hypothesis bound
        c * s_cut^{sigma - gamma_H} / (gamma_H - sigma).
        """
        s = params.sigma
        zp = self.coefficient**self.p
        a = self.beta + s

        def f(r):
            return zp * (self.horizon + r) ** (-a) * (t + r) ** (s - 1.0)

        split = 10.0 * max(self.horizon, t, 1.0)
        val1, _ = integrate.quad(f, 0.0, split, limit=200)
        val2, _ = integrate.quad(lambda u: f(np.exp(u)) * np.exp(u),
                                 np.log(split), np.log(s_cut), limit=200)
        gamma_h = a
        tail_hi = zp * s_cut ** (s - gamma_h) / (gamma_h - s)
        mid = (val1 + val2 + 0.5 * tail_hi) / special.gamma(s)
        return mid, 0.5 * tail_hi / special.gamma(s)

    def history_tail_integral(self, grid, t, b, sigma):
        zp = self.coefficient
        val, _ = integrate.quad(
            lambda tau: zp * (self.horizon - t + tau) ** (-self.beta)
            * tau ** (-1.0 - sigma),
            b, np.inf, limit=200)
        return _zero_mode_array(grid, val)

    def extension_hat(self, grid, y, params):
        if y == 0.0:
            return self.fourier_slice(grid, 0.0)
        s = params.sigma
        pref = params.d_pois * (4.0 * np.pi) ** (grid.dim / 2) * y ** (2.0 * s)
        val, _ = integrate.quad(
            lambda tau: self.value(-tau) * pref * tau ** (-1.0 - s)
            * np.exp(-y * y / (4.0 * tau)),
            0.0, np.inf, limit=200)
        return _zero_mode_array(grid, val)

    def describe(self):
        return {"family": "blowup_tail", "sigma": self.sigma, "p": self.p,
                "horizon": self.horizon}


_FAMILIES = {
    "zero": ZeroMemory,
    "exp_bump": ExpBumpMemory,
    "stationary": StationaryMemory,
    "self_similar": SelfSimilarMemory,
    "power_ramp": PowerRampMemory,
    "blowup_tail": BlowupTailMemory,
}


def memory_from_dict(d: dict) -> MemoryData:
    """Build a family from its describe()-style dictionary."""
    import dataclasses

    d = dict(d)
    name = d.pop("family")
    if name not in _FAMILIES:
        raise ValueError(f"unknown memory family '{name}'")
    cls = _FAMILIES[name]
    allowed = {f.name for f in dataclasses.fields(cls)}
    for key in d:
        if key not in allowed:
            raise ValueError(f"unknown key [memory] {key} for family '{name}'")
    return cls(**d)
