"""Space-time kernels of the fractional heat operator and their constants.

The operator of order sigma in (0, 1) is driven by the kernel

    M(x, t) = K_t(x) * L(t),        t > 0,

where K_t is the Gauss kernel and L(t) = t**(-1-sigma) / |Gamma(-sigma)|.
Its fundamental solution G swaps the sign of the time exponent,
G = K_t * t**(sigma-1) / Gamma(sigma).  The Poisson kernel P_y extends
boundary data into the upper half space for the equivalent local problem
with weight y**gamma, gamma = 1 - 2*sigma.

All evaluations work in log-space internally so that extreme |x|**2/t do
not overflow before the final exponentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special


def gamma_fn(x):
    """Euler Gamma on (-2, 50) excluding the poles {0, -1, -2}.

    Thin guard over scipy's implementation; every constant in this module
    funnels through it, so reject arguments where the value is not finite.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= -2.0) or np.any(x >= 50.0):
        raise ValueError("gamma_fn domain is (-2, 50)")
    if np.any((x == np.round(x)) & (x <= 0.0)):
        raise ValueError("gamma_fn pole")
    return special.gamma(x) if x.ndim else float(special.gamma(x))


@dataclass(frozen=True)
class KernelParams:
    """Order sigma, dimension, and every derived constant.

    Use :meth:`create`; the constructor does not validate consistency.

    Attributes:
        sigma: fractional order, in (0, 1).
        dim: spatial dimension N >= 1.
        gamma_w: extension weight exponent 1 - 2*sigma, in (-1, 1).
        kappa: conormal constant Gamma(sigma) / (2**gamma_w Gamma(1-sigma)).
        d_pois: Poisson kernel normalizer 1/((4 pi)^{N/2} 2^{2 sigma} Gamma(sigma)).
        a_green: fundamental solution amplitude (4 pi)^{-N/2} / Gamma(sigma).
        c_flap: fractional Laplacian constant 4^s Gamma(N/2+s)/(pi^{N/2} |Gamma(-s)|).
        rho_test: Gaussian test function normalizer 2 / (pi^{N/2} Gamma(1-sigma)).
    """

    sigma: float
    dim: int
    gamma_w: float
    kappa: float
    d_pois: float
    a_green: float
    c_flap: float
    rho_test: float

    @classmethod
    def create(cls, sigma: float, dim: int) -> "KernelParams":
        if not 0.0 < sigma < 1.0:
            raise ValueError(f"sigma must be in (0, 1), got {sigma}")
        if dim < 1 or int(dim) != dim:
            raise ValueError(f"dim must be a positive integer, got {dim}")
        dim = int(dim)
        gw = 1.0 - 2.0 * sigma
        g_s = float(gamma_fn(sigma))
        g_1ms = float(gamma_fn(1.0 - sigma))
        abs_g_ms = g_1ms / sigma  # |Gamma(-sigma)| = Gamma(1-sigma)/sigma
        return cls(
            sigma=float(sigma),
            dim=dim,
            gamma_w=gw,
            kappa=g_s / (2.0**gw * g_1ms),
            d_pois=1.0 / ((4.0 * np.pi) ** (dim / 2) * 2.0 ** (2 * sigma) * g_s),
            a_green=(4.0 * np.pi) ** (-dim / 2) / g_s,
            c_flap=4.0**sigma * float(gamma_fn(dim / 2 + sigma))
            / (np.pi ** (dim / 2) * abs_g_ms),
            rho_test=2.0 / (np.pi ** (dim / 2) * g_1ms),
        )

    @property
    def abs_gamma_neg(self) -> float:
        """|Gamma(-sigma)|, the time-kernel normalizer."""
        return float(gamma_fn(1.0 - self.sigma)) / self.sigma


def _sq_norm(x, dim: int):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        if dim == 1:
            return x * x
        raise ValueError(f"point must have {dim} components")
    return np.sum(x * x, axis=-1)


def heat_kernel(x, t, params: KernelParams):
    """Gauss kernel K_t(x) = (4 pi t)^{-N/2} exp(-|x|^2 / (4 t)), t > 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("heat_kernel needs t > 0")
    r2 = _sq_norm(x, params.dim)
    logk = -0.5 * params.dim * np.log(4.0 * np.pi * t) - r2 / (4.0 * t)
    return np.exp(logk)


def time_kernel(t, params: KernelParams):
    """Singular memory weight L(t) = t^{-1-sigma} / |Gamma(-sigma)|, t > 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("time_kernel needs t > 0")
    logl = -(1.0 + params.sigma) * np.log(t) - np.log(params.abs_gamma_neg)
    return np.exp(logl)


def master_kernel(x, t, params: KernelParams):
    """Space-time kernel M(x, t) = K_t(x) L(t), t > 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("master_kernel needs t > 0")
    r2 = _sq_norm(x, params.dim)
    logm = (
        -0.5 * params.dim * np.log(4.0 * np.pi * t)
        - r2 / (4.0 * t)
        - (1.0 + params.sigma) * np.log(t)
        - np.log(params.abs_gamma_neg)
    )
    return np.exp(logm)


def green_kernel(x, t, params: KernelParams):
    """Fundamental solution G(x, t) = A t^{-N/2-1+sigma} e^{-|x|^2/4t}, 0 for t <= 0."""
    t = np.asarray(t, dtype=float)
    r2 = _sq_norm(x, params.dim)
    r2, t = np.broadcast_arrays(r2, t)
    out = np.zeros(t.shape, dtype=float)
    pos = t > 0.0
    if np.any(pos):
        tp = t[pos]
        logg = (
            np.log(params.a_green)
            + (-0.5 * params.dim - 1.0 + params.sigma) * np.log(tp)
            - r2[pos] / (4.0 * tp)
        )
        out[pos] = np.exp(logg)
    return out if out.ndim else float(out)


def poisson_kernel(x, y, t, params: KernelParams):
    """Half-space Poisson kernel P_y(x, t) = d y^{2s} t^{-N/2-1-s} e^{-(|x|^2+y^2)/4t}."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(y <= 0.0):
        raise ValueError("poisson_kernel needs y > 0")
    if np.any(t <= 0.0):
        raise ValueError("poisson_kernel needs t > 0")
    r2 = _sq_norm(x, params.dim)
    logp = (
        np.log(params.d_pois)
        + 2.0 * params.sigma * np.log(y)
        + (-0.5 * params.dim - 1.0 - params.sigma) * np.log(t)
        - (r2 + y * y) / (4.0 * t)
    )
    return np.exp(logp)
