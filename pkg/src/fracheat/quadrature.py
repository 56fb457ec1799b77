"""Product-integration primitives for singular history kernels.

Every nonlocal integral in this package reduces to exact moments of

    exp(-lam * tau) * tau**power          on subintervals [a, b],

with lam >= 0 a diffusion rate (squared wavenumber) and power in (-2, 1].
Piecewise-linear data is then integrated against the kernel without losing
the endpoint singularity.  Naive quadrature of tau**(-1-sigma) diverges as
tau -> 0; product integration does not.
"""

from __future__ import annotations

import numpy as np
from scipy import special

# Gauss-Legendre nodes for the near-degenerate branch (interval much shorter
# than its distance to the singularity, where incomplete-gamma differences
# cancel catastrophically).
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)

# Relative width below which the Gauss branch takes over.
_NARROW = 0.05


def _power_moment(a: float, b: float, power: float) -> float:
    """Exact integral of tau**power over [a, b] (lam = 0 case)."""
    if power == -1.0:
        return np.log(b / a)
    q = power + 1.0
    return (b**q - a**q) / q


def exp_power_moment(a, b, lam, power):
    """Exact integral of exp(-lam*tau) * tau**power over [a, b].

    Vectorized over ``lam`` (array of nonnegative rates).  Requires
    0 <= a < b, and power > -1 whenever a == 0.  Accuracy is uniform in
    lam: incomplete-gamma differences are replaced by Gauss quadrature on
    narrow intervals where they would cancel.
    """
    lam = np.asarray(lam, dtype=float)
    if b <= a or a < 0.0:
        raise ValueError(f"need 0 <= a < b, got a={a}, b={b}")
    if a == 0.0 and power <= -1.0:
        raise ValueError(f"divergent moment: a=0 with power={power}")

    out = np.empty(lam.shape, dtype=float)

    zero = lam == 0.0
    if np.any(zero):
        out[zero] = _power_moment(a, b, power)

    pos = ~zero
    if not np.any(pos):
        return out
    lp = lam[pos]

    if a > 0.0 and (b - a) < _NARROW * a:
        # Narrow interval: direct Gauss-Legendre, exact enough and immune
        # to cancellation between nearly equal incomplete-gamma values.
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        tau = mid + half * _GL_X
        vals = (np.exp(-np.outer(lp, tau)) * tau**power) @ _GL_W * half
        out[pos] = vals
        return out

    x_a = lp * a
    x_b = lp * b
    if power > -1.0:
        # int = Gamma(p+1) lam^{-p-1} [P(p+1, lam b) - P(p+1, lam a)]
        q = power + 1.0
        diff = special.gammainc(q, x_b) - special.gammainc(q, x_a)
        vals = special.gamma(q) * lp ** (-q) * np.clip(diff, 0.0, None)
    else:
        # power in (-2, -1): upper incomplete gamma with negative parameter
        # via the recurrence Gamma(s, x) = (Gamma(s+1, x) - x^s e^{-x}) / s,
        # s = power + 1 in (-1, 0).
        s = power + 1.0
        g_a = (special.gammaincc(s + 1.0, x_a) * special.gamma(s + 1.0)
               - x_a**s * np.exp(-x_a)) / s
        g_b = (special.gammaincc(s + 1.0, x_b) * special.gamma(s + 1.0)
               - x_b**s * np.exp(-x_b)) / s
        vals = lp ** (-s) * np.clip(g_a - g_b, 0.0, None)
    out[pos] = vals
    return out


def exp_power_tail(b, lam, power):
    """Exact integral of exp(-lam*tau) * tau**power over [b, infinity).

    Requires b > 0 when power <= -1 or lam == 0; for lam == 0 additionally
    power < -1 (otherwise the tail diverges).  Vectorized over lam.
    """
    lam = np.asarray(lam, dtype=float)
    if b <= 0.0:
        raise ValueError("tail moment needs b > 0")
    out = np.empty(lam.shape, dtype=float)

    zero = lam == 0.0
    if np.any(zero):
        if power >= -1.0:
            raise ValueError("divergent tail: lam=0 with power >= -1")
        out[zero] = -(b ** (power + 1.0)) / (power + 1.0)

    pos = ~zero
    if np.any(pos):
        lp = lam[pos]
        x_b = lp * b
        s = power + 1.0
        if s > 0.0:
            g = special.gammaincc(s, x_b) * special.gamma(s)
        else:
            # recurrence as above for s in (-1, 0)
            g = (special.gammaincc(s + 1.0, x_b) * special.gamma(s + 1.0)
                 - x_b**s * np.exp(-x_b)) / s
        out[pos] = lp ** (-s) * np.clip(g, 0.0, None)
    return out


def panel_weights(a: float, b: float, lam, power):
    """Product-integration weights for linear data on one panel.

    For data v(tau) linear on the panel, tau = t - s in [a, b] (a is the
    edge closer to the evaluation time), returns (w_near, w_far) so that

        integral exp(-lam tau) tau**power v(tau) dtau
            = w_near * v(a) + w_far * v(b).
    """
    m0 = exp_power_moment(a, b, lam, power)
    m1 = exp_power_moment(a, b, lam, power + 1.0)
    theta = (m1 - a * m0) / (b - a)
    return m0 - theta, theta


def graded_mesh(n: int, power: float = 2.0) -> np.ndarray:
    """Nodes (i/n)**power on [0, 1], clustered at 0 for power > 1."""
    return (np.arange(n + 1) / n) ** power


def log_mesh(lo: float, hi: float, n: int) -> np.ndarray:
    """Geometric mesh from lo to hi with n panels (n+1 nodes)."""
    return np.geomspace(lo, hi, n + 1)
