"""Face-flux stabilization profiles |A|, A+ and A-.

Every profile is even, vanishes at zero and is Lipschitz. ``A_plus`` and
``A_minus`` are (|A|(s) +- s)/2, so A+ - A- = s identically.
"""
from __future__ import annotations

import math

import numpy as np

# s/2 coth(s/2) - 1 = sum_{n>=1} B_{2n} s^{2n} / (2n)!
_BERNOULLI_2N = [1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6, -3617 / 510, 43867 / 798, -174611 / 330]
_SG_SERIES = np.array([b / math.factorial(2 * (n + 1)) for n, b in enumerate(_BERNOULLI_2N)])
_SG_SERIES_CUTOFF = 1.0


def _sg_abs(s: np.ndarray) -> np.ndarray:
    s = np.abs(s)
    out = np.empty_like(s)
    small = s < _SG_SERIES_CUTOFF
    z = s[small] ** 2
    acc = np.zeros_like(z)
    for c in _SG_SERIES[::-1]:
        acc = acc * z + c
    out[small] = 2.0 * acc * z
    big = s[~small]
    # s/2 coth(s/2) = s/2 (1 + 2/expm1(s)); stable for large s as expm1 overflows to inf
    with np.errstate(over="ignore"):
        out[~small] = 2.0 * (0.5 * big * (1.0 + 2.0 / np.expm1(big)) - 1.0)
    return out


def _theta_bump(s: np.ndarray) -> np.ndarray:
    """C1 profile: 1 on [-1/2, 1/2], 0 for |s| >= 1, cubic Hermite blend between."""
    t = np.clip((np.abs(s) - 0.5) / 0.5, 0.0, 1.0)
    return 1.0 - t * t * (3.0 - 2.0 * t)


class FluxFunction:
    """A stabilization profile, evaluated elementwise on arrays."""

    name = "abstract"
    robust = True  # satisfies the growth conditions needed for vanishing diffusion

    def abs(self, s):
        raise NotImplementedError

    def plus(self, s):
        s = np.asarray(s, dtype=float)
        return 0.5 * (self.abs(s) + s)

    def minus(self, s):
        s = np.asarray(s, dtype=float)
        return 0.5 * (self.abs(s) - s)

    def __repr__(self):
        return f"{type(self).__name__}()"


class Centered(FluxFunction):
    name = "centered"
    robust = False

    def abs(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))


class Upwind(FluxFunction):
    name = "upwind"

    def abs(self, s):
        return np.abs(np.asarray(s, dtype=float))


class ThetaUpwind(FluxFunction):
    """Centered for |s| <= 1/2, upwind for |s| >= 1."""

    name = "theta_upwind"

    def __init__(self, theta=_theta_bump):
        self.theta = theta

    def abs(self, s):
        s = np.asarray(s, dtype=float)
        return (1.0 - self.theta(s)) * np.abs(s)


class ScharfetterGummel(FluxFunction):
    """|A|(s) = 2 (s/2 coth(s/2) - 1), with a series branch for |s| < 1."""

    name = "scharfetter_gummel"

    def abs(self, s):
        s = np.asarray(s, dtype=float)
        return _sg_abs(s.reshape(-1)).reshape(s.shape)


FLUXES = {cls.name: cls for cls in (Centered, Upwind, ThetaUpwind, ScharfetterGummel)}


def get_flux(name) -> FluxFunction:
    if isinstance(name, FluxFunction):
        return name
    try:
        return FLUXES[name]()
    except KeyError:
        raise ValueError(f"unknown flux {name!r}; choose from {sorted(FLUXES)}") from None


def face_coefficients(flux: FluxFunction, nu_f: float, h_f: float, bn):
    """Return (nu_F/h_F) A+(Pe), (nu_F/h_F) A-(Pe), (nu_F/h_F) |A|(Pe) for Pe = h_F bn / nu_F.

    When ``nu_f == 0`` the vanishing-diffusion limits (bn)+, (bn)-, |bn| are
    returned, which presumes a robust profile.
    """
    bn = np.asarray(bn, dtype=float)
    if nu_f == 0.0:
        if not flux.robust:
            raise ValueError(
                f"{flux.name} flux cannot be used on faces with vanishing diffusion "
                "(it lacks the |A|(s) ~ |s| growth at infinity)"
            )
        a = np.abs(bn)
        return 0.5 * (a + bn), 0.5 * (a - bn), a
    scale = nu_f / h_f
    pe = bn / scale
    a = scale * flux.abs(pe)
    return 0.5 * (a + bn), 0.5 * (a - bn), a
