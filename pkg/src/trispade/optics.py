"""Point-spread functions, their autocorrelations, and mode-sorting probabilities.

All lengths are in units of the PSF scale sigma.  Two PSF kinds are
supported, both real, even, and radially symmetric:

* gaussian:  psi(x) = (2*pi)**-0.5 * exp(-|x|^2 / 4)
* airy:      psi(x) = J1(pi*|x|) / (sqrt(pi)*|x|)   (hard circular aperture)

For such PSFs the mode sorter's first-order basis states are the normalized
partial derivatives of psi (they are orthogonal to psi and to each other by
parity), and every overlap needed for the three-detector probabilities can
be written in terms of the autocorrelation

    Gamma(x) = integral psi(a) psi(a - x) d^2 a

and its first derivatives.  The Gaussian autocorrelation is analytic; the
Airy one is evaluated by 2D numerical quadrature (see _airy_autocorr_grid).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.special import j0, j1

from .errors import NumericsError

GAUSSIAN = "gaussian"
AIRY = "airy"

# probability mass allowed below zero before we call it a numerical bug
_NEG_PROB_TOL = 1e-9


@dataclass(frozen=True)
class Psf:
    """A supported PSF kind plus Airy quadrature knobs.

    airy_truncation_radius: quadrature domain radius for the Airy
        autocorrelation; the slowly decaying amplitude tail outside it is
        accounted for analytically (see _airy_autocorr_values).
    airy_profile_extent / airy_profile_step: the radial grid on which the
        Airy autocorrelation is tabulated once and then interpolated.
    """

    kind: str = GAUSSIAN
    airy_truncation_radius: float = 60.0
    airy_profile_extent: float = 16.0
    airy_profile_step: float = 0.01

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, AIRY):
            raise ValueError(f"unsupported PSF kind {self.kind!r}")
        if self.airy_truncation_radius < 20.0:
            raise ValueError("airy_truncation_radius below 20 cannot meet the 1e-5 tolerance")


def psf_amplitude(psf: Psf, point) -> np.ndarray | float:
    """Real field amplitude at `point` ((..., 2) array in sigma units)."""
    pt = np.asarray(point, dtype=float)
    scalar = pt.ndim == 1
    r2 = np.sum(np.atleast_2d(pt) ** 2, axis=-1)
    if psf.kind == GAUSSIAN:
        out = np.exp(-r2 / 4) / np.sqrt(2 * np.pi)
    else:
        out = _airy_amplitude_radial(np.sqrt(r2))
    return float(out[0]) if scalar else out


def _airy_amplitude_radial(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    safe = np.maximum(r, 1e-12)
    out = j1(np.pi * safe) / (np.sqrt(np.pi) * safe)
    # removable singularity: J1(z) ~ z/2 gives sqrt(pi)/2 at the origin
    return np.where(r < 1e-12, np.sqrt(np.pi) / 2, out)


def psf_amplitude_radial(psf: Psf, r) -> np.ndarray:
    """Amplitude as a function of radius (both kinds are radially symmetric)."""
    r = np.asarray(r, dtype=float)
    if psf.kind == GAUSSIAN:
        return np.exp(-r ** 2 / 4) / np.sqrt(2 * np.pi)
    return _airy_amplitude_radial(r)


@lru_cache(maxsize=8)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(n)


def _airy_tail_mass(radius: float) -> float:
    """Amplitude-squared mass outside `radius` (1D radial quadrature)."""
    x, w = _gauss_legendre(4096)
    r = 0.5 * radius * (x + 1)
    inside = float(np.sum(np.pi * radius * w * r * _airy_amplitude_radial(r) ** 2))
    return 1.0 - inside


def _airy_autocorr_values(d: np.ndarray, radius: float, nphi: int = 64) -> np.ndarray:
    """Airy autocorrelation at radial displacements `d` by polar quadrature.

    The integrand psi(a) psi(a - x) is integrated over |a| <= radius with a
    Gauss-Legendre tensor rule dense enough to resolve the pi-frequency
    Bessel oscillation.  Outside the domain the two factors share one
    cylindrical-wave oscillation whose phase offset d*cos(phi) averages over
    the ring to J0(pi*d), so the excluded tail contributes its total mass
    times J0(pi*d); the correction's own error falls off one power of the
    radius faster than the raw truncation error it removes.
    """
    nr = max(512, int(8 * radius))
    xr, wr = _gauss_legendre(nr)
    r = 0.5 * radius * (xr + 1)
    wr = 0.5 * radius * wr
    xp, wp = _gauss_legendre(nphi)
    phi = np.pi * (xp + 1)
    wphi = np.pi * wp
    f_r = _airy_amplitude_radial(r) * r * wr
    cphi = np.cos(phi)
    d = np.atleast_1d(np.asarray(d, dtype=float))
    out = np.empty(len(d))
    # chunk over displacements to bound the (nd, nr, nphi) intermediate
    chunk = max(1, int(4e6 / (nr * nphi)))
    for i in range(0, len(d), chunk):
        dd = d[i:i + chunk][:, None, None]
        rho = np.sqrt(np.maximum(r[None, :, None] ** 2 + dd ** 2
                                 - 2 * dd * r[None, :, None] * cphi[None, None, :], 0.0))
        out[i:i + chunk] = np.einsum("r,drp,p->d", f_r, _airy_amplitude_radial(rho), wphi)
    return out + _airy_tail_mass(radius) * j0(np.pi * d)


@lru_cache(maxsize=4)
def _airy_autocorr_grid(radius: float, extent: float, step: float) -> CubicSpline:
    """Tabulated radial Airy autocorrelation, interpolated by a cubic spline.

    The profile is even in d, so the spline is clamped to zero slope at the
    origin.  Interpolation error on this grid is far below the 1e-5
    quadrature tolerance.
    """
    d = np.arange(0.0, extent + step / 2, step)
    vals = _airy_autocorr_values(d, radius)
    if abs(vals[0] - 1.0) > 1e-5:
        raise NumericsError(f"airy autocorrelation normalization off by {vals[0] - 1.0:.2e}")
    return CubicSpline(d, vals, bc_type=((1, 0.0), "not-a-knot"))


def _airy_radial_profile(psf: Psf) -> CubicSpline:
    return _airy_autocorr_grid(psf.airy_truncation_radius, psf.airy_profile_extent,
                               psf.airy_profile_step)


def _autocorr_radial(psf: Psf, d: np.ndarray) -> np.ndarray:
    """Autocorrelation as a function of radial displacement."""
    d = np.asarray(d, dtype=float)
    if psf.kind == GAUSSIAN:
        return np.exp(-d ** 2 / 8)
    spline = _airy_radial_profile(psf)
    out = np.empty(d.shape)
    flat = d.ravel()
    inside = flat <= psf.airy_profile_extent
    res = np.empty(len(flat))
    res[inside] = spline(flat[inside])
    if np.any(~inside):
        res[~inside] = _airy_autocorr_values(flat[~inside], psf.airy_truncation_radius)
    out = res.reshape(d.shape)
    return out


def autocorrelation(psf: Psf, displacement) -> np.ndarray | float:
    """Normalized autocorrelation Gamma(x) at `displacement` ((..., 2) array).

    Gaussian: exp(-|x|^2/8) in closed form.  Airy: tail-corrected polar
    quadrature, tabulated radially and interpolated; documented tolerance
    1e-5 (verified against grid refinement in the test suite).
    """
    xy = np.asarray(displacement, dtype=float)
    scalar = xy.ndim == 1
    d = np.sqrt(np.sum(np.atleast_2d(xy) ** 2, axis=-1))
    out = _autocorr_radial(psf, d)
    return float(out[0]) if scalar else out


def _richardson_second_derivative(f, steps=(0.1, 0.05, 0.025), rtol=1e-3) -> float:
    """-f''(0) for an even function, Richardson-extrapolated central differences."""
    f0 = f(0.0)
    d2 = [(2 * f(h) - 2 * f0) / h ** 2 for h in steps]
    extrap = [(4 * b - a) / 3 for a, b in zip(d2, d2[1:])]
    if abs(extrap[-1] - extrap[-2]) > rtol * abs(extrap[-1]):
        raise NumericsError("curvature finite differences did not converge")
    return -extrap[-1]


def gamma_curvatures(psf: Psf) -> tuple[float, float]:
    """Negated second derivatives of the autocorrelation at the origin.

    Both supported PSFs are radially symmetric so the two curvatures are
    equal; the Airy value is a finite-difference estimate of the quadrature
    (relative tolerance 1e-3, checked).
    """
    if psf.kind == GAUSSIAN:
        return 0.25, 0.25
    c = _airy_curvature(psf.airy_truncation_radius)
    return c, c


@lru_cache(maxsize=4)
def _airy_curvature(radius: float) -> float:
    return _richardson_second_derivative(
        lambda h: float(_airy_autocorr_values(np.array([h]), radius)[0]))


def _autocorr_gradient(psf: Psf, offsets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(d Gamma/d s_x, d Gamma/d s_y) at each offset row."""
    if psf.kind == GAUSSIAN:
        g = np.exp(-np.sum(offsets ** 2, axis=-1) / 8)
        return -offsets[:, 0] / 4 * g, -offsets[:, 1] / 4 * g
    d = np.sqrt(np.sum(offsets ** 2, axis=-1))
    spline = _airy_radial_profile(psf)
    if np.any(d > psf.airy_profile_extent):
        raise NumericsError("offset outside the tabulated Airy profile")
    slope = spline.derivative()(d)
    # radial chain rule; the profile has zero slope at d=0
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(d[:, None] > 0, offsets / np.where(d[:, None] > 0, d[:, None], 1.0), 0.0)
    return slope * unit[:, 0], slope * unit[:, 1]


def mode_probabilities(psf: Psf, source_offset):
    """Per-photon probabilities (p00, p10, p01, p_res) for a displaced point source.

    p00 couples to the PSF-matched mode, p10/p01 to the normalized x/y
    derivative modes, and p_res is the unmonitored remainder (no fourth
    detector).  Uses <d_x psi | psi_s> = dGamma/ds_x, valid because parity
    makes psi and its first derivatives mutually orthogonal.

    Accepts a single (2,) offset or an (n, 2) batch.
    """
    s = np.asarray(source_offset, dtype=float)
    scalar = s.ndim == 1
    s2 = np.atleast_2d(s)
    gx2, gy2 = gamma_curvatures(psf)
    p00 = np.asarray(autocorrelation(psf, s2)) ** 2
    dgx, dgy = _autocorr_gradient(psf, s2)
    p10 = dgx ** 2 / gx2
    p01 = dgy ** 2 / gy2
    p_res = 1.0 - p00 - p10 - p01
    if np.any(p_res < -_NEG_PROB_TOL):
        raise NumericsError(f"mode probabilities exceed 1 by {-p_res.min():.2e}")
    p_res = np.maximum(p_res, 0.0)
    if scalar:
        return float(p00[0]), float(p10[0]), float(p01[0]), float(p_res[0])
    return p00, p10, p01, p_res
