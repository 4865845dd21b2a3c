"""Analytic convex bodies used as initial data.

The vocabulary is deliberately small — sphere, ellipsoid (spheroid), and a
low-mode zonally perturbed sphere — so every initial state has a closed-form
curvature oracle.  In the curved ambients the same field is read as the
support function of the Euclidean chart image.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import legendre

from .errors import ConfigurationError
from .sphgrid import SphereGrid


def sphere_field(grid: SphereGrid, r: float):
    if r <= 0:
        raise ConfigurationError("sphere radius must be positive")
    return np.full(grid.shape, float(r))


def spheroid_field(grid: SphereGrid, a: float, b: float, c: float):
    """Support function of the ellipsoid with semi-axes (a, b, c):
    s(z) = sqrt(a^2 z1^2 + b^2 z2^2 + c^2 z3^2)."""
    if min(a, b, c) <= 0:
        raise ConfigurationError("spheroid semi-axes must be positive")
    z, _, _ = grid.nodes()
    return np.sqrt((a * z[..., 0]) ** 2 + (b * z[..., 1]) ** 2 + (c * z[..., 2]) ** 2)


def perturbed_sphere_field(grid: SphereGrid, r: float, eps: float, mode: int):
    """s = r (1 + eps P_mode(cos theta)), a zonal Legendre perturbation."""
    if r <= 0:
        raise ConfigurationError("sphere radius must be positive")
    if mode < 1:
        raise ConfigurationError("perturbation mode must be >= 1")
    z, _, _ = grid.nodes()
    coeffs = np.zeros(mode + 1)
    coeffs[mode] = 1.0
    return r * (1.0 + eps * legendre.legval(z[..., 2], coeffs))


def initial_field(grid: SphereGrid, text: str):
    """Parse an initial-data spec: sphere:<r> | spheroid:<a>,<b>,<c> |
    perturbed-sphere:<r>,<eps>,<mode>."""
    text = text.strip()
    try:
        if text.startswith("sphere:"):
            return sphere_field(grid, float(text[len("sphere:"):]))
        if text.startswith("spheroid:"):
            a, b, c = (float(v) for v in text[len("spheroid:"):].split(","))
            return spheroid_field(grid, a, b, c)
        if text.startswith("perturbed-sphere:"):
            r, eps, mode = text[len("perturbed-sphere:"):].split(",")
            return perturbed_sphere_field(grid, float(r), float(eps), int(mode))
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"bad initial-data spec {text!r}") from exc
    raise ConfigurationError(f"unknown initial-data spec {text!r}")


def spheroid_curvature_range(a: float, c: float, samples: int = 20000):
    """Principal-curvature extrema and max ratio of the revolution ellipsoid
    with equatorial semi-axis a and polar semi-axis c, by dense parameter scan.

    Meridian (a sin u, c cos u): kappa_merid = a c / w^3,
    kappa_parallel = c / (a w), with w^2 = a^2 cos^2 u + c^2 sin^2 u.
    """
    u = np.linspace(0.0, np.pi / 2, samples)
    w = np.sqrt((a * np.cos(u)) ** 2 + (c * np.sin(u)) ** 2)
    km = a * c / w ** 3
    kp = c / (a * w)
    lo = np.minimum(km, kp)
    hi = np.maximum(km, kp)
    return float(lo.min()), float(hi.max()), float((hi / lo).max())
