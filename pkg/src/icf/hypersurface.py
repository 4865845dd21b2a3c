"""Strictly convex hypersurfaces in the three space forms via support functions.

A state is a scalar field s on the grid-sphere of outward normals.  The
Euclidean boundary parametrization is Y(z) = s z + grad s; the curved ambients
reuse the same field through the gnomonic charts X = (1, Y)/sqrt(1 -+ |Y|^2)
(hyperboloid model of H^3, round S^3).  Principal curvatures come from the
inverse Weingarten matrix, which in the orthonormal frame is the radii matrix
tau-hat congruence-corrected by the chart:

    Euclidean:   W^-1 = tau
    Hyperbolic:  W^-1 ~ S^(1/2) tau S^(1/2) sqrt((1-s^2)/d),  S = I + uu^T/d,
                 d = 1 - s^2 - |u|^2,  u = grad s
    Spherical:   W^-1 ~ S^(1/2) tau S^(1/2) sqrt((1+s^2)/d),  S = I - uu^T/d,
                 d = 1 + s^2 + |u|^2

The displayed mixed-index products S tau have the same eigenvalues as the
symmetric congruent form used here.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .curvfn import CurvatureFunction
from .errors import ConfigurationError, ConvexityLostError, StateInvalidError
from . import sphgrid
from .sphgrid import SphereGrid, covariant_hessian, sym2x2_eigenvalues

CONVEXITY_RTOL = 1e-10   # min tau eigenvalue must exceed this times mean(s)
BALL_MARGIN_MIN = 1e-6   # hyperbolic: 1 - max(s^2 + |grad s|^2) must exceed this


class Ambient(enum.Enum):
    EUCLIDEAN = "euclidean"
    HYPERBOLIC = "hyperbolic"
    SPHERICAL = "spherical"

    @property
    def curvature(self) -> int:
        return {"euclidean": 0, "hyperbolic": -1, "spherical": 1}[self.value]


@dataclass(frozen=True)
class SupportState:
    """A hypersurface at flow time t, as a support-function field."""

    ambient: Ambient
    grid: SphereGrid
    s: np.ndarray
    t: float = 0.0

    def with_field(self, s, t=None) -> "SupportState":
        return replace(self, s=s, t=self.t if t is None else t)


@dataclass
class CurvatureField:
    kappa: np.ndarray   # (I, J, 2), ascending
    speed: np.ndarray   # (I, J), F = f(kappa)


@dataclass
class ValidationReport:
    min_tau_eig: float
    s_min: float
    ball_margin: float | None     # hyperbolic only
    convexity_lost: bool
    valid: bool
    message: str


# ---------------------------------------------------------------------------
# geometry


def _geometry(state: SupportState):
    grad, hess, gradnorm2 = covariant_hessian(state.grid, state.s)
    tau = hess.copy()
    tau[..., 0, 0] += state.s
    tau[..., 1, 1] += state.s
    return grad, tau, gradnorm2


def _sqrt_rank1_update(u, gamma):
    """Symmetric square root of I + gamma * (u u^T / |u|^2) as a (I,J,2,2) field."""
    un2 = np.sum(u ** 2, axis=-1)
    coef = np.where(un2 > 0.0, (np.sqrt(1.0 + gamma) - 1.0) / np.where(un2 > 0, un2, 1.0), 0.0)
    out = np.zeros(u.shape[:-1] + (2, 2))
    out[..., 0, 0] = 1.0 + coef * u[..., 0] ** 2
    out[..., 1, 1] = 1.0 + coef * u[..., 1] ** 2
    out[..., 0, 1] = coef * u[..., 0] * u[..., 1]
    out[..., 1, 0] = out[..., 0, 1]
    return out


def weingarten_from_geometry(ambient: Ambient, s, grad, tau, gradnorm2, t=0.0):
    """Symmetrized W^-1 from precomputed support-function geometry."""
    if ambient is Ambient.EUCLIDEAN:
        return tau
    s2 = s ** 2
    if ambient is Ambient.HYPERBOLIC:
        d = 1.0 - s2 - gradnorm2
        if np.any(d <= 0.0):
            node = np.unravel_index(np.argmin(d), d.shape)
            raise StateInvalidError(
                f"hyperbolic image leaves the unit ball at node {node}", node=node, t=t)
        factor = np.sqrt((1.0 - s2) / d)
        gamma = gradnorm2 / d
    else:
        d = 1.0 + s2 + gradnorm2
        factor = np.sqrt((1.0 + s2) / d)
        gamma = -gradnorm2 / d
    sq = _sqrt_rank1_update(grad, gamma)
    return factor[..., None, None] * (sq @ tau @ sq)


def weingarten_inverse_field(state: SupportState):
    """Symmetrized W^-1 over all nodes, (I, J, 2, 2)."""
    grad, tau, gradnorm2 = _geometry(state)
    return weingarten_from_geometry(state.ambient, state.s, grad, tau, gradnorm2, state.t)


def weingarten_inverse(state: SupportState, at):
    """W^-1 at a single node (i, j); raises if the radii matrix is indefinite there."""
    w = weingarten_inverse_field(state)[at[0], at[1]]
    if np.linalg.eigvalsh(w)[0] <= 0.0:
        raise ConvexityLostError(f"radii matrix not positive definite at node {tuple(at)}",
                                 node=tuple(at), t=state.t)
    return w


def principal_curvatures(state: SupportState, f: CurvatureFunction) -> CurvatureField:
    """Per-node ordered principal curvatures and speed F = f(kappa)."""
    w = weingarten_inverse_field(state)
    radii = sym2x2_eigenvalues(w)           # ascending radii
    if np.any(radii[..., 0] <= 0.0):
        node = np.unravel_index(np.argmin(radii[..., 0]), state.grid.shape)
        raise ConvexityLostError(f"convexity lost at node {node}", node=node, t=state.t)
    kappa = 1.0 / radii[..., ::-1]          # reciprocal flips the order
    return CurvatureField(kappa=kappa, speed=f.value(kappa))


def embed(state: SupportState):
    """Per-node ambient points: Y in R^3, or X on the hyperboloid / S^3 in R^4."""
    z, e1, e2 = state.grid.nodes()
    grad, _, gradnorm2 = _geometry(state)
    Y = state.s[..., None] * z + grad[..., 0, None] * e1 + grad[..., 1, None] * e2
    if state.ambient is Ambient.EUCLIDEAN:
        return Y
    y2 = state.s ** 2 + gradnorm2
    if state.ambient is Ambient.HYPERBOLIC:
        if np.any(y2 >= 1.0):
            node = np.unravel_index(np.argmax(y2), y2.shape)
            raise StateInvalidError(
                f"hyperbolic image leaves the unit ball at node {node}", node=node, t=state.t)
        w = 1.0 / np.sqrt(1.0 - y2)
    else:
        w = 1.0 / np.sqrt(1.0 + y2)
    return np.concatenate([w[..., None], w[..., None] * Y], axis=-1)


def validate(state: SupportState) -> ValidationReport:
    """Report-based health check; never raises."""
    try:
        grad, tau, gradnorm2 = _geometry(state)
    except ConfigurationError as exc:
        return ValidationReport(np.nan, np.nan, None, True, False, str(exc))
    eigs = sym2x2_eigenvalues(tau)
    min_eig = float(eigs[..., 0].min())
    s_min = float(state.s.min())
    mean_s = sphgrid.reduce(state.grid, state.s, "mean")
    messages = []
    ball_margin = None
    ok = True
    if state.ambient is Ambient.HYPERBOLIC:
        ball_margin = float(1.0 - np.max(state.s ** 2 + gradnorm2))
        if ball_margin <= BALL_MARGIN_MIN:
            ok = False
            messages.append(f"ball margin {ball_margin:.3e} below {BALL_MARGIN_MIN:.0e}")
        elif ball_margin < 2e-3:
            messages.append(f"near-degenerate: ball margin {ball_margin:.3e}")
    if state.ambient is not Ambient.HYPERBOLIC and s_min <= 0.0:
        ok = False
        messages.append("support function must be positive")
    convexity_lost = min_eig <= CONVEXITY_RTOL * abs(mean_s)
    if convexity_lost:
        ok = False
        messages.append(f"radii matrix not positive definite (min eig {min_eig:.3e})")
    return ValidationReport(min_eig, s_min, ball_margin, convexity_lost, ok, "; ".join(messages))


def require_valid(state: SupportState):
    rep = validate(state)
    if rep.convexity_lost:
        raise ConvexityLostError(rep.message, t=state.t)
    if not rep.valid:
        raise StateInvalidError(rep.message, t=state.t)
    return rep


# ---------------------------------------------------------------------------
# polar duality in the sphere


def _spline_surrogate(state: SupportState):
    """Globally C^2 bicubic surrogate of s on the pole-extended (theta, phi) chart."""
    g = state.grid
    F = sphgrid._extend_pole(g, state.s, rows=2)              # (I, J+4)
    theta_ext = np.concatenate([
        [-g.theta[1], -g.theta[0]], g.theta, [2 * np.pi - g.theta[-1], 2 * np.pi - g.theta[-2]]])
    # wrap 3 phi columns on each side
    F = np.concatenate([F[-3:], F, F[:3]], axis=0)
    phi_ext = np.concatenate([g.phi[-3:] - 2 * np.pi, g.phi, g.phi[:3] + 2 * np.pi])
    return RectBivariateSpline(theta_ext, phi_ext, F.T, kx=3, ky=3)


def _dual_support_values(state: SupportState, targets):
    """Evaluate the dual support function at unit directions `targets` (N, 3).

    s-dual(z) = max over z' of <-z, z'> / s(z'), the gauge of the reflected
    Euclidean polar body.  The maximizer is found per target by an intrinsic
    Newton ascent of log<w,z'> - log s(z') on the spline surrogate; by the
    envelope theorem the value error is the (smooth, O(h^4)) surrogate error,
    so discrete second derivatives of the resampled field stay second order.
    """
    g = state.grid
    spline = _spline_surrogate(state)
    w = -targets                                            # (N, 3)
    z, _, _ = g.nodes()

    # seed: best node of a coarse subsample (Newton with a trust radius of two
    # cells then walks to the optimum; the objective of a strictly convex body
    # has a single maximum on the <w,z'> > 0 hemisphere)
    stride = 4 if min(g.I, g.J) >= 32 else 1
    zc = z[::stride, ::stride].reshape(-1, 3)
    sc = state.s[::stride, ::stride].reshape(-1)
    ratio_T = np.ascontiguousarray((zc / sc[:, None]).T)
    n = w.shape[0]
    seed = np.empty(n, dtype=int)
    for lo in range(0, n, 2048):
        hi = min(n, lo + 2048)
        block = w[lo:hi, 0:1] * ratio_T[0] + w[lo:hi, 1:2] * ratio_T[1] + w[lo:hi, 2:3] * ratio_T[2]
        seed[lo:hi] = np.argmax(block, axis=1)
    zp = zc[seed].copy()

    h = min(g.dtheta, g.dphi)
    live = np.arange(n)
    for _ in range(40):
        zl, wl = zp[live], w[live]
        theta = np.arccos(np.clip(zl[:, 2], -1.0, 1.0))
        phi = np.mod(np.arctan2(zl[:, 1], zl[:, 0]), 2 * np.pi)
        st, ct = np.sin(theta), np.cos(theta)
        sp, cp = np.sin(phi), np.cos(phi)
        e1 = np.stack([ct * cp, ct * sp, -st], axis=-1)
        e2 = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)

        sv = spline.ev(theta, phi)
        s_th = spline.ev(theta, phi, dx=1)
        s_ph = spline.ev(theta, phi, dy=1)
        s_thth = spline.ev(theta, phi, dx=2)
        s_thph = spline.ev(theta, phi, dx=1, dy=1)
        s_phph = spline.ev(theta, phi, dy=2)

        wz = np.einsum("ij,ij->i", wl, zl)
        a1 = np.einsum("ij,ij->i", wl, e1) / wz
        a2 = np.einsum("ij,ij->i", wl, e2) / wz
        b1 = s_th / sv
        b2 = s_ph / (st * sv)
        g1 = a1 - b1
        g2 = a2 - b2

        # covariant Hessian of the objective in the frame
        t11 = s_thth
        t12 = (s_thph - (ct / st) * s_ph) / st
        t22 = s_phph / st ** 2 + (ct / st) * s_th
        H11 = -1.0 - a1 * a1 - t11 / sv + b1 * b1
        H12 = -a1 * a2 - t12 / sv + b1 * b2
        H22 = -1.0 - a2 * a2 - t22 / sv + b2 * b2

        det = H11 * H22 - H12 ** 2
        concave = (H11 < 0.0) & (det > 0.0)
        safe_det = np.where(np.abs(det) < 1e-300, -1.0, det)
        x1 = -(H22 * g1 - H12 * g2) / safe_det
        x2 = -(H11 * g2 - H12 * g1) / safe_det
        # outside the concave basin fall back to a fixed-length ascent step
        gn = np.hypot(g1, g2)
        gn_safe = np.where(gn > 0.0, gn, 1.0)
        x1 = np.where(concave, x1, h * g1 / gn_safe)
        x2 = np.where(concave, x2, h * g2 / gn_safe)
        norm = np.hypot(x1, x2)
        clip = np.where(norm > 2 * h, 2 * h / np.where(norm > 0, norm, 1.0), 1.0)
        x1 *= clip
        x2 *= clip

        znew = zl + x1[:, None] * e1 + x2[:, None] * e2
        znew /= np.linalg.norm(znew, axis=1, keepdims=True)
        zp[live] = znew
        live = live[gn > 1e-11]
        if live.size == 0:
            break

    theta = np.arccos(np.clip(zp[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(zp[:, 1], zp[:, 0]), 2 * np.pi)
    return np.einsum("ij,ij->i", w, zp) / spline.ev(theta, phi)


def polar_dual(state: SupportState) -> SupportState:
    """Support state of the polar hypersurface (spherical ambient only).

    The unit normal of X(M) in S^3 is nu = (-s, z)/sqrt(1+s^2); the polar set
    -nu maps through the gnomonic chart to the reflected Euclidean polar body,
    whose support function is resampled onto the standard grid.
    """
    if state.ambient is not Ambient.SPHERICAL:
        raise ConfigurationError("polar duality is implemented in the spherical ambient only")
    require_valid(state)
    g = state.grid
    z, _, _ = g.nodes()
    values = _dual_support_values(state, z.reshape(-1, 3)).reshape(g.shape)
    dual_state = SupportState(Ambient.SPHERICAL, g, values, state.t)
    require_valid(dual_state)
    return dual_state


# ---------------------------------------------------------------------------
# serialization


def save_state(path_prefix: str, state: SupportState):
    sphgrid.save_field_bin(path_prefix + ".bin", state.grid, state.s)
    sidecar = {
        "format_version": 1,
        "ambient": state.ambient.value,
        "t": state.t,
        "grid": {"I": state.grid.I, "J": state.grid.J},
    }
    with open(path_prefix + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")


def load_state(path_prefix: str) -> SupportState:
    with open(path_prefix + ".json") as fh:
        sidecar = json.load(fh)
    grid, field = sphgrid.load_field_bin(path_prefix + ".bin")
    if (grid.I, grid.J) != (sidecar["grid"]["I"], sidecar["grid"]["J"]):
        raise ConfigurationError("state sidecar grid does not match the binary field")
    return SupportState(Ambient(sidecar["ambient"]), grid, field, float(sidecar["t"]))
