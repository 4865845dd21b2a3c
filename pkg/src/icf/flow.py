"""Time integration of the support-function flows in the three ambients.

The evolution laws (expanding flow, speed F^-alpha, Gauss-map parametrization):

    Euclidean:   ds/dt = F_*^alpha(tau)
    Hyperbolic:  ds/dt = sqrt((1 - s^2 - |grad s|^2)(1 - s^2)) F_*^alpha(W^-1)
    Spherical:   ds/dt = sqrt((1 + s^2 + |grad s|^2)(1 + s^2)) F_*(W^-1)

with F_* evaluated on the eigenvalues of the ambient-appropriate inverse
Weingarten matrix.  Stepping is explicit midpoint Runge-Kutta under a CFL
bound for the linearized operator.

A zonal Fourier filter caps the azimuthal wavenumber at m <= max(2, J sin
theta) row by row.  Without it the CFL spacing near the poles is sin(theta_0)
d-phi ~ h^2 and desk-scale runs would need ~10^6 steps; with it the effective
spacing is d-theta everywhere.  Modes m <= 2 are never touched, so spheres,
spheroids and zonally perturbed spheres are represented exactly; for smoother
data the removed coefficients are O((sin theta)^m) at the affected rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curvfn import CurvatureFunction
from .errors import ConfigurationError, ConvexityLostError, StateInvalidError
from .hypersurface import (
    Ambient,
    SupportState,
    require_valid,
    weingarten_from_geometry,
)
from .sphgrid import SphereGrid, covariant_hessian, sym2x2_eigenvalues


@dataclass
class StopRule:
    ball_margin: float = 1e-4      # hyperbolic: stop when 1 - max|Y|^2 drops below
    max_abs_y: float = 50.0        # spherical: stop when max|Y| exceeds (rho ~ 88.9 deg)
    step_cap: int = 2_000_000


@dataclass
class FlowConfig:
    ambient: Ambient
    f: CurvatureFunction
    alpha: float
    t_end: float
    cfl: float = 0.2
    snap_every: float = 0.05
    stop: StopRule = field(default_factory=StopRule)
    unsafe_alpha: bool = False
    filter_m_floor: int = 2
    use_filter: bool = True

    def __post_init__(self):
        if self.f.n != 2:
            raise ConfigurationError("the PDE layer is restricted to n = 2 (surfaces in 3-space)")
        if self.cfl <= 0:
            raise ConfigurationError("cfl must be positive")
        if self.snap_every <= 0:
            raise ConfigurationError("snapshot cadence must be positive")
        if not self.unsafe_alpha:
            if self.ambient is Ambient.SPHERICAL:
                if self.alpha != 1.0:
                    raise ConfigurationError(
                        "spherical flows require alpha = 1 (pass unsafe_alpha to explore)")
            elif not 0.0 < self.alpha <= 1.0:
                raise ConfigurationError(
                    "alpha must lie in (0, 1] for Euclidean/hyperbolic flows "
                    "(pass unsafe_alpha to explore)")
        elif self.alpha <= 0.0:
            raise ConfigurationError("alpha must be positive")


@dataclass
class FlowRun:
    config: FlowConfig
    snapshots: list            # [(t, SupportState)]
    records: list              # diagnostics.DiagnosticsRecord per snapshot
    termination: str           # t_end | hyperbolic_margin | spherical_equator |
    #                            convexity_lost | step_cap
    steps: int
    t_star_estimate: float | None = None
    failure: str | None = None


# ---------------------------------------------------------------------------
# right-hand side


def _ambient_prefactor(ambient: Ambient, s, gradnorm2):
    if ambient is Ambient.EUCLIDEAN:
        return np.ones_like(s)
    s2 = s ** 2
    if ambient is Ambient.HYPERBOLIC:
        d = 1.0 - s2 - gradnorm2
        if np.any(d <= 0.0):
            node = np.unravel_index(np.argmin(d), d.shape)
            raise StateInvalidError("hyperbolic image leaves the unit ball", node=node)
        return np.sqrt(d * (1.0 - s2))
    return np.sqrt((1.0 + s2 + gradnorm2) * (1.0 + s2))


def _flow_fields(state: SupportState, f: CurvatureFunction, alpha: float, want_dual_grad=False):
    """Shared pipeline: radii eigenvalues, F_* value (and gradient), prefactor."""
    grad, hess, gradnorm2 = covariant_hessian(state.grid, state.s)
    tau = hess
    tau[..., 0, 0] += state.s
    tau[..., 1, 1] += state.s
    winv = weingarten_from_geometry(state.ambient, state.s, grad, tau, gradnorm2, state.t)
    radii = sym2x2_eigenvalues(winv)
    if np.any(radii[..., 0] <= 0.0):
        node = np.unravel_index(np.argmin(radii[..., 0]), state.grid.shape)
        raise ConvexityLostError(f"convexity lost at node {node}", node=node, t=state.t)
    fstar = f.dual()
    if want_dual_grad:
        fs, dfs = fstar.value_grad(radii)
    else:
        fs, dfs = fstar.value(radii), None
    pref = _ambient_prefactor(state.ambient, state.s, gradnorm2)
    return {
        "radii": radii,
        "fstar": fs,
        "dfstar": dfs,
        "prefactor": pref,
        "gradnorm2": gradnorm2,
        "rhs": pref * fs ** alpha,
    }


def compute_rhs(state: SupportState, f: CurvatureFunction, alpha: float):
    """Per-node time derivative of the support function."""
    return _flow_fields(state, f, alpha)["rhs"]


def compute_rhs_normalized(state: SupportState, f: CurvatureFunction, alpha: float = 1.0):
    """Euclidean rescaled flow: F_*(tau) - s/n, stationary on round spheres."""
    if state.ambient is not Ambient.EUCLIDEAN:
        raise ConfigurationError("the normalized flow is defined in the Euclidean ambient")
    if alpha != 1.0:
        raise ConfigurationError("the normalized flow uses alpha = 1")
    return _flow_fields(state, f, 1.0)["rhs"] - state.s / f.n


# ---------------------------------------------------------------------------
# stability control


def _filter_mcrit(grid: SphereGrid, m_floor: int):
    """Highest retained azimuthal wavenumber per latitude row."""
    nyquist = grid.I // 2
    m = np.ceil(grid.J * np.sin(grid.theta)).astype(int)
    return np.clip(m, m_floor, nyquist)


def zonal_lowpass(grid: SphereGrid, field, m_crit):
    """Remove azimuthal modes above m_crit (per row) by FFT truncation."""
    spec = np.fft.rfft(field, axis=0)
    m = np.arange(spec.shape[0])[:, None]
    spec *= m <= m_crit[None, :]
    return np.fft.irfft(spec, n=grid.I, axis=0)


def _effective_hmin(grid: SphereGrid, m_crit=None):
    """Smallest resolvable orthonormal-frame spacing (filter-aware)."""
    sin_t = np.sin(grid.theta)
    h_phi = sin_t * grid.dphi
    if m_crit is not None:
        # resolvable azimuthal half-wavelength after truncation at m_crit
        h_phi = np.maximum(h_phi, np.pi * sin_t / m_crit)
    return min(grid.dtheta, float(h_phi.min()))


def _stability_coefficient(state: SupportState, alpha: float, fields) -> float:
    diffusivity = np.sum(fields["dfstar"], axis=-1) * fields["prefactor"]
    if state.ambient is not Ambient.EUCLIDEAN:
        # congruence correction: chart factor and the rank-one S eigenvalue
        s2 = state.s ** 2
        gn2 = fields["gradnorm2"]
        if state.ambient is Ambient.HYPERBOLIC:
            d = 1.0 - s2 - gn2
            diffusivity *= np.sqrt((1.0 - s2) / d) * (1.0 + gn2 / d)
        else:
            d = 1.0 + s2 + gn2
            diffusivity *= np.sqrt((1.0 + s2) / d)
    return float(np.max(alpha * fields["fstar"] ** (alpha - 1.0) * diffusivity))


def cfl_dt(state: SupportState, f: CurvatureFunction, alpha: float, cfl: float,
           m_crit=None) -> float:
    """Explicit step bound for the parabolic linearization.

    dt = cfl * h_min^2 / max_node(alpha F_*^(alpha-1) * sum_i dF_*^i * c_amb);
    the sum of the directional diffusivities is the von-Neumann aggregate for
    a two-axis second-difference operator (on the unit sphere with the mean
    curvature speed it equals 1/2, per direction 1/4).
    """
    fields = _flow_fields(state, f, alpha, want_dual_grad=True)
    h = _effective_hmin(state.grid, m_crit)
    return cfl * h ** 2 / _stability_coefficient(state, alpha, fields)


def _dt_from_fields(state: SupportState, config: FlowConfig, fields, m_crit) -> float:
    h = _effective_hmin(state.grid, m_crit)
    return config.cfl * h ** 2 / _stability_coefficient(state, config.alpha, fields)


# ---------------------------------------------------------------------------
# stepping


def step(state: SupportState, f: CurvatureFunction, alpha: float, dt: float,
         normalized: bool = False, m_crit=None) -> SupportState:
    """Explicit midpoint step; pure stencil unless a filter profile is given."""
    rhs = compute_rhs_normalized if normalized else compute_rhs

    def smooth(arr):
        if m_crit is None:
            return arr
        return zonal_lowpass(state.grid, arr, m_crit)

    k1 = rhs(state, f, alpha)
    mid = state.with_field(smooth(state.s + 0.5 * dt * k1), state.t + 0.5 * dt)
    k2 = rhs(mid, f, alpha)
    return state.with_field(smooth(state.s + dt * k2), state.t + dt)


def run(config: FlowConfig, initial: SupportState, normalized: bool = False) -> FlowRun:
    """Integrate until t_end or a stopping threshold fires.

    Snapshot times are aligned exactly to the cadence (the step is clipped to
    land on them), so time series are uniform for the duality residual.
    """
    from . import diagnostics  # local import to avoid a cycle

    require_valid(initial)
    state = initial
    m_crit = _filter_mcrit(initial.grid, config.filter_m_floor) if config.use_filter else None
    if m_crit is not None:
        state = state.with_field(zonal_lowpass(state.grid, state.s, m_crit))

    snapshots = [(state.t, state)]
    records = [diagnostics.snapshot(state, config.f)]
    termination = "t_end"
    failure = None
    tail = []  # (t, max|Y|) near the spherical equator, for T* extrapolation
    t0 = state.t
    next_snap = t0 + config.snap_every
    steps = 0

    while True:
        if state.t >= config.t_end - 1e-14:
            termination = "t_end"
            break
        if steps >= config.stop.step_cap:
            termination = "step_cap"
            break

        try:
            fields = _flow_fields(state, config.f, config.alpha, want_dual_grad=True)
            maxy2 = float(np.max(state.s ** 2 + fields["gradnorm2"]))
            if state.ambient is Ambient.HYPERBOLIC and 1.0 - maxy2 < config.stop.ball_margin:
                termination = "hyperbolic_margin"
                break
            if state.ambient is Ambient.SPHERICAL:
                if maxy2 >= 25.0:
                    tail.append((state.t, math.sqrt(maxy2)))
                if maxy2 >= config.stop.max_abs_y ** 2:
                    termination = "spherical_equator"
                    break
            dt = _dt_from_fields(state, config, fields, m_crit)
            dt = min(dt, config.t_end - state.t, next_snap - state.t)
            # midpoint step, reusing the already-computed stage-1 rhs
            k1 = fields["rhs"] - (state.s / config.f.n if normalized else 0.0)
            mid_s = state.s + 0.5 * dt * k1
            if m_crit is not None:
                mid_s = zonal_lowpass(state.grid, mid_s, m_crit)
            mid = state.with_field(mid_s, state.t + 0.5 * dt)
            rhs2 = compute_rhs_normalized if normalized else compute_rhs
            new_s = state.s + dt * rhs2(mid, config.f, config.alpha)
            if m_crit is not None:
                new_s = zonal_lowpass(state.grid, new_s, m_crit)
            state = state.with_field(new_s, state.t + dt)
        except (ConvexityLostError, StateInvalidError) as exc:
            termination = "convexity_lost"
            failure = str(exc)
            break
        steps += 1
        if state.t >= next_snap - 1e-12:
            snapshots.append((state.t, state))
            records.append(diagnostics.snapshot(state, config.f))
            next_snap += config.snap_every

    if not snapshots or snapshots[-1][0] < state.t - 1e-12:
        snapshots.append((state.t, state))
        records.append(diagnostics.snapshot(state, config.f))

    t_star = _extrapolate_blowup(tail) if termination == "spherical_equator" else None
    return FlowRun(config, snapshots, records, termination, steps,
                   t_star_estimate=t_star, failure=failure)


def _extrapolate_blowup(tail):
    """Blow-up time from the tail of max|Y|: 1/|Y|^2 ~ (2/n)(T* - t) near the
    equator, so a linear fit of u = 1/maxY^2 against t crosses zero at T*."""
    if len(tail) < 3:
        return None
    t = np.array([p[0] for p in tail])
    u = 1.0 / np.array([p[1] for p in tail]) ** 2
    slope, intercept = np.polyfit(t, u, 1)
    if slope >= 0.0:
        return None
    return float(-intercept / slope)


# ---------------------------------------------------------------------------
# spherical polar-duality residual


def verify_polar_duality_residual(flow_run: FlowRun):
    """Contracting-flow residual of the polar-dual state series.

    For each interior snapshot the dual support function s-tilde must satisfy
    ds-tilde/dt = -sqrt((1+s~^2+|grad s~|^2)(1+s~^2)) / f(radii of the dual);
    the time derivative is a centered difference of the resampled dual states.
    Returns [(t, max-node |residual|)] over interior snapshots.
    """
    from .hypersurface import polar_dual

    config = flow_run.config
    if config.ambient is not Ambient.SPHERICAL:
        raise ConfigurationError("the duality residual is defined for spherical runs")
    if len(flow_run.snapshots) < 3:
        raise ConfigurationError("need at least 3 snapshots for a centered time derivative")

    duals = [(t, polar_dual(st)) for t, st in flow_run.snapshots]
    out = []
    for m in range(1, len(duals) - 1):
        t_prev, d_prev = duals[m - 1]
        t_mid, d_mid = duals[m]
        t_next, d_next = duals[m + 1]
        h1, h2 = t_mid - t_prev, t_next - t_mid
        # centered derivative, exact for quadratics on a nonuniform pair
        dsdt = (h1 ** 2 * d_next.s + (h2 ** 2 - h1 ** 2) * d_mid.s - h2 ** 2 * d_prev.s) / (
            h1 * h2 * (h1 + h2))
        fields = _flow_fields(d_mid, config.f, 1.0)
        speed = fields["prefactor"] / config.f.value(fields["radii"])
        out.append((t_mid, float(np.max(np.abs(dsdt + speed)))))
    return out
