"""Per-snapshot scalar summaries and the monitors that test the theory.

The monitored quantities: the pinching ratio max(kappa_2/kappa_1), the
monotone quantity q = min over the hypersurface of the smallest eigenvalue of
F^-1 W (equivalently min kappa_1/F, which is <= 1/n with equality exactly at
umbilics), the speed range, the hyperbolic deviation max|kappa_i - 1| and the
support-function oscillation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from .curvfn import CurvatureFunction
from .errors import ConfigurationError
from . import sphgrid
from .hypersurface import Ambient, SupportState, principal_curvatures, embed, validate

CSV_COLUMNS = ("t", "kappa_min", "kappa_max", "pinch", "q", "F_min", "F_max",
               "dev", "osc", "convexity_margin")


@dataclass
class DiagnosticsRecord:
    t: float
    kappa_min: float
    kappa_max: float
    pinch: float
    q: float
    F_min: float
    F_max: float
    dev: float            # hyperbolic only; nan elsewhere
    osc: float
    convexity_margin: float

    def row(self):
        return [getattr(self, name) for name in CSV_COLUMNS]


def snapshot(state: SupportState, f: CurvatureFunction) -> DiagnosticsRecord:
    """All scalar summaries of one state, using the flow's own speed function."""
    cf = principal_curvatures(state, f)
    k1 = cf.kappa[..., 0]
    k2 = cf.kappa[..., 1]
    dev = float(np.max(np.abs(cf.kappa - 1.0))) if state.ambient is Ambient.HYPERBOLIC else math.nan
    mean_s = sphgrid.reduce(state.grid, state.s, "mean")
    rep = validate(state)
    return DiagnosticsRecord(
        t=state.t,
        kappa_min=float(k1.min()),
        kappa_max=float(k2.max()),
        pinch=float((k2 / k1).max()),
        q=float((k1 / cf.speed).min()),
        F_min=float(cf.speed.min()),
        F_max=float(cf.speed.max()),
        dev=dev,
        osc=float((state.s.max() - state.s.min()) / mean_s),
        convexity_margin=rep.min_tau_eig,
    )


def check_monotone_q(records, tol: float = 1e-6) -> bool:
    """Pass iff q never drops by more than the relative tolerance per record."""
    qs = [r.q for r in records]
    return all(q_next >= q * (1.0 - tol) for q, q_next in zip(qs, qs[1:]))


def check_pinch_bound(records, tol: float = 1e-4) -> bool:
    pinches = [r.pinch for r in records]
    return max(pinches) <= pinches[0] * (1.0 + tol)


# ---------------------------------------------------------------------------
# the boundary-decay pinching constant


def pinching_bound_constant(f: CurvatureFunction, C: float, refine_rounds: int = 60):
    """Empirical C' with tau_max <= C f_*(tau)  =>  tau_max <= C' tau_min.

    Both sides of the constraint are homogeneous of degree one, so the
    feasible ratio set is scale invariant and the extreme ray is
    (t, 1, ..., 1) with the other components maximal (f_* is increasing).
    The search therefore bisects the feasibility edge of C f_*(t,1,...,1) >= 1
    in t, refining toward the boundary; C' = 1/t at the edge.  Returns
    (C_prime, 'bounded') or (inf, 'unbounded') when the constraint stays
    feasible arbitrarily close to the boundary (exactly the non-decaying
    duals).
    """
    if C <= 0:
        raise ConfigurationError("the constant C must be positive")
    fstar = f.dual()

    def feasible(t):
        ray = np.ones(f.n)
        ray[0] = t
        return C * float(fstar.value(ray)) >= 1.0

    t_floor = 1e-12
    if feasible(t_floor):
        return math.inf, "unbounded"
    if not feasible(1.0):
        # constraint empty on the normalized simplex; only tau = lambda(1,..,1)
        # like points may satisfy it after rescaling, ratio 1
        return 1.0, "bounded"
    lo, hi = t_floor, 1.0  # infeasible at lo, feasible at hi
    for _ in range(refine_rounds):
        mid = math.sqrt(lo * hi)  # geometric bisection toward the boundary
        if feasible(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14 * hi:
            break
    return 1.0 / hi, "bounded"


# ---------------------------------------------------------------------------
# decay-rate fits


@dataclass
class DecayFit:
    rate: float | None
    amplitude: float | None
    residual: float | None
    verdict: str            # "fit" | "already_round" | "insufficient_window"


def fit_decay(records, ambient: Ambient, window_start: float = 0.5,
              min_records: int = 10) -> DecayFit:
    """Least-squares exponential rate of the roundness deficit.

    Hyperbolic runs fit log dev against t once dev < window_start; Euclidean
    (normalized) runs fit log osc.  If the hypersurface is already umbilic to
    1e-9 (spatial curvature spread), there is nothing to fit.
    """
    if ambient is Ambient.HYPERBOLIC:
        series = [(r.t, r.dev) for r in records]
    elif ambient is Ambient.EUCLIDEAN:
        series = [(r.t, r.osc) for r in records]
    else:
        raise ConfigurationError("decay fits cover the hyperbolic and Euclidean ambients")
    if all(r.pinch - 1.0 <= 1e-9 for r in records):
        return DecayFit(None, None, None, "already_round")
    window = [(t, y) for t, y in series if 0.0 < y < window_start]
    if len(window) < min_records:
        return DecayFit(None, None, None, "insufficient_window")
    t = np.array([p[0] for p in window])
    logy = np.log([p[1] for p in window])
    slope, intercept = np.polyfit(t, logy, 1)
    resid = float(np.sqrt(np.mean((logy - (slope * t + intercept)) ** 2)))
    return DecayFit(rate=float(-slope), amplitude=float(np.exp(intercept)),
                    residual=resid, verdict="fit")


def fit_synthetic_decay(t, values):
    """Rate recovery helper for synthetic series (tests)."""
    slope, _ = np.polyfit(np.asarray(t), np.log(np.asarray(values)), 1)
    return float(-slope)


# ---------------------------------------------------------------------------
# independent mesh-based curvature cross-check


def embedded_mesh_curvature(state: SupportState):
    """Principal curvatures estimated from the embedded node mesh alone.

    Completely independent of the support-function calculus: takes the R^3
    node cloud, estimates normals from neighbor cross products, fits a local
    quadric over the 8-neighborhood and reads the shape operator off the
    graph.  Euclidean ambient only; accuracy is O(h^2)-ish with a different
    constant than the main pipeline, which is the point of the cross-check.
    """
    if state.ambient is not Ambient.EUCLIDEAN:
        raise ConfigurationError("the mesh cross-check runs in the Euclidean ambient")
    g = state.grid
    P = embed(state)                                  # (I, J, 3)

    def shifted(di, dj):
        if dj == 0:
            return np.roll(P, -di, axis=0)
        Pe = sphgrid._extend_pole(g, P[..., 0], rows=1), sphgrid._extend_pole(
            g, P[..., 1], rows=1), sphgrid._extend_pole(g, P[..., 2], rows=1)
        Pe = np.stack(Pe, axis=-1)                    # (I, J+2, 3)
        return np.roll(Pe, -di, axis=0)[:, 1 + dj: 1 + dj + g.J]

    offsets = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
    nbrs = np.stack([shifted(di, dj) for di, dj in offsets], axis=2)   # (I, J, 8, 3)
    rel = nbrs - P[:, :, None, :]

    # normal from the two mesh tangent directions
    t_phi = shifted(1, 0) - shifted(-1, 0)
    t_th = shifted(0, 1) - shifted(0, -1)
    nrm = np.cross(t_th, t_phi)
    nrm /= np.linalg.norm(nrm, axis=-1, keepdims=True)
    # orient outward (the body contains the origin)
    sign = np.sign(np.einsum("ijk,ijk->ij", nrm, P))
    nrm *= sign[..., None]

    # tangent basis
    u = t_th - np.einsum("ijk,ijk->ij", t_th, nrm)[..., None] * nrm
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    v = np.cross(nrm, u)

    x = np.einsum("ijnk,ijk->ijn", rel, u)
    y = np.einsum("ijnk,ijk->ijn", rel, v)
    h = np.einsum("ijnk,ijk->ijn", rel, nrm)

    # graph fit h = a x + b y + (A x^2 + 2 B x y + C y^2)/2
    cols = np.stack([x, y, 0.5 * x ** 2, x * y, 0.5 * y ** 2], axis=-1)  # (I, J, 8, 5)
    AtA = np.einsum("ijnp,ijnq->ijpq", cols, cols)
    Atb = np.einsum("ijnp,ijn->ijp", cols, h)
    coef = np.linalg.solve(AtA, Atb)
    a, b = coef[..., 0], coef[..., 1]
    A, B, Cc = coef[..., 2], coef[..., 3], coef[..., 4]

    # shape operator of a graph with gradient (a, b): W = G^-1 II / sqrt(1+|g|^2)
    w2 = 1.0 + a ** 2 + b ** 2
    II = np.empty(g.shape + (2, 2))
    II[..., 0, 0] = A
    II[..., 0, 1] = B
    II[..., 1, 0] = B
    II[..., 1, 1] = Cc
    II /= np.sqrt(w2)[..., None, None]
    Ginv = np.empty_like(II)
    Ginv[..., 0, 0] = 1.0 + b ** 2
    Ginv[..., 0, 1] = -a * b
    Ginv[..., 1, 0] = -a * b
    Ginv[..., 1, 1] = 1.0 + a ** 2
    Ginv /= w2[..., None, None]
    S = Ginv @ II
    # eigenvalues of the (non-symmetric but similar-to-symmetric) 2x2 field
    tr = S[..., 0, 0] + S[..., 1, 1]
    det = S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] * S[..., 1, 0]
    disc = np.sqrt(np.maximum(tr ** 2 / 4.0 - det, 0.0))
    minus_curv = tr / 2.0 - disc
    plus_curv = tr / 2.0 + disc
    return np.stack([minus_curv, plus_curv], axis=-1)


# ---------------------------------------------------------------------------
# CSV / JSON emission


def records_to_csv(records) -> str:
    lines = ["# format_version=1", ",".join(CSV_COLUMNS)]
    for r in records:
        lines.append(",".join(repr(float(v)) for v in r.row()))
    return "\n".join(lines) + "\n"


def summary_dict(flow_run, decay: DecayFit | None = None) -> dict:
    records = flow_run.records
    out = {
        "format_version": 1,
        "termination": flow_run.termination,
        "pinch_initial": records[0].pinch,
        "pinch_max": max(r.pinch for r in records),
        "q_initial": records[0].q,
        "q_final": records[-1].q,
        "verdicts": {
            "monotone_q": check_monotone_q(records),
            "pinch_bound": check_pinch_bound(records),
        },
    }
    if flow_run.t_star_estimate is not None:
        out["T_star_estimate"] = flow_run.t_star_estimate
    if decay is not None and decay.rate is not None:
        out["decay_rate"] = decay.rate
        out["decay_fit_residual"] = decay.residual
    if flow_run.failure:
        out["failure"] = flow_run.failure
    return out
