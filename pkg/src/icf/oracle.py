"""Reference solutions used as ground truth by the test suites.

Geodesic spheres are umbilic, so the flow reduces to a radius ODE in every
ambient; the closed forms below are the separable solutions of that ODE under
the f(1,...,1) = n normalization (speed of a round sphere is (n/r)^-alpha in
the appropriate radius variable).
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .errors import ConfigurationError, DomainError

RK4_DT = 1e-5  # reference step for the hyperbolic alpha < 1 integration


def sphere_radius(ambient: str, alpha: float, r0: float, t: float, n: int = 2) -> float:
    """Radius of the geodesic-sphere solution at time t.

    Euclidean solves r' = (r/n)^alpha; hyperbolic solves rho' = (n coth rho)^-alpha
    (closed form sinh rho = sinh rho0 e^(t/n) for alpha = 1, RK4 reference
    otherwise); spherical (alpha = 1 only) gives sin rho = sin rho0 e^(t/n)
    with blow-up at T* = -n ln sin rho0.  Radius parameters: r0 is the
    Euclidean radius, or rho0 in the curved ambients.
    """
    if t < 0:
        raise DomainError("time must be nonnegative")
    if r0 <= 0:
        raise DomainError("initial radius must be positive")
    if ambient == "euclidean":
        if alpha == 1.0:
            return r0 * math.exp(t / n)
        return (r0 ** (1.0 - alpha) + (1.0 - alpha) * n ** (-alpha) * t) ** (1.0 / (1.0 - alpha))
    if ambient == "hyperbolic":
        if alpha == 1.0:
            return math.asinh(math.sinh(r0) * math.exp(t / n))
        return _hyperbolic_rho_rk4(alpha, r0, t, n)
    if ambient == "spherical":
        if alpha != 1.0:
            raise ConfigurationError("spherical oracle is defined for alpha = 1 only")
        if r0 >= math.pi / 2:
            raise DomainError("spherical initial radius must lie below pi/2")
        s = math.sin(r0) * math.exp(t / n)
        if s >= 1.0:
            raise DomainError(f"time beyond the blow-up T* = {-n * math.log(math.sin(r0)):.6f}")
        return math.asin(s)
    raise ConfigurationError(f"unknown ambient {ambient!r}")


def spherical_blowup_time(rho0: float, n: int = 2) -> float:
    if not 0.0 < rho0 < math.pi / 2:
        raise DomainError("spherical initial radius must lie in (0, pi/2)")
    return -n * math.log(math.sin(rho0))


def _hyperbolic_rho_rk4(alpha, rho0, t, n, dt=RK4_DT):
    def rhs(rho):
        return (n / math.tanh(rho)) ** (-alpha)

    steps = int(math.ceil(t / dt)) if t > 0 else 0
    rho = rho0
    remaining = t
    for _ in range(steps):
        h = min(dt, remaining)
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * h * k1)
        k3 = rhs(rho + 0.5 * h * k2)
        k4 = rhs(rho + h * k3)
        rho += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        remaining -= h
    return rho


# ---------------------------------------------------------------------------
# finite-difference derivative oracle


@dataclass
class FDReport:
    grad_max_rel: float
    hess_max_rel: float
    step: float


def fd_check(f, p, step: float = 1e-5, hess_step: float | None = None) -> FDReport:
    """Central-difference check of grad and hess at a single cone point.

    Gradient steps are relative (h_i = step * p_i) so the check is meaningful
    across component magnitudes.  Second differences need two corrections:
    the step widens to step^(3/4) (round-off floor eps/h^2 moves the optimum
    from eps^(1/3) to eps^(1/4)), and it scales with sqrt(p_i * max p) rather
    than p_i -- a step proportional to a 100x-smaller component leaves
    eps*|f|/h^2 noise far above 1e-6 of the Hessian scale, while the
    geometric compromise keeps both noise and truncation below it across a
    [0.1, 10] box.  Deviations are relative to the largest analytic entry.
    """
    p = np.asarray(p, dtype=float)
    v, grad, hess = f.value_grad_hess(p)
    n = p.size
    h = step * p
    h2 = (step ** 0.75 if hess_step is None else hess_step) * np.sqrt(p * np.max(p))

    def val(q):
        return float(f.value(q))

    fd_grad = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h[i]
        fd_grad[i] = (val(p + e) - val(p - e)) / (2 * h[i])

    fd_hess = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h2[i]
        fd_hess[i, i] = (val(p + ei) - 2 * v + val(p - ei)) / h2[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h2[j]
            fd_hess[i, j] = (
                val(p + ei + ej) - val(p + ei - ej) - val(p - ei + ej) + val(p - ei - ej)
            ) / (4 * h2[i] * h2[j])
            fd_hess[j, i] = fd_hess[i, j]

    gscale = max(np.max(np.abs(grad)), 1e-300)
    # dimensional floor grad/|p| keeps identically-zero Hessians (linear f)
    # from dividing FD roundoff by itself
    hscale = max(np.max(np.abs(hess)), gscale / np.max(p))
    return FDReport(
        grad_max_rel=float(np.max(np.abs(fd_grad - grad)) / gscale),
        hess_max_rel=float(np.max(np.abs(fd_hess - hess)) / hscale),
        step=step,
    )


def ddF_fd(f, p, B, step: float = 1e-4) -> float:
    """Second difference in s of F(diag(p) + s B), F(A) = f(eigenvalues of A).

    Independent oracle for the quadratic-form route: uses a dense symmetric
    eigensolve, no divided differences.
    """
    p = np.asarray(p, dtype=float)
    B = np.asarray(B, dtype=float)
    A = np.diag(p)
    h = step * float(np.max(p))

    def F(M):
        return float(f.value(np.linalg.eigvalsh(M)))

    return (F(A + h * B) - 2.0 * F(A) + F(A - h * B)) / h ** 2
