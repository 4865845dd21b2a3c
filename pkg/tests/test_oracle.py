import math

import numpy as np
import pytest

from icf import oracle
from icf.curvfn import construct
from icf.errors import ConfigurationError, DomainError


def test_euclidean_alpha_1():
    assert oracle.sphere_radius("euclidean", 1.0, 1.0, 2.0) == pytest.approx(math.e, rel=1e-12)


def test_euclidean_alpha_half_closed_form():
    r = oracle.sphere_radius("euclidean", 0.5, 1.0, 1.0)
    assert r == pytest.approx((1.0 + 0.5 * 2 ** -0.5) ** 2, rel=1e-12)
    assert r == pytest.approx(1.83211, abs=1e-5)


def test_hyperbolic_alpha_1():
    rho = oracle.sphere_radius("hyperbolic", 1.0, 1.0, 2.0)
    assert rho == pytest.approx(math.asinh(math.sinh(1.0) * math.e), rel=1e-12)
    # the closed form agrees with an independent RK4 integration
    rho_rk4 = oracle._hyperbolic_rho_rk4(1.0, 1.0, 2.0, 2, dt=1e-4)
    assert rho == pytest.approx(rho_rk4, rel=1e-10)


def test_spherical_blowup():
    assert oracle.spherical_blowup_time(math.pi / 6, 2) == pytest.approx(2 * math.log(2), rel=1e-12)
    with pytest.raises(DomainError):
        oracle.sphere_radius("spherical", 1.0, math.pi / 6, 2 * math.log(2) + 0.01)
    with pytest.raises(ConfigurationError):
        oracle.sphere_radius("spherical", 0.5, math.pi / 6, 0.1)


def test_closed_forms_satisfy_their_ode():
    # residual of the defining ODE via a small central difference in t
    h = 1e-6
    for t in (0.3, 1.1, 2.7):
        r = oracle.sphere_radius("euclidean", 1.0, 1.3, t)
        drdt = (oracle.sphere_radius("euclidean", 1.0, 1.3, t + h)
                - oracle.sphere_radius("euclidean", 1.0, 1.3, t - h)) / (2 * h)
        assert drdt == pytest.approx(r / 2.0, rel=1e-8)

        rho = oracle.sphere_radius("hyperbolic", 1.0, 0.8, t)
        drho = (oracle.sphere_radius("hyperbolic", 1.0, 0.8, t + h)
                - oracle.sphere_radius("hyperbolic", 1.0, 0.8, t - h)) / (2 * h)
        assert drho == pytest.approx(math.tanh(rho) / 2.0, rel=1e-8)

    rho0 = math.pi / 6
    for t in (0.3, 1.0):
        rho = oracle.sphere_radius("spherical", 1.0, rho0, t)
        drho = (oracle.sphere_radius("spherical", 1.0, rho0, t + h)
                - oracle.sphere_radius("spherical", 1.0, rho0, t - h)) / (2 * h)
        assert drho == pytest.approx(math.tan(rho) / 2.0, rel=1e-8)


def test_small_radius_consistency_across_ambients():
    # curved evolutions agree with the Euclidean one to first order in r0
    for r0 in (0.05, 0.02, 0.01):
        t = r0
        re = oracle.sphere_radius("euclidean", 1.0, r0, t)
        rh = oracle.sphere_radius("hyperbolic", 1.0, r0, t)
        rs = oracle.sphere_radius("spherical", 1.0, r0, t)
        assert abs(rh / re - 1.0) <= 5 * r0 ** 2
        assert abs(rs / re - 1.0) <= 5 * r0 ** 2


def test_rk4_reference_self_convergence_order_4():
    # alpha < 1 hyperbolic path: Richardson ratios approach 2^4
    vals = [oracle._hyperbolic_rho_rk4(0.5, 1.0, 1.0, 2, dt=dt)
            for dt in (2e-2, 1e-2, 5e-3)]
    e1 = abs(vals[0] - vals[1])
    e2 = abs(vals[1] - vals[2])
    assert 10.0 <= e1 / e2 <= 22.0


def test_hyperbolic_alpha_half_against_default_step():
    # the default reference step is documented as 1e-5; a coarser run must agree
    fine = oracle.sphere_radius("hyperbolic", 0.5, 1.0, 0.05)
    coarse = oracle._hyperbolic_rho_rk4(0.5, 1.0, 0.05, 2, dt=1e-3)
    assert fine == pytest.approx(coarse, rel=1e-10)


def test_domain_errors():
    with pytest.raises(DomainError):
        oracle.sphere_radius("euclidean", 1.0, -1.0, 1.0)
    with pytest.raises(DomainError):
        oracle.sphere_radius("euclidean", 1.0, 1.0, -0.1)
    with pytest.raises(ConfigurationError):
        oracle.sphere_radius("flat", 1.0, 1.0, 1.0)


def test_fd_check_exact_for_linear():
    # linear f: the FD quotient is exact up to summation roundoff eps/h ~ 1e-11
    rep = oracle.fd_check(construct("power-mean:1", 3), np.array([1.0, 2.0, 3.0]))
    assert rep.grad_max_rel < 1e-9
    assert rep.hess_max_rel < 1e-6


def test_fd_check_examples():
    rep = oracle.fd_check(construct("elem-sym:2", 2), np.array([1.0, 4.0]))
    assert rep.grad_max_rel <= 1e-6
    rep = oracle.fd_check(construct("dual:power-mean:2", 3), np.array([1.0, 2.0, 3.0]))
    assert rep.grad_max_rel <= 1e-6
    assert rep.hess_max_rel <= 1e-6
