import math
from itertools import permutations

import numpy as np
import pytest

from icf import curvfn
from icf.curvfn import (
    CurvatureFunction,
    boundary_decay_scan,
    construct,
    ddF_quadratic_form,
    parse_spec,
    verify_properties,
)
from icf.errors import ConfigurationError, DomainError
from icf.oracle import ddF_fd, fd_check

# functions satisfying the inverse-concavity assumptions (duals of concave
# members are inverse concave; dual:power-mean:2 is NOT -- see below)
VC_ZOO = [
    ("power-mean:0.5", 3),
    ("power-mean:1", 3),
    ("power-mean:2", 3),
    ("power-mean:3", 3),
    ("elem-sym:1", 3),
    ("elem-sym:2", 3),
    ("elem-sym:3", 3),
    ("elem-sym:2", 2),
    ("interp:power-mean:1,elem-sym:2,0.5", 3),
    ("interp:power-mean:2,elem-sym:3,0.3", 3),
    ("dual:power-mean:1", 3),
    ("dual:elem-sym:2", 3),
]
# everything above plus functions used only for evaluation/derivative tests
ZOO = VC_ZOO + [("dual:power-mean:2", 3)]


def sigma_brute(x, k):
    """Brute-force elementary symmetric polynomial by subset enumeration."""
    from itertools import combinations

    return sum(math.prod(c) for c in combinations(x, k))


# ---------------------------------------------------------------------------
# construction


def test_normalization_at_ones():
    for spec, n in ZOO:
        f = construct(spec, n)
        assert f.value(np.ones(n)) == pytest.approx(f.norm_at_ones, rel=1e-12)


def test_power_mean_1_is_sum():
    f = construct("power-mean:1", 2)
    assert f.value([1.0, 1.0]) == pytest.approx(2.0)
    assert f.value([3.0, 4.0]) == pytest.approx(7.0)


def test_elem_sym_geometric_mean():
    # n (prod kappa)^(1/n), cross-checked against the subset expansion
    f = construct("elem-sym:3", 3)
    x = [1.0, 2.0, 4.0]
    assert f.value(x) == pytest.approx(6.0, rel=1e-12)
    assert f.value(x) == pytest.approx(3.0 * (sigma_brute(x, 3) / 1.0) ** (1 / 3), rel=1e-12)


def test_elem_sym_matches_subset_expansion():
    rng = np.random.default_rng(11)
    for k, n in [(2, 3), (3, 4), (2, 5)]:
        f = construct(f"elem-sym:{k}", n)
        for _ in range(20):
            x = rng.uniform(0.2, 5.0, n)
            expected = n * (sigma_brute(x, k) / math.comb(n, k)) ** (1.0 / k)
            assert f.value(x) == pytest.approx(expected, rel=1e-12)


def test_interp_normalized():
    f = construct("interp:power-mean:1,elem-sym:2,0.5", 2)
    assert f.value([1.0, 1.0]) == pytest.approx(2.0, rel=1e-12)


def test_power_mean_2_example():
    f = construct("power-mean:2", 2)
    assert f.value([3.0, 4.0]) == pytest.approx(math.sqrt(2) * 5.0, rel=1e-12)
    _, g = f.value_grad(np.array([3.0, 4.0]))
    assert g == pytest.approx([0.84852814, 1.13137085], rel=1e-6)


def test_bad_specs_rejected():
    with pytest.raises(ConfigurationError):
        construct("power-mean:0", 2)
    with pytest.raises(ConfigurationError):
        construct("elem-sym:4", 3)
    with pytest.raises(ConfigurationError):
        construct("elem-sym:0", 3)
    with pytest.raises(ConfigurationError):
        construct("garbage:1", 3)
    with pytest.raises(ConfigurationError):
        construct("interp:power-mean:1,elem-sym:2,1.5", 3)
    with pytest.raises(ConfigurationError):
        construct("power-mean:1", 1)


def test_spec_parser_round_trip():
    for text, n in ZOO:
        f = construct(text, n)
        again = construct(f.spec_string, n)
        x = np.array([0.7, 1.3, 2.9][:n])
        assert again.value(x) == pytest.approx(f.value(x), rel=1e-15)


def test_nested_spec_parsing():
    tree = parse_spec("interp:dual:power-mean:2,elem-sym:2,0.25")
    assert tree[0] == "interp"
    assert tree[1] == ("dual", ("power-mean", 2.0))
    assert tree[2] == ("elem-sym", 2)
    assert tree[3] == 0.25


def test_domain_errors():
    f = construct("power-mean:2", 2)
    with pytest.raises(DomainError):
        f.value([1.0, -1.0])
    with pytest.raises(DomainError):
        f.value([1.0, 0.0])
    with pytest.raises(DomainError):
        f.evaluate([1.0, 2.0, 3.0])


# ---------------------------------------------------------------------------
# derivatives against the finite-difference oracle


def test_linear_function_derivatives():
    f = construct("power-mean:1", 4)
    b = f.evaluate(np.array([1.0, 2.0, 3.0, 4.0]))
    assert b.grad == pytest.approx(np.ones(4))
    assert np.abs(b.hess).max() == 0.0


def test_elem_sym2_n2_example():
    # 2 sqrt(k1 k2) at (1, 4): value 4, grad (2, 0.5)
    f = construct("elem-sym:2", 2)
    b = f.evaluate(np.array([1.0, 4.0]))
    assert b.value == pytest.approx(4.0, rel=1e-12)
    assert b.grad == pytest.approx([2.0, 0.5], rel=1e-12)
    rep = fd_check(f, np.array([1.0, 4.0]))
    assert rep.grad_max_rel < 1e-6


@pytest.mark.parametrize("spec,n", ZOO)
def test_gradients_and_hessians_match_fd(spec, n):
    import zlib

    f = construct(spec, n)
    rng = np.random.default_rng(zlib.crc32(spec.encode()))
    for _ in range(20):
        p = rng.uniform(0.1, 10.0, n)
        rep = fd_check(f, p)
        assert rep.grad_max_rel < 1e-6, f"{spec} grad dev {rep.grad_max_rel}"
        assert rep.hess_max_rel < 1e-6, f"{spec} hess dev {rep.hess_max_rel}"


def test_hessian_symmetry():
    rng = np.random.default_rng(5)
    for spec, n in ZOO:
        f = construct(spec, n)
        _, _, h = f.value_grad_hess(rng.uniform(0.5, 2.0, (7, n)))
        assert np.allclose(h, np.swapaxes(h, -1, -2), atol=1e-12)


# ---------------------------------------------------------------------------
# duality


def test_dual_at_ones():
    for spec, n in ZOO:
        f = construct(spec, n)
        assert f.dual().value(np.ones(n)) == pytest.approx(1.0 / f.norm_at_ones, rel=1e-12)


def test_dual_power_mean_identity():
    # dual(PM(r)) = n^-2 PM(-r) pointwise
    rng = np.random.default_rng(42)
    for r in (0.5, 1.0, 2.0, 3.0):
        for n in (2, 3):
            d = construct(f"power-mean:{r}", n).dual()
            ref = construct(f"power-mean:{-r}", n)
            x = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), (1000, n)))
            assert np.allclose(d.value(x), ref.value(x) / n ** 2, rtol=1e-12)


def test_dual_is_involution():
    rng = np.random.default_rng(9)
    for spec, n in ZOO:
        f = construct(spec, n)
        ff = f.dual().dual()
        x = np.exp(rng.uniform(np.log(0.1), np.log(10.0), (200, n)))
        assert np.allclose(ff.value(x), f.value(x), rtol=1e-12)


def test_dual_dual_elem_sym_example():
    f = construct("dual:dual:elem-sym:3", 3)
    assert f.value([1.0, 2.0, 4.0]) == pytest.approx(6.0, rel=1e-12)


# ---------------------------------------------------------------------------
# structural invariants (sampled)


@pytest.mark.parametrize("spec,n", ZOO)
def test_homogeneity_symmetry_euler(spec, n):
    f = construct(spec, n)
    rng = np.random.default_rng(1234)
    x = np.exp(rng.uniform(np.log(0.1), np.log(10.0), (1000, n)))
    k = rng.uniform(0.1, 10.0, 1000)
    v, g = f.value_grad(x)
    assert np.all(np.abs(f.value(k[:, None] * x) - k * v) <= 1e-12 * k * np.abs(v))
    for perm in list(permutations(range(n)))[:6]:
        assert np.all(np.abs(f.value(x[:, perm]) - v) <= 1e-12 * np.abs(v))
    euler = np.abs(np.sum(g * x, axis=-1) - v)
    assert np.all(euler <= 1e-10 * np.abs(v))
    assert np.all(g > 0.0)  # strict monotonicity on the cone


# ---------------------------------------------------------------------------
# second derivative of the matrix function


def test_ddF_diagonal_B_reduces_to_hessian_form():
    f = construct("elem-sym:2", 3)
    p = np.array([1.0, 2.0, 3.0])
    B = np.diag([0.3, -0.7, 1.1])
    _, _, h = f.value_grad_hess(p)
    d = np.diag(B)
    assert ddF_quadratic_form(f, p, B) == pytest.approx(float(d @ h @ d), rel=1e-13)


def test_ddF_linear_function_vanishes():
    f = construct("power-mean:1", 2)
    B = np.array([[0.4, 1.7], [1.7, -0.3]])
    assert ddF_quadratic_form(f, np.array([1.0, 3.0]), B) == 0.0


def test_ddF_offdiagonal_example():
    # ES2, n=2, p=(1,2), B = offdiag ones: 2 (f'1 - f'2)/(1 - 2)
    f = construct("elem-sym:2", 2)
    B = np.array([[0.0, 1.0], [1.0, 0.0]])
    expected = 2 * (math.sqrt(2) - 1 / math.sqrt(2)) / (1 - 2)
    assert ddF_quadratic_form(f, np.array([1.0, 2.0]), B) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(-1.41421, abs=1e-5)


@pytest.mark.parametrize("spec,n", [("power-mean:2", 3), ("elem-sym:2", 3),
                                    ("dual:power-mean:2", 3),
                                    ("interp:power-mean:1,elem-sym:2,0.5", 3)])
def test_ddF_matches_matrix_fd(spec, n):
    f = construct(spec, n)
    rng = np.random.default_rng(17)
    points = [rng.uniform(0.5, 3.0, n) for _ in range(3)]
    # near-repeated eigenvalues exercise the limit branch
    points.append(np.array([1.0, 1.0 + 1e-10, 2.0]))
    points.append(np.array([1.5, 1.5, 1.5]))
    for p in points:
        B = rng.standard_normal((n, n))
        B = 0.5 * (B + B.T)
        a = ddF_quadratic_form(f, p, B)
        b = ddF_fd(f, p, B)
        assert a == pytest.approx(b, rel=1e-5, abs=1e-9), f"{spec} at {p}"


def test_ddF_continuous_across_eigenvalue_switch():
    # perturbing kappa_2 through the coincidence threshold moves the value
    # by less than 1e-6 relative
    f = construct("elem-sym:2", 3)
    eps = curvfn.EPS_EIG
    B = np.array([[0.2, 1.0, -0.4], [1.0, -0.5, 0.8], [-0.4, 0.8, 0.9]])
    base = np.array([1.0, 1.0, 2.5])
    lo = base.copy()
    lo[1] *= 1.0 - 2 * eps
    hi = base.copy()
    hi[1] *= 1.0 + 2 * eps
    v_lo = ddF_quadratic_form(f, lo, B)
    v_hi = ddF_quadratic_form(f, hi, B)
    v_mid = ddF_quadratic_form(f, base, B)
    scale = abs(v_mid)
    assert abs(v_lo - v_mid) <= 1e-6 * scale
    assert abs(v_hi - v_mid) <= 1e-6 * scale


def test_ddF_rejects_asymmetric_B():
    f = construct("power-mean:2", 2)
    with pytest.raises(ConfigurationError):
        ddF_quadratic_form(f, np.array([1.0, 2.0]), np.array([[0.0, 1.0], [0.0, 0.0]]))


# ---------------------------------------------------------------------------
# property verification


def test_pm1_inverse_concavity_matrix_explicit():
    # f = sum: hess = 0, matrix = diag(2/x); at (1,2) -> diag(2,1), min eig 1
    f = construct("power-mean:1", 2)
    _, g, h = f.value_grad_hess(np.array([1.0, 2.0]))
    M = h + np.diag(2.0 * g / np.array([1.0, 2.0]))
    assert np.linalg.eigvalsh(M) == pytest.approx([1.0, 2.0])


def test_property_suite_passes_for_zoo():
    for spec, n in VC_ZOO:
        rep = verify_properties(construct(spec, n), samples=2000, seed=101)
        assert rep.passed, f"{spec}:\n{rep.table()}"


def test_property_suite_flags_pm_minus_2():
    rep = verify_properties(construct("power-mean:-2", 2), samples=10000, seed=7)
    assert not rep["inverse_concavity_matrix"].passed
    assert rep["inverse_concavity_matrix"].margin < -1e-6


def test_property_suite_flags_dual_of_convex():
    # dual(PM(2)) is proportional to PM(-2): concave but not inverse concave
    f = construct("dual:power-mean:2", 3)
    assert not f.declared_inverse_concave
    rep = verify_properties(f, samples=10000, seed=7)
    assert not rep["inverse_concavity_matrix"].passed


def test_lemma_inequalities_follow_matrix_check():
    # whenever (2.2) passes, (2.3)-(2.5) must pass as well
    for spec, n in ZOO + [("power-mean:-1", 2)]:
        rep = verify_properties(construct(spec, n), samples=3000, seed=23)
        if rep["inverse_concavity_matrix"].passed:
            for name in ("quadratic_lower_bound", "pair_divided_difference",
                         "speed_square_bound"):
                assert rep[name].passed, f"{spec} {name}:\n{rep.table()}"


def test_report_table_format():
    rep = verify_properties(construct("power-mean:2", 2), samples=100, seed=1)
    table = rep.table()
    assert "inverse_concavity_matrix" in table
    assert "pass" in table


def test_verify_rejects_zero_samples():
    with pytest.raises(ConfigurationError):
        verify_properties(construct("power-mean:2", 2), samples=0, seed=0)


# ---------------------------------------------------------------------------
# boundary decay


def test_decay_elem_sym_closed_form():
    # f* of n E_n^(1/n) is (prod x)^(1/n)/n: on (t,1,...,1) equals t^(1/n)/n
    for n in (2, 3):
        f = construct(f"elem-sym:{n}", n)
        rep = boundary_decay_scan(f, path_count=6, seed=2)
        assert rep.decays
        fstar = f.dual()
        for t in (1e-2, 1e-4):
            ray = np.ones(n)
            ray[0] = t
            assert fstar.value(ray) == pytest.approx(t ** (1.0 / n) / n, rel=1e-10)


def test_decay_power_mean_1():
    # f*(t,1,...,1) = (1/t + n - 1)^-1 -> 0
    f = construct("power-mean:1", 3)
    rep = boundary_decay_scan(f, path_count=6, seed=2)
    assert rep.decays
    assert f.dual().value([1e-4, 1.0, 1.0]) == pytest.approx(1.0 / (1e4 + 2.0), rel=1e-10)


def test_no_decay_power_mean_minus_1():
    # f* ~ PM(1): limit (n-1)/n^2 > 0 on the boundary
    f = construct("power-mean:-1", 2)
    rep = boundary_decay_scan(f, path_count=6, seed=2)
    assert not rep.decays
    assert f.dual().value([1e-8, 1.0]) == pytest.approx(1.0 / 4.0, rel=1e-6)
