"""Symmetric degree-one curvature functions on the positive cone.

The zoo consists of power means ``H_r = n^(1-1/r) (sum k_i^r)^(1/r)``,
normalized elementary symmetric roots ``n E_k^(1/k)`` with
``E_k = sigma_k / C(n,k)``, geometric interpolations ``A^sigma B^(1-sigma)``
and duals ``f_*(x) = f(1/x)^(-1)``.  All evaluation routines accept arrays of
shape ``(..., n)`` and broadcast over the leading axes; values, gradients and
Hessians are analytic.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

EPS_EIG = 1e-8  # relative threshold for the repeated-eigenvalue limit formula


# ---------------------------------------------------------------------------
# derivative bundle


@dataclass
class DerivativeBundle:
    """Value, gradient and Hessian of f at a single point of the cone."""

    value: float
    grad: np.ndarray
    hess: np.ndarray


def _check_positive(x):
    if np.any(x <= 0.0) or not np.all(np.isfinite(x)):
        raise DomainError("curvature point must have strictly positive finite components")


# ---------------------------------------------------------------------------
# function classes


class CurvatureFunction:
    """Base class: symmetric, homogeneous of degree one, increasing on the cone.

    Subclasses implement ``_value``, ``_value_grad`` and ``_value_grad_hess``
    on arrays of shape ``(..., n)`` without domain checks.
    """

    n: int
    spec_string: str
    declared_inverse_concave: bool
    declared_concave: bool
    declared_convex: bool
    norm_at_ones: float  # expected value at (1, ..., 1)

    # -- array API (domain-checked) --

    def value(self, x):
        x = np.asarray(x, dtype=float)
        _check_positive(x)
        return self._value(x)

    def value_grad(self, x):
        x = np.asarray(x, dtype=float)
        _check_positive(x)
        return self._value_grad(x)

    def value_grad_hess(self, x):
        x = np.asarray(x, dtype=float)
        _check_positive(x)
        return self._value_grad_hess(x)

    # -- single-point convenience --

    def evaluate(self, p) -> DerivativeBundle:
        p = np.asarray(p, dtype=float)
        if p.ndim != 1 or p.size != self.n:
            raise DomainError(f"expected a point of dimension {self.n}")
        v, g, h = self.value_grad_hess(p)
        return DerivativeBundle(float(v), g, h)

    def dual(self) -> "CurvatureFunction":
        return DualFn(self)

    def __repr__(self):
        return f"<CurvatureFunction {self.spec_string} n={self.n}>"


class PowerMean(CurvatureFunction):
    """H_r(x) = n^(1-1/r) (sum x_i^r)^(1/r), r != 0."""

    def __init__(self, r: float, n: int):
        if n < 2:
            raise ConfigurationError("dimension must be >= 2")
        if r == 0.0:
            raise ConfigurationError("power-mean exponent must be nonzero (use elem-sym:n for r=0)")
        self.r = float(r)
        self.n = int(n)
        self.spec_string = f"power-mean:{fmt_num(r)}"
        self.declared_inverse_concave = r >= -1.0
        self.declared_concave = r <= 1.0
        self.declared_convex = r >= 1.0
        self.norm_at_ones = float(n)
        self._pref = n ** (1.0 - 1.0 / self.r)

    def _value(self, x):
        return self._pref * np.sum(x ** self.r, axis=-1) ** (1.0 / self.r)

    def _value_grad(self, x):
        r = self.r
        s = np.sum(x ** r, axis=-1)
        v = self._pref * s ** (1.0 / r)
        g = self._pref * s[..., None] ** (1.0 / r - 1.0) * x ** (r - 1.0)
        return v, g

    def _value_grad_hess(self, x):
        r = self.r
        s = np.sum(x ** r, axis=-1)[..., None, None]
        v = self._pref * s[..., 0, 0] ** (1.0 / r)
        g = self._pref * s[..., 0] ** (1.0 / r - 1.0) * x ** (r - 1.0)
        xi = x[..., :, None]
        xk = x[..., None, :]
        eye = np.eye(self.n)
        h = self._pref * (r - 1.0) * s ** (1.0 / r - 2.0) * (
            s * xi ** (r - 2.0) * eye - (xi * xk) ** (r - 1.0)
        )
        return v, g, h


def _elementary_batch(x, kmax):
    """e_0..e_kmax of each row of x, shape (..., kmax+1)."""
    shape = x.shape[:-1]
    e = np.zeros(shape + (kmax + 1,))
    e[..., 0] = 1.0
    for i in range(x.shape[-1]):
        xi = x[..., i]
        for m in range(min(i + 1, kmax), 0, -1):
            e[..., m] = e[..., m] + xi * e[..., m - 1]
    return e


class ElemSym(CurvatureFunction):
    """n E_k^(1/k) with E_k the binomially normalized elementary symmetric polynomial."""

    def __init__(self, k: int, n: int):
        if n < 2:
            raise ConfigurationError("dimension must be >= 2")
        if not (1 <= k <= n):
            raise ConfigurationError(f"elem-sym order must satisfy 1 <= k <= n, got k={k}")
        self.k = int(k)
        self.n = int(n)
        self.spec_string = f"elem-sym:{k}"
        self.declared_inverse_concave = True
        self.declared_concave = True
        self.declared_convex = k == 1
        self.norm_at_ones = float(n)
        self._binom = math.comb(n, k)

    def _sigma(self, x):
        return _elementary_batch(x, self.k)[..., self.k]

    def _sigma_grad(self, x):
        # d sigma_k / d x_i = sigma_{k-1} of the other components
        n, k = self.n, self.k
        grad = np.empty_like(x)
        idx = np.arange(n)
        for i in range(n):
            rest = x[..., idx != i]
            grad[..., i] = _elementary_batch(rest, k - 1)[..., k - 1]
        return grad

    def _sigma_hess(self, x):
        # off-diagonal: sigma_{k-2} of the remaining n-2 components; diagonal zero
        n, k = self.n, self.k
        shape = x.shape[:-1]
        hess = np.zeros(shape + (n, n))
        if k >= 2:
            idx = np.arange(n)
            for i in range(n):
                for j in range(i + 1, n):
                    rest = x[..., (idx != i) & (idx != j)]
                    hij = _elementary_batch(rest, k - 2)[..., k - 2]
                    hess[..., i, j] = hij
                    hess[..., j, i] = hij
        return hess

    def _value(self, x):
        return self.n * (self._sigma(x) / self._binom) ** (1.0 / self.k)

    def _value_grad(self, x):
        k = self.k
        sig = self._sigma(x)
        v = self.n * (sig / self._binom) ** (1.0 / k)
        gsig = self._sigma_grad(x)
        g = (v / (k * sig))[..., None] * gsig
        return v, g

    def _value_grad_hess(self, x):
        k = self.k
        sig = self._sigma(x)
        v = self.n * (sig / self._binom) ** (1.0 / k)
        gsig = self._sigma_grad(x)
        hsig = self._sigma_hess(x)
        c = v / (k * sig)
        g = c[..., None] * gsig
        # f = C sigma^(1/k):  f_ij = C[(1/k)(1/k-1) sigma^(1/k-2) s_i s_j + (1/k) sigma^(1/k-1) s_ij]
        gi = gsig[..., :, None]
        gj = gsig[..., None, :]
        h = (c / sig)[..., None, None] * ((1.0 / k - 1.0) * gi * gj) + c[..., None, None] * hsig
        return v, g, h


class Interpolated(CurvatureFunction):
    """Geometric interpolation A^sigma B^(1-sigma) of two zoo members."""

    def __init__(self, left: CurvatureFunction, right: CurvatureFunction, sigma: float):
        if left.n != right.n:
            raise ConfigurationError("interpolated factors must share the dimension")
        if not (0.0 < sigma < 1.0):
            raise ConfigurationError("interpolation weight must lie in (0,1)")
        self.left = left
        self.right = right
        self.sigma = float(sigma)
        self.n = left.n
        self.spec_string = f"interp:{left.spec_string},{right.spec_string},{fmt_num(sigma)}"
        self.declared_inverse_concave = (
            left.declared_inverse_concave and right.declared_inverse_concave
        )
        self.declared_concave = left.declared_concave and right.declared_concave
        self.declared_convex = False
        self.norm_at_ones = left.norm_at_ones ** sigma * right.norm_at_ones ** (1.0 - sigma)

    def _value(self, x):
        return self.left._value(x) ** self.sigma * self.right._value(x) ** (1.0 - self.sigma)

    def _value_grad(self, x):
        s = self.sigma
        va, ga = self.left._value_grad(x)
        vb, gb = self.right._value_grad(x)
        v = va ** s * vb ** (1.0 - s)
        logg = s * ga / va[..., None] + (1.0 - s) * gb / vb[..., None]
        return v, v[..., None] * logg

    def _value_grad_hess(self, x):
        s = self.sigma
        va, ga, ha = self.left._value_grad_hess(x)
        vb, gb, hb = self.right._value_grad_hess(x)
        v = va ** s * vb ** (1.0 - s)
        la = ga / va[..., None]
        lb = gb / vb[..., None]
        logg = s * la + (1.0 - s) * lb
        g = v[..., None] * logg
        # hessian of log: s(ha/va - la la^T) + (1-s)(hb/vb - lb lb^T)
        logh = s * (ha / va[..., None, None] - la[..., :, None] * la[..., None, :]) + (
            1.0 - s
        ) * (hb / vb[..., None, None] - lb[..., :, None] * lb[..., None, :])
        h = v[..., None, None] * (logh + logg[..., :, None] * logg[..., None, :])
        return v, g, h


class DualFn(CurvatureFunction):
    """f_*(x) = f(x^-1)^-1; derivatives by the reciprocal chain rule."""

    def __init__(self, inner: CurvatureFunction):
        self.inner = inner
        self.n = inner.n
        self.spec_string = f"dual:{inner.spec_string}"
        # f inverse concave  <=>  f_* concave, and (f_*)_* = f
        self.declared_inverse_concave = inner.declared_concave
        self.declared_concave = inner.declared_inverse_concave
        self.declared_convex = False
        self.norm_at_ones = 1.0 / inner.norm_at_ones

    def _value(self, x):
        return 1.0 / self.inner._value(1.0 / x)

    def _value_grad(self, x):
        u = 1.0 / x
        vi, gi = self.inner._value_grad(u)
        v = 1.0 / vi
        g = (v ** 2)[..., None] * gi * u ** 2
        return v, g

    def _value_grad_hess(self, x):
        u = 1.0 / x
        vi, gi, hi = self.inner._value_grad_hess(u)
        v = 1.0 / vi
        v2 = (v ** 2)[..., None]
        g = v2 * gi * u ** 2
        gu2 = gi * u ** 2  # inner gradient pulled back, shape (..., n)
        a = gu2[..., :, None] * gu2[..., None, :]
        h = (
            2.0 * (v ** 3)[..., None, None] * a
            - (v ** 2)[..., None, None] * hi * u[..., :, None] ** 2 * u[..., None, :] ** 2
            - 2.0 * (v ** 2)[..., None, None] * (gi * u ** 3)[..., :, None] * np.eye(self.n)
        )
        return v, g, h


# ---------------------------------------------------------------------------
# spec parsing / construction


def fmt_num(x) -> str:
    """Compact float formatting for spec strings (1.0 -> '1')."""
    f = float(x)
    return str(int(f)) if f == int(f) else repr(f)


def parse_spec(text: str):
    """Parse a function spec string into a nested tuple tree."""
    tokens = [t.strip() for t in text.strip().split(",")]
    tree, rest = _parse_tokens(tokens)
    if rest:
        raise ConfigurationError(f"trailing tokens in function spec: {rest!r}")
    return tree


def _parse_tokens(tokens):
    if not tokens or not tokens[0]:
        raise ConfigurationError("empty function spec")
    head = tokens[0]
    if head.startswith("dual:"):
        inner, rest = _parse_tokens([head[len("dual:"):]] + tokens[1:])
        return ("dual", inner), rest
    if head.startswith("interp:"):
        left, rest = _parse_tokens([head[len("interp:"):]] + tokens[1:])
        right, rest = _parse_tokens(rest)
        if not rest:
            raise ConfigurationError("interp spec missing its weight")
        try:
            sigma = float(rest[0])
        except ValueError as exc:
            raise ConfigurationError(f"bad interpolation weight {rest[0]!r}") from exc
        return ("interp", left, right, sigma), rest[1:]
    if head.startswith("power-mean:"):
        try:
            r = float(head[len("power-mean:"):])
        except ValueError as exc:
            raise ConfigurationError(f"bad power-mean exponent in {head!r}") from exc
        return ("power-mean", r), tokens[1:]
    if head.startswith("elem-sym:"):
        try:
            k = int(head[len("elem-sym:"):])
        except ValueError as exc:
            raise ConfigurationError(f"bad elem-sym order in {head!r}") from exc
        return ("elem-sym", k), tokens[1:]
    raise ConfigurationError(f"unrecognized function spec {head!r}")


def construct(spec, n: int) -> CurvatureFunction:
    """Build a curvature function from a spec string or parsed tree."""
    if isinstance(spec, str):
        spec = parse_spec(spec)
    kind = spec[0]
    if kind == "power-mean":
        return PowerMean(spec[1], n)
    if kind == "elem-sym":
        return ElemSym(spec[1], n)
    if kind == "interp":
        return Interpolated(construct(spec[1], n), construct(spec[2], n), spec[3])
    if kind == "dual":
        return DualFn(construct(spec[1], n))
    raise ConfigurationError(f"unknown function kind {kind!r}")


def dual(f: CurvatureFunction) -> CurvatureFunction:
    return f.dual()


# ---------------------------------------------------------------------------
# second derivative of the matrix function F(A) = f(eigenvalues)


def divided_difference(f: CurvatureFunction, x, grad=None, hess=None, eps=EPS_EIG):
    """Matrix of (g_i - g_k)/(x_i - x_k) with the repeated-eigenvalue limit.

    For |x_i - x_k| < eps (x_i + x_k) the quotient is replaced by its limit
    (hess_ii + hess_kk)/2 - hess_ik.  Input x has shape (..., n); output is
    (..., n, n); the diagonal carries the limit formula.
    """
    if grad is None or hess is None:
        _, grad, hess = f.value_grad_hess(x)
    xi = x[..., :, None]
    xk = x[..., None, :]
    gi = grad[..., :, None]
    gk = grad[..., None, :]
    diff = xi - xk
    near = np.abs(diff) < eps * (xi + xk)
    safe = np.where(near, 1.0, diff)
    dd = (gi - gk) / safe
    diag_h = np.diagonal(hess, axis1=-2, axis2=-1)
    limit = 0.5 * (diag_h[..., :, None] + diag_h[..., None, :]) - hess
    return np.where(near, limit, dd)


def ddF_quadratic_form(f: CurvatureFunction, p, B, eps=EPS_EIG) -> float:
    """Second derivative of F(A)=f(eig A) at diag(p) applied twice to B.

    Equals sum_ik hess_ik B_ii B_kk plus twice the divided-difference term over
    the off-diagonal entries of the symmetric matrix B.
    """
    p = np.asarray(p, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.shape != (f.n, f.n) or not np.allclose(B, B.T, atol=0.0):
        raise ConfigurationError("B must be a symmetric n x n matrix")
    _, grad, hess = f.value_grad_hess(p)
    d = np.diag(B)
    total = float(d @ hess @ d)
    dd = divided_difference(f, p, grad, hess, eps)
    off = B ** 2 * dd
    total += float(np.sum(off) - np.sum(np.diag(off)))
    return total


# ---------------------------------------------------------------------------
# property verification


@dataclass
class CheckResult:
    name: str
    margin: float     # signed; negative means violated
    threshold: float  # pass iff margin >= threshold
    passed: bool


@dataclass
class PropertyReport:
    spec: str
    n: int
    samples: int
    seed: int
    checks: list = field(default_factory=list)

    def add(self, name, margin, threshold):
        self.checks.append(CheckResult(name, float(margin), threshold, margin >= threshold))

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self) -> str:
        lines = [f"property report: {self.spec}  n={self.n}  samples={self.samples}  seed={self.seed}"]
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            lines.append(f"  {c.name:<28s} margin {c.margin: .3e}  [{status}]")
        return "\n".join(lines)


MARGIN_TOL = -1e-10  # negative margins above this are attributed to roundoff


def _normalized_symmetric_min_eig(M, scale=None):
    """min over batch of lambda_min(M)/scale.

    The scale defaults to ||M||_F but callers whose M is a difference of
    large terms must pass the summand magnitudes instead: a matrix that
    cancels to zero exactly (inequality tight) would otherwise divide its
    own roundoff by itself.
    """
    lam = np.linalg.eigvalsh(M)
    if scale is None:
        scale = np.sqrt(np.sum(M ** 2, axis=(-2, -1)))
    scale = np.where(scale > 0.0, scale, 1.0)
    return float(np.min(lam[..., 0] / scale))


def _sample_cone(rng, samples, n, lo=1e-3, hi=1e3):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=(samples, n)))


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("ICF_THREADS", "1")))
    except ValueError:
        return 1


def verify_properties(f: CurvatureFunction, samples: int, seed: int) -> PropertyReport:
    """Sample-based verification of the structural inequalities.

    Over log-uniform samples of the cone: inverse-concavity matrix
    (hess + 2 diag(g/x)) PSD, the quadratic lower bound with the rank-one
    2 f^-1 g g^T subtraction, the pairwise divided-difference inequality, the
    speed-square bound sum g_k x_k^2 >= f^2/n, plus homogeneity / symmetry /
    monotonicity / normalization / Euler residuals.  Convex-declared functions
    additionally get f >= sum x and the dual harmonic-mean upper bound.
    """
    if samples < 1:
        raise ConfigurationError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    x = _sample_cone(rng, samples, f.n)
    scale_k = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=samples))
    perms = np.argsort(rng.random((samples, f.n)), axis=1)

    report = PropertyReport(f.spec_string, f.n, samples, seed)
    workers = _worker_count()
    if workers > 1 and samples >= 2 * workers:
        chunks = np.array_split(x, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(f.value_grad_hess, chunks))
        v = np.concatenate([p[0] for p in parts])
        g = np.concatenate([p[1] for p in parts])
        h = np.concatenate([p[2] for p in parts])
    else:
        v, g, h = f.value_grad_hess(x)

    eye = np.eye(f.n)

    def fro(A):
        return np.sqrt(np.sum(A ** 2, axis=(-2, -1)))

    # inverse-concavity matrix: hess + 2 diag(g_i / x_i)
    D = 2.0 * (g / x)[..., :, None] * eye
    M = h + D
    scale = fro(h) + fro(D)
    report.add("inverse_concavity_matrix", _normalized_symmetric_min_eig(M, scale), MARGIN_TOL)

    # quadratic lower bound: hess + 2 diag(g/x) - (2/f) g g^T  >= 0
    R1 = (2.0 / v)[..., None, None] * g[..., :, None] * g[..., None, :]
    report.add("quadratic_lower_bound",
               _normalized_symmetric_min_eig(M - R1, scale + fro(R1)), MARGIN_TOL)

    # pairwise: DD_kl + g_k/x_l + g_l/x_k >= 0 for k != l
    dd = divided_difference(f, x, g, h)
    pair_margin = np.inf
    for k in range(f.n):
        for l in range(k + 1, f.n):
            lhs = dd[..., k, l] + g[..., k] / x[..., l] + g[..., l] / x[..., k]
            scale = np.abs(dd[..., k, l]) + g[..., k] / x[..., l] + g[..., l] / x[..., k]
            scale = np.where(scale > 0.0, scale, 1.0)
            pair_margin = min(pair_margin, float(np.min(lhs / scale)))
    report.add("pair_divided_difference", pair_margin, MARGIN_TOL)

    # speed-square bound: sum g_k x_k^2 >= f^2 / n
    rhs = v ** 2 / f.n
    report.add(
        "speed_square_bound",
        float(np.min((np.sum(g * x ** 2, axis=-1) - rhs) / rhs)),
        MARGIN_TOL,
    )

    # structural residuals (negated so that pass is margin >= -tol)
    hom = np.abs(f.value(scale_k[:, None] * x) - scale_k * v) / (scale_k * np.abs(v))
    report.add("homogeneity", -float(np.max(hom)), -1e-12)
    xp = np.take_along_axis(x, perms, axis=1)
    sym = np.abs(f.value(xp) - v) / np.abs(v)
    report.add("symmetry", -float(np.max(sym)), -1e-12)
    report.add("monotonicity", float(np.min(g * x / v[..., None])), 0.0)
    ones = np.ones(f.n)
    norm_res = abs(f.value(ones) - f.norm_at_ones) / f.norm_at_ones
    report.add("normalization", -float(norm_res), -1e-12)
    euler = np.abs(np.sum(g * x, axis=-1) - v) / np.abs(v)
    report.add("euler_identity", -float(np.max(euler)), -1e-10)

    if f.declared_convex:
        report.add("convex_sum_lower_bound", float(np.min((v - np.sum(x, axis=-1)) / v)), MARGIN_TOL)
        fstar = f.dual().value(x)
        harm = 1.0 / np.sum(1.0 / x, axis=-1)  # = E_n/(n E_{n-1})
        report.add("dual_harmonic_upper_bound", float(np.min((harm - fstar) / harm)), MARGIN_TOL)

    return report


# ---------------------------------------------------------------------------
# boundary decay of the dual


@dataclass
class DecayReport:
    spec: str
    t_values: tuple
    sup_values: tuple     # sup of f_* over the sampled rays at each t
    exponent: float       # estimated power of the last decade
    decays: bool

    def table(self) -> str:
        rows = "  ".join(f"f*({t:.0e})={v:.6e}" for t, v in zip(self.t_values, self.sup_values))
        verdict = "decays" if self.decays else "does not decay"
        return f"boundary decay: {self.spec}  {rows}  [{verdict}]"


def boundary_decay_scan(f: CurvatureFunction, path_count: int, seed: int = 0) -> DecayReport:
    """Probe f_* along rays (t, c_2, ..., c_n) with t -> 0.

    The verdict uses the ratio of the two smallest-t suprema: a genuine
    boundary decay t^p (p >= 1/n for the zoo) drives the ratio to t_ratio^p,
    while a positive boundary limit drives it to 1.  Threshold 0.9 separates
    the two for any p > 0.024.
    """
    if path_count < 1:
        raise ConfigurationError("path_count must be >= 1")
    rng = np.random.default_rng(seed)
    fstar = f.dual()
    cs = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=(path_count, f.n - 1)))
    cs[0] = 1.0  # keep the canonical all-ones ray in the sample
    t_values = (1e-2, 1e-4, 1e-6)
    sups = []
    for t in t_values:
        pts = np.concatenate([np.full((path_count, 1), t), cs], axis=1)
        sups.append(float(np.max(fstar.value(pts))))
    ratio = sups[2] / sups[1]
    exponent = math.log(sups[1] / sups[2]) / math.log(1e2) if sups[2] > 0 else math.inf
    decays = ratio < 0.9 and sups[2] < sups[0]
    return DecayReport(f.spec_string, t_values, tuple(sups), exponent, decays)
