"""Fractional integral and derivative operators on graded meshes.

The integral of order ``alpha`` against a reparametrisation ``psi`` reduces,
in the transformed coordinate ``x = psi(t)``, to the classical convolution
with the power kernel ``(X - x)**(alpha-1)``.  The operator here uses
product integration: the integrand's smooth factor is interpolated
piecewise-linearly in ``x`` and the kernel moments of every cell are
integrated in closed form, which makes the rule exact for constants and
keeps all weights nonnegative.

Data with a stored weight ``w = 1 - g`` is integrated against the
singular basis on every cell: the underlying function is represented as
``(x - x0)**(g-1)`` times the piecewise-linear interpolant of the stored
values, and the cell moments are incomplete beta integrals, evaluated by
a continued fraction.  The blow-up therefore never meets a linear
interpolant, and the rule is exact for the kernel monomial itself.

The derivative of order ``(alpha, beta)`` is a diagnostic composition:
integral of order ``(1-beta)(1-alpha)``, first-order derivative in the
transformed coordinate by three-point finite differences, then integral of
order ``beta(1-alpha)``.  It is deliberately simple; the residual helpers
below quantify how well the inversion identities hold on a given mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ConvergenceError, DomainError
from .psi_space import FracOrder, GridFunction, Mesh, build_mesh
from .specfun import gamma_fn, log_gamma, mittag_leffler_many

__all__ = [
    "FracIntegralOperator",
    "frac_integral",
    "hilfer_derivative",
    "integrate_derivative_residual",
    "differentiate_integral_residual",
    "kernel_null_residual",
    "gronwall_bound",
    "inc_beta_lower",
    "run_operator_checks",
    "OperatorCheckRow",
    "OperatorCheckReport",
    "DESIGN_ORDERS",
    "KERNEL_NULL_TOL",
]


# ---------------------------------------------------------------------------
# incomplete beta (needed by the singular first cell)

def _betacf(a: float, b: float, x: float) -> float:
    # Lentz evaluation of the standard continued fraction.
    max_it = 300
    eps = 3e-16
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_it + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ConvergenceError(f"incomplete beta fraction stalled at ({a!r}, {b!r}, {x!r})")


def _reg_inc_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (
        log_gamma(a + b)
        - log_gamma(a)
        - log_gamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def _betacf_many(a: float, b: float, x: np.ndarray) -> np.ndarray:
    # vectorized Lentz over an array of abscissae, scalar parameters
    max_it = 300
    eps = 3e-16
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < fpmin, fpmin, d)
    d = 1.0 / d
    h = d.copy()
    done = np.zeros(x.shape, dtype=bool)
    for m in range(1, max_it + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < fpmin, fpmin, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < fpmin, fpmin, c)
        d = 1.0 / d
        h = np.where(done, h, h * d * c)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < fpmin, fpmin, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < fpmin, fpmin, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * delta)
        done |= np.abs(delta - 1.0) < eps
        if np.all(done):
            return h
    raise ConvergenceError(f"incomplete beta fraction stalled at ({a!r}, {b!r})")


def _reg_inc_beta_many(a: float, b: float, x: np.ndarray) -> np.ndarray:
    """Vectorised regularised incomplete beta, scalar parameters."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out[x <= 0.0] = 0.0
    out[x >= 1.0] = 1.0
    mid = (x > 0.0) & (x < 1.0)
    if not np.any(mid):
        return out
    xm = x[mid]
    ln_norm = log_gamma(a + b) - log_gamma(a) - log_gamma(b)
    bt = np.exp(ln_norm + a * np.log(xm) + b * np.log1p(-xm))
    res = np.empty_like(xm)
    direct = xm < (a + 1.0) / (a + b + 2.0)
    if np.any(direct):
        res[direct] = bt[direct] * _betacf_many(a, b, xm[direct]) / a
    other = ~direct
    if np.any(other):
        res[other] = 1.0 - bt[other] * _betacf_many(b, a, 1.0 - xm[other]) / b
    out[mid] = res
    return out


def inc_beta_lower(p: float, q: float, theta: float) -> float:
    """Lower incomplete beta integral of ``tau**(p-1) (1-tau)**(q-1)`` on ``[0, theta]``."""
    if p <= 0.0 or q <= 0.0:
        raise DomainError(f"inc_beta_lower requires p, q > 0, got ({p!r}, {q!r})")
    if not (0.0 <= theta <= 1.0):
        raise DomainError(f"inc_beta_lower requires theta in [0, 1], got {theta!r}")
    full = gamma_fn(p) * gamma_fn(q) / gamma_fn(p + q)
    if theta >= 1.0:
        return full
    return full * _reg_inc_beta(p, q, theta)


def _lower_beta_many(p: float, q: float, theta: np.ndarray) -> np.ndarray:
    full = math.exp(log_gamma(p) + log_gamma(q) - log_gamma(p + q))
    return full * _reg_inc_beta_many(p, q, theta)


# ---------------------------------------------------------------------------
# the integral operator

class FracIntegralOperator:
    """Lower-triangular quadrature table for one mesh and one order.

    ``weights[i, j]`` multiplies the sample at node ``j`` when evaluating
    the integral at node ``i``; row 0 is identically zero.  Row sums equal
    ``(psi(t_i) - psi(a))**alpha / gamma(alpha + 1)`` up to rounding, which
    is the exactness-on-constants property the tests pin down.
    """

    def __init__(self, mesh: Mesh, alpha: float):
        if not (0.0 < alpha and math.isfinite(alpha)):
            raise DomainError(f"integral order must be positive, got {alpha!r}")
        self.mesh = mesh
        self.alpha = float(alpha)
        self.weights = _build_weight_table(mesh, self.alpha)
        self._weighted_tables: dict[float, np.ndarray] = {}

    def row_sums(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def _weighted_table(self, gamma_u: float) -> np.ndarray:
        """Quadrature table acting on stored values of weighted data.

        Every cell is integrated against the basis
        ``(x - x0)**(g_u - 1) * {1, linear}``, so the rule is exact for the
        singular kernel times any piecewise-linear stored factor; the
        moments are incomplete beta integrals.
        """
        key = round(gamma_u, 15)
        hit = self._weighted_tables.get(key)
        if hit is not None:
            return hit
        X = self.mesh.psi_nodes
        n = self.mesh.n
        alpha = self.alpha
        dx = X - X[0]
        rows = np.arange(n + 1)[:, None]
        ks = np.arange(n + 1)[None, :]
        safe_X = np.where(dx > 0.0, dx, 1.0)[:, None]
        theta = np.clip(np.where(ks <= rows, dx[None, :] / safe_X, 1.0), 0.0, 1.0)
        B0 = _lower_beta_many(gamma_u, alpha, theta)
        B1 = _lower_beta_many(gamma_u + 1.0, alpha, theta)
        valid = (ks[:, :-1] < rows) & (rows > 0)
        dB0 = np.where(valid, B0[:, 1:] - B0[:, :-1], 0.0)
        dB1 = np.where(valid, B1[:, 1:] - B1[:, :-1], 0.0)
        h = (dx[1:] - dx[:-1])[None, :]
        xl = dx[:-1][None, :]
        xr = dx[1:][None, :]
        pref = np.power(safe_X, alpha + gamma_u - 1.0) / gamma_fn(alpha)
        c_left = np.maximum(pref * (xr * dB0 - safe_X * dB1) / h, 0.0)
        c_right = np.maximum(pref * (safe_X * dB1 - xl * dB0) / h, 0.0)
        V = np.zeros((n + 1, n + 1))
        V[:, :-1] += np.where(valid, c_left, 0.0)
        V[:, 1:] += np.where(valid, c_right, 0.0)
        self._weighted_tables[key] = V
        return V

    def apply(self, u: GridFunction) -> GridFunction:
        """Integrate ``u``.

        Plain input yields a plain result that vanishes at ``t = a``.  For
        weighted input the output representation follows the power rule:
        with ``g_out = g_u + alpha``, the result is plain when
        ``g_out >= 1`` (value at ``a``: zero for ``g_out > 1``, the
        continuous limit ``gamma_fn(g_u) * stored(a) / gamma_fn(g_out)``
        when ``g_out == 1``) and is stored with weight ``1 - g_out``
        otherwise, since the plain value then diverges at ``a``.
        """
        if not u.mesh.same_as(self.mesh):
            raise ContractError("grid function lives on a different mesh")
        if u.weight_exp == 0.0:
            out = self.weights @ u.values
            out[0] = 0.0
            return GridFunction(self.mesh, out, 0.0)
        # weighted data: underlying u = (x - x0)**(g-1) * stored, g = 1 - w
        gamma_u = 1.0 - u.weight_exp
        gamma_out = gamma_u + self.alpha
        dx = self.mesh.psi_nodes - self.mesh.psi_nodes[0]
        out = self._weighted_table(gamma_u) @ u.values
        limit0 = gamma_fn(gamma_u) * u.values[0] / gamma_fn(gamma_out)
        if gamma_out > 1.0 + 1e-12:
            out[0] = 0.0
            return GridFunction(self.mesh, out, 0.0)
        if gamma_out >= 1.0 - 1e-12:
            out[0] = limit0
            return GridFunction(self.mesh, out, 0.0)
        out[1:] *= np.power(dx[1:], 1.0 - gamma_out)
        out[0] = limit0
        return GridFunction(self.mesh, out, 1.0 - gamma_out)


def _pow_diff(B: np.ndarray, A: np.ndarray, p: float) -> np.ndarray:
    """Stable elementwise ``A**p - B**p`` for ``0 <= B <= A``.

    Graded meshes put cells many orders of magnitude thinner than their
    distance to the evaluation node; the naive difference then loses all
    its leading digits.  Writing the difference as
    ``B**p * expm1(p * log1p((A-B)/B))`` keeps it accurate to rounding.
    """
    h = A - B
    positive = B > 0.0
    safe_B = np.where(positive, B, 1.0)
    ratio = np.where(positive, h / safe_B, np.inf)
    close = ratio < 0.5
    safe_ratio = np.where(close, ratio, 0.0)
    via_log = np.power(np.where(close, B, 1.0), p) * np.expm1(p * np.log1p(safe_ratio))
    direct = np.power(A, p) - np.power(B, p)
    return np.where(close, via_log, direct)


def _build_weight_table(mesh: Mesh, alpha: float):
    X = mesh.psi_nodes
    n = mesh.n
    left = X[:-1]
    right = X[1:]
    h = right - left
    rows = np.arange(n + 1)[:, None]
    cols = np.arange(n)[None, :]
    valid = cols < rows
    A = np.where(valid, X[:, None] - left[None, :], 1.0)
    B = np.where(valid, np.maximum(X[:, None] - right[None, :], 0.0), 0.5)
    d0 = _pow_diff(B, A, alpha) / alpha
    d1 = _pow_diff(B, A, alpha + 1.0) / (alpha + 1.0)
    # one-sided first moments of the kernel over each cell; they sum to h * d0
    w_left = np.maximum((d1 - B * d0) / h[None, :], 0.0)
    w_right = np.maximum((A * d0 - d1) / h[None, :], 0.0)
    w_left = np.where(valid, w_left, 0.0)
    w_right = np.where(valid, w_right, 0.0)
    ga = gamma_fn(alpha)
    W = np.zeros((n + 1, n + 1))
    W[:, :-1] += w_left
    W[:, 1:] += w_right
    W /= ga
    return W


def frac_integral(u: GridFunction, alpha: float) -> GridFunction:
    """One-shot integral of order ``alpha``; builds the table and applies it."""
    return FracIntegralOperator(u.mesh, alpha).apply(u)


# ---------------------------------------------------------------------------
# derivative composition and its residuals

def _dx_transformed(mesh: Mesh, v: np.ndarray) -> np.ndarray:
    """First derivative with respect to psi(t): three-point stencils."""
    x = mesh.psi_nodes
    n = mesh.n
    if n < 2:
        raise ContractError("derivative stencils need at least 3 nodes")
    d = np.empty_like(v)
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    d[1:-1] = (
        -hp / (hm * (hm + hp)) * v[:-2]
        + (hp - hm) / (hm * hp) * v[1:-1]
        + hm / (hp * (hm + hp)) * v[2:]
    )
    h1 = x[1] - x[0]
    h2 = x[2] - x[1]
    d[0] = (
        -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * v[0]
        + (h1 + h2) / (h1 * h2) * v[1]
        - h1 / (h2 * (h1 + h2)) * v[2]
    )
    e1 = x[-1] - x[-2]
    e2 = x[-2] - x[-3]
    d[-1] = (
        (2.0 * e1 + e2) / (e1 * (e1 + e2)) * v[-1]
        - (e1 + e2) / (e1 * e2) * v[-2]
        + e1 / (e2 * (e1 + e2)) * v[-3]
    )
    return d


def hilfer_derivative(u: GridFunction, order: FracOrder) -> GridFunction:
    """Two-sided composition derivative of order ``(alpha, beta)``.

    Accepts plain samples, or data stored with weight ``1 - gamma`` (the
    inner integral then uses its corrected first cell).  The result is a
    plain grid function.  This operator is diagnostic: the solver never
    inverts through it, only the residual helpers do.
    """
    inner = (1.0 - order.beta) * (1.0 - order.alpha)
    outer = order.beta * (1.0 - order.alpha)
    mesh = u.mesh
    if u.weight_exp != 0.0:
        if abs((1.0 - u.weight_exp) - order.gamma) > 1e-12:
            raise ContractError(
                f"weighted input has weight {u.weight_exp!r}, but the order "
                f"implies 1 - gamma = {order.weight!r}"
            )
        if inner == 0.0:
            raise ContractError("weighted input needs a positive inner order")
    if inner > 0.0:
        w1 = FracIntegralOperator(mesh, inner).apply(u).values
    else:
        w1 = u.values
    d = _dx_transformed(mesh, w1)
    if outer > 0.0:
        out = FracIntegralOperator(mesh, outer).apply(GridFunction(mesh, d, 0.0))
        return out
    return GridFunction(mesh, d, 0.0)


#: Fraction of the transformed span excluded next to the left endpoint when
#: measuring derivative-composition residuals.  The composition differences
#: through a weakly singular layer whose node-relative errors are
#: self-similar under grading, so no metric that includes the layer itself
#: can converge; the residuals are pointwise statements on any region
#: bounded away from the endpoint.
_EDGE_TRIM = 0.05


def _interior_lo(mesh: Mesh, trim: float) -> int:
    dx = mesh.psi_nodes - mesh.psi_nodes[0]
    lo = int(np.searchsorted(dx, trim * dx[-1]))
    return max(lo, 1)


def _weighted_residual_max(
    mesh: Mesh, res: np.ndarray, order: FracOrder, trim: float = _EDGE_TRIM
) -> float:
    dx = mesh.psi_nodes - mesh.psi_nodes[0]
    w = order.weight
    sl = slice(_interior_lo(mesh, trim), None)
    if w == 0.0:
        return float(np.max(np.abs(res[sl])))
    return float(np.max(np.power(dx[sl], w) * np.abs(res[sl])))


def integrate_derivative_residual(u: GridFunction, order: FracOrder) -> float:
    """Residual of: integral(order) of derivative(order) of ``u`` against
    ``u`` minus its initial-value layer, in the weighted sup norm.

    The initial layer is ``(x - x0)**(gamma-1) / gamma_fn(gamma)`` times the
    limit at ``a`` of the inner integral of ``u``: zero for continuous
    plain data with ``gamma < 1``, ``u(a)`` when ``gamma = 1``, and
    ``gamma_fn(gamma) * stored(a)`` for weighted data.  The residual is
    measured over nodes at least 5 percent of the transformed span away
    from ``a``; next to the endpoint the discrete composition differences
    through the singular layer and has no pointwise limit.
    """
    mesh = u.mesh
    hd = hilfer_derivative(u, order)
    lhs = FracIntegralOperator(mesh, order.alpha).apply(hd).values
    g = order.gamma
    dx = mesh.psi_nodes - mesh.psi_nodes[0]
    if u.weight_exp != 0.0:
        # both sides carry the weight already
        res_w = np.zeros_like(lhs)
        res_w[1:] = (
            np.power(dx[1:], order.weight) * lhs[1:] - u.values[1:] + u.values[0]
        )
        sl = slice(_interior_lo(mesh, _EDGE_TRIM), None)
        return float(np.max(np.abs(res_w[sl])))
    if g == 1.0:
        res = lhs - (u.values - u.values[0])
    else:
        res = lhs - u.values
    res[0] = 0.0
    return _weighted_residual_max(mesh, res, order)


def differentiate_integral_residual(v: GridFunction, order: FracOrder) -> float:
    """Residual of: derivative(order) of integral(alpha) of ``v`` against ``v``.

    Measured in the weighted sup norm over nodes at least 5 percent of the
    transformed span away from ``a`` (see ``integrate_derivative_residual``).
    """
    if v.weight_exp != 0.0:
        raise ContractError("differentiate_integral_residual expects plain samples")
    mesh = v.mesh
    w = FracIntegralOperator(mesh, order.alpha).apply(v)
    hd = hilfer_derivative(w, order).values
    res = hd - v.values
    return _weighted_residual_max(mesh, res, order)


def kernel_null_residual(mesh: Mesh, order: FracOrder) -> float:
    """Weighted residual of the derivative on its own kernel function.

    The function ``(psi(t) - psi(a))**(gamma-1)`` is annihilated by the
    derivative; this helper feeds it through the discrete composition and
    reports the max weighted magnitude over the trimmed interior (at least
    5 percent of the transformed span away from ``a``).

    The weighted quadrature is exact for this data, so what remains is
    rounding noise amplified by differencing across the thin first cells
    and damped again by the outer integral; the suite bounds it by a
    floor well above that noise rather than demanding monotone decrease.
    """
    g = order.gamma
    if g == 1.0:
        u = GridFunction(mesh, np.ones(mesh.n + 1), 0.0)
    else:
        u = GridFunction(mesh, np.ones(mesh.n + 1), 1.0 - g)
    hd = hilfer_derivative(u, order).values
    return _weighted_residual_max(mesh, hd, order)


# ---------------------------------------------------------------------------
# integral-inequality bound

_GRONWALL_SERIES_TOL = 1e-14
_GRONWALL_MAX_TERMS = 400


def gronwall_bound(v: GridFunction, g: GridFunction, alpha: float) -> GridFunction:
    """Nodewise upper bound for ``u`` satisfying ``u <= v + g * I[alpha] u``.

    For nondecreasing ``v`` the bound is the closed form
    ``v(t) * E(g(t) * gamma_fn(alpha) * (psi(t)-psi(a))**alpha)`` with the
    Mittag-Leffler function of index ``alpha``.  Otherwise the bound is the
    kernel series ``v + sum_k (g * gamma_fn(alpha))**k * I[alpha*k] v``,
    truncated once the analytic row-sum bound of the next term drops below
    1e-14 of the current bound.

    Both ``v`` and ``g`` must be nonnegative and ``g`` nondecreasing.
    """
    if v.weight_exp != 0.0 or g.weight_exp != 0.0:
        raise ContractError("gronwall_bound expects plain samples")
    if not v.mesh.same_as(g.mesh):
        raise ContractError("v and g live on different meshes")
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    if np.any(v.values < 0.0) or np.any(g.values < 0.0):
        raise DomainError("gronwall_bound requires nonnegative v and g")
    gv = g.values
    tol_mono = 1e-14 * max(1.0, float(np.max(np.abs(gv))))
    if np.any(np.diff(gv) < -tol_mono):
        raise DomainError("gronwall_bound requires nondecreasing g")
    mesh = v.mesh
    dx = mesh.psi_nodes - mesh.psi_nodes[0]
    ga = gamma_fn(alpha)

    v_mono_tol = 1e-14 * max(1.0, float(np.max(np.abs(v.values))))
    if not np.any(np.diff(v.values) < -v_mono_tol):
        arg = gv * ga * np.power(dx, alpha)
        return GridFunction(mesh, v.values * mittag_leffler_many(alpha, arg), 0.0)

    L = dx[-1]
    g_max = float(np.max(gv))
    v_max = float(np.max(v.values))
    bound = v.values.copy()
    log_base = math.log(g_max * ga * L ** alpha) if g_max > 0.0 else -math.inf
    for k in range(1, _GRONWALL_MAX_TERMS + 1):
        # analytic row-sum bound of term k, computed in logs to dodge overflow
        if log_base == -math.inf:
            break
        log_term_bound = k * log_base - log_gamma(alpha * k + 1.0) + math.log(max(v_max, 1e-300))
        if log_term_bound < math.log(_GRONWALL_SERIES_TOL) + math.log(max(float(np.max(bound)), 1e-300)):
            return GridFunction(mesh, bound, 0.0)
        op = FracIntegralOperator(mesh, alpha * k)
        with np.errstate(over="ignore", invalid="ignore"):
            term = np.power(gv * ga, k) * op.apply(v).values
        if not np.all(np.isfinite(term)):
            raise ConvergenceError("gronwall series overflowed double precision")
        bound += term
    else:
        raise ConvergenceError("gronwall series did not truncate; g is too large")
    return GridFunction(mesh, bound, 0.0)


# ---------------------------------------------------------------------------
# operator verification suite

#: Declared convergence orders of the residual diagnostics under mesh
#: refinement.  The composition involves numerical differentiation next to
#: a weakly singular endpoint, so first order is what the construction
#: promises; the pure-quadrature identities converge faster in practice.
DESIGN_ORDERS = {
    "integrate_derivative": 1.0,
    "differentiate_integral": 1.0,
}

#: Ceiling for the kernel annihilation residual; see
#: ``kernel_null_residual`` for why this diagnostic is graded against a
#: rounding floor instead of a decreasing trend.  Measured values sit
#: below 1e-12 across families and mesh sizes up to n = 512.
KERNEL_NULL_TOL = 1e-9

_FAMILY_SETUPS = {
    "identity": ("identity", 1.0, 0.0, 1.0),
    "logarithm": ("logarithm", 1.0, 1.0, math.e),
    "power": ("power", 2.0, 0.0, 1.0),
}


@dataclass(frozen=True)
class OperatorCheckRow:
    family: str
    check: str
    n: int
    residual: float


@dataclass(frozen=True)
class OperatorCheckReport:
    rows: list[OperatorCheckRow]
    slopes: dict[tuple[str, str], float]
    passed: bool
    failures: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def _fit_slope(ns, residuals) -> float:
    ln = np.log(np.asarray(ns, dtype=float))
    lr = np.log(np.maximum(np.asarray(residuals, dtype=float), 1e-300))
    slope, _ = np.polyfit(ln, lr, 1)
    return float(-slope)


def run_operator_checks(
    families=("identity", "logarithm", "power"),
    n_list=(64, 128, 256, 512),
    order: FracOrder | None = None,
) -> OperatorCheckReport:
    """Run the operator oracle suite and grade it.

    Checks per reparametrisation family: exactness of the integral on
    constants, the closed-form power rule on the weighted monomial, both
    inversion identities on a smooth and on a polynomial profile, and the
    kernel annihilation residual.  Composition residual slopes must reach
    at least 0.8 of their declared design order; the kernel residual must
    stay below ``KERNEL_NULL_TOL`` without growing; single-``n`` runs
    report residuals without grading slopes.
    """
    if order is None:
        order = FracOrder(0.5, 0.5)
    rows: list[OperatorCheckRow] = []
    slopes: dict[tuple[str, str], float] = {}
    failures: list[str] = []
    notes: list[str] = []
    n_list = sorted(set(int(n) for n in n_list))
    if any(n < 4 for n in n_list):
        raise DomainError("operator checks need n >= 4")
    grading = max(1.0, 2.0 / order.alpha)
    g = order.gamma
    ga = order.alpha

    for fam in families:
        if fam not in _FAMILY_SETUPS:
            raise DomainError(f"unknown family {fam!r}")
        kind, rho, a, T = _FAMILY_SETUPS[fam]
        from .psi_space import PsiMap

        psi = PsiMap(kind, rho)
        per_check: dict[str, list[float]] = {}
        for n in n_list:
            mesh = build_mesh(psi, a, T, n, grading)
            dx = mesh.psi_nodes - mesh.psi_nodes[0]

            op = FracIntegralOperator(mesh, ga)
            exact_rows = np.power(dx, ga) / gamma_fn(ga + 1.0)
            rs = op.row_sums()
            const_err = float(np.max(np.abs(rs[1:] - exact_rows[1:]) / exact_rows[1:]))
            rows.append(OperatorCheckRow(fam, "constant_exactness", n, const_err))
            per_check.setdefault("constant_exactness", []).append(const_err)

            mono = GridFunction(mesh, np.ones(n + 1), 1.0 - g)
            got = op.apply(mono).values
            ref = gamma_fn(g) / gamma_fn(g + ga) * np.power(dx, g + ga - 1.0)
            # weighted-norm error, scaled by the weighted size of the result
            wres = np.power(dx[1:], 1.0 - g) * np.abs(got[1:] - ref[1:])
            scale = gamma_fn(g) / gamma_fn(g + ga) * dx[-1] ** ga
            pow_err = float(np.max(wres) / scale)
            rows.append(OperatorCheckRow(fam, "power_rule", n, pow_err))
            per_check.setdefault("power_rule", []).append(pow_err)

            u_cos = GridFunction(mesh, np.cos(mesh.nodes), 0.0)
            u_quad = GridFunction(mesh, dx * dx, 0.0)
            for tag, u in (("cos", u_cos), ("quadratic", u_quad)):
                r1 = integrate_derivative_residual(u, order)
                rows.append(OperatorCheckRow(fam, f"integrate_derivative_{tag}", n, r1))
                per_check.setdefault(f"integrate_derivative_{tag}", []).append(r1)
                r2 = differentiate_integral_residual(u, order)
                rows.append(OperatorCheckRow(fam, f"differentiate_integral_{tag}", n, r2))
                per_check.setdefault(f"differentiate_integral_{tag}", []).append(r2)

            rk = kernel_null_residual(mesh, order)
            rows.append(OperatorCheckRow(fam, "kernel_null", n, rk))
            per_check.setdefault("kernel_null", []).append(rk)

        for check, residuals in per_check.items():
            if check == "constant_exactness":
                worst = max(residuals)
                if worst > 1e-12:
                    failures.append(
                        f"{fam}/{check}: relative row-sum error {worst:.3e} > 1e-12"
                    )
                continue
            if check == "power_rule":
                # the weighted rule integrates this data analytically
                worst = max(residuals)
                if worst > 1e-12:
                    failures.append(
                        f"{fam}/{check}: scaled error {worst:.3e} > 1e-12"
                    )
                continue
            if check == "kernel_null":
                worst = max(residuals)
                if worst > KERNEL_NULL_TOL:
                    failures.append(
                        f"{fam}/{check}: residual {worst:.3e} above ceiling "
                        f"{KERNEL_NULL_TOL:g}"
                    )
                continue
            if len(residuals) < 2:
                notes.append(f"{fam}/{check}: single n, slope not graded")
                continue
            slope = _fit_slope(n_list, residuals)
            slopes[(fam, check)] = slope
            base = check.rsplit("_", 1)[0]
            need = 0.8 * DESIGN_ORDERS[base]
            if slope < need:
                failures.append(
                    f"{fam}/{check}: slope {slope:.3f} below required {need:.3f}"
                )
    return OperatorCheckReport(
        rows=rows, slopes=slopes, passed=not failures, failures=failures, notes=notes
    )
