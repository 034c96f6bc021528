"""Fixed-point solution and uniqueness certification of the Cauchy problem.

The implicit problem "weighted derivative of y equals f(t, y, that same
derivative), with the complementary integral of y prescribed at t = a" is
equivalent to the integral form

    y(t) = y_a * (psi(t) - psi(a))**(gamma - 1) / Gamma(gamma) + I^alpha g(t)

where g is a fixed point of g = f(t, y, g).  The iteration unknown is g,
not y: the singular prefactor is handled analytically, so the blow-up of y
at t = a never enters any difference quotient.  When gamma < 1 both g and
y are carried in weighted form (stored value = (psi(t)-psi(a))**(1-gamma)
times the function), which is also the norm the contraction argument and
the stopping test live in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractError,
    DomainError,
    EstimationError,
    EvaluationError,
    NonConvergenceError,
)
from .fraccalc import FracIntegralOperator
from .psi_space import FracOrder, GridFunction, Mesh, PsiMap, build_mesh
from .rhs_expr import Expr, evaluate, free_variables
from .specfun import gamma_fn

__all__ = [
    "CauchyProblem",
    "Solution",
    "ContractionFactors",
    "UniquenessCertificate",
    "LipschitzEstimate",
    "contraction_factor",
    "certify_unique",
    "picard_solve",
    "estimate_lipschitz",
    "default_grading",
]


@dataclass(frozen=True)
class CauchyProblem:
    """One scalar Cauchy problem on [a, T].

    ``y_a`` is the prescribed value of the complementary integral of y at
    ``t = a`` (not y(a) itself, which may be infinite).  ``lipschitz`` is
    the optional pair (k, l): k bounds the sensitivity of the right-hand
    side in the y slot, l in the derivative slot; l < 1 because the
    implicit dependence is resolved through the same fixed point.
    """

    psi: PsiMap
    order: FracOrder
    a: float
    T: float
    y_a: float
    rhs: Expr
    lipschitz: tuple[float, float] | None = None

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.T) and self.T > self.a):
            raise DomainError(f"need finite T > a, got a={self.a!r}, T={self.T!r}")
        if self.psi.kind == "logarithm" and self.a < 1.0:
            # by convention the log reparametrisation starts no earlier than 1
            raise DomainError("logarithm reparametrisation requires a >= 1")
        if self.psi.kind == "power" and self.a < 0.0:
            raise DomainError("power reparametrisation requires a >= 0")
        self.psi.value(self.a)
        self.psi.value(self.T)
        if not math.isfinite(self.y_a):
            raise DomainError(f"initial datum must be finite, got {self.y_a!r}")
        extra = free_variables(self.rhs) - {"t", "y", "d"}
        if extra:
            raise ContractError(
                f"right-hand side uses unknown variables {sorted(extra)}"
            )
        if self.lipschitz is not None:
            k, l = self.lipschitz
            _check_lipschitz_pair(k, l)
            object.__setattr__(self, "lipschitz", (float(k), float(l)))


def _check_lipschitz_pair(k: float, l: float) -> None:
    if not (math.isfinite(k) and k >= 0.0):
        raise DomainError(f"Lipschitz constant k must be >= 0, got {k!r}")
    if not (math.isfinite(l) and 0.0 <= l < 1.0):
        raise DomainError(f"Lipschitz constant l must lie in [0, 1), got {l!r}")


@dataclass(frozen=True)
class Solution:
    """Converged Picard iterate plus convergence diagnostics.

    ``g`` is the auxiliary fixed-point function and ``y`` the reconstructed
    solution; both are stored weighted (exponent 1 - gamma) when gamma < 1,
    so the value of ``y`` at ``t = a`` reads ``y_a / Gamma(gamma)``.
    ``update_norms`` records the weighted norm of every Picard correction;
    the last entry is ``final_update_norm``.
    """

    g: GridFunction
    y: GridFunction
    iterations: int
    final_update_norm: float
    contraction_factor: float | None
    a_posteriori_bound: float | None
    update_norms: tuple[float, ...]


@dataclass(frozen=True)
class ContractionFactors:
    """Both sufficient-condition quantities; they agree on the < 1 verdict."""

    factor: float  # k * X**alpha / Gamma(alpha + 1) + l
    ratio: float  # k * X**alpha / (Gamma(alpha + 1) * (1 - l))


@dataclass(frozen=True)
class UniquenessCertificate:
    certified: bool
    ratio: float
    factor: float


def _require_lipschitz(
    p: CauchyProblem, lipschitz: tuple[float, float] | None
) -> tuple[float, float]:
    pair = lipschitz if lipschitz is not None else p.lipschitz
    if pair is None:
        raise ContractError(
            "no Lipschitz constants: declare them on the problem or pass them in"
        )
    k, l = float(pair[0]), float(pair[1])
    _check_lipschitz_pair(k, l)
    return k, l


def contraction_factor(
    p: CauchyProblem, lipschitz: tuple[float, float] | None = None
) -> ContractionFactors:
    """Contraction quantities of the fixed-point map at t = T.

    ``factor`` is the plain Lipschitz bound of one Picard step; ``ratio``
    folds the derivative-slot constant into the denominator and is the
    quantity the uniqueness verdict tests.  Both are increasing in t, so
    the supremum over [a, T] is attained at T.
    """
    k, l = _require_lipschitz(p, lipschitz)
    span = p.psi.value(p.T) - p.psi.value(p.a)
    base = k * span ** p.order.alpha / gamma_fn(p.order.alpha + 1.0)
    return ContractionFactors(factor=base + l, ratio=base / (1.0 - l))


def certify_unique(
    p: CauchyProblem, lipschitz: tuple[float, float] | None = None
) -> UniquenessCertificate:
    """Sufficient-condition verdict: certified iff the combined ratio < 1.

    ``not certified`` never asserts nonexistence; it only means this bound
    does not close.
    """
    fac = contraction_factor(p, lipschitz)
    return UniquenessCertificate(
        certified=bool(fac.ratio < 1.0), ratio=fac.ratio, factor=fac.factor
    )


def default_grading(order: FracOrder) -> float:
    """Mesh grading matched to the kernel: more clustering for smaller alpha."""
    return max(1.0, 2.0 / order.alpha)


def _check_mesh(p: CauchyProblem, mesh: Mesh) -> None:
    if mesh.psi != p.psi or mesh.a != p.a or mesh.T != p.T:
        raise ContractError("mesh does not cover this problem's interval")


def _seed_g(
    p: CauchyProblem,
    mesh: Mesh,
    dxw: np.ndarray,
    forcing: np.ndarray | None,
) -> np.ndarray:
    """Initial iterate: the right-hand side along the prefactor-only y."""
    gamma = p.order.gamma
    t = mesh.nodes
    pref = p.y_a / gamma_fn(gamma)
    if p.order.weight == 0.0:
        y_plain = np.full(mesh.n + 1, pref)
        vals = evaluate(p.rhs, t, y_plain, np.zeros(mesh.n + 1))
        if forcing is not None:
            vals = vals + forcing
        return _as_nodes(vals, mesh.n + 1)
    dx = mesh.psi_nodes - mesh.psi_nodes[0]
    y_plain = pref * np.power(dx[1:], gamma - 1.0)
    vals = evaluate(p.rhs, t[1:], y_plain, np.zeros(mesh.n))
    if forcing is not None:
        vals = vals + forcing[1:]
    return _lift_weighted(_as_nodes(vals, mesh.n), dxw, mesh)


def _as_nodes(vals, count: int) -> np.ndarray:
    """Rhs evaluations collapse to a scalar for constant expressions."""
    arr = np.asarray(vals, dtype=float)
    if arr.ndim == 0:
        return np.full(count, float(arr))
    return arr


def _lift_weighted(
    plain_tail: np.ndarray, dxw: np.ndarray, mesh: Mesh
) -> np.ndarray:
    """Weight plain values at nodes 1..n and extrapolate the stored limit at a."""
    out = np.empty(mesh.n + 1)
    out[1:] = dxw[1:] * plain_tail
    if mesh.n >= 2:
        x = mesh.psi_nodes
        slope = (out[2] - out[1]) / (x[2] - x[1])
        out[0] = out[1] + slope * (x[0] - x[1])
    else:
        out[0] = out[1]
    return out


def picard_solve(
    p: CauchyProblem,
    mesh: Mesh,
    tol: float = 1e-10,
    max_iter: int = 200,
    *,
    forcing: np.ndarray | None = None,
    operator: FracIntegralOperator | None = None,
    lipschitz: tuple[float, float] | None = None,
) -> Solution:
    """Iterate g -> f(t, y[g], g) to a fixed point on the given mesh.

    ``forcing`` adds plain nodal values to the right-hand side (the
    stability harness perturbs problems this way).  ``operator`` lets the
    caller reuse a prebuilt quadrature table for the mesh.  Stops when the
    weighted norm of the correction drops to ``tol``; raises after
    ``max_iter`` sweeps, carrying the last norm.
    """
    _check_mesh(p, mesh)
    if not (math.isfinite(tol) and tol > 0.0):
        raise DomainError(f"tolerance must be positive, got {tol!r}")
    if max_iter < 1:
        raise DomainError(f"max_iter must be >= 1, got {max_iter!r}")
    if forcing is not None:
        forcing = np.asarray(forcing, dtype=float)
        if forcing.shape != (mesh.n + 1,):
            raise ContractError(
                f"forcing shape {forcing.shape} does not match the mesh"
            )
        if not np.all(np.isfinite(forcing)):
            raise ContractError("forcing values must all be finite")
    op = operator if operator is not None else FracIntegralOperator(mesh, p.order.alpha)
    if op.mesh is not mesh and not op.mesh.same_as(mesh):
        raise ContractError("operator was built for a different mesh")
    if abs(op.alpha - p.order.alpha) > 1e-14:
        raise ContractError("operator order does not match the problem")

    gamma = p.order.gamma
    w = p.order.weight
    t = mesh.nodes
    dx = mesh.psi_nodes - mesh.psi_nodes[0]
    dxw = np.power(dx, w)  # 0**0 == 1 covers the gamma == 1 case
    dxg = np.power(dx[1:], gamma - 1.0) if w > 0.0 else None
    pref = p.y_a / gamma_fn(gamma)

    try:
        pair = _require_lipschitz(p, lipschitz)
    except ContractError:
        pair = None
    factor = None
    if pair is not None:
        factor = contraction_factor(p, pair).factor

    g_hat = _seed_g(p, mesh, dxw, forcing)
    norms: list[float] = []
    for iteration in range(1, max_iter + 1):
        y_hat = _reconstruct_y(op, mesh, g_hat, w, pref, dx)
        if w == 0.0:
            vals = evaluate(p.rhs, t, y_hat, g_hat)
            if forcing is not None:
                vals = vals + forcing
            g_next = _as_nodes(vals, mesh.n + 1)
        else:
            y_plain = y_hat[1:] * dxg
            g_plain = g_hat[1:] * dxg
            vals = evaluate(p.rhs, t[1:], y_plain, g_plain)
            if forcing is not None:
                vals = vals + forcing[1:]
            g_next = _lift_weighted(_as_nodes(vals, mesh.n), dxw, mesh)
        if not np.all(np.isfinite(g_next)):
            raise NonConvergenceError(iteration, math.inf)
        update = float(np.max(np.abs(g_next - g_hat)))
        norms.append(update)
        g_hat = g_next
        if update <= tol:
            y_hat = _reconstruct_y(op, mesh, g_hat, w, pref, dx)
            bound = None
            if factor is not None and factor < 1.0:
                bound = update * factor / (1.0 - factor)
            return Solution(
                g=GridFunction(mesh, g_hat, w),
                y=GridFunction(mesh, y_hat, w),
                iterations=iteration,
                final_update_norm=update,
                contraction_factor=factor,
                a_posteriori_bound=bound,
                update_norms=tuple(norms),
            )
    raise NonConvergenceError(max_iter, norms[-1])


def _reconstruct_y(
    op: FracIntegralOperator,
    mesh: Mesh,
    g_hat: np.ndarray,
    w: float,
    pref: float,
    dx: np.ndarray,
) -> np.ndarray:
    """Stored values of y = prefactor + I^alpha g, in the problem's weighting.

    The integral of weighted g comes back either plain (then scaled by
    dx**(1-gamma)) or weighted with the deeper exponent (then scaled by
    dx**alpha); either way the stored value at t = a is the prefactor
    limit y_a / Gamma(gamma).
    """
    integral = op.apply(GridFunction(mesh, g_hat, w))
    if integral.weight_exp == 0.0:
        scale = np.power(dx, w)
    else:
        scale = np.power(dx, op.alpha)
        scale[0] = 0.0
    out = pref + scale * integral.values
    if w > 0.0:
        out[0] = pref
    return out


@dataclass(frozen=True)
class LipschitzEstimate:
    k: float
    l: float


def estimate_lipschitz(
    p: CauchyProblem,
    samples: int = 9,
    *,
    box: tuple[tuple[float, float], tuple[float, float]] | None = None,
    trial_n: int = 64,
) -> LipschitzEstimate:
    """Sampled bounds on the right-hand side's slopes in the y and d slots.

    Central differences over a deterministic (t, y, d) grid; the box for
    (y, d) defaults to the padded range of a coarse trial solve.  These are
    estimates over the sampled box, not proofs: certification prefers
    declared constants and treats these as advisory.
    """
    if samples < 2:
        raise ContractError(f"need at least 2 samples per axis, got {samples!r}")
    if box is None:
        box = _default_box(p, trial_n)
    (y_lo, y_hi), (d_lo, d_hi) = box
    if not (y_hi >= y_lo and d_hi >= d_lo):
        raise ContractError(f"degenerate sampling box {box!r}")
    mesh = build_mesh(p.psi, p.a, p.T, max(samples, 8), default_grading(p.order))
    t_axis = mesh.nodes[1:] if p.order.weight > 0.0 else mesh.nodes
    idx = np.unique(np.linspace(0, t_axis.size - 1, samples).round().astype(int))
    t_axis = t_axis[idx]
    y_axis = np.linspace(y_lo, y_hi, samples)
    d_axis = np.linspace(d_lo, d_hi, samples)
    tg, yg, dg = (arr.ravel() for arr in np.meshgrid(t_axis, y_axis, d_axis))
    dy = 1e-6 * np.maximum(1.0, np.abs(yg))
    dd = 1e-6 * np.maximum(1.0, np.abs(dg))
    try:
        k_hat = np.max(
            np.abs(evaluate(p.rhs, tg, yg + dy, dg) - evaluate(p.rhs, tg, yg - dy, dg))
            / (2.0 * dy)
        )
        l_hat = np.max(
            np.abs(evaluate(p.rhs, tg, yg, dg + dd) - evaluate(p.rhs, tg, yg, dg - dd))
            / (2.0 * dd)
        )
    except (DomainError, EvaluationError, ValueError) as err:
        raise EstimationError(
            f"right-hand side not evaluable over the sampling box: {err}"
        ) from err
    return LipschitzEstimate(k=float(k_hat), l=float(l_hat))


def _default_box(
    p: CauchyProblem, trial_n: int
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Padded (y, d) ranges of a coarse trial solve; falls back to the seed."""
    mesh = build_mesh(p.psi, p.a, p.T, trial_n, default_grading(p.order))
    try:
        sol = picard_solve(p, mesh, tol=1e-8, max_iter=80)
        y_vals, g_vals = _plain_tail(sol.y), _plain_tail(sol.g)
    except (NonConvergenceError, DomainError, EvaluationError):
        dx = mesh.psi_nodes - mesh.psi_nodes[0]
        gamma = p.order.gamma
        y_vals = p.y_a / gamma_fn(gamma) * np.power(dx[1:], gamma - 1.0)
        g_vals = np.zeros_like(y_vals)
    return _pad_range(y_vals), _pad_range(g_vals)


def _plain_tail(u: GridFunction) -> np.ndarray:
    """Plain values at the nodes past t = a, whatever the stored form."""
    if u.weight_exp == 0.0:
        return u.values[1:]
    dx = u.mesh.psi_nodes[1:] - u.mesh.psi_nodes[0]
    return u.values[1:] * np.power(dx, -u.weight_exp)


def _pad_range(vals: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(vals)), float(np.max(vals))
    pad = 1.0 + 0.5 * (hi - lo)
    return lo - pad, hi + pad
