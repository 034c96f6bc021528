"""Stability constants and an empirical perturbation harness.

Two certified regimes.  Plain: every solution of the inclusion "residual
bounded by epsilon" stays within ``c_f * epsilon`` of the true solution,
with ``c_f`` in closed form through the one-parameter Mittag-Leffler
kernel.  Comparison-weighted: the tolerance and the distance are both
scaled by a nondecreasing positive function phi, and the constant trades
the Mittag-Leffler factor for the comparison coefficient ``lambda_phi``
bounding ``I^alpha phi <= lambda_phi * phi``.

The harness closes the loop empirically: it manufactures admissible
perturbations, solves the forced problem, and checks the certified bound
nodewise.  Violations are retried at doubled resolution first, so "mesh
too coarse" and "bound broken" stay distinguishable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CertificationError,
    ContractError,
    DomainError,
    EvaluationError,
    NonConvergenceError,
)
from .fraccalc import FracIntegralOperator
from .psi_space import GridFunction, Mesh, build_mesh
from .rhs_expr import Expr, evaluate, free_variables, to_source
from .solver import CauchyProblem, Solution, contraction_factor, picard_solve
from .specfun import gamma_fn, mittag_leffler

__all__ = [
    "AssumptionFlags",
    "StabilityCertificate",
    "PerturbationSpec",
    "TrialResult",
    "PerturbationReport",
    "uh_constant",
    "uhr_constant",
    "estimate_lambda_phi",
    "perturb_and_check",
    "report_to_csv",
    "PERTURBATION_SHAPES",
]

PERTURBATION_SHAPES = ("constant", "phi_scaled", "random_bounded", "zero")


@dataclass(frozen=True)
class AssumptionFlags:
    """What the certificate rests on.

    ``continuity`` is asserted, not proved: right-hand sides arrive as
    closed-form expressions and are only spot-checked by evaluation.
    ``comparison`` is None for the plain (unweighted) certificate.
    """

    continuity: bool
    constants: bool
    contraction: bool
    comparison: bool | None = None


@dataclass(frozen=True)
class StabilityCertificate:
    kind: str  # "ulam_hyers" | "ulam_hyers_rassias"
    c_f: float
    assumptions: AssumptionFlags
    lambda_phi: float | None = None
    phi: Expr | None = None

    def bound_at(self, epsilon: float) -> float:
        """The certified ceiling as a function of the tolerance; 0 at 0."""
        return self.c_f * epsilon

    @classmethod
    def ulam_hyers(
        cls, p: CauchyProblem, lipschitz: tuple[float, float] | None = None
    ) -> "StabilityCertificate":
        c = uh_constant(p, lipschitz)
        return cls(
            kind="ulam_hyers",
            c_f=c,
            assumptions=AssumptionFlags(True, True, True, None),
        )

    @classmethod
    def ulam_hyers_rassias(
        cls,
        p: CauchyProblem,
        phi: Expr,
        lambda_phi: float,
        lipschitz: tuple[float, float] | None = None,
    ) -> "StabilityCertificate":
        c = uhr_constant(p, phi, lambda_phi, lipschitz)
        return cls(
            kind="ulam_hyers_rassias",
            c_f=c,
            assumptions=AssumptionFlags(True, True, True, True),
            lambda_phi=float(lambda_phi),
            phi=phi,
        )


def _certified_ratio(
    p: CauchyProblem, lipschitz: tuple[float, float] | None
) -> float:
    fac = contraction_factor(p, lipschitz)
    if not fac.ratio < 1.0:
        raise CertificationError(
            "combined contraction ratio is not below 1", fac.ratio
        )
    return fac.ratio


def uh_constant(
    p: CauchyProblem, lipschitz: tuple[float, float] | None = None
) -> float:
    """Closed-form plain stability constant, evaluated at t = T.

    c_f = (span**alpha / Gamma(alpha+1)) * E_alpha(k/(1-l) * span**alpha)
    with span = psi(T) - psi(a).  Requires the contraction ratio < 1.
    """
    _certified_ratio(p, lipschitz)
    pair = lipschitz if lipschitz is not None else p.lipschitz
    k, l = float(pair[0]), float(pair[1])
    alpha = p.order.alpha
    span = p.psi.value(p.T) - p.psi.value(p.a)
    lead = span**alpha / gamma_fn(alpha + 1.0)
    return lead * mittag_leffler(alpha, k / (1.0 - l) * span**alpha)


def uhr_constant(
    p: CauchyProblem,
    phi: Expr,
    lambda_phi: float,
    lipschitz: tuple[float, float] | None = None,
) -> float:
    """Comparison-weighted constant: lambda_phi over one minus the ratio."""
    if not (math.isfinite(lambda_phi) and lambda_phi > 0.0):
        raise DomainError(
            f"comparison coefficient must be positive, got {lambda_phi!r}"
        )
    extra = free_variables(phi) - {"t"}
    if extra:
        raise ContractError(
            f"comparison function may only depend on t, found {sorted(extra)}"
        )
    ratio = _certified_ratio(p, lipschitz)
    return lambda_phi / (1.0 - ratio)


def _phi_values(phi: Expr, mesh: Mesh) -> np.ndarray:
    """Nodal samples of the comparison function, validated for the role.

    Positive past t = a (zero is allowed at a itself), nondecreasing up to
    a rounding-level slack.
    """
    extra = free_variables(phi) - {"t"}
    if extra:
        raise ContractError(
            f"comparison function may only depend on t, found {sorted(extra)}"
        )
    vals = np.asarray(evaluate(phi, mesh.nodes), dtype=float)
    if vals.ndim == 0:
        vals = np.full(mesh.n + 1, float(vals))
    if np.any(vals[1:] <= 0.0) or vals[0] < 0.0:
        raise DomainError(
            f"comparison function {to_source(phi)!r} must be positive past t = a"
        )
    slack = 1e-12 * float(np.max(vals))
    if np.any(np.diff(vals) < -slack):
        raise DomainError(
            f"comparison function {to_source(phi)!r} must be nondecreasing"
        )
    return vals


def estimate_lambda_phi(
    p: CauchyProblem,
    phi: Expr,
    mesh: Mesh,
    *,
    operator: FracIntegralOperator | None = None,
) -> float:
    """Smallest nodewise coefficient with I^alpha phi <= coeff * phi.

    The max of the integral-to-function ratio over nodes past a; sound on
    the mesh by construction.  A user-declared coefficient passes its
    comparison test exactly when it is >= this estimate.
    """
    vals = _phi_values(phi, mesh)
    op = operator if operator is not None else FracIntegralOperator(mesh, p.order.alpha)
    integral = op.apply(GridFunction(mesh, vals, 0.0))
    return float(np.max(integral.values[1:] / vals[1:]))


# ---------------------------------------------------------------------------
# perturbation harness

@dataclass(frozen=True)
class PerturbationSpec:
    """How to manufacture admissible perturbations.

    Every generated forcing stays within epsilon (plain) or epsilon times
    the comparison function (weighted) at all nodes.  ``random_bounded``
    draws nodewise uniform values and applies one smoothing pass; the
    seed makes each trial reproducible.
    """

    epsilon: float
    shape: str = "random_bounded"
    trials: int = 20
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise DomainError(f"epsilon must be positive, got {self.epsilon!r}")
        if self.shape not in PERTURBATION_SHAPES:
            raise DomainError(
                f"unknown shape {self.shape!r}; expected one of {PERTURBATION_SHAPES}"
            )
        if self.trials < 1:
            raise DomainError(f"need at least one trial, got {self.trials!r}")


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    shape: str
    epsilon: float
    deviation: float  # max nodewise |z - y|
    bound: float  # certified ceiling at the binding node
    ratio: float  # max nodewise deviation-to-ceiling ratio
    verdict: str  # "pass" | "fail" | "error"
    refined: bool = False


@dataclass(frozen=True)
class PerturbationReport:
    kind: str
    epsilon: float
    c_f: float
    allowance: float
    mesh_n: int
    rows: tuple[TrialResult, ...]
    max_ratio: float
    max_deviation: float
    passed: bool


def _trial_seed(master: int, trial: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=(trial,)).generate_state(1)[0])


def _smooth_noise(rng: np.random.Generator, count: int) -> np.ndarray:
    """Uniform nodewise draw in [-1, 1] with one averaging pass."""
    raw = rng.uniform(-1.0, 1.0, count)
    out = raw.copy()
    if count >= 3:
        out[1:-1] = (raw[:-2] + raw[1:-1] + raw[2:]) / 3.0
    if count >= 2:
        out[0] = (raw[0] + raw[1]) / 2.0
        out[-1] = (raw[-2] + raw[-1]) / 2.0
    return out


def _draw_perturbation(
    spec: PerturbationSpec,
    trial: int,
    mesh: Mesh,
    envelope: np.ndarray,
    weighted: bool,
) -> np.ndarray:
    """Forcing values at the nodes, inside the admissible envelope."""
    if spec.shape == "zero":
        return np.zeros(mesh.n + 1)
    if spec.shape == "constant":
        if weighted:
            raise ContractError(
                "constant shape breaks the weighted envelope near t = a; "
                "use phi_scaled or random_bounded"
            )
        return np.full(mesh.n + 1, spec.epsilon)
    if spec.shape == "phi_scaled":
        if not weighted:
            raise ContractError("phi_scaled shape needs a comparison function")
        return envelope.copy()
    rng = np.random.default_rng(
        np.random.SeedSequence(spec.seed, spawn_key=(trial,))
    )
    return envelope * _smooth_noise(rng, mesh.n + 1)


def _plain_deviation(z: Solution, y: Solution, mesh: Mesh, w: float) -> np.ndarray:
    """|z - y| at the nodes past a, whatever the stored weighting."""
    diff = np.abs(z.y.values[1:] - y.y.values[1:])
    if w == 0.0:
        return diff
    dx = mesh.psi_nodes[1:] - mesh.psi_nodes[0]
    return diff * np.power(dx, -w)


def perturb_and_check(
    p: CauchyProblem,
    cert: StabilityCertificate,
    spec: PerturbationSpec,
    mesh: Mesh,
    *,
    tol: float = 1e-10,
    max_iter: int = 200,
    allowance: float = 0.05,
    operator: FracIntegralOperator | None = None,
    refine: bool = True,
) -> PerturbationReport:
    """Run seeded perturbation trials against the certified bound.

    Each trial solves the additively forced problem with the unperturbed
    initial datum and records the max nodewise ratio of |z - y| to the
    certified ceiling.  A trial passes when that ratio stays within
    1 + allowance; a violating trial is re-run once at doubled resolution
    before being declared a failure.  Trials whose solve breaks down are
    marked "error" and fail the report.
    """
    weighted = cert.kind == "ulam_hyers_rassias"
    if weighted and cert.phi is None:
        raise ContractError("weighted certificate carries no comparison function")
    op = operator if operator is not None else FracIntegralOperator(mesh, p.order.alpha)
    base = picard_solve(p, mesh, tol, max_iter, operator=op)
    envelope = (
        spec.epsilon * _phi_values(cert.phi, mesh)
        if weighted
        else np.full(mesh.n + 1, spec.epsilon)
    )
    fine: dict[str, object] = {}

    def _measure(
        solve_mesh: Mesh,
        solve_op: FracIntegralOperator,
        solve_base: Solution,
        solve_env: np.ndarray,
        pert: np.ndarray,
    ) -> tuple[float, float, float]:
        z = picard_solve(p, solve_mesh, tol, max_iter, operator=solve_op, forcing=pert)
        dev = _plain_deviation(z, solve_base, solve_mesh, p.order.weight)
        ceiling = cert.c_f * solve_env[1:]
        ratios = dev / ceiling
        at = int(np.argmax(ratios))
        return float(np.max(dev)), float(ceiling[at]), float(ratios[at])

    rows: list[TrialResult] = []
    for trial in range(spec.trials):
        seed = _trial_seed(spec.seed, trial)
        pert = _draw_perturbation(spec, trial, mesh, envelope, weighted)
        try:
            deviation, bound, ratio = _measure(mesh, op, base, envelope, pert)
            refined = False
            if ratio > 1.0 + allowance and refine:
                if not fine:
                    fine["mesh"] = build_mesh(
                        p.psi, p.a, p.T, 2 * mesh.n, mesh.grading
                    )
                    fine["op"] = FracIntegralOperator(fine["mesh"], p.order.alpha)
                    fine["base"] = picard_solve(
                        p, fine["mesh"], tol, max_iter, operator=fine["op"]
                    )
                    fine["env"] = (
                        spec.epsilon * _phi_values(cert.phi, fine["mesh"])
                        if weighted
                        else np.full(fine["mesh"].n + 1, spec.epsilon)
                    )
                pert2 = _refine_perturbation(
                    spec, trial, mesh, pert, fine["mesh"], fine["env"], weighted
                )
                deviation, bound, ratio = _measure(
                    fine["mesh"], fine["op"], fine["base"], fine["env"], pert2
                )
                refined = True
            verdict = "pass" if ratio <= 1.0 + allowance else "fail"
            rows.append(
                TrialResult(
                    trial, seed, spec.shape, spec.epsilon,
                    deviation, bound, ratio, verdict, refined,
                )
            )
        except (NonConvergenceError, EvaluationError):
            rows.append(
                TrialResult(
                    trial, seed, spec.shape, spec.epsilon,
                    math.nan, math.nan, math.nan, "error",
                )
            )
    ok_rows = [r for r in rows if r.verdict != "error"]
    max_ratio = max((r.ratio for r in ok_rows), default=math.nan)
    max_dev = max((r.deviation for r in ok_rows), default=math.nan)
    passed = bool(rows) and all(r.verdict == "pass" for r in rows)
    return PerturbationReport(
        kind=cert.kind,
        epsilon=spec.epsilon,
        c_f=cert.c_f,
        allowance=allowance,
        mesh_n=mesh.n,
        rows=tuple(rows),
        max_ratio=max_ratio,
        max_deviation=max_dev,
        passed=passed,
    )


def _refine_perturbation(
    spec: PerturbationSpec,
    trial: int,
    mesh: Mesh,
    pert: np.ndarray,
    mesh2: Mesh,
    envelope2: np.ndarray,
    weighted: bool,
) -> np.ndarray:
    """The same perturbation on the doubled mesh.

    Deterministic shapes are re-evaluated exactly; the random shape is
    interpolated in the transformed coordinate and clipped back into the
    envelope, so the refined trial tests the same draw, not a fresh one.
    """
    if spec.shape in ("zero", "constant", "phi_scaled"):
        return _draw_perturbation(spec, trial, mesh2, envelope2, weighted)
    interp = np.interp(mesh2.psi_nodes, mesh.psi_nodes, pert)
    return np.clip(interp, -envelope2, envelope2)


def report_to_csv(report: PerturbationReport) -> str:
    """Deterministic CSV: one row per trial, then a key-value summary."""

    def num(x: float) -> str:
        return format(x, ".15g")

    lines = ["trial,seed,shape,epsilon,deviation,bound,ratio,verdict"]
    for r in report.rows:
        lines.append(
            f"{r.trial},{r.seed},{r.shape},{num(r.epsilon)},"
            f"{num(r.deviation)},{num(r.bound)},{num(r.ratio)},{r.verdict}"
        )
    lines.append("")
    lines.append("summary,value")
    lines.append(f"kind,{report.kind}")
    lines.append(f"trials,{len(report.rows)}")
    lines.append(f"epsilon,{num(report.epsilon)}")
    lines.append(f"c_f,{num(report.c_f)}")
    lines.append(f"allowance,{num(report.allowance)}")
    lines.append(f"mesh_n,{report.mesh_n}")
    lines.append(f"max_ratio,{num(report.max_ratio)}")
    lines.append(f"max_deviation,{num(report.max_deviation)}")
    lines.append(f"verdict,{'pass' if report.passed else 'fail'}")
    return "\n".join(lines) + "\n"
