"""
Stepsize, inertia and merit-constant planning.

All bounds are expressed through α = γ·L_{f,h} and the normalized moduli
p_{±f,h} = σ_{±f,h}/L_{f,h}. Regime A certifies the merit function with ξ = f̂_β,
regime B with ξ = L_{f̂β}·½‖·‖² and needs a strongly convex kernel.

The (γ, β) ↦ (γ/(1+γc), (β+γc)/(1+γc)) reparametrization that reads inertia as a
stepsize effect is not provided.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, NamedTuple

from .problem import ProblemInstance

logger = logging.getLogger(__name__)

# relative tolerance for non-strict inequalities evaluated in floating point
_TOL = 1e-12


class PlanViolationError(Exception):
    """Raised when (γ, β, c) violate a stepsize or inertia bound."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "parameters rejected")


class AffineSmoothTermError(Exception):
    """Raised when both relative moduli vanish, i.e. f is affine relative to h."""


class XiRegime(str, Enum):
    CONVEX_REFERENCE = "ConvexReference"
    QUADRATIC_REFERENCE = "QuadraticReference"


class CorollaryTag(str, Enum):
    THMSD_A = "ThmSD_A"
    THMSD_B = "ThmSD_B"
    WC_A = "WC_A"
    WC_B = "WC_B"
    WC_BZERO = "WC_Bzero"
    CVX_A = "CVX_A"
    CVX_B = "CVX_B"
    CVX_BZERO = "CVX_Bzero"
    CCV_A = "CCV_A"
    CCV_B = "CCV_B"
    CCV_BZERO = "CCV_Bzero"
    MANUAL = "Manual"


class NormalizedModuli(NamedTuple):
    L_fh: float
    p_f: float
    p_minus_f: float


@dataclass(frozen=True, slots=True)
class PlannedParams:
    """Validated (γ, β, c) with the ξ-regime that certifies them."""

    gamma: float
    beta: float
    c: float
    alpha: float
    p_f: float
    p_minus_f: float
    L_fh: float
    xi_regime: XiRegime
    L_fbeta: float | None = None
    corollary_tag: CorollaryTag = CorollaryTag.THMSD_A
    certified: bool = True
    sigma_h: float | None = None
    c_bound: float | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def moduli(self) -> NormalizedModuli:
        return NormalizedModuli(self.L_fh, self.p_f, self.p_minus_f)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["xi_regime"] = self.xi_regime.value
        data["corollary_tag"] = self.corollary_tag.value
        data["notes"] = list(self.notes)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PlannedParams":
        data = dict(data)
        data["xi_regime"] = XiRegime(data["xi_regime"])
        data["corollary_tag"] = CorollaryTag(data["corollary_tag"])
        data["notes"] = tuple(data.get("notes", ()))
        return cls(**data)


def normalize_moduli(sigma_f: float, sigma_minus_f: float) -> NormalizedModuli:
    """
    Normalize σ_{±f,h} into (L_{f,h}, p_{f,h}, p_{−f,h}).

    Valid moduli satisfy σ_f + σ_{−f} ≤ 0; when they do not, the larger one is
    lowered to minus the other (lowering a modulus keeps the convexity claim true)
    and the adjustment is logged.
    """
    sigma_f, sigma_minus_f = float(sigma_f), float(sigma_minus_f)
    if sigma_f == 0.0 and sigma_minus_f == 0.0:
        raise AffineSmoothTermError("Both relative moduli are zero: f is affine relative to h.")
    if sigma_f + sigma_minus_f > 0.0:
        if sigma_f >= sigma_minus_f:
            logger.warning("Re-tightening sigma_f from %g to %g (sigma_f + sigma_minus_f > 0).", sigma_f, -sigma_minus_f)
            sigma_f = -sigma_minus_f
        else:
            logger.warning(
                "Re-tightening sigma_minus_f from %g to %g (sigma_f + sigma_minus_f > 0).", sigma_minus_f, -sigma_f
            )
            sigma_minus_f = -sigma_f
    L = max(abs(sigma_f), abs(sigma_minus_f))
    if L == 0.0:
        raise AffineSmoothTermError("Re-tightening left both relative moduli at zero: f is affine relative to h.")
    moduli = NormalizedModuli(L, sigma_f / L, sigma_minus_f / L)
    total = moduli.p_f + moduli.p_minus_f
    if not (-2.0 - _TOL <= total <= _TOL) or min(moduli.p_f, moduli.p_minus_f) != -1.0:
        raise AffineSmoothTermError(f"Normalization produced inconsistent moduli {moduli}.")
    return moduli


def _negative_part(value: float) -> float:
    return max(-value, 0.0)


def _common_violations(moduli: NormalizedModuli, gamma: float) -> list[str]:
    violations = []
    if not gamma > 0.0:
        violations.append(f"gamma > 0 fails (gamma={gamma:g})")
        return violations
    alpha = gamma * moduli.L_fh
    if alpha * _negative_part(moduli.p_minus_f) >= 1.0:
        violations.append(f"gamma < 1/[sigma_minus_f]_- fails (alpha*[p_minus_f]_- = {alpha * _negative_part(moduli.p_minus_f):g})")
    elif alpha * _negative_part(moduli.p_f) >= 1.0:
        logger.warning(
            "gamma=%g satisfies the Legendre threshold 1/[sigma_minus_f]_- but not 1/[sigma_f]_-.", gamma
        )
    return violations


def _c_violations(c: float | None, c_bound: float) -> list[str]:
    if c_bound <= 0.0:
        return [f"c > 0 fails (margin {c_bound:g})"]
    if c is not None:
        if not c > 0.0:
            return [f"c > 0 fails (c={c:g})"]
        if c > c_bound + _TOL * max(1.0, abs(c_bound)):
            return [f"c <= c_bound fails (c={c:g}, bound={c_bound:g})"]
    return []


def regime_A_bound(moduli: NormalizedModuli, beta: float, gamma: float) -> float:
    """c = 1 + 2β + 3αp_{−f,h}."""
    alpha = gamma * moduli.L_fh
    return 1.0 + 2.0 * beta + 3.0 * alpha * moduli.p_minus_f


def regime_B_bound(moduli: NormalizedModuli, gamma: float, sigma_h: float, L_fbeta: float) -> float:
    """c = (1 + αp_{−f,h})σ_h − 2γL_{f̂β}."""
    alpha = gamma * moduli.L_fh
    return (1.0 + alpha * moduli.p_minus_f) * sigma_h - 2.0 * gamma * L_fbeta


def check_thmSD_A(moduli: NormalizedModuli, beta: float, gamma: float, c: float | None = None) -> list[str]:
    violations = _common_violations(moduli, gamma)
    if violations:
        return violations
    alpha = gamma * moduli.L_fh
    slack = alpha * moduli.p_f - beta
    if slack < -_TOL * max(1.0, abs(beta)):
        violations.append(f"alpha*p_f - beta >= 0 fails ({alpha * moduli.p_f:g} < {beta:g})")
    if not beta > -(1.0 + 3.0 * alpha * moduli.p_minus_f) / 2.0:
        violations.append(f"beta > -(1 + 3*alpha*p_minus_f)/2 fails (beta={beta:g})")
    bound = regime_A_bound(moduli, beta, gamma)
    violations.extend(_c_violations(c, bound))
    return violations


def check_thmSD_B(
    moduli: NormalizedModuli, beta: float, gamma: float, sigma_h: float | None, L_fbeta: float | None, c: float | None = None
) -> list[str]:
    violations = _common_violations(moduli, gamma)
    if violations:
        return violations
    if not sigma_h:
        return ["kernel strong convexity sigma_h > 0 required"]
    if L_fbeta is None:
        return ["Lipschitz modulus L_fbeta of grad f_beta required"]
    bound = regime_B_bound(moduli, gamma, sigma_h, L_fbeta)
    violations.extend(_c_violations(c, bound))
    return violations


def plan_thmSD_A(
    moduli: NormalizedModuli,
    beta: float,
    gamma: float,
    c: float | None = None,
    tag: CorollaryTag = CorollaryTag.THMSD_A,
) -> PlannedParams:
    """Validate (γ, β) for regime A; c defaults to the regime bound."""
    violations = check_thmSD_A(moduli, beta, gamma, c)
    if violations:
        raise PlanViolationError(violations)
    bound = regime_A_bound(moduli, beta, gamma)
    return PlannedParams(
        gamma=gamma,
        beta=beta,
        c=bound if c is None else c,
        alpha=gamma * moduli.L_fh,
        p_f=moduli.p_f,
        p_minus_f=moduli.p_minus_f,
        L_fh=moduli.L_fh,
        xi_regime=XiRegime.CONVEX_REFERENCE,
        corollary_tag=tag,
        c_bound=bound,
    )


def plan_thmSD_B(
    moduli: NormalizedModuli,
    beta: float,
    gamma: float,
    sigma_h: float | None,
    L_fbeta: float | None,
    c: float | None = None,
    tag: CorollaryTag = CorollaryTag.THMSD_B,
) -> PlannedParams:
    """Validate (γ, β) for regime B; c defaults to the regime bound."""
    violations = check_thmSD_B(moduli, beta, gamma, sigma_h, L_fbeta, c)
    if violations:
        raise PlanViolationError(violations)
    bound = regime_B_bound(moduli, gamma, sigma_h, L_fbeta)
    return PlannedParams(
        gamma=gamma,
        beta=beta,
        c=bound if c is None else c,
        alpha=gamma * moduli.L_fh,
        p_f=moduli.p_f,
        p_minus_f=moduli.p_minus_f,
        L_fh=moduli.L_fh,
        xi_regime=XiRegime.QUADRATIC_REFERENCE,
        L_fbeta=L_fbeta,
        corollary_tag=tag,
        sigma_h=sigma_h,
        c_bound=bound,
    )


def estimate_L_fbeta(
    moduli: NormalizedModuli,
    beta: float,
    gamma: float,
    kernel=None,
    L_h: float | None = None,
    L_f: float | None = None,
) -> float:
    """
    Lipschitz modulus of ∇f̂_β = ∇f − (β/γ)∇h.

    Returns L_f when β = 0 and a Euclidean L_f is supplied, otherwise
    (L_h/γ)·max{β − αp_{f,h}, −β − αp_{−f,h}}.
    """
    if beta == 0.0 and L_f is not None:
        return float(L_f)
    if L_h is None and kernel is not None:
        L_h = kernel.grad_lipschitz
    if L_h is None:
        raise PlanViolationError(["kernel gradient Lipschitz modulus L_h unknown (needed when beta != 0 or L_f is missing)"])
    alpha = gamma * moduli.L_fh
    spread = max(beta - alpha * moduli.p_f, -beta - alpha * moduli.p_minus_f)
    return (L_h / gamma) * max(spread, 0.0)


class CorollaryPlan(NamedTuple):
    gamma_max: float
    params: PlannedParams


_CASE_MODULI = {
    "WC": (-1.0, -1.0),
    "CVX": (0.0, -1.0),
    "CCV": (-1.0, 0.0),
}


def _require(value: float | None, name: str, case: CorollaryTag) -> float:
    if value is None:
        raise PlanViolationError([f"{case.value} needs {name}"])
    return float(value)


def corollary_gamma_max(
    case: CorollaryTag,
    L_fh: float,
    c: float,
    beta: float,
    sigma_h: float | None = None,
    L_h: float | None = None,
    L_f: float | None = None,
) -> float:
    """Largest γ admitted by the worst-case, convex-f or concave-f bound for ``case``."""
    L = float(L_fh)
    violations = []
    if not c > 0.0:
        violations.append(f"c > 0 fails (c={c:g})")
    family, _, regime = case.value.partition("_")
    if family not in _CASE_MODULI:
        raise PlanViolationError([f"{case.value} is not a corollary case"])

    if regime == "A":
        if family == "WC" and not -0.5 < beta < 0.0:
            violations.append(f"-1/2 < beta < 0 fails (beta={beta:g})")
        if family == "CVX" and not -0.5 < beta <= 0.0:
            violations.append(f"-1/2 < beta <= 0 fails (beta={beta:g})")
        if family == "CCV" and not (c - 1.0) / 2.0 <= beta < 0.0:
            violations.append(f"(c-1)/2 <= beta < 0 fails (beta={beta:g})")
        if violations:
            raise PlanViolationError(violations)
        if family == "WC":
            gamma_max = min(-beta, (1.0 + 2.0 * beta - c) / 3.0) / L
        elif family == "CVX":
            gamma_max = (1.0 + 2.0 * beta - c) / 3.0 / L
        else:
            gamma_max = -beta / L
    elif regime == "B":
        s = _require(sigma_h, "sigma_h", case)
        lh = _require(L_h, "L_h", case)
        if family in ("WC", "CVX") and not abs(beta) < s / (2.0 * lh):
            violations.append(f"|beta| < sigma_h/(2 L_h) fails (beta={beta:g})")
        if family == "CCV" and not (c - s) / (2.0 * lh) <= beta < s / (2.0 * lh):
            violations.append(f"(c - sigma_h)/(2 L_h) <= beta < sigma_h/(2 L_h) fails (beta={beta:g})")
        if violations:
            raise PlanViolationError(violations)
        if family == "WC":
            gamma_max = (s - 2.0 * lh * abs(beta) - c) / (s + 2.0 * lh) / L
        elif family == "CVX":
            gamma_max = min((s + 2.0 * lh * beta - c) / (s + 2.0 * lh), (s - 2.0 * lh * beta - c) / s) / L
        else:
            gamma_max = (s - 2.0 * lh * beta - c) / (2.0 * lh) / L
    else:
        s = _require(sigma_h, "sigma_h", case)
        lf = _require(L_f, "L_f", case)
        if beta != 0.0:
            violations.append(f"beta = 0 required (beta={beta:g})")
        if violations:
            raise PlanViolationError(violations)
        if family == "CCV":
            gamma_max = (s - c) / (2.0 * lf)
        else:
            # exact regime-B bound with L_fbeta = L_f
            gamma_max = (s - c) / (s * L + 2.0 * lf)
            if family == "WC" and L_h is not None:
                gamma_max = min(gamma_max, (s - c) / (s + 2.0 * L_h) / L)

    if not gamma_max > 0.0:
        raise PlanViolationError([f"empty feasible interval for {case.value} (gamma_max={gamma_max:g})"])
    return gamma_max


def default_c(case: CorollaryTag, beta: float, sigma_h: float | None = None, L_h: float | None = None) -> float:
    """Half of the supremum of admissible c at the given β."""
    regime = case.value.partition("_")[2]
    if regime == "A":
        supremum = 1.0 + 2.0 * beta
    elif regime == "B":
        supremum = _require(sigma_h, "sigma_h", case) - 2.0 * _require(L_h, "L_h", case) * abs(beta)
    else:
        supremum = _require(sigma_h, "sigma_h", case)
    if supremum <= 0.0:
        raise PlanViolationError([f"no admissible c for {case.value} at beta={beta:g}"])
    return 0.5 * supremum


def plan_corollary(
    case: CorollaryTag,
    L_fh: float,
    c: float | None,
    beta: float,
    sigma_h: float | None = None,
    L_h: float | None = None,
    L_f: float | None = None,
    gamma: float | None = None,
) -> CorollaryPlan:
    """γ_max from a corollary bound and the regime-validated params at γ (default γ_max)."""
    case = CorollaryTag(case)
    if c is None:
        c = default_c(case, beta, sigma_h, L_h)
    gamma_max = corollary_gamma_max(case, L_fh, c, beta, sigma_h, L_h, L_f)
    if gamma is None:
        gamma = gamma_max
    elif not 0.0 < gamma <= gamma_max:
        raise PlanViolationError([f"0 < gamma <= gamma_max fails (gamma={gamma:g}, gamma_max={gamma_max:g})"])

    family, _, regime = case.value.partition("_")
    p_f, p_minus_f = _CASE_MODULI[family]
    moduli = NormalizedModuli(float(L_fh), p_f, p_minus_f)
    if regime == "A":
        params = plan_thmSD_A(moduli, beta, gamma, c, tag=case)
    else:
        L_fbeta = estimate_L_fbeta(moduli, beta, gamma, L_h=L_h, L_f=L_f if regime == "Bzero" else None)
        params = plan_thmSD_B(moduli, beta, gamma, sigma_h, L_fbeta, c, tag=case)
    logger.info("Planned %s: gamma_max=%.6g gamma=%.6g beta=%g c=%g", case.value, gamma_max, gamma, beta, c)
    return CorollaryPlan(gamma_max, params)


# ---------------------------------------------------------------------------
# Automatic planning
# ---------------------------------------------------------------------------


class _Line(NamedTuple):
    """c0 + c1·α."""

    c0: float
    c1: float

    def at(self, alpha: float) -> float:
        return self.c0 + self.c1 * alpha


def _interval(constraints: list[tuple[_Line, float]], cap: float) -> tuple[float, float]:
    """{α ∈ [0, cap] : line(α) ≥ target for every (line, target)}."""
    lo, hi = 0.0, cap
    for line, target in constraints:
        if line.c1 > 0.0:
            lo = max(lo, (target - line.c0) / line.c1)
        elif line.c1 < 0.0:
            hi = min(hi, (target - line.c0) / line.c1)
        elif line.c0 < target:
            return 1.0, 0.0
    return lo, hi


def _best_alpha(bounds: list[_Line], extra: list[tuple[_Line, float]], cap: float, c: float | None) -> tuple[float, float]:
    """
    Largest α with min(bounds)(α) ≥ c under ``extra``; c defaults to half the
    supremum of min(bounds) over the feasible interval.
    """
    lo, hi = _interval(extra, cap)
    if hi < lo or hi <= 0.0:
        raise PlanViolationError(["no stepsize satisfies the regime's side conditions"])
    if c is None:
        candidates = [lo, hi]
        for i, first in enumerate(bounds):
            for second in bounds[i + 1:]:
                if first.c1 != second.c1:
                    cross = (second.c0 - first.c0) / (first.c1 - second.c1)
                    if lo < cross < hi:
                        candidates.append(cross)
        supremum = max(min(line.at(a) for line in bounds) for a in candidates)
        if supremum <= 0.0:
            raise PlanViolationError([f"c > 0 fails for every stepsize (sup c = {supremum:g})"])
        c = 0.5 * supremum
    lo, hi = _interval(extra + [(line, c) for line in bounds], cap)
    if hi < lo or hi <= 0.0:
        raise PlanViolationError([f"no stepsize reaches c={c:g}"])
    return hi, c


def _alpha_cap(moduli: NormalizedModuli) -> float:
    # α < 1 and the strict prox-boundedness threshold
    cap = 1.0
    if moduli.p_minus_f < 0.0:
        cap = min(cap, 1.0 / -moduli.p_minus_f)
    return cap * (1.0 - 1e-9)


def _auto_A(moduli: NormalizedModuli, beta: float | None, c: float | None) -> PlannedParams:
    tied = beta is None and moduli.p_f < 0.0
    if tied:
        # β = αp_f keeps f̂_β on the convexity boundary
        bounds = [_Line(1.0, 2.0 * moduli.p_f + 3.0 * moduli.p_minus_f)]
        extra = []
    else:
        beta = 0.0 if beta is None else float(beta)
        bounds = [_Line(1.0 + 2.0 * beta, 3.0 * moduli.p_minus_f)]
        extra = [(_Line(-beta, moduli.p_f), 0.0)]
    alpha, c = _best_alpha(bounds, extra, _alpha_cap(moduli), c)
    if tied:
        beta = alpha * moduli.p_f
    return plan_thmSD_A(moduli, beta, alpha / moduli.L_fh, c)


def _auto_B(problem: ProblemInstance, moduli: NormalizedModuli, beta: float | None, c: float | None) -> PlannedParams:
    sigma_h = problem.kernel.strong_convexity
    if not sigma_h:
        raise PlanViolationError(["regime B needs a strongly convex kernel"])
    beta = 0.0 if beta is None else float(beta)
    L, p_f, p_minus_f = moduli
    L_f = problem.f.lipschitz if problem.kernel.name == "euclidean" else None
    if beta == 0.0 and L_f is not None:
        bounds = [_Line(sigma_h, p_minus_f * sigma_h - 2.0 * L_f / L)]
    else:
        L_h = problem.kernel.grad_lipschitz
        if L_h is None:
            raise PlanViolationError(["regime B needs L_h (or beta = 0 with a Euclidean L_f)"])
        bounds = [
            _Line(sigma_h - 2.0 * L_h * beta, p_minus_f * sigma_h + 2.0 * L_h * p_f),
            _Line(sigma_h + 2.0 * L_h * beta, p_minus_f * sigma_h + 2.0 * L_h * p_minus_f),
        ]
    alpha, c = _best_alpha(bounds, [], _alpha_cap(moduli), c)
    gamma = alpha / L
    L_fbeta = estimate_L_fbeta(moduli, beta, gamma, kernel=problem.kernel, L_f=L_f)
    return plan_thmSD_B(moduli, beta, gamma, sigma_h, L_fbeta, c)


def plan_auto(
    problem: ProblemInstance, regime: str | None = None, beta: float | None = None, c: float | None = None
) -> PlannedParams:
    """
    Pick certified parameters for ``problem``.

    Regime A is tried first unless ``regime`` pins one. Without β, regime A ties
    β = αp_{f,h} when f̂_0 is nonconvex and uses β = 0 otherwise; without c, half
    of the supremum admissible c is used; γ is then the largest admissible stepsize.
    """
    moduli = normalize_moduli(problem.f.sigma_f, problem.f.sigma_minus_f)
    attempts = [regime.upper()] if regime else ["A", "B"]
    failures: list[str] = []
    for attempt in attempts:
        try:
            if attempt == "A":
                params = _auto_A(moduli, beta, c)
            elif attempt == "B":
                params = _auto_B(problem, moduli, beta, c)
            else:
                raise PlanViolationError([f"unknown regime '{attempt}'"])
        except PlanViolationError as exc:
            failures.extend(f"regime {attempt}: {v}" for v in exc.violations)
            continue
        logger.info(
            "Planned %s for %s: gamma=%.6g beta=%.6g c=%.6g",
            params.corollary_tag.value,
            problem.name,
            params.gamma,
            params.beta,
            params.c,
        )
        return params
    raise PlanViolationError(failures)


def plan_manual(
    problem: ProblemInstance,
    beta: float,
    gamma: float | None = None,
    alpha: float | None = None,
    c: float | None = None,
) -> PlannedParams:
    """Uncertified parameters; bound violations are recorded in ``notes`` and never raised."""
    moduli = normalize_moduli(problem.f.sigma_f, problem.f.sigma_minus_f)
    if gamma is None:
        if alpha is None:
            raise PlanViolationError(["manual mode needs gamma or alpha"])
        gamma = alpha / moduli.L_fh
    notes = tuple(check_thmSD_A(moduli, beta, gamma, c))
    if notes:
        logger.warning("Manual parameters violate regime A: %s", "; ".join(notes))
    bound = regime_A_bound(moduli, beta, gamma)
    return PlannedParams(
        gamma=gamma,
        beta=beta,
        c=bound if c is None else c,
        alpha=gamma * moduli.L_fh,
        p_f=moduli.p_f,
        p_minus_f=moduli.p_minus_f,
        L_fh=moduli.L_fh,
        xi_regime=XiRegime.CONVEX_REFERENCE,
        corollary_tag=CorollaryTag.MANUAL,
        certified=False,
        c_bound=bound,
        notes=notes,
    )
