from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
from scipy import optimize

from .conf import get_setting
from .extended import ExtendedReal

logger = logging.getLogger(__name__)

Vector = np.ndarray


class KernelError(Exception):
    """Raised when a kernel fails one of its sampled Legendre invariants."""


class MirrorMapError(Exception):
    """Raised when the inverse mirror map cannot be solved to tolerance."""


class DomainExitError(Exception):
    """Raised when a point leaves the interior of the kernel domain."""


def _full_domain(x: Vector) -> bool:
    return bool(np.all(np.isfinite(x)))


@dataclass(frozen=True, slots=True)
class KernelOracle:
    """Legendre kernel h together with its mirror map and optional moduli."""

    name: str
    value: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    inverse_gradient: Callable[[Vector], Vector]
    strong_convexity: float | None = None
    grad_lipschitz: float | None = None
    domain_probe: Callable[[Vector], bool] = _full_domain
    hessian: Callable[[Vector], np.ndarray] | None = None
    # ∇h(w) = s(w)·w with s > 0; separable-threshold proxes rely on it
    radial: bool = False

    def require_interior(self, x: Vector, label: str = "point") -> None:
        if not self.domain_probe(x):
            raise DomainExitError(f"{label} {x!r} lies outside int dom h of kernel '{self.name}'.")

    def verify(
        self,
        rng: np.random.Generator,
        dimension: int,
        samples: int = 1000,
        radius: float = 2.0,
        tol: float = 1e-9,
    ) -> None:
        """
        Check the kernel invariants on sampled points.

        Args:
            rng: source of the sampled points
            dimension: ambient dimension n
            samples: number of sampled pairs
            radius: points are drawn uniformly from [-radius, radius]^n
            tol: absolute tolerance of the convexity and moduli checks

        Raises:
            KernelError: naming the first invariant that failed.
        """
        xs = rng.uniform(-radius, radius, size=(samples, dimension))
        ys = rng.uniform(-radius, radius, size=(samples, dimension))
        for x, y in zip(xs, ys):
            if not (self.domain_probe(x) and self.domain_probe(y)):
                continue
            back = self.inverse_gradient(self.gradient(x))
            if np.linalg.norm(back - x) > 1e-8 * (1.0 + np.linalg.norm(x)):
                raise KernelError(f"{self.name}: inverse_gradient(gradient(x)) != x at x={x!r}")

            hx, hy = self.value(x), self.value(y)
            if self.value(0.5 * (x + y)) > 0.5 * (hx + hy) + tol * (1.0 + abs(hx) + abs(hy)):
                raise KernelError(f"{self.name}: midpoint convexity fails between {x!r} and {y!r}")

            gap = np.linalg.norm(x - y)
            if self.strong_convexity:
                distance = hx - hy - float(np.dot(self.gradient(y), x - y))
                if distance < 0.5 * self.strong_convexity * gap**2 - tol:
                    raise KernelError(f"{self.name}: strong convexity modulus {self.strong_convexity} too large")
            if self.grad_lipschitz is not None:
                slope = np.linalg.norm(self.gradient(x) - self.gradient(y))
                if slope > self.grad_lipschitz * gap + tol:
                    raise KernelError(f"{self.name}: gradient Lipschitz modulus {self.grad_lipschitz} too small")


@dataclass(frozen=True, slots=True)
class GeneralizedReference:
    """A smooth reference ψ for D_ψ; convexity is not required."""

    value: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    name: str = ""
    domain_probe: Callable[[Vector], bool] = _full_domain

    @classmethod
    def combination(cls, *terms: tuple[float, Any], name: str = "") -> "GeneralizedReference":
        """Linear combination Σ wᵢ·rᵢ of anything exposing ``value`` and ``gradient``."""
        weighted = tuple((float(weight), ref) for weight, ref in terms)

        def value(x: Vector) -> float:
            return sum(weight * float(ref.value(x)) for weight, ref in weighted)

        def gradient(x: Vector) -> Vector:
            x = np.asarray(x, dtype=float)
            return sum(
                (weight * np.asarray(ref.gradient(x), dtype=float) for weight, ref in weighted),
                start=np.zeros_like(x),
            )

        return cls(value=value, gradient=gradient, name=name)

    @classmethod
    def quadratic(cls, coefficient: float, name: str = "") -> "GeneralizedReference":
        """coefficient · ½‖·‖²."""
        coefficient = float(coefficient)
        return cls(
            value=lambda x: 0.5 * coefficient * float(np.dot(x, x)),
            gradient=lambda x: coefficient * np.asarray(x, dtype=float),
            name=name or f"{coefficient:g}*j",
        )


def _as_point(x: Any) -> Vector:
    return np.atleast_1d(np.asarray(x, dtype=float))


def bregman_distance(k: KernelOracle, x: Any, y: Any) -> ExtendedReal:
    """D(x, y) = h(x) − h(y) − ⟨∇h(y), x − y⟩, and +∞ when y is outside C."""
    x, y = _as_point(x), _as_point(y)
    if not k.domain_probe(y):
        return ExtendedReal.infinity()
    with np.errstate(all="ignore"):
        hx = ExtendedReal.from_float(k.value(x))
        linear = -float(k.value(y)) - float(np.dot(k.gradient(y), x - y))
    if not np.isfinite(linear):
        return ExtendedReal.domain_error()
    total = hx + linear
    if total.is_finite:
        # convexity of h: negative values are rounding
        return ExtendedReal.finite(max(total.value, 0.0))
    return total


def generalized_bregman(r: GeneralizedReference, x: Any, y: Any) -> float:
    """D_r(x, y) for a possibly nonconvex reference; the result may be negative."""
    x, y = _as_point(x), _as_point(y)
    for label, point in (("x", x), ("y", y)):
        if not r.domain_probe(point):
            raise DomainExitError(f"{label}={point!r} is outside the domain of reference '{r.name}'.")
    return float(r.value(x)) - float(r.value(y)) - float(np.dot(r.gradient(y), x - y))


def three_point_defect(k: KernelOracle, x: Any, y: Any, z: Any) -> float:
    """D(x,y) + D(y,z) − D(x,z) − ⟨∇h(z) − ∇h(y), x − y⟩, zero in exact arithmetic."""
    x, y, z = _as_point(x), _as_point(y), _as_point(z)
    lhs = float(bregman_distance(k, x, y)) + float(bregman_distance(k, y, z)) - float(bregman_distance(k, x, z))
    return lhs - float(np.dot(k.gradient(z) - k.gradient(y), x - y))


def mirror_step(k: KernelOracle, x: Any, dual_shift: Any) -> Vector:
    """Return (∇h)⁻¹(∇h(x) + dual_shift)."""
    x = _as_point(x)
    k.require_interior(x, "mirror step origin")
    y = k.inverse_gradient(k.gradient(x) + _as_point(dual_shift))
    k.require_interior(y, "mirror step result")
    return y


def _solve_radius(rho: float, tol: float) -> float:
    """Root of r³ + r = rho on [0, rho]."""
    if rho == 0.0:
        return 0.0
    try:
        radius, info = optimize.brentq(
            lambda r: r**3 + r - rho, 0.0, rho, xtol=1e-15, rtol=4 * np.finfo(float).eps, full_output=True
        )
    except (ValueError, RuntimeError) as exc:
        raise MirrorMapError(f"Radial root-find failed for |y|={rho!r}: {exc}") from exc
    if not info.converged:
        raise MirrorMapError(f"Radial root-find did not converge for |y|={rho!r} ({info.flag}).")
    # Newton polish
    for _ in range(2):
        radius -= (radius**3 + radius - rho) / (3.0 * radius**2 + 1.0)
    if abs(radius**3 + radius - rho) > tol * max(1.0, rho):
        raise MirrorMapError(f"Radial dual residual above {tol:g} for |y|={rho!r}.")
    return radius


def euclidean_kernel() -> KernelOracle:
    return KernelOracle(
        name="euclidean",
        value=lambda x: 0.5 * float(np.dot(x, x)),
        gradient=lambda x: np.array(x, dtype=float),
        inverse_gradient=lambda y: np.array(y, dtype=float),
        strong_convexity=1.0,
        grad_lipschitz=1.0,
        hessian=lambda x: np.eye(np.size(x)),
        radial=True,
    )


def quartic_kernel() -> KernelOracle:
    """h(x) = ¼‖x‖⁴ + ½‖x‖², 1-strongly convex with a locally Lipschitz gradient."""

    def value(x: Vector) -> float:
        sq = float(np.dot(x, x))
        return 0.25 * sq * sq + 0.5 * sq

    def gradient(x: Vector) -> Vector:
        x = np.asarray(x, dtype=float)
        return (float(np.dot(x, x)) + 1.0) * x

    def inverse_gradient(y: Vector) -> Vector:
        y = np.asarray(y, dtype=float)
        rho = float(np.linalg.norm(y))
        radius = _solve_radius(rho, get_setting("BIFRB_MIRROR_TOL"))
        if rho == 0.0:
            return np.zeros_like(y)
        return (radius / rho) * y

    def hessian(x: Vector) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (float(np.dot(x, x)) + 1.0) * np.eye(x.size) + 2.0 * np.outer(x, x)

    return KernelOracle(
        name="quartic",
        value=value,
        gradient=gradient,
        inverse_gradient=inverse_gradient,
        strong_convexity=1.0,
        grad_lipschitz=None,
        hessian=hessian,
        radial=True,
    )


KERNELS: dict[str, Callable[[], KernelOracle]] = {
    "euclidean": euclidean_kernel,
    "quartic": quartic_kernel,
}
