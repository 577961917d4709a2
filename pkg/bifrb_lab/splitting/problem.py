from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import linalg, optimize

from .extended import ExtendedReal
from .kernel import KernelOracle, Vector, euclidean_kernel, quartic_kernel

logger = logging.getLogger(__name__)


class OracleCheckError(Exception):
    """Raised when an instance fails its finite-difference or relative-convexity check."""


class ProxError(Exception):
    """Raised when a tilted Bregman proximal subproblem cannot be solved."""


class InstanceError(Exception):
    """Raised for unknown instance names or parameters."""


# ---------------------------------------------------------------------------
# Smooth term f
# ---------------------------------------------------------------------------


class SmoothOracle(ABC):
    """
    The smooth term f together with its relative weak-convexity moduli.

    ``sigma_f`` is a constant with f − σ·h convex and ``sigma_minus_f`` one with
    −f − σ·h convex, both relative to the kernel the instance pairs f with.
    """

    sigma_f: float
    sigma_minus_f: float
    # Euclidean Lipschitz modulus of ∇f when known
    lipschitz: float | None = None

    @abstractmethod
    def value(self, x: Vector) -> float:
        ...

    @abstractmethod
    def gradient(self, x: Vector) -> Vector:
        ...

    def hessian(self, x: Vector) -> np.ndarray | None:
        return None


class QuadraticFunction(SmoothOracle):
    """f(x) = ½xᵀQx + qᵀx; moduli default to the extreme eigenvalues of Q."""

    def __init__(self, Q, q=None, sigma_f: float | None = None, sigma_minus_f: float | None = None):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.q = np.zeros(self.Q.shape[0]) if q is None else np.asarray(q, dtype=float)
        eigenvalues = np.linalg.eigvalsh(self.Q)
        self.sigma_f = float(eigenvalues[0]) if sigma_f is None else float(sigma_f)
        self.sigma_minus_f = float(-eigenvalues[-1]) if sigma_minus_f is None else float(sigma_minus_f)
        self.lipschitz = float(np.max(np.abs(eigenvalues)))

    def value(self, x):
        return 0.5 * float(x @ self.Q @ x) + float(self.q @ x)

    def gradient(self, x):
        return self.Q @ x + self.q

    def hessian(self, x):
        return self.Q


class PhaseRetrievalLoss(SmoothOracle):
    """
    f(x) = ¼ Σᵢ (⟨aᵢ, x⟩² − bᵢ)², smooth relative to h = ¼‖·‖⁴ + ½‖·‖².

    Since ∇²h ⪰ (‖x‖² + 1)·I, the Hessian bound
    −Σ[bᵢ]₊‖aᵢ‖² I ⪯ ∇²f ⪯ (3Σ‖aᵢ‖⁴‖x‖² + Σ[−bᵢ]₊‖aᵢ‖²) I gives
    σ_f = −Σ[bᵢ]₊‖aᵢ‖² and σ_{−f} = −max{3Σ‖aᵢ‖⁴, Σ[−bᵢ]₊‖aᵢ‖²}.
    """

    def __init__(self, A, b):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        row_norms = np.sum(self.A**2, axis=1)
        self.sigma_f = float(-np.sum(np.maximum(self.b, 0.0) * row_norms))
        self.sigma_minus_f = float(
            -max(3.0 * np.sum(row_norms**2), np.sum(np.maximum(-self.b, 0.0) * row_norms))
        )

    def value(self, x):
        residual = (self.A @ x) ** 2 - self.b
        return 0.25 * float(residual @ residual)

    def gradient(self, x):
        ax = self.A @ x
        return self.A.T @ ((ax**2 - self.b) * ax)

    def hessian(self, x):
        ax = self.A @ x
        return self.A.T @ ((3.0 * ax**2 - self.b)[:, None] * self.A)


class LogCoshQuadratic(SmoothOracle):
    """f(x) = ½a‖x‖² + Σ log cosh(xᵢ − s): a ⪯ ∇²f ⪯ (a + 1)."""

    def __init__(self, a: float = 1.0, shift: float = 1.0):
        self.a = float(a)
        self.shift = float(shift)
        self.sigma_f = self.a
        self.sigma_minus_f = -(self.a + 1.0)
        self.lipschitz = self.a + 1.0

    def value(self, x):
        z = x - self.shift
        return 0.5 * self.a * float(x @ x) + float(np.sum(np.logaddexp(z, -z) - np.log(2.0)))

    def gradient(self, x):
        return self.a * x + np.tanh(x - self.shift)

    def hessian(self, x):
        return np.diag(self.a + 1.0 / np.cosh(x - self.shift) ** 2)


class CallableSmoothOracle(SmoothOracle):
    """User-supplied f from plain callables."""

    def __init__(
        self,
        value: Callable[[Vector], float],
        gradient: Callable[[Vector], Vector],
        sigma_f: float,
        sigma_minus_f: float,
        lipschitz: float | None = None,
    ):
        self._value = value
        self._gradient = gradient
        self.sigma_f = float(sigma_f)
        self.sigma_minus_f = float(sigma_minus_f)
        self.lipschitz = lipschitz

    def value(self, x):
        return float(self._value(x))

    def gradient(self, x):
        return np.asarray(self._gradient(x), dtype=float)


# ---------------------------------------------------------------------------
# Nonsmooth term g
# ---------------------------------------------------------------------------


class NonsmoothOracle(ABC):
    """The term g and its tilted Bregman proximal map."""

    name: str = "g"

    @abstractmethod
    def value(self, x: Vector) -> float:
        """g(x), +inf outside dom g."""

    @abstractmethod
    def tilted_bregman_prox(self, kernel: KernelOracle, gamma: float, tilt: Vector) -> list[Vector]:
        """All (finitely many) minimizers of γg(w) + h(w) − ⟨tilt, w⟩."""

    def subproblem_value(self, kernel: KernelOracle, gamma: float, tilt: Vector, w: Vector) -> float:
        gw = self.value(w)
        if not np.isfinite(gw):
            return np.inf
        return gamma * gw + float(kernel.value(w)) - float(np.dot(tilt, w))


def soft_threshold(t: Vector, threshold: float) -> Vector:
    return np.sign(t) * np.maximum(np.abs(t) - threshold, 0.0)


class ZeroFunction(NonsmoothOracle):
    name = "zero"

    def value(self, x):
        return 0.0

    def tilted_bregman_prox(self, kernel, gamma, tilt):
        return [kernel.inverse_gradient(np.asarray(tilt, dtype=float))]


class L1Norm(NonsmoothOracle):
    """g = weight·‖·‖₁, optionally restricted to the box [−radius, radius]ⁿ."""

    def __init__(self, weight: float = 0.0, radius: float | None = None):
        if weight < 0:
            raise ValueError("l1 weight must be nonnegative.")
        self.weight = float(weight)
        self.radius = None if radius is None else float(radius)
        parts = []
        if self.weight:
            parts.append(f"{self.weight:g}*l1")
        if self.radius is not None:
            parts.append(f"box({self.radius:g})")
        self.name = "+".join(parts) or "zero"

    def value(self, x):
        if self.radius is not None and np.any(np.abs(x) > self.radius):
            return np.inf
        return self.weight * float(np.sum(np.abs(x)))

    def tilted_bregman_prox(self, kernel, gamma, tilt):
        tilt = np.asarray(tilt, dtype=float)
        if kernel.radial:
            # ∇h(w) = s(w)·w with s > 0, so the ℓ1 part is a soft threshold in the dual
            w = kernel.inverse_gradient(soft_threshold(tilt, gamma * self.weight))
            if self.radius is None:
                return [w]
            if kernel.name == "euclidean" or tilt.size == 1:
                return [np.clip(w, -self.radius, self.radius)]
        return [self._numerical_prox(kernel, gamma, tilt)]

    def _numerical_prox(self, kernel, gamma, tilt):
        """Split w = p − q with p, q ≥ 0 and solve the smooth bound-constrained problem."""
        n = tilt.size
        upper = self.radius
        weight = gamma * self.weight

        def objective(z):
            p, q = z[:n], z[n:]
            w = p - q
            grad_w = kernel.gradient(w) - tilt
            value = weight * float(np.sum(p + q)) + float(kernel.value(w)) - float(tilt @ w)
            return value, np.concatenate([grad_w + weight, -grad_w + weight])

        start = kernel.inverse_gradient(soft_threshold(tilt, weight))
        if upper is not None:
            start = np.clip(start, -upper, upper)
        z0 = np.concatenate([np.maximum(start, 0.0), np.maximum(-start, 0.0)])
        result = optimize.minimize(
            objective,
            z0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, upper)] * (2 * n),
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 1000},
        )
        if not np.all(np.isfinite(result.x)):
            raise ProxError(f"Numerical prox for {self.name} failed: {result.message}")
        if not result.success:
            # L-BFGS-B also stops "abnormally" at a converged point; only a large projected gradient is a failure
            _, grad = objective(result.x)
            projected = result.x - np.clip(result.x - grad, 0.0, upper)
            stationarity = float(np.linalg.norm(projected))
            if not stationarity <= 1e-6 * (1.0 + float(np.linalg.norm(tilt))):
                raise ProxError(
                    f"Numerical prox for {self.name} failed: {result.message} (projected gradient {stationarity:.3e})"
                )
            logger.debug("Numerical prox for %s stopped with '%s' at a stationary point", self.name, result.message)
        return result.x[:n] - result.x[n:]


class DiscreteSetIndicator(NonsmoothOracle):
    """Indicator of a finite point set; the prox enumerates the set."""

    def __init__(self, points, tol: float = 1e-12):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.tol = tol
        self.name = f"indicator({len(self.points)} points)"

    def value(self, x):
        hit = np.all(np.abs(self.points - np.asarray(x, dtype=float)) <= self.tol, axis=1)
        return 0.0 if np.any(hit) else np.inf

    def tilted_bregman_prox(self, kernel, gamma, tilt):
        scores = np.array([float(kernel.value(p)) - float(np.dot(tilt, p)) for p in self.points])
        best = scores.min()
        ties = scores <= best + 1e-12 * (1.0 + abs(best))
        return [p.copy() for p in self.points[ties]]


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ProblemInstance:
    """minimize φ = f + g over C = int dom h."""

    name: str
    f: SmoothOracle
    g: NonsmoothOracle
    kernel: KernelOracle
    dimension: int
    known_optimum: float | None = None
    known_minimizer: Vector | None = None
    level_bounded: bool = False
    sample_radius: float = 2.0
    params: dict[str, Any] = field(default_factory=dict)

    def sample_points(self, rng: np.random.Generator, count: int, radius: float | None = None) -> np.ndarray:
        radius = self.sample_radius if radius is None else radius
        return rng.uniform(-radius, radius, size=(count, self.dimension))

    def sample_feasible(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Points of dom g (so φ is finite there)."""
        if isinstance(self.g, DiscreteSetIndicator):
            picks = rng.integers(0, len(self.g.points), size=count)
            return self.g.points[picks].copy()
        radius = self.sample_radius
        if isinstance(self.g, L1Norm) and self.g.radius is not None:
            radius = min(radius, self.g.radius)
        return self.sample_points(rng, count, radius)

    def verify(self, rng: np.random.Generator, samples: int = 200, tol: float = 1e-9) -> None:
        """Finite-difference and relative midpoint-convexity checks of f against the kernel."""
        f, h = self.f, self.kernel
        if max(abs(f.sigma_f), abs(f.sigma_minus_f)) == 0.0:
            raise OracleCheckError(f"{self.name}: f is affine relative to h (both moduli are zero).")

        for x in self.sample_points(rng, 20):
            grad = f.gradient(x)
            fd = np.empty_like(x)
            for i in range(x.size):
                step = 1e-6 * max(1.0, abs(x[i]))
                e = np.zeros_like(x)
                e[i] = step
                fd[i] = (f.value(x + e) - f.value(x - e)) / (2.0 * step)
            if not np.allclose(fd, grad, rtol=1e-6, atol=1e-6 * (1.0 + np.linalg.norm(grad))):
                raise OracleCheckError(f"{self.name}: gradient disagrees with finite differences at {x!r}")

        shifted = (
            ("f - sigma_f*h", lambda z: f.value(z) - f.sigma_f * h.value(z)),
            ("-f - sigma_minus_f*h", lambda z: -f.value(z) - f.sigma_minus_f * h.value(z)),
        )
        xs, ys = self.sample_points(rng, samples), self.sample_points(rng, samples)
        for label, F in shifted:
            for x, y in zip(xs, ys):
                fx, fy = F(x), F(y)
                if F(0.5 * (x + y)) > 0.5 * (fx + fy) + tol * (1.0 + abs(fx) + abs(fy)):
                    raise OracleCheckError(f"{self.name}: {label} is not midpoint convex on [{x!r}, {y!r}]")


def phi(p: ProblemInstance, x: Any) -> ExtendedReal:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return ExtendedReal.from_float(p.f.value(x)) + ExtendedReal.from_float(p.g.value(x))


def _threshold_holds(sigma: float, gamma: float) -> bool:
    negative_part = max(-sigma, 0.0)
    return negative_part == 0.0 or gamma < 1.0 / negative_part


def prox_threshold_check(p: ProblemInstance, gamma: float) -> bool:
    """γ < 1/[σ_{−f,h}]_−, with 1/0 = ∞."""
    return _threshold_holds(p.f.sigma_minus_f, gamma)


def envelope_threshold_check(p: ProblemInstance, gamma: float) -> bool:
    """γ < 1/[σ_{f,h}]_−, only used to warn."""
    return _threshold_holds(p.f.sigma_f, gamma)


def sample_relative_moduli(
    f: SmoothOracle, kernel: KernelOracle, rng: np.random.Generator, dimension: int, radius: float = 2.0, samples: int = 200
) -> tuple[float, float]:
    """
    Sampled estimates of (σ_{f,h}, σ_{−f,h}) from generalized eigenvalues of (∇²f, ∇²h).

    Sampling can only over-estimate the true moduli, so valid analytic moduli are
    never larger than these values.
    """
    if kernel.hessian is None or f.hessian(np.zeros(dimension)) is None:
        raise OracleCheckError("Moduli sampling needs Hessians of both f and h.")
    lowest, highest = np.inf, -np.inf
    for x in rng.uniform(-radius, radius, size=(samples, dimension)):
        ratios = linalg.eigh(np.atleast_2d(f.hessian(x)), np.atleast_2d(kernel.hessian(x)), eigvals_only=True)
        lowest = min(lowest, float(ratios[0]))
        highest = max(highest, float(ratios[-1]))
    return lowest, -highest


@dataclass(frozen=True, slots=True)
class InstanceEntry:
    name: str
    builder: Callable[..., ProblemInstance]
    description: str
    defaults: dict[str, Any]


_REGISTRY: dict[str, InstanceEntry] = {}


def register_instance(name: str, description: str, **defaults: Any):
    def decorator(builder: Callable[..., ProblemInstance]):
        _REGISTRY[name] = InstanceEntry(name, builder, description, defaults)
        return builder

    return decorator


def list_instances() -> list[InstanceEntry]:
    return sorted(_REGISTRY.values(), key=lambda entry: entry.name)


def build_instance(name: str, verify: bool = True, **params: Any) -> ProblemInstance:
    entry = _REGISTRY.get(name)
    if entry is None:
        raise InstanceError(f"Unknown instance '{name}'. Known instances: {', '.join(sorted(_REGISTRY))}.")
    unknown = sorted(set(params) - set(entry.defaults))
    if unknown:
        raise InstanceError(f"Instance '{name}' has no parameter(s) {', '.join(unknown)}.")
    merged = {**entry.defaults, **params}
    problem = entry.builder(**merged)
    if verify:
        problem.verify(np.random.default_rng(0))
    logger.debug("Built instance %s with %s", name, merged)
    return problem


def _rotation(rng: np.random.Generator, n: int) -> np.ndarray:
    basis, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return basis


def _spectrum(low: float, high: float, n: int) -> np.ndarray:
    return np.array([low]) if n == 1 else np.linspace(low, high, n)


@register_instance(
    "counterexample",
    "f = (L/2)x^2, g = indicator of {-1, 1}, Euclidean kernel; stepsize bounds are tight here.",
    L=1.0,
)
def counterexample(L: float) -> ProblemInstance:
    return ProblemInstance(
        name="counterexample",
        f=QuadraticFunction([[L]], sigma_f=L, sigma_minus_f=-L),
        g=DiscreteSetIndicator([[-1.0], [1.0]]),
        kernel=euclidean_kernel(),
        dimension=1,
        known_optimum=0.5 * L,
        known_minimizer=np.array([1.0]),
        level_bounded=True,
        params={"L": L},
    )


@register_instance(
    "nonconvex_qp_l1",
    "Indefinite quadratic + l1 on a box, Euclidean kernel (soft-threshold then clip).",
    dimension=2,
    l1_weight=0.1,
    box_radius=2.0,
    seed=0,
)
def nonconvex_qp_l1(dimension: int, l1_weight: float, box_radius: float, seed: int) -> ProblemInstance:
    rng = np.random.default_rng(seed)
    U = _rotation(rng, dimension)
    Q = U @ np.diag(_spectrum(-1.0, 2.0, dimension)) @ U.T
    q = 0.5 * rng.normal(size=dimension)
    return ProblemInstance(
        name="nonconvex_qp_l1",
        f=QuadraticFunction(Q, q),
        g=L1Norm(l1_weight, box_radius),
        kernel=euclidean_kernel(),
        dimension=dimension,
        level_bounded=True,
        sample_radius=box_radius,
        params={"dimension": dimension, "l1_weight": l1_weight, "box_radius": box_radius, "seed": seed},
    )


_PHASE_G = ("zero", "box", "l1")


@register_instance(
    "phase_retrieval",
    "f = 1/4 sum(<a_i,x>^2 - b_i)^2 with the quartic kernel; g in {zero, box, l1}.",
    dimension=1,
    measurements=0,
    g="zero",
    l1_weight=0.1,
    box_radius=2.0,
    seed=0,
)
def phase_retrieval(
    dimension: int, measurements: int, g: str, l1_weight: float, box_radius: float, seed: int
) -> ProblemInstance:
    if g not in _PHASE_G:
        raise InstanceError(f"phase_retrieval: g must be one of {', '.join(_PHASE_G)}, got '{g}'.")
    if dimension == 1 and not measurements:
        A, b = np.array([[1.0]]), np.array([1.0])
        truth = np.array([1.0])
    else:
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(measurements or 3 * dimension, dimension))
        truth = rng.normal(size=dimension)
        b = (A @ truth) ** 2
    nonsmooth = {
        "zero": ZeroFunction(),
        "box": L1Norm(0.0, box_radius),
        "l1": L1Norm(l1_weight),
    }[g]
    reaches_zero = g == "zero" or (g == "box" and np.all(np.abs(truth) <= box_radius))
    return ProblemInstance(
        name="phase_retrieval",
        f=PhaseRetrievalLoss(A, b),
        g=nonsmooth,
        kernel=quartic_kernel(),
        dimension=dimension,
        known_optimum=0.0 if reaches_zero else None,
        known_minimizer=truth if reaches_zero else None,
        # b ≥ 0 and A generic: f is coercive
        level_bounded=True,
        sample_radius=min(2.0, box_radius) if g == "box" else 2.0,
        params={
            "dimension": dimension,
            "measurements": measurements,
            "g": g,
            "l1_weight": l1_weight,
            "box_radius": box_radius,
            "seed": seed,
        },
    )


@register_instance(
    "quartic1d",
    "phase_retrieval preset: f = 1/4 (x^2 - 1)^2, g = 0, quartic kernel; minimizers +-1, optimum 0.",
)
def quartic1d() -> ProblemInstance:
    base = phase_retrieval(dimension=1, measurements=0, g="zero", l1_weight=0.0, box_radius=2.0, seed=0)
    return ProblemInstance(
        name="quartic1d",
        f=base.f,
        g=base.g,
        kernel=base.kernel,
        dimension=1,
        known_optimum=0.0,
        known_minimizer=np.array([1.0]),
        level_bounded=True,
        params={},
    )


@register_instance(
    "convex_quadratic",
    "Positive definite quadratic + l1, Euclidean kernel, sigma_f taken as 0.",
    dimension=2,
    l1_weight=0.1,
    seed=0,
)
def convex_quadratic(dimension: int, l1_weight: float, seed: int) -> ProblemInstance:
    rng = np.random.default_rng(seed)
    U = _rotation(rng, dimension)
    spectrum = _spectrum(1.0, 2.0, dimension)
    Q = U @ np.diag(spectrum) @ U.T
    q = rng.normal(size=dimension)
    minimizer = optimum = None
    if l1_weight == 0.0:
        minimizer = -np.linalg.solve(Q, q)
        optimum = 0.5 * float(minimizer @ Q @ minimizer) + float(q @ minimizer)
    elif dimension == 1:
        minimizer = soft_threshold(-q, l1_weight) / Q[0, 0]
        optimum = 0.5 * Q[0, 0] * float(minimizer @ minimizer) + float(q @ minimizer) + l1_weight * float(
            np.sum(np.abs(minimizer))
        )
    return ProblemInstance(
        name="convex_quadratic",
        f=QuadraticFunction(Q, q, sigma_f=0.0),
        g=L1Norm(l1_weight),
        kernel=euclidean_kernel(),
        dimension=dimension,
        known_optimum=optimum,
        known_minimizer=minimizer,
        level_bounded=True,
        params={"dimension": dimension, "l1_weight": l1_weight, "seed": seed},
    )


@register_instance(
    "concave_box",
    "Negative definite quadratic on a box (+ optional l1), Euclidean kernel, sigma_minus_f taken as 0.",
    dimension=2,
    box_radius=1.0,
    l1_weight=0.0,
    seed=0,
)
def concave_box(dimension: int, box_radius: float, l1_weight: float, seed: int) -> ProblemInstance:
    rng = np.random.default_rng(seed)
    U = _rotation(rng, dimension)
    spectrum = _spectrum(1.0, 2.0, dimension)
    P = U @ np.diag(spectrum) @ U.T
    q = 0.5 * rng.normal(size=dimension)
    f = QuadraticFunction(-P, q, sigma_minus_f=0.0)
    g = L1Norm(l1_weight, box_radius)
    minimizer = optimum = None
    if dimension == 1:
        # concave on each side of 0: the minimum sits at an endpoint or at the kink
        corners = [np.array([-box_radius]), np.array([0.0]), np.array([box_radius])]
        values = [f.value(c) + g.value(c) for c in corners]
        minimizer, optimum = corners[int(np.argmin(values))], float(min(values))
    return ProblemInstance(
        name="concave_box",
        f=f,
        g=g,
        kernel=euclidean_kernel(),
        dimension=dimension,
        known_optimum=optimum,
        known_minimizer=minimizer,
        level_bounded=True,
        sample_radius=box_radius,
        params={"dimension": dimension, "box_radius": box_radius, "l1_weight": l1_weight, "seed": seed},
    )


@register_instance(
    "smooth_toy",
    "1-D strongly convex f = a/2 x^2 + log cosh(x - shift), g = 0, Euclidean kernel.",
    a=1.0,
    shift=1.0,
)
def smooth_toy(a: float, shift: float) -> ProblemInstance:
    f = LogCoshQuadratic(a, shift)
    root = optimize.brentq(lambda t: a * t + np.tanh(t - shift), -1.0 / a, 1.0 / a, xtol=1e-15)
    minimizer = np.array([root])
    return ProblemInstance(
        name="smooth_toy",
        f=f,
        g=ZeroFunction(),
        kernel=euclidean_kernel(),
        dimension=1,
        known_optimum=f.value(minimizer),
        known_minimizer=minimizer,
        level_bounded=True,
        params={"a": a, "shift": shift},
    )
