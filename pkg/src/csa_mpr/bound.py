"""Converse bound on achievable (rate, load) pairs over the K-MPR channel.

No scheme of rate R can have a load threshold above the unique positive root
G of

    G / K = 1 - (1/K) exp(-G/R) sum_{k=0}^{K-1} (K-k)/k! (G/R)^k,

which follows from an area-matching argument: successful decoding requires
the areas under the two transfer functions to satisfy A_g + A_f <= 1, the
user-side area always equals the rate, and the slice-side area has the
closed form implemented in :func:`slice_transfer_area`.

With x = G/(K R), the fixed-point equation reads R x = m(x) where
m(x) = E[min(N, K)]/K for N ~ Poisson(Kx), the mean decodable fraction of a
slice.  m is 0 at 0, strictly increasing, strictly concave, has unit slope
at 0 and tends to 1, which gives existence/uniqueness of the root and
monotonicity of the normalized bound in K; those structural facts are
checked numerically by :func:`verify_bound_properties`.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .de_core import Ensemble, slice_transfer, user_transfer
from .errors import ConvergenceError, ValidationError

QUAD_TOL = 1e-10


def _capped_mean_deficit(k_mpr: int, x):
    """1 - E[min(N, K)]/K for N ~ Poisson(K x).

    Equals (1/K) exp(-Kx) sum_{k<K} (K-k)/k! (Kx)^k.  Kept as the primitive
    because it stays accurate (a positive sum, no cancellation) where the
    capped mean itself saturates at 1 beyond double precision.
    """
    lam = np.asarray(x, dtype=float) * k_mpr
    with np.errstate(under="ignore"):
        term = np.exp(-lam)  # Poisson pmf at 0
        total = k_mpr * term
        for k in range(1, k_mpr):
            term = term * lam / k
            total += (k_mpr - k) * term
    out = total / k_mpr
    if np.ndim(x) == 0:
        return float(out)
    return out


def poisson_capped_mean(k_mpr: int, x):
    """E[min(N, K)]/K for N ~ Poisson(K x): mean decodable slice fraction.

    This is the right-hand side of the normalized fixed-point equation whose
    root defines the converse bound.
    """
    if not (isinstance(k_mpr, (int, np.integer)) and k_mpr >= 1):
        raise ValidationError(f"reception capability must be an integer >= 1, got {k_mpr}")
    arr = np.asarray(x, dtype=float)
    if (arr < 0).any():
        raise ValidationError("x must be >= 0")
    out = 1.0 - _capped_mean_deficit(k_mpr, arr)
    if np.ndim(x) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class BoundQuery:
    """Converse-bound query: rate, reception capability, root tolerance."""

    rate: float
    k_mpr: int
    tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.rate <= 1:
            raise ValidationError(f"rate must be in (0, 1], got {self.rate}")
        if not (isinstance(self.k_mpr, (int, np.integer)) and self.k_mpr >= 1):
            raise ValidationError(
                f"reception capability must be an integer >= 1, got {self.k_mpr}"
            )
        if self.tol <= 0:
            raise ValidationError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class BoundResult:
    """Solved converse bound.

    ``degenerate`` marks the rate-1 corner case: unit slope at the origin
    plus strict concavity leave only the trivial root, so the bound is 0.
    """

    load_bound: float
    normalized: float
    x_root: float
    residual: float
    k_mpr: int
    rate: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "G_bound": self.load_bound,
            "normalized": self.normalized,
            "x_root": self.x_root,
            "residual": self.residual,
            "K": self.k_mpr,
            "R": self.rate,
            "degenerate": self.degenerate,
        }


def converse_bound(query: BoundQuery) -> BoundResult:
    """Solve R x = poisson_capped_mean(K, x) for its unique positive root.

    Bisection on the residual; concavity guarantees exactly one sign change
    beyond the root, and the initial upper end grows geometrically until the
    residual turns negative.  The residual is evaluated as
    (1 - R x) - deficit(x) so the root stays resolvable even when the bound
    sits within a few ulps of its ceiling K.
    """
    rate, k_mpr = query.rate, query.k_mpr
    if rate == 1.0:
        return BoundResult(
            load_bound=0.0,
            normalized=0.0,
            x_root=0.0,
            residual=0.0,
            k_mpr=k_mpr,
            rate=rate,
            degenerate=True,
        )

    def residual(x: float) -> float:
        return (1.0 - rate * x) - _capped_mean_deficit(k_mpr, x)

    hi = 1.0
    for _ in range(200):
        if residual(hi) < 0:
            break
        hi *= 2.0
    else:  # pragma: no cover - residual < 0 is certain once R*x > 1
        raise ConvergenceError("failed to bracket the converse-bound root")
    lo = 0.0
    while hi - lo > query.tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if residual(mid) > 0:
            lo = mid
        else:
            hi = mid
    x_root = 0.5 * (lo + hi)
    return BoundResult(
        load_bound=x_root * k_mpr * rate,
        normalized=x_root * rate,
        x_root=x_root,
        residual=rate * x_root - poisson_capped_mean(k_mpr, x_root),
        k_mpr=k_mpr,
        rate=rate,
    )


def user_transfer_area(ensemble: Ensemble) -> float:
    """Integral of the user transfer function over [0, 1] by adaptive quadrature.

    Exists to verify, not assume, that the area equals the ensemble rate for
    every valid ensemble.
    """
    value, abserr = integrate.quad(
        lambda x: user_transfer(ensemble, x), 0.0, 1.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL
    )
    if abserr > 1e-9:
        raise ConvergenceError(f"quadrature error estimate {abserr:.2e} exceeds 1e-9")
    return value


def slice_transfer_area(k_mpr: int, load: float, rate: float) -> float:
    """Closed-form integral of the slice transfer function over [0, 1].

    Repeated integration by parts of the Poisson tail gives

        A_f = 1 - (R/G) (K - exp(-G/R) sum_{k<K} (K-k)/k! (G/R)^k).
    """
    if load <= 0:
        raise ValidationError(f"load must be positive, got {load}")
    if not 0 < rate <= 1:
        raise ValidationError(f"rate must be in (0, 1], got {rate}")
    deficit = _capped_mean_deficit(k_mpr, load / (k_mpr * rate))  # exp sum / K
    return 1.0 - (rate / load) * k_mpr * (1.0 - deficit)


class AreaCondition(NamedTuple):
    achievable: bool
    slack: float


def area_condition(ensemble: Ensemble, k_mpr: int, load: float) -> AreaCondition:
    """Necessary condition for decoding success at the given load.

    The transfer-function areas must fit: rate + slice area <= 1.  Returns
    the verdict together with the slack 1 - R - A_f (negative = violated).
    """
    slack = 1.0 - ensemble.rate - slice_transfer_area(k_mpr, load, ensemble.rate)
    return AreaCondition(achievable=slack >= 0.0, slack=slack)


@dataclass(frozen=True)
class BoundPropertyReport:
    """Numeric verdicts for the structural facts behind the bound.

    All checks run on the deficit 1 - m(x) rather than on m itself: near
    saturation m rounds to 1.0 in doubles and strict monotonicity would be
    falsified by representation, not by mathematics.
    """

    k_mpr: int
    increasing: bool
    concave: bool
    gap_positive: bool
    unit_slope_at_zero: bool
    slope_estimate: float
    failures: tuple[str, ...]

    @property
    def all_ok(self) -> bool:
        return not self.failures


def verify_bound_properties(
    k_mpr: int, grid: np.ndarray | None = None
) -> BoundPropertyReport:
    """Check increase, concavity, unit slope at 0, and the K -> K+1 gap.

    ``grid`` must be strictly increasing points in (0, x_max]; defaults to
    1000 points on (0, 10].  Failures are reported, not raised.
    """
    if grid is None:
        grid = np.linspace(0.01, 10.0, 1000)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 3:
        raise ValidationError("grid must be a 1-D array with at least 3 points")
    if (grid <= 0).any() or (np.diff(grid) <= 0).any():
        raise ValidationError("grid must be strictly increasing and positive")

    failures = []
    deficit = _capped_mean_deficit(k_mpr, grid)

    increasing = bool((np.diff(deficit) < 0).all())
    if not increasing:
        failures.append("monotone increase fails on the grid")

    # Concave iff the chord slopes of m decrease, i.e. slopes of the deficit increase.
    slopes = np.diff(deficit) / np.diff(grid)
    concave = bool((np.diff(slopes) > 0).all())
    if not concave:
        failures.append("concavity fails on the grid")

    gap = deficit - _capped_mean_deficit(k_mpr + 1, grid)
    gap_positive = bool((gap > 0).all())
    if not gap_positive:
        failures.append("capacity gap to K+1 not strictly positive on the grid")

    h = 1e-6
    slope_estimate = poisson_capped_mean(k_mpr, h) / h
    unit_slope = bool(abs(slope_estimate - 1.0) < 1e-4)
    if not unit_slope:
        failures.append(f"slope at zero is {slope_estimate!r}, expected 1")

    return BoundPropertyReport(
        k_mpr=k_mpr,
        increasing=increasing,
        concave=concave,
        gap_positive=gap_positive,
        unit_slope_at_zero=unit_slope,
        slope_estimate=slope_estimate,
        failures=tuple(failures),
    )


def slice_transfer_area_quadrature(k_mpr: int, load: float, rate: float) -> float:
    """Quadrature cross-check for :func:`slice_transfer_area` (test oracle)."""
    value, abserr = integrate.quad(
        lambda x: slice_transfer(k_mpr, load, rate, x),
        0.0,
        1.0,
        epsabs=QUAD_TOL,
        epsrel=QUAD_TOL,
    )
    if abserr > 1e-9:
        raise ConvergenceError(f"quadrature error estimate {abserr:.2e} exceeds 1e-9")
    return value
