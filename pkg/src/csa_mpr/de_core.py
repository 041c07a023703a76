"""Density evolution for coded slotted ALOHA over a K-multi-packet-reception channel.

Tracks the average probability that an encoded segment (ES) remains
unrecovered through iterative interference cancellation, in the asymptotic
regime where users and slots grow jointly at a fixed load.  One iteration is
the composition of two transfer functions:

* ``slice_transfer`` -- probability an ES survives the slice step, where a
  slice delivers all its ESs iff it currently holds at most K of them.  With
  Poisson slice degrees this is the upper tail P(Poisson(x * G/R) >= K).
* ``user_transfer`` -- probability an ES is still unknown after per-user MAP
  erasure decoding, expressed through the codes' un-normalized information
  functions.

The load threshold is the largest load G at which the recursion
q <- user_transfer(slice_transfer(q)), started from q = 1, collapses to zero.
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import stats

from .codes import CodeSpec, info_function, repetition_code, validate_code
from .errors import BracketError, ValidationError

PROB_SUM_TOL = 1e-12
DOMAIN_TOL = 1e-9

# Convergence constants: the success/failure separation must stay sharp when
# bisection probes loads within ~1e-5 of the threshold.
DEFAULT_EPSILON = 1e-12
DEFAULT_STALL_DELTA = 1e-14
DEFAULT_MAX_ITER = 100_000


# ---------------------------------------------------------------------------
# Poisson slice-degree model
# ---------------------------------------------------------------------------

def slice_degree_pmf(g0: float, i: int) -> float:
    """P(slice degree = i) at physical load ``g0`` ESs per slice (Poisson)."""
    if g0 <= 0:
        raise ValidationError(f"physical load must be positive, got {g0}")
    if i < 0:
        raise ValidationError(f"degree must be >= 0, got {i}")
    return g0**i * math.exp(-g0) / math.factorial(i)


def edge_degree_pmf(g0: float, i: int) -> float:
    """Probability that a given ES sits in a slice of degree i (edge view).

    Defined for i >= 1 only: an ES always contributes one unit of degree.
    """
    if i < 1:
        raise ValidationError(f"edge-perspective degree must be >= 1, got {i}")
    return slice_degree_pmf(g0, i - 1)


def poisson_tail(mean, k_mpr: int):
    """Upper tail P(Poisson(mean) >= k_mpr), vectorized over ``mean``.

    Computed as 1 - exp(-m) * sum_{k<K} m^k / k!; exact 0 at mean = 0.
    """
    m = np.asarray(mean, dtype=float)
    with np.errstate(under="ignore"):
        term = np.exp(-m)
        total = term.copy()
        for k in range(1, k_mpr):
            term = term * m / k
            total += term
    out = np.clip(1.0 - total, 0.0, 1.0)
    if np.ndim(mean) == 0:
        return float(out)
    return out


def _poisson_tail_scalar(mean: float, k_mpr: int) -> float:
    # scalar fast path for the iteration loop
    if mean <= 0.0:
        return 0.0
    if mean > 745.0:
        return 1.0
    term = math.exp(-mean)
    total = term
    for k in range(1, k_mpr):
        term *= mean / k
        total += term
    return min(1.0, max(0.0, 1.0 - total))


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Ensemble:
    """A set of segment-level codes with a selection PMF.

    All codes must share the same dimension k (the per-user number of
    information segments); the scheme's rate R = k / mean(n) is only coherent
    under that restriction, so mixed-k ensembles are rejected.
    """

    codes: tuple[CodeSpec, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        codes = tuple(self.codes)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "probs", probs)
        if not codes:
            raise ValidationError("ensemble needs at least one code")
        if len(codes) != len(probs):
            raise ValidationError(
                f"{len(codes)} codes but {len(probs)} probabilities"
            )
        if any(p < 0 for p in probs):
            raise ValidationError("selection probabilities must be >= 0")
        if abs(sum(probs) - 1.0) > PROB_SUM_TOL:
            raise ValidationError(f"selection probabilities sum to {sum(probs)!r}, not 1")
        for idx, code in enumerate(codes):
            problems = validate_code(code)
            if problems:
                raise ValidationError(f"code {idx} invalid: {'; '.join(problems)}")
        if len({code.k for code in codes}) != 1:
            raise ValidationError("all codes in an ensemble must share the same k")

    @property
    def n_info_segments(self) -> int:
        """Common code dimension k (segments per packet)."""
        return self.codes[0].k

    @cached_property
    def mean_length(self) -> float:
        """Average number of encoded segments per user."""
        return sum(p * c.n for p, c in zip(self.probs, self.codes))

    @cached_property
    def rate(self) -> float:
        """Fraction of innovative segments among transmitted segments."""
        return self.n_info_segments / self.mean_length

    @cached_property
    def edge_probs(self) -> tuple[float, ...]:
        """Probability that a uniformly chosen ES came from each code."""
        nbar = self.mean_length
        return tuple(p * c.n / nbar for p, c in zip(self.probs, self.codes))

    @cached_property
    def _transfer_terms(self) -> tuple[tuple[float, int, tuple[tuple[int, int], ...]], ...]:
        """Per-code (weight, n-1, nonzero (t, coeff)) for the user transfer function."""
        terms = []
        for lam, code in zip(self.edge_probs, self.codes):
            e = info_function(code).values
            n = code.n
            coeffs = []
            for t in range(n):
                c = (n - t) * e[n - t] - (t + 1) * e[n - 1 - t]
                if c:
                    coeffs.append((t, c))
            terms.append((lam / n, n - 1, tuple(coeffs)))
        return tuple(terms)

    def _user_transfer_scalar(self, x: float) -> float:
        total = 0.0
        for weight, m, coeffs in self._transfer_terms:
            y = 1.0 - x
            acc = 0.0
            for t, c in coeffs:
                acc += c * x**t * y ** (m - t)
            total += weight * acc
        return min(1.0, max(0.0, total))

    def to_dict(self) -> dict:
        return {"codes": [c.to_dict() for c in self.codes], "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, data: dict) -> "Ensemble":
        try:
            codes = tuple(CodeSpec.from_dict(c) for c in data["codes"])
            probs = tuple(data["probs"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed ensemble spec: {exc}") from exc
        return cls(codes=codes, probs=probs)


def repetition_ensemble(n: int) -> Ensemble:
    """Ensemble with a single (n, 1) repetition code (the IRSA special case)."""
    return Ensemble(codes=(repetition_code(n),), probs=(1.0,))


# ---------------------------------------------------------------------------
# Transfer functions
# ---------------------------------------------------------------------------

def _check_unit_interval(x: np.ndarray, name: str) -> np.ndarray:
    if (x < -DOMAIN_TOL).any() or (x > 1 + DOMAIN_TOL).any():
        raise ValidationError(f"{name} must lie in [0, 1]")
    return np.clip(x, 0.0, 1.0)


def user_transfer(ensemble: Ensemble, x):
    """Average probability that an ES stays unknown after MAP erasure decoding.

    ``x`` is the probability that each of the user's other ESs is still
    unresolved after the slice step.  Evaluated in the Bernstein-type form

        sum_h lambda_h / n_h * sum_t x^t (1-x)^(n_h-1-t)
            * [(n_h-t) e_{n_h-t} - (t+1) e_{n_h-1-t}]

    with e the un-normalized information function of code h.  For an (n, 1)
    repetition code this collapses to x^(n-1).
    """
    arr = _check_unit_interval(np.asarray(x, dtype=float), "x")
    total = np.zeros_like(arr)
    for weight, m, coeffs in ensemble._transfer_terms:
        acc = np.zeros_like(arr)
        y = 1.0 - arr
        for t, c in coeffs:
            acc += c * arr**t * y ** (m - t)
        total += weight * acc
    total = np.clip(total, 0.0, 1.0)
    if np.ndim(x) == 0:
        return float(total)
    return total


def _check_channel_params(k_mpr: int, load: float, rate: float) -> None:
    if not (isinstance(k_mpr, (int, np.integer)) and k_mpr >= 1):
        raise ValidationError(f"reception capability must be an integer >= 1, got {k_mpr}")
    if load <= 0:
        raise ValidationError(f"load must be positive, got {load}")
    if not 0 < rate <= 1:
        raise ValidationError(f"rate must be in (0, 1], got {rate}")


def slice_transfer(k_mpr: int, load: float, rate: float, x):
    """Probability an ES stays unresolved after the slice step.

    With unresolved fraction ``x``, the interfering ESs in a slice are
    Poisson with mean x * load / rate, and the slice fails to deliver the ES
    iff at least ``k_mpr`` interferers remain:

        f(x) = 1 - exp(-x G/R) * sum_{k=0}^{K-1} (x G/R)^k / k!

    Exactly 0 at x = 0.
    """
    _check_channel_params(k_mpr, load, rate)
    arr = _check_unit_interval(np.asarray(x, dtype=float), "x")
    out = poisson_tail(arr * (load / rate), k_mpr)
    if np.ndim(x) == 0:
        return float(out)
    return out


def slice_transfer_series(
    k_mpr: int, load: float, rate: float, x: float, i_max: int | None = None
) -> float:
    """Slice-step survival probability by direct summation over slice degrees.

    Independent oracle for :func:`slice_transfer`: averages, over the Poisson
    edge-perspective degree distribution, the probability that fewer than
    ``k_mpr`` - 1 of the other degree-1 contributions were cancelled.  The
    truncation point is chosen so the neglected tail mass is below 1e-12
    (a warning-level check if ``i_max`` is supplied explicitly).
    """
    _check_channel_params(k_mpr, load, rate)
    if not 0 <= x <= 1:
        raise ValidationError(f"x must lie in [0, 1], got {x}")
    g0 = load / rate
    if i_max is None:
        i_max = 2 * k_mpr + int(math.ceil(g0 + 40.0 * math.sqrt(g0) + 40.0))
    tail = stats.poisson.sf(i_max - 1, g0)
    if tail >= 1e-12:
        import warnings

        warnings.warn(
            f"degree truncation at {i_max} leaves tail mass {tail:.3e}",
            stacklevel=2,
        )
    total = 0.0
    for i in range(1, i_max + 1):
        rho_i = stats.poisson.pmf(i - 1, g0)
        # fewer than min(K, i) of the i-1 other ESs may survive cancellation
        p_i = 1.0 - stats.binom.cdf(min(k_mpr, i) - 1, i - 1, x)
        total += rho_i * p_i
    return total


# ---------------------------------------------------------------------------
# Recursion and threshold search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DEParams:
    """Channel/load configuration plus convergence constants for the recursion.

    Success: the unresolved fraction drops below ``epsilon``.  Failure: the
    per-step progress stalls relative to the current value,
    |q_l - q_{l-1}| < stall_delta * q_l, which detects a positive fixed point
    without misreading slow geometric descent (contraction rate close to 1
    near slope-determined thresholds) as one.
    """

    k_mpr: int
    load: float
    max_iter: int = DEFAULT_MAX_ITER
    epsilon: float = DEFAULT_EPSILON
    stall_delta: float = DEFAULT_STALL_DELTA

    def __post_init__(self):
        if not (isinstance(self.k_mpr, (int, np.integer)) and self.k_mpr >= 1):
            raise ValidationError(f"reception capability must be an integer >= 1, got {self.k_mpr}")
        if self.load <= 0:
            raise ValidationError(f"load must be positive, got {self.load}")
        if self.epsilon <= 0 or self.stall_delta <= 0:
            raise ValidationError("epsilon and stall_delta must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")


@dataclass(frozen=True)
class DETrace:
    """Iterate sequence of one density-evolution run.

    ``q_sequence[0]`` is the initial state 1; ``q_sequence`` is
    non-increasing.  ``converged`` means the unresolved probability dropped
    below epsilon; ``inconclusive`` flags runs cut off by the iteration cap
    while still descending.
    """

    q_sequence: np.ndarray
    p_sequence: np.ndarray
    converged: bool
    iterations: int
    inconclusive: bool = False


def density_evolution(ensemble: Ensemble, params: DEParams) -> DETrace:
    """Run the two-step recursion q <- user_transfer(slice_transfer(q)) from q = 1."""
    g0 = params.load / ensemble.rate
    q = 1.0
    q_seq = [1.0]
    p_seq = []
    converged = False
    inconclusive = False
    for _ in range(params.max_iter):
        p = _poisson_tail_scalar(q * g0, params.k_mpr)
        q_next = ensemble._user_transfer_scalar(p)
        p_seq.append(p)
        q_seq.append(q_next)
        if q_next < params.epsilon:
            converged = True
            break
        if abs(q_next - q) < params.stall_delta * q_next:
            break
        q = q_next
    else:
        inconclusive = True
    return DETrace(
        q_sequence=np.asarray(q_seq),
        p_sequence=np.asarray(p_seq),
        converged=converged,
        iterations=len(p_seq),
        inconclusive=inconclusive,
    )


@dataclass(frozen=True)
class ThresholdResult:
    """Bisection output: threshold estimate with its final bracket."""

    g_star: float
    bracket: tuple[float, float]
    k_mpr: int
    rate: float
    inconclusive: bool = False
    probes: int = 0

    @property
    def normalized(self) -> float:
        return self.g_star / self.k_mpr

    def to_dict(self) -> dict:
        return {
            "G_star": self.g_star,
            "bracket": list(self.bracket),
            "K": self.k_mpr,
            "R": self.rate,
            "normalized": self.normalized,
            "inconclusive": self.inconclusive,
        }


def bracket_and_bisect(
    predicate: Callable[[float], bool],
    tol: float,
    cap: float,
    seed: float | None = None,
    hint: tuple[float, float] | None = None,
) -> tuple[float, float, int]:
    """Locate the success/failure boundary of a monotone predicate.

    ``predicate(g)`` must be True for small g and False beyond the threshold.
    Starting from ``seed`` (default ``tol``), the bracket is grown
    geometrically; an optional ``hint = (lo, hi)`` is used instead when it
    actually brackets.  Returns (lo, hi, probes) with hi - lo <= tol.

    Raises BracketError if no failing point exists below ``cap``.  If even
    the smallest probe fails, returns the degenerate bracket (0, tol).
    """
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    probes = 0

    def check(g: float) -> bool:
        nonlocal probes
        probes += 1
        return predicate(g)

    lo = hi = None
    if hint is not None:
        h_lo, h_hi = hint
        if 0 < h_lo < h_hi and check(h_lo):
            if not check(h_hi):
                lo, hi = h_lo, h_hi
            else:
                lo = h_hi  # hint ceiling still converges; grow from there
    if hi is None:
        g = lo if lo is not None else (seed if seed is not None else tol)
        if lo is None:
            if not check(g):
                return 0.0, tol, probes
            lo = g
        while True:
            g = 2.0 * lo if lo > 0 else tol
            if g > cap:
                raise BracketError(
                    f"no failing load found below cap {cap}; threshold search aborted"
                )
            if check(g):
                lo = g
            else:
                hi = g
                break
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # float resolution exhausted
        if check(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi, probes


def load_threshold(
    ensemble: Ensemble,
    k_mpr: int,
    tol: float = 1e-5,
    max_iter: int = DEFAULT_MAX_ITER,
    epsilon: float = DEFAULT_EPSILON,
    stall_delta: float = DEFAULT_STALL_DELTA,
    bracket_hint: tuple[float, float] | None = None,
) -> ThresholdResult:
    """Largest load at which density evolution drives the unresolved fraction to zero.

    Bisection on the load; runs cut off by the iteration cap count as
    failures (conservative) but are flagged via ``inconclusive``.  The
    normalized threshold is bounded by 1, so the bracket growth cap at
    4 * k_mpr can only trigger for a degenerate ensemble.
    """
    seen_inconclusive = False

    def converges(load: float) -> bool:
        nonlocal seen_inconclusive
        trace = density_evolution(
            ensemble,
            DEParams(
                k_mpr=k_mpr,
                load=load,
                max_iter=max_iter,
                epsilon=epsilon,
                stall_delta=stall_delta,
            ),
        )
        if trace.inconclusive:
            seen_inconclusive = True
        return trace.converged

    lo, hi, probes = bracket_and_bisect(
        converges, tol=tol, cap=4.0 * k_mpr, hint=bracket_hint
    )
    g_star = 0.0 if lo == 0.0 else 0.5 * (lo + hi)
    return ThresholdResult(
        g_star=g_star,
        bracket=(lo, hi),
        k_mpr=k_mpr,
        rate=ensemble.rate,
        inconclusive=seen_inconclusive,
        probes=probes,
    )
