"""Density evolution for spatially-coupled repetition-code contention.

Users are arranged on a terminated chain of positions 1..L; a user at
position i spreads its d replicas over w consecutive slot positions starting
at i, so slot positions near the chain ends see fewer contributors, decode
first, and seed a recovery wave that travels inward.  The coupled threshold
is the largest nominal (interior) load at which the wave crosses the whole
chain.

Two placements are supported: the default deterministic one (replica r goes
to slot position i + (r mod w); with w = d that is one replica per
consecutive position) and a randomized one where each replica lands
uniformly in the w-window, in which case the recursion runs on per-position
averages.
"""

from dataclasses import dataclass, replace

import numpy as np

from .de_core import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITER,
    DEFAULT_STALL_DELTA,
    bracket_and_bisect,
    poisson_tail,
)
from .errors import ValidationError


@dataclass(frozen=True)
class CoupledConfig:
    """Chain geometry, channel capability, and convergence constants.

    ``degree`` is the d of the per-user (d, 1) repetition code; ``width``
    defaults to d (one replica in each of d consecutive slot positions).
    """

    degree: int
    chain_length: int
    k_mpr: int
    width: int | None = None
    randomized: bool = False
    epsilon: float = DEFAULT_EPSILON
    stall_delta: float = DEFAULT_STALL_DELTA
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.degree < 2:
            raise ValidationError(f"replica degree must be >= 2, got {self.degree}")
        if self.chain_length < 1:
            raise ValidationError(f"chain length must be >= 1, got {self.chain_length}")
        if self.k_mpr < 1:
            raise ValidationError(f"reception capability must be >= 1, got {self.k_mpr}")
        if self.width is None:
            object.__setattr__(self, "width", self.degree)
        if self.width < 1:
            raise ValidationError(f"coupling width must be >= 1, got {self.width}")
        if not self.randomized and self.width > self.degree:
            raise ValidationError(
                "deterministic placement cannot span more positions than replicas; "
                "use randomized=True for width > degree"
            )

    @property
    def rate(self) -> float:
        return 1.0 / self.degree

    @property
    def n_slot_positions(self) -> int:
        return self.chain_length + self.width - 1


@dataclass(frozen=True)
class ChainStructure:
    """Static coupling graph: who contributes to each slot position.

    ``contributors[j]`` lists the user positions with a replica at slot
    position j (repeated when several replicas of the same user share the
    position).  ``degree_factor[j]`` is the mean slice degree at that
    position divided by the nominal load G; it equals G0/G = d at interior
    positions.
    """

    n_positions: int
    n_slots: int
    offsets: tuple[int, ...] | None
    contributors: tuple[tuple[int, ...], ...]
    degree_factor: np.ndarray


def build_chain(config: CoupledConfig) -> ChainStructure:
    """Lay out replica placements and per-position effective loads."""
    L, d, w = config.chain_length, config.degree, config.width
    n_slots = L + w - 1
    contributors: list[list[int]] = [[] for _ in range(n_slots)]
    if config.randomized:
        offsets = None
        for i in range(L):
            for j in range(i, i + w):
                contributors[j].append(i)
        counts = np.array([len(c) for c in contributors], dtype=float)
        degree_factor = counts * d / w
    else:
        offsets = tuple(r % w for r in range(d))
        for i in range(L):
            for off in offsets:
                contributors[i + off].append(i)
        counts = np.array([len(c) for c in contributors], dtype=float)
        degree_factor = counts
    return ChainStructure(
        n_positions=L,
        n_slots=n_slots,
        offsets=offsets,
        contributors=tuple(tuple(sorted(c)) for c in contributors),
        degree_factor=degree_factor,
    )


@dataclass(frozen=True)
class CoupledState:
    """Final iterates of one coupled density-evolution run.

    ``p`` is the per-slot-position unresolved probability after the slice
    step; ``q`` the per-replica extrinsic probabilities (per-position
    averages in randomized mode); ``user_unresolved`` the per-user-position
    residual decoding failure probability.
    """

    p: np.ndarray
    q: np.ndarray
    user_unresolved: np.ndarray
    converged: bool
    iterations: int
    inconclusive: bool = False
    p_profiles: tuple[np.ndarray, ...] | None = None


def coupled_density_evolution(
    config: CoupledConfig, load: float, record_profiles: bool = False
) -> CoupledState:
    """Iterate the coupled recursion at nominal interior load ``load``.

    Slot position j: the surviving-interferer mean is the load-weighted sum
    of incoming extrinsic probabilities, and the slice step keeps an ES
    unresolved iff at least K interferers survive (Poisson tail).  User
    position i: a replica stays extrinsically unknown iff every other
    replica's slot position failed to deliver (repetition-code MAP rule).
    """
    if load <= 0:
        raise ValidationError(f"load must be positive, got {load}")
    L, d, w, K = config.chain_length, config.degree, config.width, config.k_mpr
    S = config.n_slot_positions
    g0 = load * d  # physical load G/R at rate 1/d
    p = np.ones(S)
    profiles: list[np.ndarray] = []
    converged = False
    inconclusive = False
    iterations = 0

    if config.randomized:
        q_bar = np.ones(L)
        for iterations in range(1, config.max_iter + 1):
            s = np.zeros(S)
            for off in range(w):
                s[off : off + L] += q_bar
            s *= g0 / w
            p_new = poisson_tail(s, K)
            p_bar = np.zeros(L)
            for off in range(w):
                p_bar += p_new[off : off + L]
            p_bar /= w
            q_bar = p_bar ** (d - 1)
            user_unresolved = p_bar**d
            if record_profiles:
                profiles.append(p_new.copy())
            delta = float(np.abs(p_new - p).max())
            scale = max(float(p_new.max()), config.epsilon)
            p = p_new
            if float(user_unresolved.max()) < config.epsilon:
                converged = True
                break
            if delta < config.stall_delta * scale:
                break
        else:
            inconclusive = True
        q = q_bar
    else:
        offsets = tuple(r % w for r in range(d))
        q = np.ones((L, d))
        edge_p = np.empty((L, d))
        for iterations in range(1, config.max_iter + 1):
            s = np.zeros(S)
            for r, off in enumerate(offsets):
                s[off : off + L] += q[:, r]
            s *= g0 / d
            p_new = poisson_tail(s, K)
            for r, off in enumerate(offsets):
                edge_p[:, r] = p_new[off : off + L]
            for r in range(d):
                prod = np.ones(L)
                for r2 in range(d):
                    if r2 != r:
                        prod = prod * edge_p[:, r2]
                q[:, r] = prod
            user_unresolved = np.prod(edge_p, axis=1)
            if record_profiles:
                profiles.append(p_new.copy())
            delta = float(np.abs(p_new - p).max())
            scale = max(float(p_new.max()), config.epsilon)
            p = p_new
            if float(user_unresolved.max()) < config.epsilon:
                converged = True
                break
            if delta < config.stall_delta * scale:
                break
        else:
            inconclusive = True

    return CoupledState(
        p=p,
        q=q,
        user_unresolved=user_unresolved,
        converged=converged,
        iterations=iterations,
        inconclusive=inconclusive,
        p_profiles=tuple(profiles) if record_profiles else None,
    )


@dataclass(frozen=True)
class ChainThreshold:
    """Threshold at one chain length, raw and rate-loss corrected."""

    chain_length: int
    g_star: float
    g_star_effective: float
    bracket: tuple[float, float]


@dataclass(frozen=True)
class CoupledThresholdResult:
    """Thresholds over a ladder of chain lengths plus a saturation diagnostic.

    ``g_star`` is the raw (nominal interior) threshold at the largest chain
    length; ``saturation_increment`` is the change between the two largest
    lengths, small when the threshold has saturated in L.
    """

    degree: int
    width: int
    k_mpr: int
    randomized: bool
    thresholds: tuple[ChainThreshold, ...]
    saturation_increment: float | None

    @property
    def g_star(self) -> float:
        return self.thresholds[-1].g_star

    @property
    def normalized(self) -> float:
        return self.g_star / self.k_mpr

    def to_dict(self) -> dict:
        return {
            "d": self.degree,
            "w": self.width,
            "K": self.k_mpr,
            "randomized": self.randomized,
            "G_star": self.g_star,
            "normalized": self.normalized,
            "per_length": [
                {
                    "L": t.chain_length,
                    "G_star": t.g_star,
                    "G_star_effective": t.g_star_effective,
                    "bracket": list(t.bracket),
                }
                for t in self.thresholds
            ],
            "saturation_increment": self.saturation_increment,
        }


def coupled_threshold(
    config: CoupledConfig,
    tol: float = 1e-4,
    chain_lengths: tuple[int, ...] = (50, 100, 200, 400),
    bracket_hint: tuple[float, float] | None = None,
) -> CoupledThresholdResult:
    """Bisect the coupled threshold over a ladder of chain lengths.

    Reports, per length, the raw threshold (nominal interior load, the
    quantity that saturates to the asymptotic value) and the effective
    threshold G * L / (L + w - 1), which accounts for the underloaded
    termination positions.  ``config.chain_length`` is ignored in favor of
    ``chain_lengths``.
    """
    if not chain_lengths:
        raise ValidationError("need at least one chain length")
    results = []
    hint = bracket_hint
    for L in sorted(chain_lengths):
        cfg = replace(config, chain_length=L)

        def converges(load: float, cfg=cfg) -> bool:
            return coupled_density_evolution(cfg, load).converged

        lo, hi, _ = bracket_and_bisect(
            converges, tol=tol, cap=4.0 * config.k_mpr, hint=hint
        )
        g_star = 0.0 if lo == 0.0 else 0.5 * (lo + hi)
        results.append(
            ChainThreshold(
                chain_length=L,
                g_star=g_star,
                g_star_effective=g_star * L / (L + config.width - 1),
                bracket=(lo, hi),
            )
        )
        if g_star > 0:
            # raw thresholds drift only slightly across lengths; reuse as a hint
            hint = (0.95 * lo, min(1.05 * hi, 4.0 * config.k_mpr))
    increment = None
    if len(results) >= 2:
        increment = abs(results[-1].g_star - results[-2].g_star)
    return CoupledThresholdResult(
        degree=config.degree,
        width=config.width,
        k_mpr=config.k_mpr,
        randomized=config.randomized,
        thresholds=tuple(results),
        saturation_increment=increment,
    )
