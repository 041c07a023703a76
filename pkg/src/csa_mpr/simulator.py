"""Finite-frame Monte Carlo simulation of the contention protocol.

A frame is M slots of n_s slices each.  Every user draws a code from the
ensemble, transmits its n encoded segments (ESs) in n distinct slices chosen
uniformly at random, and the receiver then alternates two steps until
nothing changes: decode every slice currently holding at most K ESs, and
per user run MAP erasure decoding on whatever coordinates are known,
cancelling each newly determined ES from its slice.

Each ES carries pointers to its siblings, so one decoded ES reveals the
user's full slice set and code; interference cancellation is ideal.
"""

import math
from dataclasses import dataclass
from collections import Counter

import numpy as np

from .codes import CodeSpec, map_recoverable
from .de_core import Ensemble
from .errors import ValidationError


@dataclass(frozen=True)
class SimConfig:
    """One experiment: frame geometry, ensemble, channel, and trial plan."""

    n_users: int
    n_slots: int
    slices_per_slot: int
    ensemble: Ensemble
    k_mpr: int
    seed: int = 0
    trials: int = 1

    def __post_init__(self):
        if self.n_users < 1 or self.n_slots < 1 or self.trials < 1:
            raise ValidationError("n_users, n_slots and trials must all be >= 1")
        if self.slices_per_slot < 1:
            raise ValidationError("slices_per_slot must be >= 1")
        if self.slices_per_slot != self.ensemble.n_info_segments:
            raise ValidationError(
                f"slices_per_slot={self.slices_per_slot} must equal the ensemble's "
                f"segments per packet ({self.ensemble.n_info_segments})"
            )
        if self.k_mpr < 1:
            raise ValidationError("reception capability must be >= 1")
        max_n = max(c.n for c in self.ensemble.codes)
        if max_n > self.n_slices:
            raise ValidationError(
                f"a code needs {max_n} distinct slices but the frame has {self.n_slices}"
            )

    @property
    def n_slices(self) -> int:
        return self.n_slots * self.slices_per_slot

    @property
    def load(self) -> float:
        """Users per slot."""
        return self.n_users / self.n_slots

    @property
    def physical_load(self) -> float:
        """ESs per slice."""
        return self.load / self.ensemble.rate


@dataclass(frozen=True)
class FrameRealization:
    """Concrete assignment of users' ESs to slices.

    ``user_slices[u][r]`` is the slice carrying coordinate r of user u;
    ``slice_occupants`` maps each occupied slice to its (user, coordinate)
    pairs.  The two views are duals of each other.
    """

    code_indices: np.ndarray
    user_slices: tuple[tuple[int, ...], ...]
    slice_occupants: dict[int, list[tuple[int, int]]]


def _sample_distinct_rows(rng: np.random.Generator, rows: int, k: int, limit: int) -> np.ndarray:
    """rows x k array, each row k distinct values from range(limit)."""
    out = rng.integers(0, limit, size=(rows, k))
    while True:
        dup = (np.sort(out, axis=1)[:, 1:] == np.sort(out, axis=1)[:, :-1]).any(axis=1)
        if not dup.any():
            return out
        out[dup] = rng.integers(0, limit, size=(int(dup.sum()), k))


def generate_frame(config: SimConfig, rng: np.random.Generator) -> FrameRealization:
    """Draw one frame: per-user code choice and distinct slice selections.

    Deterministic given the generator state.  Slices are drawn without
    replacement: a code of minimum distance >= 2 transmitted twice into one
    slice would collide with itself forever.
    """
    ensemble = config.ensemble
    code_indices = rng.choice(len(ensemble.codes), size=config.n_users, p=ensemble.probs)
    user_slices: list[tuple[int, ...]] = [()] * config.n_users
    occupants: dict[int, list[tuple[int, int]]] = {}
    for h, code in enumerate(ensemble.codes):
        users = np.flatnonzero(code_indices == h)
        if users.size == 0:
            continue
        picks = _sample_distinct_rows(rng, users.size, code.n, config.n_slices)
        for u, row in zip(users, picks):
            user_slices[u] = tuple(int(s) for s in row)
            for coord, s in enumerate(user_slices[u]):
                occupants.setdefault(s, []).append((int(u), coord))
    return FrameRealization(
        code_indices=code_indices,
        user_slices=tuple(user_slices),
        slice_occupants=occupants,
    )


@dataclass
class DecodeResult:
    """Outcome of iterative decoding on one frame."""

    recovered_users: np.ndarray  # bool mask, user fully determined
    known_counts: np.ndarray  # recovered ES coordinates per user
    iteration_recoveries: list[int]  # new ESs per iteration
    initial_degree_hist: np.ndarray  # slice count per starting degree
    iterations: int

    @property
    def packet_loss_rate(self) -> float:
        return 1.0 - self.recovered_users.mean()

    def segment_loss_rate(self, frame: FrameRealization) -> float:
        total = sum(len(s) for s in frame.user_slices)
        return 1.0 - self.known_counts.sum() / total


def _initial_degree_hist(frame: FrameRealization, n_slices: int) -> np.ndarray:
    counts = Counter(len(v) for v in frame.slice_occupants.values())
    counts[0] = n_slices - len(frame.slice_occupants)
    hist = np.zeros(max(counts) + 1, dtype=np.int64)
    for deg, cnt in counts.items():
        hist[deg] = cnt
    return hist


def sic_decode(
    frame: FrameRealization,
    ensemble: Ensemble,
    k_mpr: int,
    n_slices: int | None = None,
    shuffle_rng: np.random.Generator | None = None,
) -> DecodeResult:
    """Run the two-step recovery iteration to its fixpoint.

    Step 1 recovers every slice whose current degree is at most K; step 2
    runs the MAP closure per touched user and cancels newly determined ESs
    from their slices.  The result is order-independent; ``shuffle_rng``
    randomizes the processing order within each step (diagnostic hook for
    exactly that property).
    """
    n_users = len(frame.user_slices)
    slices = {s: set(occ) for s, occ in frame.slice_occupants.items()}
    known: list[set[int]] = [set() for _ in range(n_users)]
    if n_slices is None:
        n_slices = max(slices) + 1 if slices else 0
    hist = _initial_degree_hist(frame, n_slices)

    candidates = set(slices)
    iteration_recoveries: list[int] = []
    while True:
        new_es = 0
        # step 1: K-MPR slice decoding
        touched_users: dict[int, set[int]] = {}
        scan = sorted(candidates)
        if shuffle_rng is not None:
            shuffle_rng.shuffle(scan)
        candidates = set()
        for s in scan:
            occ = slices.get(s)
            if not occ or len(occ) > k_mpr:
                continue
            for u, coord in occ:
                touched_users.setdefault(u, set()).add(coord)
                new_es += 1
            del slices[s]
        # step 2: per-user MAP closure + interference cancellation
        users = sorted(touched_users)
        if shuffle_rng is not None:
            shuffle_rng.shuffle(users)
        for u in users:
            known[u] |= touched_users[u]
            code = ensemble.codes[frame.code_indices[u]]
            derived = map_recoverable(code, known[u])
            for coord in derived:
                s = frame.user_slices[u][coord]
                occ = slices.get(s)
                if occ is None:
                    continue
                occ.discard((u, coord))
                candidates.add(s)
                if not occ:
                    del slices[s]
            known[u] |= derived
            new_es += len(derived)
        if new_es == 0:
            break
        iteration_recoveries.append(new_es)

    known_counts = np.array([len(k) for k in known], dtype=np.int64)
    full = np.array(
        [len(k) == len(frame.user_slices[u]) for u, k in enumerate(known)], dtype=bool
    )
    return DecodeResult(
        recovered_users=full,
        known_counts=known_counts,
        iteration_recoveries=iteration_recoveries,
        initial_degree_hist=hist,
        iterations=len(iteration_recoveries),
    )


@dataclass(frozen=True)
class SimResult:
    """Aggregated trial statistics with normal-approximation 95% intervals."""

    config: SimConfig
    packet_loss_rate: float
    plr_ci: tuple[float, float]
    segment_loss_rate: float
    throughput: float
    per_trial_plr: np.ndarray
    iteration_recoveries: np.ndarray
    degree_histogram: np.ndarray

    def to_dict(self) -> dict:
        return {
            "G": self.config.load,
            "K": self.config.k_mpr,
            "M": self.config.n_slots,
            "trials": self.config.trials,
            "PLR": self.packet_loss_rate,
            "PLR_ci_lo": self.plr_ci[0],
            "PLR_ci_hi": self.plr_ci[1],
            "segment_loss_rate": self.segment_loss_rate,
            "throughput": self.throughput,
        }


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial; splittable and order-independent."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))


def run_trial(config: SimConfig, trial: int) -> DecodeResult:
    rng = trial_rng(config.seed, trial)
    frame = generate_frame(config, rng)
    return sic_decode(frame, config.ensemble, config.k_mpr, n_slices=config.n_slices)


def run_trials(config: SimConfig) -> SimResult:
    """Run independent seeded frames and aggregate loss statistics.

    Per-trial seeds derive from the master seed by counter, so the result is
    reproducible and independent of execution order.
    """
    plrs = np.empty(config.trials)
    slrs = np.empty(config.trials)
    recovered_total = 0
    iter_recoveries: list[np.ndarray] = []
    hist_total = np.zeros(1, dtype=np.int64)
    for t in range(config.trials):
        rng = trial_rng(config.seed, t)
        frame = generate_frame(config, rng)
        result = sic_decode(frame, config.ensemble, config.k_mpr, n_slices=config.n_slices)
        plrs[t] = result.packet_loss_rate
        slrs[t] = result.segment_loss_rate(frame)
        recovered_total += int(result.recovered_users.sum())
        iter_recoveries.append(np.asarray(result.iteration_recoveries, dtype=np.int64))
        if result.initial_degree_hist.size > hist_total.size:
            grown = np.zeros(result.initial_degree_hist.size, dtype=np.int64)
            grown[: hist_total.size] = hist_total
            hist_total = grown
        hist_total[: result.initial_degree_hist.size] += result.initial_degree_hist

    mean_plr = float(plrs.mean())
    if config.trials > 1:
        half = 1.96 * float(plrs.std(ddof=1)) / math.sqrt(config.trials)
    else:
        half = 0.0
    max_iters = max((len(r) for r in iter_recoveries), default=0)
    iter_sum = np.zeros(max_iters, dtype=np.int64)
    for r in iter_recoveries:
        iter_sum[: len(r)] += r
    return SimResult(
        config=config,
        packet_loss_rate=mean_plr,
        plr_ci=(max(0.0, mean_plr - half), min(1.0, mean_plr + half)),
        segment_loss_rate=float(slrs.mean()),
        throughput=recovered_total / (config.trials * config.n_slots),
        per_trial_plr=plrs,
        iteration_recoveries=iter_sum,
        degree_histogram=hist_total,
    )
