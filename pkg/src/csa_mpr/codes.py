"""Binary linear block codes at the packet-segment level.

A user-side code is given by its generator matrix over GF(2).  This module
provides rank computation, validation of the code constraints the contention
scheme relies on (minimum distance >= 2, no idle symbols, k < n), the
un-normalized information function that drives the decoder-side transfer
function, and the closure of coordinates recoverable by MAP erasure decoding.

Coordinates are 0-based throughout the Python API.
"""

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ValidationError

# info_function enumerates all column subsets; 2^20 codewords / ~1e6 subsets
# is where exhaustion stops being instant.
DEFAULT_ENUMERATION_LIMIT = 20


def _as_binary_matrix(matrix) -> np.ndarray:
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValidationError("matrix entries must be 0 or 1")
    return arr.astype(np.uint8)


def _pack_rows(matrix: np.ndarray) -> list[int]:
    """Pack each row into an int, bit j = entry in column j."""
    out = []
    for row in matrix:
        word = 0
        for j, bit in enumerate(row):
            if bit:
                word |= 1 << j
        out.append(word)
    return out


def _pack_columns(matrix: np.ndarray) -> list[int]:
    """Pack each column into an int, bit i = entry in row i."""
    return _pack_rows(matrix.T)


def _basis_insert(basis: dict[int, int], word: int) -> bool:
    """Insert into a GF(2) basis keyed by leading bit; True if independent."""
    while word:
        lead = word.bit_length() - 1
        if lead not in basis:
            basis[lead] = word
            return True
        word ^= basis[lead]
    return False


def _in_span(basis: dict[int, int], word: int) -> bool:
    while word:
        lead = word.bit_length() - 1
        if lead not in basis:
            return False
        word ^= basis[lead]
    return True


def _rank_words(words) -> int:
    basis: dict[int, int] = {}
    rank = 0
    for w in words:
        if _basis_insert(basis, w):
            rank += 1
    return rank


def rank_gf2(matrix) -> int:
    """Rank of a binary matrix over GF(2).

    The input is not modified; an empty matrix has rank 0.
    """
    arr = _as_binary_matrix(matrix)
    if arr.size == 0:
        return 0
    return _rank_words(_pack_rows(arr))


@dataclass(frozen=True, eq=False)
class CodeSpec:
    """An (n, k) binary linear block code given by a k x n generator matrix.

    The scheme requires 1 <= k < n, full row rank, no idle symbols (no
    all-zero generator column) and minimum distance >= 2; use
    :func:`validate_code` to check those invariants.
    """

    n: int
    k: int
    generator: np.ndarray

    def __post_init__(self):
        gen = _as_binary_matrix(self.generator)
        if gen.shape != (self.k, self.n):
            raise ValidationError(
                f"generator shape {gen.shape} does not match (k, n)=({self.k}, {self.n})"
            )
        gen.flags.writeable = False
        object.__setattr__(self, "generator", gen)

    @cached_property
    def _column_words(self) -> tuple[int, ...]:
        return tuple(_pack_columns(self.generator))

    @cached_property
    def _row_words(self) -> tuple[int, ...]:
        return tuple(_pack_rows(self.generator))

    def minimum_distance(self) -> int:
        """Minimum codeword weight, by enumeration of all 2^k - 1 nonzero codewords."""
        if self.k > DEFAULT_ENUMERATION_LIMIT:
            raise ValidationError(f"k={self.k} exceeds enumeration limit")
        rows = self._row_words
        best = self.n + 1
        word = 0
        # Gray-code walk: one row XOR per codeword.
        for i in range(1, 1 << self.k):
            word ^= rows[(i & -i).bit_length() - 1]
            w = word.bit_count()
            if 0 < w < best:
                best = w
        return best

    def to_dict(self) -> dict:
        return {"k": self.k, "n": self.n, "generator": self.generator.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "CodeSpec":
        try:
            return cls(n=int(data["n"]), k=int(data["k"]), generator=data["generator"])
        except KeyError as exc:
            raise ValidationError(f"code spec missing field {exc}") from exc


def repetition_code(n: int) -> CodeSpec:
    """The (n, 1) repetition code."""
    return CodeSpec(n=n, k=1, generator=np.ones((1, n), dtype=np.uint8))


def single_parity_check_code(n: int) -> CodeSpec:
    """The (n, n-1) single parity-check code, systematic form."""
    gen = np.hstack([np.eye(n - 1, dtype=np.uint8), np.ones((n - 1, 1), dtype=np.uint8)])
    return CodeSpec(n=n, k=n - 1, generator=gen)


def validate_code(code: CodeSpec) -> list[str]:
    """Check all code invariants; returns a list of violations (empty = valid).

    Minimum distance is computed by exhaustive codeword enumeration, which is
    fine for the tiny segment-level codes used here.
    """
    problems = []
    if not 1 <= code.k < code.n:
        problems.append(f"requires 1 <= k < n, got (n, k)=({code.n}, {code.k})")
    idle = [j for j, col in enumerate(code._column_words) if col == 0]
    if idle:
        problems.append(f"idle symbols: generator columns {idle} are all-zero")
    rank = _rank_words(code._row_words)
    if rank != code.k:
        problems.append(f"generator is rank-deficient: rank {rank} < k={code.k}")
        return problems  # d_min is meaningless without full row rank
    if code.k < code.n:
        d_min = code.minimum_distance()
        if d_min < 2:
            problems.append(f"minimum distance {d_min} < 2")
    return problems


@dataclass(frozen=True)
class InfoFunctionTable:
    """Un-normalized information function of a code.

    ``values[t]`` is the sum, over all size-t subsets S of the coordinates,
    of the GF(2) rank of the generator columns indexed by S.  For a valid
    (n, k) code: values[0] = 0, values[1] = n, values[n] = k, and the
    per-subset average values[t] / C(n, t) is non-decreasing in t (the raw
    sums are not, since the number of subsets shrinks for large t).
    """

    values: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, t: int) -> int:
        return self.values[t]


def info_function(code: CodeSpec, max_n: int = DEFAULT_ENUMERATION_LIMIT) -> InfoFunctionTable:
    """Compute the un-normalized information function by subset enumeration.

    Exhaustive over all C(n, t) column subsets for t = 0..n; rejects codes
    longer than ``max_n`` rather than silently taking forever.
    """
    if code.n > max_n:
        raise ValidationError(
            f"n={code.n} exceeds the subset-enumeration limit {max_n}"
        )
    cols = code._column_words
    values = [0] * (code.n + 1)
    for t in range(1, code.n + 1):
        total = 0
        for subset in itertools.combinations(cols, t):
            total += _rank_words(subset)
        values[t] = total
    return InfoFunctionTable(values=tuple(values))


def map_recoverable(code: CodeSpec, known: set[int] | frozenset[int]) -> set[int]:
    """Coordinates recoverable from ``known`` by MAP erasure decoding.

    Returns the erased coordinates j whose generator column lies in the GF(2)
    span of the known columns, i.e. rank(known + {j}) = rank(known).  The
    result is the full closure in one shot; no iteration is needed at code
    level.  An empty known set recovers nothing.
    """
    cols = code._column_words
    bad = [j for j in known if not 0 <= j < code.n]
    if bad:
        raise ValidationError(f"coordinate indices out of range [0, {code.n}): {bad}")
    basis: dict[int, int] = {}
    for j in known:
        _basis_insert(basis, cols[j])
    if not basis:
        return set()
    return {j for j in range(code.n) if j not in known and _in_span(basis, cols[j])}
