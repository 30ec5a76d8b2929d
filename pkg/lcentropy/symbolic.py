"""
Shift spaces: words, lazily generated sequences, the shift metric, Bernoulli
measures, word frequencies, uniform Cesaro checks and word-count entropy.
"""

import itertools
import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from lcentropy.core import (
    InfeasibleParameterError,
    TrajectoryBuffer,
    first_disagreement,
    shift_space,
)

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class Word:
    """A finite word over the alphabet {0, ..., p-1}."""

    symbols: Tuple[int, ...]
    p: int

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("alphabet size must be >= 2")
        symbols = tuple(int(s) for s in self.symbols)
        if any(s < 0 or s >= self.p for s in symbols):
            raise ValueError(f"symbols must lie in 0..{self.p - 1}")
        object.__setattr__(self, "symbols", symbols)

    @classmethod
    def parse(cls, text: str, p: int) -> "Word":
        return cls(tuple(int(ch) for ch in text.strip()), p)

    def __len__(self) -> int:
        return len(self.symbols)

    def __str__(self) -> str:
        return "".join(str(s) for s in self.symbols)

    def __add__(self, other: "Word") -> "Word":
        return Word(self.symbols + other.symbols, max(self.p, other.p))

    def __mul__(self, times: int) -> "Word":
        return Word(self.symbols * times, self.p)

    def array(self) -> np.ndarray:
        return np.asarray(self.symbols, dtype=np.int64)


class SymbolSequence:
    """Pull-based symbol sequence with a stable, extendable prefix cache.

    The generator yields chunks of symbols. Extension is single-writer (guarded by a
    lock); reads of an already materialised prefix never mutate anything.
    """

    def __init__(self, chunks: Iterable[Sequence[int]], p: int, label: str = ""):
        if p < 2:
            raise ValueError("alphabet size must be >= 2")
        self.p = p
        self.label = label
        self._chunks: Iterator[Sequence[int]] = iter(chunks)
        self._prefix = np.zeros(0, dtype=np.int64)
        self._prefix.setflags(write=False)
        self._exhausted = False
        self._lock = threading.Lock()

    @classmethod
    def from_array(cls, symbols: Sequence[int], p: int, label: str = "") -> "SymbolSequence":
        """Finite sequence; requesting more than len(symbols) is an error."""
        return cls([np.asarray(symbols, dtype=np.int64)], p, label)

    @classmethod
    def periodic(cls, word: Union[Word, Sequence[int]], p: Optional[int] = None, label: str = "") -> "SymbolSequence":
        symbols = word.symbols if isinstance(word, Word) else tuple(word)
        if not symbols:
            raise ValueError("periodic sequence needs a nonempty word")
        block = np.asarray(symbols, dtype=np.int64)
        alphabet = p if p is not None else (word.p if isinstance(word, Word) else int(block.max()) + 1)
        tile = np.tile(block, max(1, 4096 // len(block)))
        return cls(itertools.repeat(tile), max(alphabet, 2), label or f"({''.join(map(str, symbols))})^inf")

    @property
    def materialized(self) -> int:
        return len(self._prefix)

    def _extend(self, n: int) -> None:
        with self._lock:
            if len(self._prefix) >= n:
                return
            pieces = [self._prefix]
            total = len(self._prefix)
            target = max(n, 2 * total)
            while total < target and not self._exhausted:
                try:
                    chunk = np.asarray(next(self._chunks), dtype=np.int64)
                except StopIteration:
                    self._exhausted = True
                    break
                if chunk.size and (chunk.min() < 0 or chunk.max() >= self.p):
                    raise ValueError(f"generator produced a symbol outside 0..{self.p - 1}")
                pieces.append(chunk)
                total += len(chunk)
            prefix = np.concatenate(pieces)
            prefix.setflags(write=False)
            self._prefix = prefix

    def prefix(self, n: int) -> np.ndarray:
        """First n symbols as a read-only array."""
        if n < 0:
            raise ValueError("prefix length must be >= 0")
        if len(self._prefix) < n:
            self._extend(n)
        if len(self._prefix) < n:
            raise InfeasibleParameterError(
                f"prefix of length {n} requested, sequence {self.label!r} has only {len(self._prefix)} symbols"
            )
        return self._prefix[:n]

    def available(self, n: int) -> int:
        """min(n, number of symbols the sequence can provide)."""
        if len(self._prefix) < n:
            self._extend(n)
        return min(n, len(self._prefix))

    def word(self, n: int) -> Word:
        return Word(tuple(self.prefix(n).tolist()), self.p)

    def shifted(self, h: int) -> "SymbolSequence":
        """sigma^h of this sequence, sharing nothing mutable."""
        parent = self

        def chunks():
            start = h
            size = 4096
            while True:
                stop = start + size
                got = parent.available(stop)
                if got <= start:
                    return
                yield parent.prefix(got)[start:got]
                if got < stop:
                    return
                start = stop
                size *= 2

        return SymbolSequence(chunks(), self.p, f"{self.label}>>{h}")


class BernoulliSpec(BaseModel):
    """Probability vector generating a Bernoulli measure on the full shift."""

    pi: List[float]
    seed: int = 0

    @field_validator("pi", mode="before")
    @classmethod
    def parse_pi(cls, value):
        if isinstance(value, str):
            value = [item for item in value.split(",") if item.strip()]
        return [float(Fraction(v.strip())) if isinstance(v, str) else float(v) for v in value]

    @model_validator(mode="after")
    def normalise(self):
        if len(self.pi) < 2:
            raise ValueError("pi needs at least two entries")
        if any(v < 0 for v in self.pi):
            raise ValueError("pi entries must be nonnegative")
        total = math.fsum(self.pi)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"pi must sum to 1 (got {total!r})")
        if total != 1.0:
            self.pi = [v / total for v in self.pi]
        return self

    @property
    def p(self) -> int:
        return len(self.pi)


class CesaroReport(BaseModel):
    """Window statistics of the stride-l occurrence set of a word."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    word: str
    stride: int
    window: int
    offsets_tested: int
    frequency: Fraction
    density: Fraction
    max_window_deviation: Fraction


def shift_metric(x: SymbolSequence, y: SymbolSequence, horizon: int) -> Fraction:
    """2^-k for the first disagreement k < horizon, 0 if x and y agree up to horizon."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    k = first_disagreement(x.prefix(horizon), y.prefix(horizon))
    if k is None:
        return Fraction(0)
    return Fraction(1, 2 ** k)


def _dense_ranks(values: np.ndarray) -> np.ndarray:
    return np.unique(values, return_inverse=True)[1].reshape(-1).astype(np.int64)


def _pair_ranks(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    width = int(right.max()) + 1 if right.size else 1
    return _dense_ranks(left * width + right)


def window_ranks(codes: Sequence[int], length: int, stride: int = 1) -> np.ndarray:
    """Exact class labels for the gapped windows (c[i], c[i+s], ..., c[i+(length-1)s]).

    Two positions get the same label iff their windows are equal. Built by prefix
    doubling, so the cost is O(N log length) sorts.
    """
    codes = np.asarray(codes)
    if length < 1 or stride < 1:
        raise ValueError("window length and stride must be >= 1")
    total = len(codes)
    if total - (length - 1) * stride <= 0:
        return np.zeros(0, dtype=np.int64)

    result: Optional[np.ndarray] = None
    result_len = 0
    power = _dense_ranks(codes)
    power_len = 1
    remaining = length
    while remaining:
        if remaining & 1:
            if result is None:
                result, result_len = power, power_len
            else:
                size = total - (result_len + power_len - 1) * stride
                shift = result_len * stride
                result = _pair_ranks(result[:size], power[shift:shift + size])
                result_len += power_len
        remaining >>= 1
        if remaining:
            size = total - (2 * power_len - 1) * stride
            shift = power_len * stride
            power = _pair_ranks(power[:size], power[shift:shift + size])
            power_len *= 2
    return result


def tilde_mu_bernoulli(spec: BernoulliSpec, k: int) -> float:
    """Sum over k-words of the squared cylinder measures, (sum pi_i^2)^k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return math.fsum(p * p for p in spec.pi) ** k


def tilde_mu_enumerated(spec: BernoulliSpec, k: int) -> float:
    """Same quantity by explicit enumeration of all p^k words."""
    total = []
    for word in itertools.product(range(spec.p), repeat=k):
        mass = math.prod(spec.pi[s] for s in word)
        total.append(mass * mass)
    return math.fsum(total)


def bernoulli_correlation_entropy(spec: BernoulliSpec) -> float:
    return max(0.0, -math.log(math.fsum(p * p for p in spec.pi)))


def measure_entropy_from_tilde(tilde: Sequence[Tuple[int, float]]) -> Tuple[float, float]:
    """(max, min) of -(1/m) log tilde(m) over the tail half of the list."""
    if not tilde:
        raise ValueError("tilde list is empty")
    ordered = sorted(tilde)
    for m, value in ordered:
        if not 0 < value <= 1:
            raise ValueError(f"tilde value at m={m} must lie in (0, 1], got {value!r}")
    tail = ordered[len(ordered) // 2:]
    rates = [0.0 - math.log(value) / m for m, value in tail]
    return max(rates), min(rates)


def tilde_mu_empirical(codes: Sequence[int], k: int, positions: Optional[int] = None) -> Fraction:
    """Sum over k-words w of freq(w)^2, counted over the first ``positions`` windows."""
    ranks = window_ranks(codes, k)
    if positions is not None:
        ranks = ranks[:positions]
    if ranks.size == 0:
        raise InfeasibleParameterError(f"no {k}-windows available")
    counts = np.bincount(ranks)
    return Fraction(int(np.dot(counts, counts)), len(ranks) ** 2)


def word_frequency(v: Word, u: Word, l: int) -> Fraction:
    """|{i : v[il, il+|u|) = u}| / floor(|v| / l), counting only fully contained occurrences."""
    if l < 1:
        raise ValueError("stride must be >= 1")
    if len(u) == 0:
        raise ValueError("u must be nonempty")
    if len(u) > len(v):
        raise ValueError(f"|u|={len(u)} exceeds |v|={len(v)}")
    blocks = len(v) // l
    if blocks == 0:
        raise ValueError(f"stride {l} exceeds |v|={len(v)}")
    windows = np.lib.stride_tricks.sliding_window_view(v.array(), len(u))[::l]
    count = int(np.count_nonzero(np.all(windows == u.array(), axis=1)))
    return Fraction(count, blocks)


def _block_matches(codes: np.ndarray, u: Word, l: int, blocks: int) -> np.ndarray:
    windows = np.lib.stride_tricks.sliding_window_view(codes, len(u))[::l][:blocks]
    return np.all(windows == u.array(), axis=1)


def cesaro_density_check(
    x: SymbolSequence,
    u: Word,
    l: int,
    window: int,
    offsets: int,
    offset_step: int = 1,
) -> CesaroReport:
    """Stride-l frequencies of u over the windows [jsl, (js+window)l), j < offsets.

    The density is that of the occurrence set {il : x[il, il+|u|) = u} in the
    nonnegative integers, i.e. the mean stride-l frequency divided by l.
    """
    if l < 1 or window < 1 or offsets < 1 or offset_step < 1:
        raise ValueError("stride, window, offsets and offset_step must be >= 1")
    blocks = (offsets - 1) * offset_step + window
    codes = x.prefix(l * blocks + len(u))
    matches = _block_matches(codes, u, l, blocks)
    running = np.concatenate([[0], np.cumsum(matches, dtype=np.int64)])
    starts = np.arange(offsets) * offset_step
    counts = running[starts + window] - running[starts]
    frequencies = [Fraction(int(c), window) for c in counts]
    frequency = sum(frequencies, Fraction(0)) / len(frequencies)
    density = frequency / l
    deviation = max(abs(f / l - density) for f in frequencies)
    logger.debug("Cesaro window scan", word=str(u), stride=l, window=window, offsets=offsets)
    return CesaroReport(
        word=str(u),
        stride=l,
        window=window,
        offsets_tested=offsets,
        frequency=frequency,
        density=density,
        max_window_deviation=deviation,
    )


def word_count_entropy(
    x: SymbolSequence,
    n_list: Sequence[int],
    scan: Optional[int] = 10 ** 6,
) -> List[Tuple[int, int, float]]:
    """(n, theta_n, log(theta_n)/n) with theta_n the distinct n-windows among the first scan positions."""
    if not n_list:
        return []
    longest = max(n_list)
    wanted = (scan or 10 ** 6) + longest - 1
    codes = x.prefix(x.available(wanted))
    rows = []
    for n in sorted(set(int(v) for v in n_list)):
        ranks = window_ranks(codes, n)
        if scan is not None:
            ranks = ranks[:scan]
        if ranks.size == 0:
            raise InfeasibleParameterError(f"prefix too short for {n}-windows")
        theta = int(np.unique(ranks).size)
        rows.append((n, theta, math.log(theta) / n))
    return rows


def bernoulli_sample(spec: BernoulliSpec, length: int, rng: Optional[np.random.Generator] = None) -> SymbolSequence:
    """Finite i.i.d. sample; deterministic for a fixed seed (PCG64)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    generator = rng if rng is not None else np.random.default_rng(spec.seed)
    symbols = generator.choice(spec.p, size=length, p=np.asarray(spec.pi))
    label = "bernoulli(" + ",".join(f"{v:g}" for v in spec.pi) + ")"
    return SymbolSequence.from_array(symbols, spec.p, label)


def symbolic_trajectory(
    x: Union[SymbolSequence, Sequence[int]],
    n_states: int,
    horizon: int = 64,
    step: int = 1,
    start: int = 0,
    label: str = "",
) -> TrajectoryBuffer:
    """Orbit of sigma^step through sigma^start(x) as a shift-space TrajectoryBuffer."""
    if n_states < 1 or step < 1 or start < 0:
        raise ValueError("n_states and step must be >= 1, start >= 0")
    needed = start + step * (n_states - 1) + horizon
    if isinstance(x, SymbolSequence):
        codes = x.prefix(needed)
        label = label or x.label
    else:
        codes = np.asarray(x, dtype=np.int64)
        if len(codes) < needed:
            raise InfeasibleParameterError(f"{needed} symbols needed for the trajectory, {len(codes)} given")
    space = shift_space(codes, horizon)
    offsets = tuple(range(start, start + step * n_states, step))
    return TrajectoryBuffer(offsets, space, label)
