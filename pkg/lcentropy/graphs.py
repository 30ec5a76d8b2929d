"""
Partitioned graphs, V-admissibility and the signed edge count kappa.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np
import structlog

from lcentropy.core import CheckResult, InfeasibleParameterError, Radius, TrajectoryBuffer
from lcentropy.correlation import bowen_distance, correlation_table

logger = structlog.get_logger(__name__)

BRUTEFORCE_MAX_VERTICES = 8
CHUNK_BITS = 20

Edge = Tuple[int, int]


@dataclass(frozen=True)
class PartitionedGraph:
    """A simple graph on {0, ..., n-1} with a partition into k >= 2 parts."""

    n: int
    partition: Tuple[FrozenSet[int], ...]
    edges: FrozenSet[Edge] = frozenset()
    _part_of: Dict[int, int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        partition = tuple(frozenset(int(v) for v in part) for part in self.partition)
        if len(partition) < 2:
            raise ValueError("partition needs at least two parts")
        if any(not part for part in partition):
            raise ValueError("partition parts must be nonempty")
        covered = set().union(*partition)
        if sum(len(part) for part in partition) != len(covered) or covered != set(range(self.n)):
            raise ValueError(f"partition must split {{0, ..., {self.n - 1}}} into disjoint parts")
        edges = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) outside 0..{self.n - 1}")
            edges.add((min(i, j), max(i, j)))
        object.__setattr__(self, "partition", partition)
        object.__setattr__(self, "edges", frozenset(edges))
        object.__setattr__(self, "_part_of", {v: a for a, part in enumerate(partition) for v in part})

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], edges: Iterable[Edge] = ()) -> "PartitionedGraph":
        """Consecutive blocks: sizes (2, 1) gives parts {0, 1} and {2}."""
        if any(size < 1 for size in sizes):
            raise ValueError("part sizes must be >= 1")
        bounds = np.cumsum([0, *sizes])
        partition = tuple(frozenset(range(int(a), int(b))) for a, b in zip(bounds, bounds[1:]))
        return cls(int(bounds[-1]), partition, frozenset(edges))

    @property
    def k(self) -> int:
        return len(self.partition)

    def part_of(self, v: int) -> int:
        return self._part_of[v]

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = True
        return adj

    def edge_counts(self) -> Tuple[int, int]:
        """(cross edges, intra edges)."""
        intra = sum(1 for i, j in self.edges if self._part_of[i] == self._part_of[j])
        return len(self.edges) - intra, intra


def is_v_admissible(g: PartitionedGraph) -> bool:
    """Neighbours of any vertex inside another part form a clique."""
    adj = g.adjacency()
    parts = [np.array(sorted(part), dtype=np.int64) for part in g.partition]
    for j in range(g.n):
        own = g.part_of(j)
        for a, members in enumerate(parts):
            if a == own:
                continue
            neighbours = members[adj[j, members]]
            if len(neighbours) < 2:
                continue
            block = adj[np.ix_(neighbours, neighbours)]
            np.fill_diagonal(block, True)
            if not block.all():
                return False
    return True


def kappa(g: PartitionedGraph) -> int:
    """Cross edges minus intra edges."""
    cross, intra = g.edge_counts()
    return cross - intra


def max_kappa_formula(part_sizes: Sequence[int]) -> int:
    if len(part_sizes) < 2 or any(size < 1 for size in part_sizes):
        raise ValueError("need >= 2 parts of size >= 1")
    return sum(min(a, b) for a, b in itertools.combinations(part_sizes, 2))


def optimal_witness(part_sizes: Sequence[int]) -> PartitionedGraph:
    """Matchings V_a[t] -- V_b[t] between every pair of parts; kappa equals the formula."""
    empty = PartitionedGraph.from_sizes(part_sizes)
    parts = [sorted(part) for part in empty.partition]
    edges = []
    for a, b in itertools.combinations(range(len(parts)), 2):
        edges.extend(zip(parts[a], parts[b]))
    return PartitionedGraph(empty.n, empty.partition, frozenset(edges))


def _bruteforce_chunk(
    start: int,
    size: int,
    constraints: List[Tuple[int, int, int]],
    cross_mask: np.uint64,
    intra_mask: np.uint64,
) -> int:
    masks = np.arange(start, start + size, dtype=np.uint64)
    admissible = np.ones(size, dtype=bool)
    one = np.uint64(1)
    for left, right, closing in constraints:
        both = ((masks >> np.uint64(left)) & (masks >> np.uint64(right)) & one).astype(bool)
        closed = ((masks >> np.uint64(closing)) & one).astype(bool)
        admissible &= ~both | closed
    values = np.bitwise_count(masks & cross_mask).astype(np.int64) - np.bitwise_count(masks & intra_mask).astype(np.int64)
    return int(values[admissible].max())


def max_kappa_bruteforce(part_sizes: Sequence[int], workers: int = 1) -> int:
    """Maximum kappa over all V-admissible graphs, by enumerating every edge subset."""
    g = PartitionedGraph.from_sizes(part_sizes)
    if g.n > BRUTEFORCE_MAX_VERTICES:
        raise InfeasibleParameterError(f"brute force limited to n <= {BRUTEFORCE_MAX_VERTICES}, got n={g.n}")
    pairs = list(itertools.combinations(range(g.n), 2))
    index = {pair: e for e, pair in enumerate(pairs)}
    cross_mask = 0
    intra_mask = 0
    for (i, j), e in index.items():
        if g.part_of(i) == g.part_of(j):
            intra_mask |= 1 << e
        else:
            cross_mask |= 1 << e

    constraints = []
    for i, i2 in pairs:
        if g.part_of(i) != g.part_of(i2):
            continue
        for j in range(g.n):
            if g.part_of(j) != g.part_of(i):
                left = index[(min(i, j), max(i, j))]
                right = index[(min(i2, j), max(i2, j))]
                constraints.append((left, right, index[(i, i2)]))

    total = 1 << len(pairs)
    chunk = min(total, 1 << CHUNK_BITS)
    starts = range(0, total, chunk)
    args = (constraints, np.uint64(cross_mask), np.uint64(intra_mask))
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            best = max(pool.map(lambda s: _bruteforce_chunk(s, chunk, *args), starts))
    else:
        best = max(_bruteforce_chunk(s, chunk, *args) for s in starts)
    logger.debug("Brute force kappa", sizes=list(part_sizes), subsets=total, best=best)
    return best


def recurrence_graph(traj: TrajectoryBuffer, k: int, m: int, n: int, eps: Radius) -> PartitionedGraph:
    """Graph on kn indices, parts by residue mod k.

    Indices in one part are joined when their km-Bowen distance is <= 2 eps, indices
    in different parts when it is <= eps.
    """
    if k < 2 or m < 1 or n < 1:
        raise InfeasibleParameterError("recurrence graph needs k >= 2, m >= 1 and n >= 1")
    vertices = k * n
    window = k * m
    if vertices + window - 1 > len(traj):
        raise InfeasibleParameterError(
            f"kn + km - 1 <= trajectory length violated: kn={vertices}, km={window}, length={len(traj)}"
        )
    partition = tuple(frozenset(range(a, vertices, k)) for a in range(k))
    edges = []
    for i in range(vertices):
        for j in range(i + 1, vertices):
            radius = 2 * eps if i % k == j % k else eps
            if bowen_distance(traj, i, j, window) <= radius:
                edges.append((i, j))
    return PartitionedGraph(vertices, partition, frozenset(edges))


def edge_count_bounds(traj: TrajectoryBuffer, k: int, m: int, n: int, eps: Radius) -> CheckResult:
    """m(G) >= ((kn)^2 C - kn)/2 with C = C_{km}(x, kn, eps), and kappa(G) <= kn(k-1)/2."""
    g = recurrence_graph(traj, k, m, n, eps)
    vertices = k * n
    c = correlation_table(traj, [eps], [k * m], [vertices]).value(eps, k * m, vertices)
    floor = (vertices * vertices * c - vertices) / 2
    ceiling = Fraction(vertices * (k - 1), 2)
    value = kappa(g)
    passed = len(g.edges) >= floor and value <= ceiling and is_v_admissible(g)
    return CheckResult(
        name=f"recurrence graph k={k} m={m} n={n}",
        passed=passed,
        detail="edges >= (n^2 C - n)/2, kappa <= n(k-1)/2, admissible",
        values={"edges": len(g.edges), "edge_floor": str(floor), "kappa": value, "kappa_ceiling": str(ceiling)},
    )


def verify_graphs(max_n: int = 7, max_k: int = 4, workers: int = 1) -> List[CheckResult]:
    """Brute force against the closed form for every partition with n <= max_n, k <= max_k."""
    if max_n > BRUTEFORCE_MAX_VERTICES:
        raise InfeasibleParameterError(f"max_n must be <= {BRUTEFORCE_MAX_VERTICES}")
    results = []
    for n in range(2, max_n + 1):
        for k in range(2, min(max_k, n) + 1):
            for sizes in _size_profiles(n, k):
                formula = max_kappa_formula(sizes)
                brute = max_kappa_bruteforce(sizes, workers=workers)
                witness = optimal_witness(sizes)
                ceiling = n * (k - 1) // 2
                passed = brute == formula <= ceiling and kappa(witness) == formula and is_v_admissible(witness)
                if not passed:
                    logger.error("Graph check failed", sizes=sizes, formula=formula, brute=brute)
                results.append(
                    CheckResult(
                        name="sizes=" + "-".join(map(str, sizes)),
                        passed=passed,
                        detail="bruteforce == formula <= floor(n(k-1)/2)",
                        values={"n": n, "k": k, "formula": formula, "bruteforce": brute, "ceiling": ceiling},
                    )
                )
    return results


def _size_profiles(n: int, k: int) -> List[Tuple[int, ...]]:
    """Non-decreasing size tuples of length k summing to n."""
    profiles = []

    def extend(prefix: Tuple[int, ...], remaining: int, slots: int):
        if slots == 0:
            if remaining == 0:
                profiles.append(prefix)
            return
        low = prefix[-1] if prefix else 1
        for size in range(low, remaining - low * (slots - 1) + 1):
            extend(prefix + (size,), remaining - size, slots - 1)

    extend((), n, k)
    return profiles
