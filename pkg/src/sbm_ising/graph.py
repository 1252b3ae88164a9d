"""Two-community stochastic block model and its Ising Hamiltonians.

Vertices ``0 .. n/2 - 1`` form the first community, ``n/2 .. n-1`` the second.
Internally everything is 0-based; the JSON form of a graph uses 1-based
vertex labels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

# Expanding the pair sums of the averaged Hamiltonian in magnetizations leaves
# a diagonal remainder: H_bar(sigma) = -(n/2) E_alpha(m) + MEAN_FIELD_OFFSET.
MEAN_FIELD_OFFSET = 0.5

# number of Bernoulli draws generated per chunk when sampling a graph
_CHUNK = 1 << 22


@dataclass(frozen=True)
class ModelParams:
    n: int
    beta: float = 1.0
    p: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n:
            raise ValueError(f"n must be an integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if self.n < 2 or self.n % 2:
            raise ValueError(f"n must be even and >= 2, got {self.n}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def half(self) -> int:
        return self.n // 2


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(_check_seed(seed)))


def derived_seeds(seed, count: int) -> list[int]:
    """``count`` independent 64-bit seeds derived from ``seed``."""
    children = np.random.SeedSequence(_check_seed(seed)).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


@dataclass(frozen=True, eq=False)
class BlockGraph:
    """A sampled 2-SBM realization with explicit edge lists.

    ``intra`` and ``inter`` are ``(E, 2)`` int64 arrays of 0-based pairs
    ``(i, j)``, ``i < j``, in lexicographic order.
    """

    params: ModelParams
    intra: np.ndarray
    inter: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        for name in ("intra", "inter"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.int64).reshape(-1, 2))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        half = self.params.half
        if self.intra.size:
            i, j = self.intra[:, 0], self.intra[:, 1]
            if np.any(i >= j) or np.any((i < half) != (j < half)) or i.min() < 0 or j.max() >= self.params.n:
                raise ValueError("intra edges must join distinct vertices of one community")
        if self.inter.size:
            i, j = self.inter[:, 0], self.inter[:, 1]
            if np.any(i < 0) or np.any(i >= half) or np.any(j < half) or np.any(j >= self.params.n):
                raise ValueError("inter edges must join the first community to the second")
        for arr in (self.intra, self.inter):
            if len(arr) > 1:
                keys = arr[:, 0] * self.params.n + arr[:, 1]
                if len(np.unique(keys)) != len(keys):
                    raise ValueError("duplicate edges")

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def num_edges(self) -> int:
        return len(self.intra) + len(self.inter)

    def edges(self) -> np.ndarray:
        return np.concatenate([self.intra, self.inter])

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR neighbor lists ``(indptr, indices)``."""
        e = self.edges()
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        indices = np.ascontiguousarray(dst[order])
        counts = np.bincount(src, minlength=self.n)
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return indptr, indices

    def degrees(self) -> np.ndarray:
        indptr, _ = self.adjacency
        return np.diff(indptr)

    def __eq__(self, other):
        if not isinstance(other, BlockGraph):
            return NotImplemented
        return (self.params == other.params and self.seed == other.seed
                and np.array_equal(self.intra, other.intra)
                and np.array_equal(self.inter, other.inter))

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "n": self.params.n,
            "p": self.params.p,
            "alpha": self.params.alpha,
            "seed": self.seed,
            "intra": (self.intra + 1).tolist(),
            "inter": (self.inter + 1).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict, beta: float = 1.0) -> "BlockGraph":
        params = ModelParams(n=d["n"], beta=beta, p=d["p"], alpha=d["alpha"])
        intra = np.asarray(d["intra"], dtype=np.int64).reshape(-1, 2) - 1
        inter = np.asarray(d["inter"], dtype=np.int64).reshape(-1, 2) - 1
        return cls(params, intra, inter, d.get("seed"))

    @classmethod
    def from_json(cls, text: str, beta: float = 1.0) -> "BlockGraph":
        return cls.from_dict(json.loads(text), beta=beta)


def _bernoulli_rows(rng, rows, cols_for_row, prob):
    """Keep pairs ``(i, j)`` row by row, drawing one uniform per pair in order."""
    kept = []
    start = 0
    rows = list(rows)
    while start < len(rows):
        stop, total = start, 0
        while stop < len(rows) and (total == 0 or total + len(cols_for_row(rows[stop])) <= _CHUNK):
            total += len(cols_for_row(rows[stop]))
            stop += 1
        if total:
            block_i = np.concatenate([np.full(len(cols_for_row(r)), r, dtype=np.int64)
                                      for r in rows[start:stop]])
            block_j = np.concatenate([cols_for_row(r) for r in rows[start:stop]])
            hit = rng.random(total) < prob
            kept.append(np.stack([block_i[hit], block_j[hit]], axis=1))
        start = stop
    if not kept:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(kept)


def sample_graph(params: ModelParams, seed: int) -> BlockGraph:
    """Draw a 2-SBM realization.

    One uniform is consumed per candidate pair: first all same-community pairs
    in lexicographic order, then all cross pairs in lexicographic order. The
    result is therefore a pure function of ``(params, seed)``.
    """
    seed = _check_seed(seed)
    rng = make_rng(seed)
    half, n = params.half, params.n
    p_in, p_out = params.p, params.alpha * params.p

    def same_block(i):
        end = half if i < half else n
        return np.arange(i + 1, end, dtype=np.int64)

    cross = np.arange(half, n, dtype=np.int64)
    intra = _bernoulli_rows(rng, range(n), same_block, p_in)
    inter = _bernoulli_rows(rng, range(half), lambda i: cross, p_out)
    return BlockGraph(params, intra, inter, seed)


# ---------------------------------------------------------------------------
# spins and Hamiltonians
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpinConfiguration:
    spins: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "spins", check_spins(self.spins))

    def __len__(self):
        return len(self.spins)

    def __array__(self, dtype=None, copy=None):
        return self.spins if dtype is None else self.spins.astype(dtype)


def check_spins(sigma, n: Optional[int] = None) -> np.ndarray:
    """Return ``sigma`` as an int8 array, insisting on entries exactly +-1."""
    if isinstance(sigma, SpinConfiguration):
        s = sigma.spins
    else:
        raw = np.asarray(sigma)
        if raw.ndim != 1:
            raise ValueError("a spin configuration is one-dimensional")
        if not np.all((raw == 1) | (raw == -1)):
            raise ValueError("spins must be exactly +1 or -1")
        s = raw.astype(np.int8)
    if n is not None and len(s) != n:
        raise ValueError(f"configuration has {len(s)} spins, graph has {n} vertices")
    return s


def block_sums(sigma) -> tuple[int, int]:
    """Total spin of each community."""
    s = check_spins(sigma).astype(np.int64)
    if len(s) % 2:
        raise ValueError("odd number of spins")
    half = len(s) // 2
    return int(s[:half].sum()), int(s[half:].sum())


def magnetization(sigma) -> tuple[float, float]:
    s1, s2 = block_sums(sigma)
    half = len(check_spins(sigma)) // 2
    return s1 / half, s2 / half


def bond_sum(g: BlockGraph, sigma) -> int:
    """Integer ``sum over edges of sigma_i sigma_j``."""
    s = check_spins(sigma, g.n).astype(np.int64)
    e = g.edges()
    if not len(e):
        return 0
    return int(np.dot(s[e[:, 0]], s[e[:, 1]]))


def hamiltonian(g: BlockGraph, sigma) -> float:
    """Quenched energy ``-(1/(n p)) sum_{edges} sigma_i sigma_j``."""
    return -bond_sum(g, sigma) / (g.n * g.params.p)


def _energy(alpha, m1, m2):
    return 0.25 * (m1 * m1 + m2 * m2) + 0.5 * alpha * m1 * m2


def mean_hamiltonian(params: ModelParams, m) -> float:
    """Magnetization form ``-(n/2) E_alpha(m)`` of the averaged Hamiltonian."""
    m1, m2 = m
    return -0.5 * params.n * _energy(params.alpha, m1, m2)


def mean_hamiltonian_unshifted(params: ModelParams, sigma) -> float:
    """Graph-averaged energy ``-(1/n)[sum_intra + alpha sum_inter] sigma_i sigma_j``.

    Evaluated through the community sums; equals
    ``mean_hamiltonian(params, m) + MEAN_FIELD_OFFSET``.
    """
    s = check_spins(sigma, params.n)
    s1, s2 = block_sums(s)
    half = params.half
    intra = (s1 * s1 - half + s2 * s2 - half) // 2
    inter = s1 * s2
    return -(intra + params.alpha * inter) / params.n


def delta_n(g: BlockGraph, sigma) -> float:
    """Fluctuation ``H(sigma) - H_bar(sigma)`` of the quenched energy."""
    return hamiltonian(g, sigma) - mean_hamiltonian_unshifted(g.params, sigma)


def alignment_counts(sigma) -> tuple[int, int]:
    """Numbers of aligned same-community pairs and aligned cross pairs.

    Uses the closed forms in the community sums ``S_j = l m_j``:
    ``(2 l^2 + S1^2 + S2^2)/4 - l`` and ``(l^2 + S1 S2)/2``.
    """
    s = check_spins(sigma)
    s1, s2 = block_sums(s)
    half = len(s) // 2
    num_in = 2 * half * half + s1 * s1 + s2 * s2
    num_out = half * half + s1 * s2
    if num_in % 4 or num_out % 2:
        raise ArithmeticError("alignment counts are not integers")
    return num_in // 4 - half, num_out // 2


# ---------------------------------------------------------------------------
# concentration diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConcentrationSpec:
    """Relative tolerance for the aligned-edge sums.

    The smallest rate the probability bound admits is ``3/sqrt(p n)``; smaller
    values are allowed (to watch the bound fail) and flagged by
    :meth:`is_admissible`.
    """

    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")

    @classmethod
    def default(cls, params: ModelParams) -> "ConcentrationSpec":
        return cls(3.0 / math.sqrt(params.p * params.n))

    def is_admissible(self, params: ModelParams) -> bool:
        return self.rho >= 3.0 / math.sqrt(params.p * params.n) * (1 - 1e-15)


def random_spins(rng: np.random.Generator, n: int) -> np.ndarray:
    return (2 * rng.integers(0, 2, size=n) - 1).astype(np.int8)


def aligned_edge_deviation(g: BlockGraph, sigma) -> tuple[int, float]:
    """Present aligned edges and their expected number ``p(|E_I+| + alpha |E_E+|)``."""
    s = check_spins(sigma, g.n)
    e = g.edges()
    present = int(np.count_nonzero(s[e[:, 0]] == s[e[:, 1]])) if len(e) else 0
    n_in, n_out = alignment_counts(s)
    expected = g.params.p * (n_in + g.params.alpha * n_out)
    return present, expected


def _graph_trials(params, seed, num_configs, check):
    g = sample_graph(params, seed)
    rng = make_rng(derived_seeds(seed, 1)[0])
    return sum(bool(check(g, random_spins(rng, params.n))) for _ in range(num_configs))


def _run_trials(params, num_graphs, num_configs, seed, check, threads=1):
    if num_graphs < 1 or num_configs < 1:
        raise ValueError("num_graphs and num_configs must be >= 1")
    seeds = derived_seeds(seed, num_graphs)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            hits = list(pool.map(lambda s: _graph_trials(params, s, num_configs, check), seeds))
    else:
        hits = [_graph_trials(params, s, num_configs, check) for s in seeds]
    return sum(hits) / (num_graphs * num_configs)


def concentration_violation_rate(params: ModelParams, spec: ConcentrationSpec, num_graphs: int,
                                 num_configs: int, seed: int, threads: int = 1) -> float:
    """Fraction of (graph, uniform configuration) draws outside the typical event.

    A configuration is atypical when the number of present aligned edges
    deviates from its mean by more than ``rho`` times that mean.
    """
    def violated(g, s):
        present, expected = aligned_edge_deviation(g, s)
        return abs(present - expected) > spec.rho * expected

    return _run_trials(params, num_graphs, num_configs, seed, violated, threads)


def delta_bound_rate(params: ModelParams, spec: ConcentrationSpec, num_graphs: int,
                     num_configs: int, seed: int, threads: int = 1) -> float:
    """Fraction of draws with ``|delta_n| <= 1.5 n rho``."""
    bound = 1.5 * params.n * spec.rho

    def holds(g, s):
        return abs(delta_n(g, s)) <= bound

    return _run_trials(params, num_graphs, num_configs, seed, holds, threads)
