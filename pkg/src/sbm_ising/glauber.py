"""Heat-bath Glauber dynamics for the quenched and averaged Gibbs measures.

Each update picks a uniform site ``i`` and flips it with probability
``1 / (1 + exp(beta * dH))``, where ``dH`` is the energy change of the flip.
Random numbers are drawn in Python from a counter-based generator and handed
to compiled kernels, so a chain is reproducible bit for bit and two chains
fed the same numbers from globally flipped states stay flipped.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numba
import numpy as np

from . import cw
from .graph import BlockGraph, ModelParams, bond_sum, check_spins, derived_seeds, make_rng
from .lattice import code_block_sums, configuration_bond_sums

# updates handed to a kernel per call
_SEGMENT = 1 << 20
DRIFT_CHECK_SWEEPS = 10_000
MAX_EXACT_N = 20


class Init(str, enum.Enum):
    ALL_PLUS = "ALL_PLUS"
    ALL_MINUS = "ALL_MINUS"
    UNIFORM_RANDOM = "UNIFORM_RANDOM"
    CHECKERBOARD = "CHECKERBOARD"  # +1 on the first community, -1 on the second
    CHECKERBOARD_FLIPPED = "CHECKERBOARD_FLIPPED"


def default_burn_in(n: int, beta: float, alpha: float) -> int:
    """Sweeps of burn-in: ``200 ceil(log n)`` below criticality, ten times more otherwise."""
    factor = 200 if beta < cw.critical_beta(alpha) else 2000
    return factor * math.ceil(math.log(n))


@dataclass(frozen=True)
class ChainSettings:
    burn_in_sweeps: int
    thinning_sweeps: int = 5
    num_samples: int = 1000
    seed: int = 0
    init: Init = Init.ALL_PLUS

    def __post_init__(self):
        object.__setattr__(self, "init", Init(self.init))
        if self.burn_in_sweeps < 0:
            raise ValueError("burn_in_sweeps must be >= 0")
        if self.thinning_sweeps < 1 or self.num_samples < 1:
            raise ValueError("thinning_sweeps and num_samples must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def defaults(cls, n: int, beta: float, alpha: float, **kw) -> "ChainSettings":
        kw.setdefault("burn_in_sweeps", default_burn_in(n, beta, alpha))
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["init"] = self.init.value
        return d


def initial_state(n: int, init: Init, rng: np.random.Generator) -> np.ndarray:
    half = n // 2
    if init is Init.ALL_PLUS:
        return np.ones(n, dtype=np.int8)
    if init is Init.ALL_MINUS:
        return -np.ones(n, dtype=np.int8)
    if init is Init.UNIFORM_RANDOM:
        return (2 * rng.integers(0, 2, size=n) - 1).astype(np.int8)
    s = np.ones(n, dtype=np.int8)
    s[half:] = -1
    return s if init is Init.CHECKERBOARD else -s


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _graph_updates(sigma, indptr, indices, scale, sites, uniforms, bond):
    # scale = 2 beta / (n p); beta * dH = scale * sigma_i * h_i
    for t in range(sites.shape[0]):
        i = sites[t]
        h = 0
        for q in range(indptr[i], indptr[i + 1]):
            h += sigma[indices[q]]
        x = scale * sigma[i] * h
        if uniforms[t] * (1.0 + math.exp(x)) < 1.0:
            bond -= 2 * sigma[i] * h
            sigma[i] = -sigma[i]
    return bond


@numba.njit(cache=True, nogil=True)
def _mean_field_updates(sigma, half, alpha, scale, sites, uniforms, s1, s2):
    # scale = 2 beta / n; the local field couples alpha-weakly across communities
    for t in range(sites.shape[0]):
        i = sites[t]
        si = sigma[i]
        if i < half:
            h = (s1 - si) + alpha * s2
        else:
            h = (s2 - si) + alpha * s1
        x = scale * si * h
        if uniforms[t] * (1.0 + math.exp(x)) < 1.0:
            sigma[i] = -si
            if i < half:
                s1 -= 2 * si
            else:
                s2 -= 2 * si
    return s1, s2


@numba.njit(cache=True, nogil=True)
def _graph_visit_counts(sigma, indptr, indices, scale, sites, uniforms, counts):
    n = sigma.shape[0]
    code = 0
    for j in range(n):
        if sigma[j] < 0:
            code |= 1 << j
    for t in range(sites.shape[0]):
        i = sites[t]
        h = 0
        for q in range(indptr[i], indptr[i + 1]):
            h += sigma[indices[q]]
        x = scale * sigma[i] * h
        if uniforms[t] * (1.0 + math.exp(x)) < 1.0:
            sigma[i] = -sigma[i]
            code ^= 1 << i
        counts[code] += 1


class _Chain:
    """Mutable state of one chain plus its random stream."""

    def __init__(self, target, beta, rng, sigma):
        self.rng = rng
        self.sigma = sigma
        self.beta = beta
        if isinstance(target, BlockGraph):
            self.graph = target
            self.params = target.params
            self.indptr, self.indices = target.adjacency
            self.scale = 2.0 * beta / (target.n * target.params.p)
            self.bond = bond_sum(target, sigma)
        else:
            self.graph = None
            self.params = target
            self.scale = 2.0 * beta / target.n
            h = target.half
            self.s1 = int(sigma[:h].sum(dtype=np.int64))
            self.s2 = int(sigma[h:].sum(dtype=np.int64))
        self.n = self.params.n
        self.half = self.params.half
        self.sweeps_since_check = 0

    def _draw(self, size):
        sites = self.rng.integers(0, self.n, size=size, dtype=np.int64)
        uniforms = self.rng.random(size)
        return sites, uniforms

    def sweeps(self, count: int) -> None:
        total = count * self.n
        while total > 0:
            size = min(total, _SEGMENT)
            sites, uniforms = self._draw(size)
            if self.graph is not None:
                self.bond = _graph_updates(self.sigma, self.indptr, self.indices, self.scale,
                                           sites, uniforms, self.bond)
            else:
                self.s1, self.s2 = _mean_field_updates(self.sigma, self.half, self.params.alpha,
                                                       self.scale, sites, uniforms, self.s1, self.s2)
            total -= size
        self.sweeps_since_check += count
        if self.sweeps_since_check >= DRIFT_CHECK_SWEEPS:
            self.check_drift()

    def check_drift(self) -> None:
        """Compare the incrementally tracked energy with a full recomputation."""
        self.sweeps_since_check = 0
        if self.graph is not None:
            full = bond_sum(self.graph, self.sigma)
            drift = abs(full - self.bond) / (self.n * self.params.p)
        else:
            h = self.half
            s1 = int(self.sigma[:h].sum(dtype=np.int64))
            s2 = int(self.sigma[h:].sum(dtype=np.int64))
            drift = abs(s1 - self.s1) + abs(s2 - self.s2)
        if drift > 1e-8:
            raise RuntimeError(f"tracked energy drifted by {drift}")

    def magnetization(self) -> tuple[float, float]:
        if self.graph is None:
            return self.s1 / self.half, self.s2 / self.half
        h = self.half
        return (int(self.sigma[:h].sum(dtype=np.int64)) / h,
                int(self.sigma[h:].sum(dtype=np.int64)) / h)


def glauber_sweep(g: Union[BlockGraph, ModelParams], sigma, beta: float,
                  rng: np.random.Generator) -> np.ndarray:
    """One sweep of ``n`` heat-bath updates at uniformly random sites; returns the new state."""
    n = g.n
    state = check_spins(sigma, n).copy()
    chain = _Chain(g, beta, rng, state)
    chain.sweeps(1)
    return chain.sigma


# ---------------------------------------------------------------------------
# sample batches
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SampleBatch:
    """Magnetization samples ``n**rescale_exponent * (m1, m2)`` with provenance.

    ``graph_seed`` is ``None`` for mean-field (averaged model) chains.
    ``beta`` is the sampling inverse temperature; it may be zero, in which
    case ``params.beta`` keeps the model value.
    """

    params: ModelParams
    rescale_exponent: float
    samples: np.ndarray
    settings: Optional[ChainSettings]
    graph_seed: Optional[int]
    chain_ids: np.ndarray = None
    sample_index: np.ndarray = None
    chain_seeds: list = field(default_factory=list)
    chain_inits: list = field(default_factory=list)
    sampler: str = "glauber"
    beta: Optional[float] = None

    def __post_init__(self):
        if self.beta is None:
            self.beta = self.params.beta
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 2)
        num = len(self.samples)
        if self.chain_ids is None:
            self.chain_ids = np.zeros(num, dtype=np.int64)
        if self.sample_index is None:
            self.sample_index = np.arange(num, dtype=np.int64)

    @property
    def num_samples(self) -> int:
        return len(self.samples)

    def unscaled(self) -> np.ndarray:
        return self.samples / self.params.n ** self.rescale_exponent

    def lattice_spacing(self) -> float:
        """Step between neighbouring values of a rescaled coordinate."""
        return 4.0 / self.params.n * self.params.n ** self.rescale_exponent

    def metadata(self) -> dict:
        return {
            "params": asdict(self.params),
            "beta": self.beta,
            "rescale_exponent": self.rescale_exponent,
            "settings": None if self.settings is None else self.settings.to_dict(),
            "graph_seed": self.graph_seed,
            "chain_seeds": [int(s) for s in self.chain_seeds],
            "chain_inits": list(self.chain_inits),
            "sampler": self.sampler,
            "num_samples": self.num_samples,
        }

    def to_csv(self, path) -> None:
        """Write ``chain_id, sample_index, m1, m2`` rows and a ``.json`` sidecar."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["chain_id", "sample_index", "m1", "m2"])
            for c, k, (a, b) in zip(self.chain_ids, self.sample_index, self.samples):
                w.writerow([int(c), int(k), repr(float(a)), repr(float(b))])
        path.with_suffix(".json").write_text(json.dumps(self.metadata(), indent=2))

    @classmethod
    def from_csv(cls, path) -> "SampleBatch":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        ids, idx, rows = [], [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for c, k, a, b in reader:
                ids.append(int(c))
                idx.append(int(k))
                rows.append((float(a), float(b)))
        settings = None if meta["settings"] is None else ChainSettings(**meta["settings"])
        return cls(ModelParams(**meta["params"]), meta["rescale_exponent"], np.array(rows),
                   settings, meta["graph_seed"], np.array(ids, dtype=np.int64),
                   np.array(idx, dtype=np.int64), meta["chain_seeds"], meta["chain_inits"],
                   meta["sampler"], meta.get("beta"))


def _run_single(target, beta, settings: ChainSettings, seed: int, init: Init,
                initial: Optional[np.ndarray]):
    rng = make_rng(seed)
    n = target.n
    sigma = check_spins(initial, n).copy() if initial is not None else initial_state(n, init, rng)
    chain = _Chain(target, beta, rng, sigma)
    if settings.burn_in_sweeps:
        chain.sweeps(settings.burn_in_sweeps)
    out = np.empty((settings.num_samples, 2))
    for k in range(settings.num_samples):
        chain.sweeps(settings.thinning_sweeps)
        out[k] = chain.magnetization()
    return out


def _with_beta(params: ModelParams, beta: float) -> ModelParams:
    return replace(params, beta=beta) if beta > 0 else params


def run_chain(target: Union[BlockGraph, ModelParams], beta: float, settings: ChainSettings,
              rescale_exponent: float = 0.0, num_chains: int = 1,
              inits: Optional[Sequence[Init]] = None, threads: int = 1,
              initial: Optional[np.ndarray] = None) -> SampleBatch:
    """Run Glauber chains and collect rescaled magnetization samples.

    A ``BlockGraph`` target samples the quenched measure; a ``ModelParams``
    target samples the averaged (mean-field) measure. Each chain records
    ``settings.num_samples`` samples, one every ``thinning_sweeps`` sweeps after
    the burn-in. With one chain the chain seed is ``settings.seed``; with
    several, seeds are derived from it and chains are merged by index, so the
    result does not depend on ``threads``. ``inits`` is cycled over chains.
    """
    if num_chains < 1:
        raise ValueError("num_chains must be >= 1")
    if initial is not None and num_chains != 1:
        raise ValueError("an explicit initial state needs a single chain")
    seeds = [int(settings.seed)] if num_chains == 1 else derived_seeds(settings.seed, num_chains)
    init_list = [Init(i) for i in (inits or [settings.init])]
    chain_inits = [init_list[c % len(init_list)] for c in range(num_chains)]
    jobs = [(target, beta, settings, seeds[c], chain_inits[c], initial) for c in range(num_chains)]
    if threads > 1 and num_chains > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda a: _run_single(*a), jobs))
    else:
        results = [_run_single(*a) for a in jobs]

    samples = np.concatenate(results) * target.n ** rescale_exponent
    chain_ids = np.repeat(np.arange(num_chains, dtype=np.int64), settings.num_samples)
    index = np.tile(np.arange(settings.num_samples, dtype=np.int64), num_chains)
    params = _with_beta(target.params if isinstance(target, BlockGraph) else target, beta)
    graph_seed = target.seed if isinstance(target, BlockGraph) else None
    return SampleBatch(params, rescale_exponent, samples, settings, graph_seed, chain_ids, index,
                       seeds, [i.value for i in chain_inits], beta=beta)


# ---------------------------------------------------------------------------
# exact sampling for small systems
# ---------------------------------------------------------------------------

def exact_gibbs_probabilities(g: BlockGraph, beta: float) -> np.ndarray:
    """Gibbs probability of each of the ``2**n`` configuration codes."""
    bonds = configuration_bond_sums(g, limit=MAX_EXACT_N)
    logw = beta * bonds / (g.n * g.params.p)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def exact_sampler_small(g: BlockGraph, beta: float, num_samples: int, seed: int,
                        rescale_exponent: float = 0.0, return_codes: bool = False):
    """I.i.d. draws from the exact quenched Gibbs measure by inverse CDF (``n <= 20``)."""
    if g.n > MAX_EXACT_N:
        raise ValueError(f"exact sampling needs n <= {MAX_EXACT_N}, got {g.n}")
    cdf = np.cumsum(exact_gibbs_probabilities(g, beta))
    u = make_rng(seed).random(num_samples) * cdf[-1]
    codes = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
    s1, s2 = code_block_sums(g.n, codes)
    half = g.params.half
    m = np.stack([s1 / half, s2 / half], axis=1) * g.n ** rescale_exponent
    batch = SampleBatch(_with_beta(g.params, beta), rescale_exponent, m, None, g.seed,
                        chain_seeds=[int(seed)], sampler="exact", beta=beta)
    return (batch, codes) if return_codes else batch


def glauber_visit_distribution(g: BlockGraph, beta: float, num_updates: int, seed: int,
                               burn_in_sweeps: int = 100) -> np.ndarray:
    """Empirical distribution of configuration codes visited by one long chain."""
    if g.n > MAX_EXACT_N:
        raise ValueError(f"visit histograms need n <= {MAX_EXACT_N}")
    rng = make_rng(seed)
    chain = _Chain(g, beta, rng, initial_state(g.n, Init.UNIFORM_RANDOM, rng))
    chain.sweeps(burn_in_sweeps)
    counts = np.zeros(1 << g.n, dtype=np.int64)
    left = num_updates
    while left > 0:
        size = min(left, _SEGMENT)
        sites, uniforms = chain._draw(size)
        _graph_visit_counts(chain.sigma, chain.indptr, chain.indices, chain.scale, sites,
                            uniforms, counts)
        left -= size
    return counts / counts.sum()


def magnetization_law_from_codes(n: int, probs: np.ndarray) -> dict:
    """Push a distribution over configuration codes forward to ``(S1, S2)``."""
    s1, s2 = code_block_sums(n, np.arange(len(probs)))
    law: dict = {}
    for a, b, w in zip(s1.tolist(), s2.tolist(), probs.tolist()):
        law[(a, b)] = law.get((a, b), 0.0) + w
    return law


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
