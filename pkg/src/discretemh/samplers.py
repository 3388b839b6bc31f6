"""Random-walk and clipped informed Metropolis-Hastings kernels.

Both kernel families share one step primitive: draw a proposal from the
kernel's distribution on the current neighborhood, then accept with the
usual ratio.  The informed family weights each neighbor by a clipped
probability ratio; the random-walk family draws uniformly.  Laziness (stay
put with probability 1/2) is a kernel flag so that bound verification can
run on the matrices the mixing theory is stated for, while experiments run
the raw chains.

Randomness comes from counter-based Philox streams: a master seed spawns
independent substreams per replicate, so experiment results do not depend
on worker scheduling.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .core import DiscreteMHError, DiscreteTarget, IsolatedState, State, philox_rng

RANDOM_WALK = "random-walk"
INFORMED = "informed"


class InvalidClip(DiscreteMHError):
    """Clip bounds must satisfy ell < L."""


@dataclass(frozen=True)
class KernelSpec:
    """Proposal family plus clip bounds and the laziness flag.

    ``ell = 0`` with ``big_l = inf`` is the unclipped informed kernel, whose
    weight function is the identity.  Laziness halves every off-diagonal
    transition probability.
    """

    family: str = RANDOM_WALK
    ell: float = 0.0
    big_l: float = math.inf
    lazy: bool = False

    def __post_init__(self):
        if self.family not in (RANDOM_WALK, INFORMED):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == INFORMED:
            if self.ell < 0:
                raise InvalidClip("ell must be >= 0")
            if not self.ell < self.big_l:
                raise InvalidClip(f"need ell < L, got ell={self.ell}, L={self.big_l}")

    @property
    def clipped(self) -> bool:
        return self.family == INFORMED and (self.ell > 0 or math.isfinite(self.big_l))

    def describe(self) -> str:
        if self.family == RANDOM_WALK:
            base = "random-walk"
        elif not self.clipped:
            base = "informed(unclipped)"
        else:
            base = f"informed(ell={self.ell:g}, L={self.big_l:g})"
        return base + (" lazy" if self.lazy else "")


def clip_weight(u: float, ell: float, big_l: float) -> float:
    """Weight function: ``u`` clamped to ``[ell, L]``."""
    if not ell < big_l:
        raise InvalidClip(f"need ell < L, got ell={ell}, L={big_l}")
    return min(max(u, ell), big_l)


def log_clip_weight(log_u, ell: float, big_l: float):
    """Log-domain clip: works on scalars or arrays of log ratios."""
    if not ell < big_l:
        raise InvalidClip(f"need ell < L, got ell={ell}, L={big_l}")
    lo = math.log(ell) if ell > 0 else -math.inf
    hi = math.log(big_l) if math.isfinite(big_l) else math.inf
    return np.clip(log_u, lo, hi)


def _informed_scan(target: DiscreteTarget, x: State, x_log_pi: float, spec: KernelSpec):
    """Neighbors of x with log clipped weights and the log normalizer Z_h(x)."""
    ns, lps = target.neighbors_with_log_pi(x)
    if not ns:
        raise IsolatedState(f"state {x!r} has no neighbors")
    log_w = log_clip_weight(lps - x_log_pi, spec.ell, spec.big_l)
    log_z = logsumexp(log_w)
    if log_z == -math.inf:
        raise IsolatedState(f"state {x!r} has no neighbor with positive weight")
    return ns, lps, log_w, float(log_z)


def informed_proposal_dist(
    target: DiscreteTarget, x: State, spec: KernelSpec
) -> tuple[list[State], np.ndarray]:
    """Informed proposal distribution over the neighborhood of ``x``.

    Each neighbor's probability is its clipped ratio weight over the
    normalizer; weights are computed in the log domain and exponentiated
    after a log-sum-exp.
    """
    if spec.family != INFORMED:
        raise ValueError("informed_proposal_dist requires an informed KernelSpec")
    ns, _, log_w, log_z = _informed_scan(target, x, target.log_pi(x), spec)
    return ns, np.exp(log_w - log_z)


def acceptance_log_ratio(
    target: DiscreteTarget, x: State, x_prime: State, spec: KernelSpec
) -> float:
    """log of pi(x') K(x', x) / (pi(x) K(x, x')) for a proposed move.

    The acceptance probability of the move is ``min(1, exp(value))``; -inf
    encodes a proposal onto a zero-probability state.
    """
    lp_x = target.log_pi(x)
    lp_y = target.log_pi(x_prime)
    if spec.family == RANDOM_WALK:
        n_x = len(list(target.neighbors(x)))
        if lp_y == -math.inf:
            return -math.inf
        n_y = len(list(target.neighbors(x_prime)))
        return lp_y - lp_x + math.log(n_x) - math.log(n_y)
    if lp_y == -math.inf:
        return -math.inf
    ns_x, _, log_w_x, log_z_x = _informed_scan(target, x, lp_x, spec)
    ns_y, _, log_w_y, log_z_y = _informed_scan(target, x_prime, lp_y, spec)
    log_k_fwd = log_w_x[ns_x.index(x_prime)] - log_z_x
    log_k_rev = log_w_y[ns_y.index(x)] - log_z_y
    return float(lp_y - lp_x + log_k_rev - log_k_fwd)


@dataclass
class StepMeta:
    proposal: State | None
    accepted: bool
    lazy_stay: bool
    log_alpha: float
    n_evals: int
    next_log_pi: float


def make_rng(seed) -> np.random.Generator:
    """Philox generator from an int seed, a sequence of ints or a SeedSequence."""
    return philox_rng(seed)


def spawn_rngs(master_seed, n: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(master_seed).spawn(n)
    return [make_rng(c) for c in children]


def _sample_index(rng: np.random.Generator, probs: np.ndarray) -> int:
    c = np.cumsum(probs)
    u = rng.random() * c[-1]
    return int(np.searchsorted(c, u, side="right").clip(0, len(probs) - 1))


def step(
    target: DiscreteTarget,
    x: State,
    spec: KernelSpec,
    rng: np.random.Generator,
    x_log_pi: float | None = None,
    scan_cache: dict | None = None,
) -> tuple[State, StepMeta]:
    """One Metropolis-Hastings transition from ``x``.

    Draw order is fixed (lazy coin, proposal, acceptance uniform) so traces
    are reproducible from the generator state.  ``scan_cache`` optionally
    memoizes informed neighborhood scans keyed by state; cache hits are not
    counted in ``n_evals``.
    """
    if x_log_pi is None:
        x_log_pi = target.log_pi(x)
    if spec.lazy and rng.random() < 0.5:
        return x, StepMeta(None, False, True, 0.0, 0, x_log_pi)

    n_evals = 0
    if spec.family == RANDOM_WALK:
        ns = list(target.neighbors(x))
        if not ns:
            raise IsolatedState(f"state {x!r} has no neighbors")
        y = ns[int(rng.integers(len(ns)))]
        lp_y = target.log_pi(y)
        n_evals += 1
        if lp_y == -math.inf:
            log_alpha = -math.inf
        else:
            n_y = len(list(target.neighbors(y)))
            log_alpha = lp_y - x_log_pi + math.log(len(ns)) - math.log(n_y)
    else:
        cached = scan_cache.get(x) if scan_cache is not None else None
        if cached is None:
            ns, lps, log_w, log_z = _informed_scan(target, x, x_log_pi, spec)
            n_evals += len(ns)
            if scan_cache is not None:
                scan_cache[x] = (ns, lps, log_w, log_z)
        else:
            ns, lps, log_w, log_z = cached
        j = _sample_index(rng, np.exp(log_w - log_z))
        y = ns[j]
        lp_y = lps[j]
        if lp_y == -math.inf:
            log_alpha = -math.inf
        else:
            cached_y = scan_cache.get(y) if scan_cache is not None else None
            if cached_y is None:
                ns_y, lps_y, log_w_y, log_z_y = _informed_scan(target, y, lp_y, spec)
                n_evals += len(ns_y)
                if scan_cache is not None:
                    scan_cache[y] = (ns_y, lps_y, log_w_y, log_z_y)
            else:
                ns_y, lps_y, log_w_y, log_z_y = cached_y
            log_k_fwd = log_w[j] - log_z
            log_k_rev = log_w_y[ns_y.index(x)] - log_z_y
            log_alpha = lp_y - x_log_pi + log_k_rev - log_k_fwd

    if log_alpha >= 0:
        accepted = True
    else:
        accepted = math.log(rng.random()) < log_alpha if log_alpha > -math.inf else False
    if accepted:
        return y, StepMeta(y, True, False, float(log_alpha), n_evals, float(lp_y))
    return x, StepMeta(y, False, False, float(log_alpha), n_evals, x_log_pi)


@dataclass
class ChainTrace:
    """A realized chain: states, their log probabilities and per-step flags."""

    seed: object
    spec: KernelSpec
    states: list
    log_pis: np.ndarray
    accepted: np.ndarray
    lazy_stays: np.ndarray
    proposal_evals: int
    hit_iteration: int | None
    elapsed: float
    elapsed_to_hit: float | None

    def __len__(self) -> int:
        return len(self.states)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("step,state,log_pi,accepted\n")
            for i, s in enumerate(self.states):
                acc = "" if i == 0 else int(self.accepted[i - 1])
                label = "".join(map(str, s)) if isinstance(s, tuple) else str(s)
                fh.write(f"{i},{label},{float(self.log_pis[i])!r},{acc}\n")

    def sidecar(self, model_config: dict | None = None) -> dict:
        return {
            "seed": str(self.seed),
            "kernel": self.spec.describe(),
            "lazy": self.spec.lazy,
            "n_steps": len(self.states) - 1,
            "proposal_evals": self.proposal_evals,
            "hit_iteration": self.hit_iteration,
            "elapsed_seconds": self.elapsed,
            "model": model_config or {},
        }


def run_chain(
    target: DiscreteTarget,
    init: State,
    spec: KernelSpec,
    n_steps: int,
    seed,
    stop_at=None,
    stop_early: bool = False,
    cache_states: int = 0,
) -> ChainTrace:
    """Run a chain for ``n_steps`` transitions from ``init``.

    ``stop_at`` may be a single state or a set; the first iteration whose
    state lies in it is recorded, and the run terminates there when
    ``stop_early`` is set (traces are fixed-length otherwise so that
    replicate aggregation stays rectangular).
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    rng = make_rng(seed)
    stop_set = None
    if stop_at is not None:
        # model states are tuples; collections of stop states are sets/lists
        if isinstance(stop_at, (set, frozenset, list)):
            stop_set = frozenset(stop_at)
        else:
            stop_set = frozenset([stop_at])
    scan_cache: dict | None = {} if cache_states > 0 else None

    x = init
    lp = target.log_pi(x)
    if lp == -math.inf:
        raise ValueError("initial state has zero probability")
    states = [x]
    log_pis = [lp]
    accepted = np.zeros(n_steps, dtype=bool)
    lazy_stays = np.zeros(n_steps, dtype=bool)
    evals = 0
    hit = 0 if (stop_set is not None and x in stop_set) else None
    t0 = time.perf_counter()
    t_hit = 0.0 if hit is not None else None
    n_done = 0
    for i in range(n_steps):
        if hit is not None and stop_early:
            break
        x, meta = step(target, x, spec, rng, x_log_pi=lp, scan_cache=scan_cache)
        lp = meta.next_log_pi
        states.append(x)
        log_pis.append(lp)
        accepted[i] = meta.accepted
        lazy_stays[i] = meta.lazy_stay
        evals += meta.n_evals
        n_done = i + 1
        if scan_cache is not None and len(scan_cache) > cache_states:
            scan_cache.pop(next(iter(scan_cache)))
        if hit is None and stop_set is not None and x in stop_set:
            hit = i + 1
            t_hit = time.perf_counter() - t0
    elapsed = time.perf_counter() - t0
    return ChainTrace(
        seed=seed,
        spec=spec,
        states=states,
        log_pis=np.array(log_pis),
        accepted=accepted[:n_done],
        lazy_stays=lazy_stays[:n_done],
        proposal_evals=evals,
        hit_iteration=hit,
        elapsed=elapsed,
        elapsed_to_hit=t_hit,
    )


@dataclass
class RunRecord:
    index: int
    hit: bool
    hit_iteration: int | None
    n_steps_run: int
    elapsed: float
    elapsed_to_hit: float | None


@dataclass
class ExperimentSummary:
    """Aggregate of replicated hitting runs: success count plus medians."""

    n_runs: int
    budget: int
    success: int
    median_hit_iteration: float | None
    median_elapsed: float
    median_elapsed_to_hit: float | None
    runs: list[RunRecord] = field(repr=False, default_factory=list)

    @property
    def majority_success(self) -> bool:
        return self.success >= self.n_runs / 2


def _run_replicate(args):
    factory, index, seedseq, spec, budget, stop_early = args
    data_seq, chain_seq = seedseq.spawn(2)
    target, init, truth = factory(index, data_seq)
    trace = run_chain(
        target, init, spec, budget, chain_seq, stop_at=truth, stop_early=stop_early
    )
    return RunRecord(
        index=index,
        hit=trace.hit_iteration is not None,
        hit_iteration=trace.hit_iteration,
        n_steps_run=len(trace.states) - 1,
        elapsed=trace.elapsed,
        elapsed_to_hit=trace.elapsed_to_hit,
    )


def hitting_experiment(
    factory: Callable[[int, np.random.SeedSequence], tuple],
    spec: KernelSpec,
    n_runs: int,
    budget: int,
    master_seed,
    workers: int = 1,
    stop_early: bool = True,
) -> ExperimentSummary:
    """Replicated hitting-time experiment under a per-replicate seed tree.

    Each replicate gets an independent substream of the master seed, so the
    summary is identical for any worker count.  Success counts runs whose
    chain reaches a truth state within the budget; iteration and wall-time
    medians are taken over successful runs.
    """
    children = np.random.SeedSequence(master_seed).spawn(n_runs)
    jobs = [
        (factory, i, children[i], spec, budget, stop_early)
        for i in range(n_runs)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_replicate, jobs))
    else:
        records = [_run_replicate(j) for j in jobs]
    records.sort(key=lambda r: r.index)
    hits = [r.hit_iteration for r in records if r.hit]
    t_hits = [r.elapsed_to_hit for r in records if r.hit]
    return ExperimentSummary(
        n_runs=n_runs,
        budget=budget,
        success=len(hits),
        median_hit_iteration=float(np.median(hits)) if hits else None,
        median_elapsed=float(np.median([r.elapsed for r in records])),
        median_elapsed_to_hit=float(np.median(t_hits)) if t_hits else None,
        runs=records,
    )
