"""Exact dense diagnostics on enumerable spaces.

Builds the literal transition matrix of either kernel family, then reads
off spectral gaps, restricted spectral gaps, total-variation curves,
expected hitting times and the named relaxation/mixing bounds.  Dense
eigensolves keep everything exact at desk scale; nothing here is meant to
touch spaces beyond a few thousand states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh, null_space
from scipy.special import logsumexp

from .core import (
    DEFAULT_ENUM_CAP,
    CapExceeded,
    DiscreteMHError,
    DiscreteTarget,
    NeighborhoodStats,
    State,
    enumerate_space,
)
from .samplers import INFORMED, RANDOM_WALK, KernelSpec, log_clip_weight

EIG_RESIDUAL_RTOL = 1e-9


class NotReversible(DiscreteMHError):
    """Detailed balance fails beyond tolerance; spectral analysis refused."""


class NotIrreducible(DiscreteMHError):
    """The hitting-time system is singular."""


class DegenerateRestriction(DiscreteMHError):
    """The restricted variance form vanishes identically."""


class DenseChain:
    """A transition matrix, its stationary law and cached eigensystem."""

    def __init__(self, states: list, P: np.ndarray, log_pis: np.ndarray,
                 spec: KernelSpec, name: str = "", max_degree: int | None = None):
        self.states = list(states)
        self.index = {s: i for i, s in enumerate(self.states)}
        self.P = P
        self.log_pis = np.asarray(log_pis, dtype=float)
        self.pi = np.exp(self.log_pis - logsumexp(self.log_pis))
        self.spec = spec
        self.name = name
        self.max_degree = max_degree if max_degree is not None else int((P > 0).sum(axis=1).max())
        self._eig: tuple | None = None

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def lazy(self) -> bool:
        return self.spec.lazy

    def validate(self, balance_rtol: float = 1e-12) -> None:
        row_err = float(np.abs(self.P.sum(axis=1) - 1.0).max())
        if row_err > 1e-12:
            raise ValueError(f"rows do not sum to 1 (err {row_err:.2e})")
        stat_err = float(np.abs(self.pi @ self.P - self.pi).max())
        if stat_err > 1e-10:
            raise ValueError(f"pi is not stationary (err {stat_err:.2e})")
        err = self.detailed_balance_error()
        if err > balance_rtol:
            raise NotReversible(f"detailed balance violated (rel err {err:.2e})")

    def detailed_balance_error(self) -> float:
        flow = self.pi[:, None] * self.P
        denom = np.maximum(np.maximum(flow, flow.T), 1e-300)
        return float((np.abs(flow - flow.T) / denom).max())

    def symmetrized(self) -> np.ndarray:
        # sqrt(P o P^T) equals D^{1/2} P D^{-1/2} under detailed balance and
        # stays finite where pi underflows.
        s = np.sqrt(self.P * self.P.T)
        np.fill_diagonal(s, np.diag(self.P))
        return s

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        if self._eig is None:
            if self.detailed_balance_error() > 1e-8:
                raise NotReversible("chain is not reversible; no symmetric eigensystem")
            s = self.symmetrized()
            vals, vecs = eigh(s)
            resid = float(np.abs(s @ vecs - vecs * vals).max())
            scale = float(np.abs(s).max())
            if resid > EIG_RESIDUAL_RTOL * max(scale, 1.0):
                raise ValueError(f"eigensolve residual {resid:.2e} too large")
            self._eig = (vals, vecs)
        return self._eig

    def power(self, t: int) -> np.ndarray:
        """P^t by repeated squaring; stable even at extreme mass ratios."""
        if t == 0:
            return np.eye(self.n)
        return np.linalg.matrix_power(self.P, t)

    def tv_from(self, x: State, t: int) -> float:
        row = self.power(t)[self.index[x]]
        return 0.5 * float(np.abs(row - self.pi).sum())

    def tv_all(self, t: int) -> np.ndarray:
        pt = self.power(t)
        return 0.5 * np.abs(pt - self.pi[None, :]).sum(axis=1)


def build_transition_matrix(
    target: DiscreteTarget,
    spec: KernelSpec,
    states: Sequence[State] | None = None,
    cap: int = DEFAULT_ENUM_CAP,
) -> DenseChain:
    """Exact dense transition matrix of the kernel on an enumerated space.

    Off-diagonal entries are proposal times acceptance, assembled in the log
    domain; the diagonal absorbs rejections (including proposals onto
    zero-probability states outside the enumeration).  Lazy kernels halve
    every off-diagonal entry.
    """
    if states is None:
        states = enumerate_space(target, cap)
    states = list(states)
    n = len(states)
    if n > cap:
        raise CapExceeded(f"{n} states exceeds cap {cap}")
    if n < 2:
        raise ValueError("need at least two states")
    index = {s: i for i, s in enumerate(states)}
    log_pis = np.array([target.log_pi(s) for s in states])

    scans = []
    for s in states:
        ns, lps = target.neighbors_with_log_pi(s)
        scans.append((ns, lps, {y: k for k, y in enumerate(ns)}))

    P = np.zeros((n, n))
    if spec.family == RANDOM_WALK:
        sizes = np.array([len(scan[0]) for scan in scans], dtype=float)
        for i, s in enumerate(states):
            ns, lps, _ = scans[i]
            for y, lp_y in zip(ns, lps):
                j = index.get(y)
                if j is None or lp_y == -math.inf:
                    continue
                log_entry = min(-math.log(sizes[i]),
                                lp_y - log_pis[i] - math.log(sizes[j]))
                P[i, j] = math.exp(log_entry)
    else:
        log_w = []
        log_z = []
        for i in range(n):
            ns, lps, _ = scans[i]
            w = log_clip_weight(lps - log_pis[i], spec.ell, spec.big_l)
            log_w.append(w)
            log_z.append(logsumexp(w))
        for i, s in enumerate(states):
            ns, lps, _ = scans[i]
            for k, (y, lp_y) in enumerate(zip(ns, lps)):
                j = index.get(y)
                if j is None or lp_y == -math.inf:
                    continue
                pos = scans[j][2][s]
                log_k_fwd = log_w[i][k] - log_z[i]
                log_k_rev = log_w[j][pos] - log_z[j]
                log_acc = min(0.0, lp_y - log_pis[i] + log_k_rev - log_k_fwd)
                P[i, j] = math.exp(log_k_fwd + log_acc)

    np.fill_diagonal(P, 0.0)
    P[np.arange(n), np.arange(n)] = np.maximum(1.0 - P.sum(axis=1), 0.0)
    if spec.lazy:
        P = 0.5 * (P + np.eye(n))
    max_degree = max(len(scan[0]) for scan in scans)
    chain = DenseChain(states, P, log_pis, spec, name=target.name, max_degree=max_degree)
    chain.validate()
    return chain


@dataclass
class GapReport:
    """Spectral summary plus any named bounds attached to it."""

    gap: float
    rayleigh_gap: float
    n_states: int
    pi_min: float
    lazy: bool
    kernel: str
    restricted_gap: float | None = None
    theorem_bounds: dict = field(default_factory=dict)

    @property
    def relaxation_time(self) -> float:
        return math.inf if self.gap <= 0 else 1.0 / self.gap

    def to_json_dict(self) -> dict:
        return {
            "gap": self.gap,
            "rayleigh_gap": self.rayleigh_gap,
            "relaxation_time": None if self.gap <= 0 else self.relaxation_time,
            "restricted_gap": self.restricted_gap,
            "n_states": self.n_states,
            "pi_min": self.pi_min,
            "lazy": self.lazy,
            "kernel": self.kernel,
            "theorem_bounds": {
                k: v.to_json_dict() if isinstance(v, BoundResult) else v
                for k, v in self.theorem_bounds.items()
            },
        }


def spectral_gap(chain: DenseChain) -> GapReport:
    """Exact spectral gap via the pi-symmetrized dense eigensolve.

    ``gap`` guards against negative eigenvalues; ``rayleigh_gap`` is one
    minus the second-largest eigenvalue.  They agree for lazy chains, whose
    spectra are nonnegative.
    """
    vals, _ = chain.eigensystem()
    lam2 = float(vals[-2])
    lam_min = float(vals[0])
    return GapReport(
        gap=1.0 - max(lam2, abs(lam_min)),
        rayleigh_gap=1.0 - lam2,
        n_states=chain.n,
        pi_min=float(chain.pi.min()),
        lazy=chain.lazy,
        kernel=chain.spec.describe(),
    )


def restricted_gap(chain: DenseChain, x0: Sequence[State]) -> float:
    """Smallest restricted Rayleigh quotient over non-constant functions.

    Both the Dirichlet form and the variance form are restricted to pairs in
    ``x0``.  Substituting g = sqrt(pi) f turns the variance form into
    ``mass * I`` minus a rank-one projector, so the infimum is an ordinary
    symmetric eigenvalue problem on the complement of sqrt(pi); this stays
    exact even when the restriction spans hundreds of orders of magnitude
    in mass.  States whose probability underflows to zero cannot move
    either quadratic form and are dropped; if fewer than two states remain
    the variance form is identically zero.
    """
    idx = np.array([chain.index[s] for s in x0])
    if len(idx) < 2:
        raise DegenerateRestriction("restriction needs at least two states")
    pi0 = chain.pi[idx]
    live = pi0 > 0.0
    idx = idx[live]
    pi0 = pi0[live]
    if len(idx) < 2:
        raise DegenerateRestriction("variance form vanishes on the restriction")
    mass = float(pi0.sum())
    s0 = np.sqrt(pi0)
    sub = chain.P[np.ix_(idx, idx)]
    sym = np.sqrt(sub * sub.T)
    np.fill_diagonal(sym, np.diag(sub))
    inside = sub.sum(axis=1)  # P(x, x0), diagonal included
    a_mat = np.diag(inside) - sym
    q = null_space(s0[None, :])
    reduced = q.T @ a_mat @ q
    return float(np.linalg.eigvalsh(reduced)[0] / mass)


@dataclass
class TVCurve:
    tv: np.ndarray

    def tau(self, epsilon: float) -> int | None:
        hits = np.nonzero(self.tv <= epsilon)[0]
        return int(hits[0]) if len(hits) else None


def tv_curve(chain: DenseChain, init: State, t_max: int) -> TVCurve:
    """Total variation to stationarity for t = 0..t_max from one state."""
    v = np.zeros(chain.n)
    v[chain.index[init]] = 1.0
    out = np.empty(t_max + 1)
    for t in range(t_max + 1):
        out[t] = 0.5 * float(np.abs(v - chain.pi).sum())
        if t < t_max:
            v = v @ chain.P
    return TVCurve(tv=out)


def tau_x(chain: DenseChain, x: State, epsilon: float, t_cap: int = 1_000_000) -> int | None:
    """First t with TV from ``x`` at most epsilon (TV is monotone in t)."""
    if chain.tv_from(x, 0) <= epsilon:
        return 0
    hi = 1
    while chain.tv_from(x, hi) > epsilon:
        hi *= 2
        if hi > t_cap:
            return None
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if chain.tv_from(x, mid) <= epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def mixing_time(chain: DenseChain, epsilon: float, t_cap: int = 1_000_000) -> int | None:
    """Worst-case mixing time over all initial states."""
    if float(chain.tv_all(0).max()) <= epsilon:
        return 0
    hi = 1
    while float(chain.tv_all(hi).max()) > epsilon:
        hi *= 2
        if hi > t_cap:
            return None
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if float(chain.tv_all(mid).max()) <= epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def expected_hitting_time(chain: DenseChain, target_state: State) -> np.ndarray:
    """Expected steps to reach ``target_state``, per starting state.

    Solves the linear system with the target row and column removed; the
    entry for the target itself is zero.
    """
    i = chain.index[target_state]
    keep = [k for k in range(chain.n) if k != i]
    minor = chain.P[np.ix_(keep, keep)]
    try:
        h = np.linalg.solve(np.eye(len(keep)) - minor, np.ones(len(keep)))
    except np.linalg.LinAlgError as exc:
        raise NotIrreducible(str(exc)) from exc
    if not np.all(np.isfinite(h)) or np.any(h < 0):
        raise NotIrreducible("hitting-time system produced invalid values")
    out = np.zeros(chain.n)
    out[keep] = h
    return out


# ---------------------------------------------------------------------------
# named bounds


def c_of_rho(rho: float) -> float:
    """4 / (1 - rho^{-1/2})^3, the constant in the relaxation bounds."""
    if rho <= 1:
        raise ValueError("c(rho) needs rho > 1")
    return 4.0 / (1.0 - rho ** -0.5) ** 3


@dataclass
class BoundResult:
    applicable: bool
    value: float | None = None
    reason: str | None = None
    extras: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "applicable": self.applicable,
            "value": self.value,
            "reason": self.reason,
            **({"extras": self.extras} if self.extras else {}),
        }


@dataclass(frozen=True)
class RestrictedContext:
    """Inputs for warm-start bounds: restricted stats, the restriction's
    mass, and the largest log ratio from inside to an outside neighbor."""

    stats: NeighborhoodStats
    mass: float
    boundary_log_ratio: float


def _na(reason: str) -> BoundResult:
    return BoundResult(applicable=False, reason=reason)


def theorem_bounds(
    stats: NeighborhoodStats,
    spec: KernelSpec,
    pi_min: float,
    epsilon: float,
    eta: float | None = None,
    restricted: RestrictedContext | None = None,
) -> dict[str, BoundResult]:
    """Named relaxation/mixing bounds with their hypothesis checks.

    Every entry is emitted; inapplicable ones carry the failed hypothesis
    instead of a value.  Relaxation bounds dominate the lazy chain's inverse
    spectral gap; mixing bounds dominate worst-case (or warm-start) mixing
    times of the lazy chain.
    """
    m = stats.m
    log_m = math.log(m)
    out: dict[str, BoundResult] = {}
    log_inv_err = math.log(1.0 / (epsilon * pi_min))

    if stats.rho > 1:
        out["c_rho"] = BoundResult(True, c_of_rho(stats.rho), extras={"rho": stats.rho})
    else:
        out["c_rho"] = _na(f"rho = {stats.rho:.4g} <= 1")

    # uniform-proposal chain: relaxation c(rho) M
    if spec.family != RANDOM_WALK:
        out["rw_relaxation"] = _na("kernel is not random-walk")
        out["rw_mixing"] = _na("kernel is not random-walk")
    elif stats.rho <= 1:
        out["rw_relaxation"] = _na(f"needs rho > 1, got {stats.rho:.4g}")
        out["rw_mixing"] = _na(f"needs rho > 1, got {stats.rho:.4g}")
    else:
        c = c_of_rho(stats.rho)
        out["rw_relaxation"] = BoundResult(True, c * m)
        out["rw_mixing"] = BoundResult(True, c * m * log_inv_err)

    # clipped informed chain with ell = M and M^2 < L <= R
    def informed_hypothesis() -> str | None:
        if spec.family != INFORMED:
            return "kernel is not informed"
        if not math.isclose(spec.ell, m, rel_tol=1e-12):
            return f"needs ell = M = {m}, got ell = {spec.ell:g}"
        if not spec.big_l > m**2:
            return f"needs L > M^2 = {m**2}, got L = {spec.big_l:g}"
        if not math.log(spec.big_l) <= stats.log_r + 1e-12:
            return f"needs L <= R, got log L = {math.log(spec.big_l):.4g} > log R = {stats.log_r:.4g}"
        return None

    fail = informed_hypothesis()
    if fail is None:
        rho_t = spec.big_l / m**2
        c_t = c_of_rho(rho_t)
        out["informed_relaxation"] = BoundResult(True, 2 * c_t, extras={"rho_tilde": rho_t})
        out["informed_mixing"] = BoundResult(True, 2 * c_t * log_inv_err)
        side = m**2 * math.log(1.0 / pi_min) / (spec.big_l * (math.log(spec.big_l) - log_m))
        out["drift_mixing"] = BoundResult(
            True,
            4.0 * math.log(2.0 * math.e / epsilon) / (math.log(spec.big_l) - log_m)
            * math.log(1.0 / pi_min),
            extras={"side_condition": side},
        )
    else:
        out["informed_relaxation"] = _na(fail)
        out["informed_mixing"] = _na(fail)
        out["drift_mixing"] = _na(fail)

    # warm-start variants on a restriction
    if restricted is None or eta is None:
        reason = "no restriction context" if restricted is None else "no warm-start level eta"
        out["warm_rw_mixing"] = _na(reason)
        out["warm_informed_mixing"] = _na(reason)
        return out

    mass_needed = 1.0 - epsilon**2 * eta**2 / 5.0
    log_warm = math.log(1.0 / (2.0 * epsilon**2 * eta**2))
    rstats = restricted.stats
    rho0 = rstats.rho

    if spec.family != RANDOM_WALK:
        out["warm_rw_mixing"] = _na("kernel is not random-walk")
    elif rho0 <= 1:
        out["warm_rw_mixing"] = _na(f"needs restricted rho > 1, got {rho0:.4g}")
    elif restricted.mass < mass_needed:
        out["warm_rw_mixing"] = _na(
            f"mass {restricted.mass:.6g} below 1 - eps^2 eta^2/5 = {mass_needed:.6g}"
        )
    else:
        out["warm_rw_mixing"] = BoundResult(True, c_of_rho(rho0) * m * log_warm)

    def warm_informed_hypothesis() -> str | None:
        if spec.family != INFORMED:
            return "kernel is not informed"
        if not math.isclose(spec.ell, m, rel_tol=1e-12):
            return f"needs ell = M = {m}, got ell = {spec.ell:g}"
        if not spec.big_l > m**2:
            return f"needs L > M^2 = {m**2}, got L = {spec.big_l:g}"
        if not math.log(spec.big_l) <= rstats.log_r + 1e-12:
            return "needs L <= restricted R"
        if restricted.mass < mass_needed:
            return f"mass {restricted.mass:.6g} below {mass_needed:.6g}"
        if not restricted.boundary_log_ratio < math.log(spec.big_l) - log_m:
            return "boundary ratio reaches L / M"
        return None

    fail = warm_informed_hypothesis()
    if fail is None:
        out["warm_informed_mixing"] = BoundResult(
            True, 2 * c_of_rho(spec.big_l / m**2) * log_warm
        )
    else:
        out["warm_informed_mixing"] = _na(fail)
    return out


def boundary_log_ratio(
    target: DiscreteTarget, states: Sequence[State], x0: Sequence[State]
) -> float:
    """Largest log pi(outside neighbor) - log pi(inside state) over the rim."""
    x0_set = set(x0)
    worst = -math.inf
    for x in x0:
        lp_x = target.log_pi(x)
        for y in target.neighbors(x):
            if y in x0_set:
                continue
            worst = max(worst, target.log_pi(y) - lp_x)
    return worst


def warm_start_mass_threshold(epsilon: float, b: float, m: float = math.inf) -> float:
    """Required restriction mass for a warm start with density bound ``b``
    in the L^m norm; the default m = inf is the point-mass case."""
    if b < 1:
        raise ValueError("b must be at least 1")
    base = epsilon**2 / (5.0 * b**2)
    power = 1.0 if math.isinf(m) else 1.0 + 2.0 / (m - 2.0)
    return 1.0 - base**power


def warm_start_mixing_bound(gap_x0: float, epsilon: float, b: float) -> float:
    if gap_x0 <= 0:
        raise ValueError("gap must be positive")
    return math.log(b**2 / (2.0 * epsilon**2)) / gap_x0
