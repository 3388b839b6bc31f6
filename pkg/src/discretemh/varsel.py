"""Spike-and-slab variable selection with a g-prior slab.

The marginal posterior over inclusion vectors depends on the data only
through the Gram matrix, X'y and y'y, so those sufficient statistics are
the only thing kept after data generation.  Model states are 0/1 tuples.
Posterior evaluation along add/drop/swap moves reuses a Cholesky factor of
the active Gram block via rank-one extensions and downdates; a vectorized
one-shot scan evaluates every single-flip neighbor for informed proposals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .core import DiscreteMHError, DiscreteTarget, philox_rng

# Pivot smaller than this times the largest Gram diagonal counts as singular.
PIVOT_RTOL = 1e-10
# Incremental factors are rebuilt from scratch after this many updates.
REFRESH_EVERY = 1000


class SingularModel(DiscreteMHError):
    """The active Gram block is numerically singular."""


class InvalidGram(DiscreteMHError):
    """A Gram specification that is not positive semidefinite."""


class InvalidInit(DiscreteMHError):
    """An initialization scheme with out-of-range parameters."""


@dataclass(frozen=True)
class VarSelData:
    """Sufficient statistics of a regression dataset."""

    gram: np.ndarray
    xty: np.ndarray
    yty: float
    n: int
    p: int

    def __post_init__(self):
        gram = np.asarray(self.gram, dtype=float)
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "xty", np.asarray(self.xty, dtype=float))
        if gram.shape != (self.p, self.p):
            raise ValueError("gram must be p x p")
        if not np.allclose(gram, gram.T, atol=1e-8 * max(1.0, float(np.abs(gram).max()))):
            raise InvalidGram("gram must be symmetric")
        if self.yty <= 0:
            raise ValueError("yty must be positive")

    @property
    def pivot_tol(self) -> float:
        return PIVOT_RTOL * float(np.max(np.diag(self.gram)))


@dataclass(frozen=True)
class VarSelHyper:
    """Prior hyperparameters: g-prior scale, sparsity penalty, optional cap."""

    g: float
    kappa: float
    s_max: int | None = None

    def __post_init__(self):
        if self.g <= 0 or self.kappa <= 0:
            raise ValueError("g and kappa must be positive")
        if self.s_max is not None and self.s_max < 1:
            raise ValueError("s_max must be >= 1 when present")


def _chol_append(chol: np.ndarray | None, gram: np.ndarray, active: list[int], j: int,
                 tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Extend a lower Cholesky factor of gram[active, active] by column j."""
    gjj = gram[j, j]
    if chol is None or len(active) == 0:
        if gjj <= tol:
            raise SingularModel(f"variable {j} has negligible norm")
        return np.array([[math.sqrt(gjj)]]), np.zeros(0)
    u = gram[np.ix_(active, [j])][:, 0]
    w = solve_triangular(chol, u, lower=True)
    d2 = gjj - w @ w
    if d2 <= tol:
        raise SingularModel(f"adding variable {j} makes the model singular")
    s = len(active)
    out = np.zeros((s + 1, s + 1))
    out[:s, :s] = chol
    out[s, :s] = w
    out[s, s] = math.sqrt(d2)
    return out, w


def _chol_rank1_update(chol: np.ndarray, x: np.ndarray) -> np.ndarray:
    """In-place lower-triangular update: factor of L L' + x x'."""
    x = x.copy()
    k = chol.shape[0]
    for i in range(k):
        r = math.hypot(chol[i, i], x[i])
        c = r / chol[i, i]
        s = x[i] / chol[i, i]
        chol[i, i] = r
        if i + 1 < k:
            chol[i + 1 :, i] = (chol[i + 1 :, i] + s * x[i + 1 :]) / c
            x[i + 1 :] = c * x[i + 1 :] - s * chol[i + 1 :, i]
    return chol


def _chol_delete(chol: np.ndarray, pos: int) -> np.ndarray:
    """Lower Cholesky factor after deleting row/column ``pos``."""
    k = chol.shape[0]
    out = np.delete(np.delete(chol, pos, axis=0), pos, axis=1)
    if pos < k - 1:
        v = chol[pos + 1 :, pos].copy()
        _chol_rank1_update(out[pos:, pos:], v)
    return out


def _fresh_chol(data: VarSelData, active: list[int]) -> np.ndarray | None:
    if not active:
        return None
    sub = data.gram[np.ix_(active, active)]
    try:
        chol = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError as exc:
        raise SingularModel(str(exc)) from exc
    if float(np.min(np.diag(chol)) ** 2) <= data.pivot_tol:
        raise SingularModel("pivot below tolerance")
    return chol


def _explained(data: VarSelData, chol: np.ndarray | None, active: list[int]) -> float:
    if chol is None:
        return 0.0
    z = solve_triangular(chol, data.xty[active], lower=True)
    return float(z @ z)


def r_squared(data: VarSelData, delta) -> float:
    """Coefficient of determination of the submodel selected by ``delta``."""
    active = [j for j in range(data.p) if delta[j]]
    chol = _fresh_chol(data, active)
    r2 = _explained(data, chol, active) / data.yty
    return float(min(max(r2, 0.0), 1.0))


def _log_post_from_r2(data: VarSelData, hyper: VarSelHyper, size: int, r2: float) -> float:
    return (
        -hyper.kappa * size * math.log(data.p)
        - 0.5 * size * math.log1p(hyper.g)
        - 0.5 * data.n * math.log1p(hyper.g * (1.0 - r2))
    )


def log_posterior(data: VarSelData, hyper: VarSelHyper, delta) -> float:
    """Marginal log posterior of a model, up to one global constant.

    Zero-probability states (sparsity cap exceeded, more variables than
    observations, or a numerically singular Gram block) return -inf.
    """
    size = int(sum(delta))
    if hyper.s_max is not None and size > hyper.s_max:
        return -math.inf
    if size > data.n:
        return -math.inf
    try:
        r2 = r_squared(data, delta)
    except SingularModel:
        return -math.inf
    return _log_post_from_r2(data, hyper, size, r2)


def neighbors(delta, scheme: str = "n1", s_max: int | None = None, hard: bool = False):
    """Single-flip (``n1``) or add-delete-swap (``ads``) neighbor models.

    By default models beyond the sparsity cap are still emitted (they carry
    zero posterior mass, so proposing them is an automatic rejection); with
    ``hard=True`` they are dropped from the list instead.
    """
    if scheme not in ("n1", "ads"):
        raise ValueError(f"unknown neighborhood scheme {scheme!r}")
    p = len(delta)
    size = sum(delta)
    out = []
    for j in range(p):
        flipped = list(delta)
        flipped[j] = 1 - flipped[j]
        new_size = size + (1 if flipped[j] else -1)
        if hard and s_max is not None and new_size > s_max:
            continue
        out.append(tuple(flipped))
    if scheme == "ads":
        for j in range(p):
            if not delta[j]:
                continue
            for k in range(p):
                if delta[k]:
                    continue
                swapped = list(delta)
                swapped[j], swapped[k] = 0, 1
                out.append(tuple(swapped))
    return out


@dataclass(frozen=True)
class ModelState:
    """A model plus the cached factor that makes move evaluation cheap."""

    delta: tuple
    active: tuple
    chol: np.ndarray | None
    r2: float
    log_pi: float
    n_updates: int
    data: VarSelData
    hyper: VarSelHyper

    @staticmethod
    def from_delta(data: VarSelData, hyper: VarSelHyper, delta) -> "ModelState":
        delta = tuple(int(b) for b in delta)
        active = tuple(j for j in range(data.p) if delta[j])
        chol = _fresh_chol(data, list(active))
        r2 = min(max(_explained(data, chol, list(active)) / data.yty, 0.0), 1.0)
        return ModelState(
            delta=delta,
            active=active,
            chol=chol,
            r2=r2,
            log_pi=_log_post_from_r2(data, hyper, len(active), r2),
            n_updates=0,
            data=data,
            hyper=hyper,
        )


def update_model(state: ModelState, move) -> ModelState:
    """Apply ``("add", j)``, ``("drop", j)`` or ``("swap", j_out, j_in)``.

    The cached Cholesky factor is extended or downdated in place of a full
    refactorization; a from-scratch rebuild happens every REFRESH_EVERY
    updates to cap drift from repeated downdates.
    """
    kind = move[0]
    if kind == "swap":
        _, j_out, j_in = move
        return update_model(update_model(state, ("drop", j_out)), ("add", j_in))
    j = move[1]
    data, hyper = state.data, state.hyper
    active = list(state.active)
    if kind == "add":
        if state.delta[j]:
            raise ValueError(f"variable {j} already active")
        chol, _ = _chol_append(state.chol, data.gram, active, j, data.pivot_tol)
        active.append(j)
    elif kind == "drop":
        if not state.delta[j]:
            raise ValueError(f"variable {j} not active")
        pos = active.index(j)
        active.pop(pos)
        chol = _chol_delete(state.chol, pos) if len(active) else None
    else:
        raise ValueError(f"unknown move kind {kind!r}")
    delta = list(state.delta)
    delta[j] = 1 - delta[j]
    new = ModelState(
        delta=tuple(delta),
        active=tuple(active),
        chol=chol,
        r2=0.0,
        log_pi=0.0,
        n_updates=state.n_updates + 1,
        data=data,
        hyper=hyper,
    )
    if new.n_updates >= REFRESH_EVERY:
        return ModelState.from_delta(data, hyper, new.delta)
    r2 = min(max(_explained(data, chol, active) / data.yty, 0.0), 1.0)
    size = len(active)
    lp = _log_post_from_r2(data, hyper, size, r2)
    if hyper.s_max is not None and size > hyper.s_max:
        lp = -math.inf
    if size > data.n:
        lp = -math.inf
    return replace(new, r2=r2, log_pi=lp)


def _n1_scan(data: VarSelData, hyper: VarSelHyper, cap: int | None, hard: bool):
    """Vectorized log posteriors of all single-flip neighbors of a model."""
    gram, xty, yty = data.gram, data.xty, data.yty
    tol = data.pivot_tol

    def scan(delta):
        active = [j for j in range(data.p) if delta[j]]
        size = len(active)
        try:
            chol = _fresh_chol(data, active)
        except SingularModel:
            # current state carries no mass; fall back to per-model evals
            ns = neighbors(delta, "n1", s_max=cap, hard=hard)
            return ns, np.array([log_posterior(data, hyper, m) for m in ns])
        explained = _explained(data, chol, active)
        add_expl = np.full(data.p, -np.inf)
        drop_expl = np.full(data.p, -np.inf)
        inactive = [j for j in range(data.p) if not delta[j]]
        if inactive:
            if size:
                u = gram[np.ix_(active, inactive)]
                w = solve_triangular(chol, u, lower=True)
                z = solve_triangular(chol, xty[active], lower=True)
                d2 = np.diag(gram)[inactive] - np.einsum("ij,ij->j", w, w)
                num = xty[inactive] - w.T @ z
            else:
                d2 = np.diag(gram)[inactive].astype(float)
                num = xty[inactive].astype(float)
            ok = d2 > tol
            gain = np.divide(num**2, d2, out=np.zeros_like(d2), where=ok)
            add_expl[inactive] = np.where(ok, explained + gain, -np.inf)
        if size:
            inv = cho_solve((chol, True), np.eye(size))
            beta = inv @ xty[active]
            drop_vals = explained - beta**2 / np.diag(inv)
            drop_expl[active] = drop_vals

        ns, lps = [], []
        for j in range(data.p):
            if delta[j]:
                new_size = size - 1
                expl = drop_expl[j]
            else:
                new_size = size + 1
                expl = add_expl[j]
            if hard and cap is not None and new_size > cap:
                continue
            flipped = list(delta)
            flipped[j] = 1 - flipped[j]
            ns.append(tuple(flipped))
            if expl == -np.inf:
                lps.append(-math.inf)
                continue
            if (hyper.s_max is not None and new_size > hyper.s_max) or new_size > data.n:
                lps.append(-math.inf)
                continue
            r2 = min(max(expl / yty, 0.0), 1.0)
            lps.append(_log_post_from_r2(data, hyper, new_size, r2))
        return ns, np.array(lps)

    return scan


def varsel_target(
    data: VarSelData,
    hyper: VarSelHyper,
    neighborhood: str = "n1",
    hard_space: bool = True,
    name: str = "",
) -> DiscreteTarget:
    """Discrete target for the model posterior.

    ``hard_space=True`` keeps neighbor lists inside the allowed space (the
    graph the mixing theory is stated on); ``hard_space=False`` emits
    cap-violating proposals that are rejected through zero posterior mass.
    """
    cap = hyper.s_max if hyper.s_max is not None else data.p
    cap = min(cap, data.n)

    def log_pi(delta):
        return log_posterior(data, hyper, delta)

    def nbrs(delta):
        return neighbors(delta, neighborhood, s_max=cap, hard=hard_space)

    scan = _n1_scan(data, hyper, cap, hard_space) if neighborhood == "n1" else None
    return DiscreteTarget(
        log_pi=log_pi,
        neighbors=nbrs,
        seed_state=tuple([0] * data.p),
        name=name or f"varsel(p={data.p}, n={data.n}, {neighborhood})",
        neighbor_log_pis=scan,
    )


# ---------------------------------------------------------------------------
# data generation


def covariance_matrix(p: int, kind: str) -> np.ndarray:
    """Design covariance: unit diagonal, exponentially decaying correlation."""
    idx = np.arange(p)
    diff = np.abs(idx[:, None] - idx[None, :])
    if kind == "moderate":
        sigma = np.exp(-2.0 * diff)
    elif kind == "high":
        sigma = np.exp(-diff / 4.0)
    else:
        raise ValueError(f"unknown covariance kind {kind!r}")
    np.fill_diagonal(sigma, 1.0)
    return sigma


def default_signal(p: int, n: int) -> np.ndarray:
    """Five-variable signal with scale sqrt(log p / n)."""
    beta = np.zeros(p)
    beta[:5] = math.sqrt(math.log(p) / n) * np.array([8.0, -12.0, 8.0, 8.0, -12.0])
    return beta


def generate_data(
    p: int,
    n: int,
    covariance: str = "moderate",
    seed=0,
    beta: np.ndarray | None = None,
) -> tuple[VarSelData, tuple]:
    """Draw a Gaussian design and response; return sufficient statistics only."""
    if p < 5 or n < 5:
        raise ValueError("need p >= 5 and n >= 5")
    rng = philox_rng(seed)
    sigma = covariance_matrix(p, covariance)
    chol = np.linalg.cholesky(sigma)
    x = rng.standard_normal((n, p)) @ chol.T
    if beta is None:
        beta = default_signal(p, n)
    y = x @ beta + rng.standard_normal(n)
    data = VarSelData(gram=x.T @ x, xty=x.T @ y, yty=float(y @ y), n=n, p=p)
    truth = tuple(int(b != 0) for b in beta)
    return data, truth


def gram_data(
    gram_over_n: np.ndarray,
    beta: np.ndarray,
    n: int,
    noise: float = 1.0,
) -> VarSelData:
    """Dataset specified directly by inner products, with no explicit design.

    The response is X beta plus a residual orthogonal to every column with
    squared norm ``noise * n``, so X'y and y'y follow exactly from the Gram
    matrix.
    """
    gram_over_n = np.asarray(gram_over_n, dtype=float)
    p = gram_over_n.shape[0]
    eigs = np.linalg.eigvalsh((gram_over_n + gram_over_n.T) / 2)
    if eigs.min() < -1e-10 * max(1.0, eigs.max()):
        raise InvalidGram(f"gram specification indefinite (min eig {eigs.min():.3g})")
    beta = np.asarray(beta, dtype=float)
    gram = gram_over_n * n
    xty = gram @ beta
    yty = float(beta @ gram @ beta + noise * n)
    return VarSelData(gram=gram, xty=xty, yty=yty, n=n, p=p)


def gram_target(
    gram_over_n: np.ndarray,
    beta: np.ndarray,
    n: int,
    g: float,
    kappa: float,
    noise: float = 1.0,
    s_max: int | None = None,
    neighborhood: str = "n1",
) -> DiscreteTarget:
    data = gram_data(gram_over_n, beta, n, noise=noise)
    hyper = VarSelHyper(g=g, kappa=kappa, s_max=s_max)
    return varsel_target(data, hyper, neighborhood=neighborhood)


# ---------------------------------------------------------------------------
# initialization schemes


def uniform_m_init(p: int, m: int, rng: np.random.Generator) -> tuple:
    """A uniformly random model with exactly m active variables."""
    if not 0 <= m <= p:
        raise InvalidInit(f"m={m} out of range for p={p}")
    delta = [0] * p
    for j in rng.choice(p, size=m, replace=False):
        delta[j] = 1
    return tuple(delta)


def good_bad_init(
    truth, variant: str, rng: np.random.Generator, n_false: int = 50
) -> tuple:
    """False-positive-heavy starts: ``good`` keeps the truth as a submodel,
    ``bad`` drops it entirely; both add ``n_false`` spurious variables."""
    p = len(truth)
    spurious = [j for j in range(p) if not truth[j]]
    if n_false > len(spurious):
        raise InvalidInit(f"cannot place {n_false} false positives with p={p}")
    chosen = rng.choice(len(spurious), size=n_false, replace=False)
    delta = [0] * p
    for idx in chosen:
        delta[spurious[idx]] = 1
    if variant == "good":
        for j in range(p):
            if truth[j]:
                delta[j] = 1
    elif variant != "bad":
        raise InvalidInit(f"unknown variant {variant!r}")
    return tuple(delta)


def init_scheme(
    kind: str,
    p: int,
    rng: np.random.Generator,
    truth=None,
    m: int | None = None,
    n_false: int = 50,
) -> tuple:
    if kind == "uniform-m":
        if m is None:
            raise InvalidInit("uniform-m needs m")
        return uniform_m_init(p, m, rng)
    if kind in ("good", "bad"):
        if truth is None:
            raise InvalidInit(f"{kind} init needs the true model")
        return good_bad_init(truth, kind, rng, n_false=n_false)
    raise InvalidInit(f"unknown init scheme {kind!r}")


# ---------------------------------------------------------------------------
# fixtures and serialization

EXAMPLE3_GRAM = np.array(
    [[1.0, -0.8, 0.9], [-0.8, 1.0, -0.6], [0.9, -0.6, 1.0]]
)
EXAMPLE3_BETA = np.array([1.25, 1.0, 0.0])
EXAMPLE3_N = 1000
EXAMPLE3_G = 27.0
EXAMPLE3_KAPPA = 1.0


def example3_data() -> VarSelData:
    return gram_data(EXAMPLE3_GRAM, EXAMPLE3_BETA, EXAMPLE3_N)


def example3_target(space: str = "v", neighborhood: str = "n1") -> DiscreteTarget:
    """The three-variable correlated-design fixture on V or V_2."""
    s_max = 2 if space == "v2" else None
    return gram_target(
        EXAMPLE3_GRAM,
        EXAMPLE3_BETA,
        EXAMPLE3_N,
        g=EXAMPLE3_G,
        kappa=EXAMPLE3_KAPPA,
        s_max=s_max,
        neighborhood=neighborhood,
    )


def save_data(data: VarSelData, path, seed=None, covariance: str | None = None) -> None:
    payload = {
        "gram": data.gram.ravel().tolist(),
        "xty": data.xty.tolist(),
        "yty": data.yty,
        "n": data.n,
        "p": data.p,
        "seed": seed,
        "covariance": covariance,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_data(path) -> VarSelData:
    with open(path) as fh:
        payload = json.load(fh)
    p = payload["p"]
    return VarSelData(
        gram=np.array(payload["gram"]).reshape(p, p),
        xty=np.array(payload["xty"]),
        yty=payload["yty"],
        n=payload["n"],
        p=p,
    )


def example3_fixture_path():
    """Location of the checked-in JSON copy of the three-variable dataset."""
    from importlib import resources

    return resources.files("discretemh") / "data" / "example3.json"
