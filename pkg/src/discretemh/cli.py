"""Configuration-driven experiment and certification harness.

Subcommands: ``golden`` re-derives the embedded three-variable fixture's
reference quantities and checks them against their published values;
``experiment`` runs replicated hitting-time studies to CSV; ``certify``
and ``diagnose`` run the exact spectral/flow/drift machinery on enumerable
configurations.  Exit codes: 0 on success, 1 when a golden value or
certificate check fails, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .core import (
    CapExceeded,
    DiscreteTarget,
    enumerate_space,
    restricted_stats,
    unimodality_stats,
)
from .diagnostics import (
    RestrictedContext,
    boundary_log_ratio,
    build_transition_matrix,
    restricted_gap,
    spectral_gap,
    tau_x,
    theorem_bounds,
    tv_curve,
)
from .flowbound import build_flow_graph, congestion, drift_certificate
from .samplers import (
    INFORMED,
    RANDOM_WALK,
    KernelSpec,
    hitting_experiment,
    make_rng,
    run_chain,
)
from . import sbm as sbm_model
from . import varsel as varsel_model


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration

_SECTION_KEYS = {
    "model": {
        "kind", "p", "n", "covariance", "g", "kappa", "s_max", "neighborhood",
        "p_within", "p_between", "space",
    },
    "kernel": {"family", "ell", "big_l", "lazy"},
    "run": {
        "n_runs", "budget", "init", "seed", "workers", "stop_early",
        "fresh_data", "save_trajectories",
    },
    "output": {"directory", "formats"},
    "certify": {"epsilon", "s_threshold", "q", "x0", "enum_cap", "eta", "t_max"},
}
_INIT_KEYS = {"scheme", "m", "n_false"}
_MODEL_KIND_KEYS = {
    "varsel": {"kind", "p", "n", "covariance", "g", "kappa", "s_max", "neighborhood"},
    "sbm": {"kind", "p", "p_within", "p_between"},
    "example3": {"kind", "space", "neighborhood"},
}


def _key_lines(text: str) -> dict[str, int]:
    """Best-effort 1-based line number for each 'key:' occurrence."""
    lines = {}
    for i, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*([A-Za-z_][\w-]*)\s*:", line)
        if m and m.group(1) not in lines:
            lines[m.group(1)] = i
    return lines


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    where = _key_lines(text)

    def complain(key, context):
        line = where.get(key)
        loc = f"{path}:{line}" if line else str(path)
        raise ConfigError(f"{loc}: unknown key {key!r} in {context}")

    for section, body in raw.items():
        if section not in _SECTION_KEYS:
            complain(section, "top level")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: section {section!r} must be a mapping")
        for key in body:
            if key not in _SECTION_KEYS[section]:
                complain(key, f"section {section!r}")
    init = (raw.get("run") or {}).get("init")
    if isinstance(init, dict):
        for key in init:
            if key not in _INIT_KEYS:
                complain(key, "run.init")
    model = raw.get("model") or {}
    kind = model.get("kind")
    if kind is not None:
        if kind not in _MODEL_KIND_KEYS:
            raise ConfigError(f"{path}: unknown model kind {kind!r}")
        for key in model:
            if key not in _MODEL_KIND_KEYS[kind]:
                complain(key, f"model kind {kind!r}")
    return raw


def resolve_scale(value, p: int) -> float:
    """Numbers pass through; strings like ``p``, ``p^3`` or ``1/p`` scale
    with the model dimension."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    s = str(value).strip().lower().replace(" ", "")
    if s in ("inf", "infinity"):
        return math.inf
    m = re.fullmatch(r"(1/)?p(\^(-?\d+))?", s)
    if not m:
        raise ConfigError(f"cannot parse scale expression {value!r}")
    exp = int(m.group(3)) if m.group(3) else 1
    if m.group(1):
        exp = -exp
    return float(p) ** exp


@dataclass
class Resolved:
    raw: dict
    model: dict
    spec: KernelSpec
    run: dict
    out_dir: Path
    formats: list
    certify: dict

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def resolve_config(raw: dict, seed=None, workers=None, out=None) -> Resolved:
    model = dict(raw.get("model") or {})
    kind = model.get("kind")
    if kind is None:
        raise ConfigError("model.kind is required")
    if kind == "varsel":
        for req in ("p", "n"):
            if req not in model:
                raise ConfigError(f"model.{req} is required for varsel")
        model.setdefault("covariance", "moderate")
        model.setdefault("g", "p^3")
        model.setdefault("kappa", 1.0)
        model.setdefault("s_max", None)
        model.setdefault("neighborhood", "n1")
        model["g"] = resolve_scale(model["g"], model["p"])
    elif kind == "sbm":
        for req in ("p", "p_within", "p_between"):
            if req not in model:
                raise ConfigError(f"model.{req} is required for sbm")
    elif kind == "example3":
        model.setdefault("space", "v")
        model.setdefault("neighborhood", "n1")
        model["p"] = 3

    kernel = dict(raw.get("kernel") or {})
    family = kernel.get("family", RANDOM_WALK)
    if family not in (RANDOM_WALK, INFORMED):
        raise ConfigError(f"kernel.family must be random-walk or informed, got {family!r}")
    p_dim = int(model.get("p", 1))
    ell = resolve_scale(kernel.get("ell", 0), p_dim)
    big_l = resolve_scale(kernel.get("big_l", "inf"), p_dim)
    lazy = bool(kernel.get("lazy", False))
    try:
        spec = KernelSpec(family=family, ell=ell, big_l=big_l, lazy=lazy)
    except Exception as exc:
        raise ConfigError(f"kernel: {exc}") from exc

    run = dict(raw.get("run") or {})
    run.setdefault("n_runs", 1)
    run.setdefault("budget", 1000)
    run.setdefault("init", {"scheme": "uniform-m", "m": 0})
    run.setdefault("seed", 0)
    run.setdefault("workers", 1)
    run.setdefault("stop_early", True)
    run.setdefault("fresh_data", True)
    run.setdefault("save_trajectories", False)
    if seed is not None:
        run["seed"] = seed
    if workers is not None:
        run["workers"] = workers

    output = dict(raw.get("output") or {})
    out_dir = Path(out) if out is not None else Path(output.get("directory", "out"))
    formats = list(output.get("formats", ["csv", "json"]))

    certify = dict(raw.get("certify") or {})
    certify.setdefault("epsilon", 0.25)
    certify.setdefault("s_threshold", "auto")
    certify.setdefault("q", None)
    certify.setdefault("x0", "all")
    certify.setdefault("enum_cap", 4096)
    certify.setdefault("eta", None)
    certify.setdefault("t_max", 200)
    return Resolved(raw=raw, model=model, spec=spec, run=run, out_dir=out_dir,
                    formats=formats, certify=certify)


# ---------------------------------------------------------------------------
# replicate factories (picklable, used by worker processes)


@dataclass(frozen=True)
class VarselFactory:
    p: int
    n: int
    covariance: str
    g: float
    kappa: float
    s_max: int | None
    neighborhood: str
    init: dict
    fresh_data: bool
    shared_data: object = None
    shared_truth: tuple | None = None

    def __call__(self, index: int, seedseq: np.random.SeedSequence):
        data_seq, init_seq = seedseq.spawn(2)
        if self.fresh_data or self.shared_data is None:
            data, truth = varsel_model.generate_data(
                self.p, self.n, self.covariance, seed=data_seq
            )
        else:
            data, truth = self.shared_data, self.shared_truth
        hyper = varsel_model.VarSelHyper(g=self.g, kappa=self.kappa, s_max=self.s_max)
        target = varsel_model.varsel_target(data, hyper, neighborhood=self.neighborhood)
        rng = make_rng(init_seq)
        scheme = self.init.get("scheme", "uniform-m")
        init = varsel_model.init_scheme(
            scheme, self.p, rng, truth=truth,
            m=self.init.get("m"), n_false=self.init.get("n_false", 50),
        )
        return target, init, frozenset([truth])


@dataclass(frozen=True)
class SbmFactory:
    p: int
    p_within: float
    p_between: float
    init: dict

    def __call__(self, index: int, seedseq: np.random.SeedSequence):
        data_seq, init_seq = seedseq.spawn(2)
        data, z_star = sbm_model.generate_sbm(
            self.p, self.p_within, self.p_between, seed=data_seq
        )
        target = sbm_model.sbm_target(data)
        scheme = self.init.get("scheme", "third-wrong")
        init = sbm_model.sbm_init(scheme, z_star, make_rng(init_seq))
        truth = frozenset([z_star, sbm_model.label_switched(z_star)])
        return target, init, truth


def make_factory(cfg: Resolved):
    model = cfg.model
    kind = model["kind"]
    if kind == "varsel":
        factory = VarselFactory(
            p=int(model["p"]), n=int(model["n"]), covariance=model["covariance"],
            g=float(model["g"]), kappa=float(model["kappa"]),
            s_max=model["s_max"], neighborhood=model["neighborhood"],
            init=dict(cfg.run["init"]), fresh_data=bool(cfg.run["fresh_data"]),
        )
        if not cfg.run["fresh_data"]:
            data, truth = varsel_model.generate_data(
                factory.p, factory.n, factory.covariance,
                seed=np.random.SeedSequence([int(cfg.run["seed"]), 0xDA7A]),
            )
            factory = VarselFactory(
                **{**factory.__dict__, "shared_data": data, "shared_truth": truth}
            )
        return factory
    if kind == "sbm":
        return SbmFactory(
            p=int(model["p"]), p_within=float(model["p_within"]),
            p_between=float(model["p_between"]), init=dict(cfg.run["init"]),
        )
    raise ConfigError(f"model kind {kind!r} does not support experiments")


def build_static_target(cfg: Resolved) -> tuple[DiscreteTarget, dict]:
    """One fixed target (no replication) for certify/diagnose."""
    model = cfg.model
    kind = model["kind"]
    if kind == "example3":
        target = varsel_model.example3_target(model["space"], model["neighborhood"])
        return target, {"kind": "example3", **model}
    if kind == "varsel":
        data, truth = varsel_model.generate_data(
            int(model["p"]), int(model["n"]), model["covariance"],
            seed=np.random.SeedSequence([int(cfg.run["seed"]), 0xDA7A]),
        )
        hyper = varsel_model.VarSelHyper(
            g=float(model["g"]), kappa=float(model["kappa"]), s_max=model["s_max"]
        )
        return varsel_model.varsel_target(data, hyper, neighborhood=model["neighborhood"]), model
    if kind == "sbm":
        data, _ = sbm_model.generate_sbm(
            int(model["p"]), float(model["p_within"]), float(model["p_between"]),
            seed=np.random.SeedSequence([int(cfg.run["seed"]), 0xDA7A]),
        )
        return sbm_model.sbm_target(data), model
    raise ConfigError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# golden fixtures

TABLE1 = {
    (0, 0, 0): (1.0, 0.0),
    (1, 0, 0): (0.8704, 63.98),
    (0, 1, 0): (1.0, -2.76),
    (0, 0, 1): (0.8236, 90.46),
    (1, 1, 0): (0.64, 207.70),
    (1, 0, 1): (0.8219, 88.69),
    (0, 1, 1): (0.7243, 148.95),
    (1, 1, 1): (0.64, 204.90),
}
GOLDEN4_LOG_RATIO = -58.49
GOLDEN5_KH = 3.0 / 7.0
GOLDEN5_GAPS = (0.334, 0.582)


@dataclass
class Check:
    name: str
    computed: float
    expected: float
    tol: float

    @property
    def ok(self) -> bool:
        return abs(self.computed - self.expected) <= self.tol

    def line(self) -> str:
        mark = "PASS" if self.ok else "FAIL"
        return (
            f"[{mark}] {self.name}: computed {self.computed:.6g}, "
            f"published {self.expected:.6g} (tol {self.tol:g})"
        )


def golden_example3() -> list[Check]:
    data = varsel_model.example3_data()
    hyper = varsel_model.VarSelHyper(g=varsel_model.EXAMPLE3_G, kappa=varsel_model.EXAMPLE3_KAPPA)
    base = varsel_model.log_posterior(data, hyper, (0, 0, 0))
    checks = []
    for delta, (one_minus_r2, logpost) in TABLE1.items():
        label = "".join(map(str, delta))
        checks.append(Check(f"1-r2({label})", 1.0 - varsel_model.r_squared(data, delta),
                            one_minus_r2, 1e-4))
        checks.append(Check(
            f"logpost({label})",
            varsel_model.log_posterior(data, hyper, delta) - base,
            logpost, 0.01,
        ))
    return checks


def golden_example4() -> list[Check]:
    from .samplers import acceptance_log_ratio, informed_proposal_dist

    target = varsel_model.example3_target("v", "n1")
    spec = KernelSpec(INFORMED)  # unclipped: identity weight
    d0, d1 = (0, 0, 0), (0, 0, 1)
    ns, probs = informed_proposal_dist(target, d0, spec)
    k01 = probs[ns.index(d1)]
    log_ratio = acceptance_log_ratio(target, d0, d1, spec)
    return [
        Check("1 - K(d0,d1)", 1.0 - k01, 0.0, 1e-11),
        Check("log acceptance ratio", log_ratio, GOLDEN4_LOG_RATIO, 0.01),
    ]


def golden_example5(record_alternative: bool = True) -> tuple[list[Check], list[str]]:
    from .samplers import informed_proposal_dist

    target = varsel_model.example3_target("v", "n1")
    spec = KernelSpec(INFORMED, ell=3.0, big_l=9.0)
    d0, d1 = (0, 0, 0), (0, 0, 1)
    ns, probs = informed_proposal_dist(target, d0, spec)
    checks = [Check("K_h(d0,d1)", probs[ns.index(d1)], GOLDEN5_KH, 1e-12)]
    states = enumerate_space(target, 16)
    gap_rw = spectral_gap(build_transition_matrix(target, KernelSpec(RANDOM_WALK), states)).gap
    gap_inf = spectral_gap(build_transition_matrix(target, spec, states)).gap
    checks.append(Check("gap random-walk", gap_rw, GOLDEN5_GAPS[0], 0.005))
    checks.append(Check("gap informed", gap_inf, GOLDEN5_GAPS[1], 0.005))
    notes = []
    if record_alternative and not all(c.ok for c in checks[1:]):
        alt = varsel_model.example3_target("v2", "n1")
        alt_states = enumerate_space(alt, 16)
        alt_rw = spectral_gap(build_transition_matrix(alt, KernelSpec(RANDOM_WALK), alt_states)).gap
        alt_inf = spectral_gap(build_transition_matrix(alt, spec, alt_states)).gap
        notes.append(
            f"note: sparsity-restricted alternative gaps: random-walk {alt_rw:.4f}, "
            f"informed {alt_inf:.4f}"
        )
    return checks, notes


def cmd_golden(example: str) -> int:
    t0 = time.perf_counter()
    blocks: list[tuple[str, list[Check], list[str]]] = []
    if example in ("3", "all"):
        blocks.append(("reference table", golden_example3(), []))
    if example in ("4", "all"):
        blocks.append(("unclipped informed proposal", golden_example4(), []))
    if example in ("5", "all"):
        checks, notes = golden_example5()
        blocks.append(("clipped informed proposal", checks, notes))
    all_ok = True
    for title, checks, notes in blocks:
        print(f"== golden: {title} ==")
        for c in checks:
            print(c.line())
            all_ok &= c.ok
        for note in notes:
            print(note)
    print(f"elapsed: {time.perf_counter() - t0:.3f}s")
    print("RESULT:", "PASS" if all_ok else "FAIL")
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------
# experiments


def _meta_line(cfg: Resolved) -> str:
    return f"# config_hash={cfg.config_hash} version={__version__}\n"


def cmd_experiment(cfg: Resolved) -> int:
    factory = make_factory(cfg)
    run = cfg.run
    summary = hitting_experiment(
        factory,
        cfg.spec,
        n_runs=int(run["n_runs"]),
        budget=int(run["budget"]),
        master_seed=int(run["seed"]),
        workers=int(run["workers"]),
        stop_early=bool(run["stop_early"]),
    )
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(
        json.dumps({"config": cfg.raw, "hash": cfg.config_hash, "version": __version__},
                   indent=2, default=str)
    )
    half = summary.n_runs / 2
    h_true = (
        "--" if summary.success < half or summary.median_hit_iteration is None
        else f"{summary.median_hit_iteration:g}"
    )
    t_true = (
        "--" if summary.success < half or summary.median_elapsed_to_hit is None
        else f"{summary.median_elapsed_to_hit:.3f}"
    )
    if "csv" in cfg.formats:
        with open(out / "summary.csv", "w") as fh:
            fh.write(_meta_line(cfg))
            fh.write("model,kernel,n_runs,budget,success,h_true\n")
            fh.write(
                f"{cfg.model['kind']},{cfg.spec.describe()},{summary.n_runs},"
                f"{summary.budget},{summary.success},{h_true}\n"
            )
        with open(out / "timing.csv", "w") as fh:
            fh.write(_meta_line(cfg))
            fh.write("time_median_s,t_true_median_s\n")
            fh.write(f"{summary.median_elapsed:.3f},{t_true}\n")
        with open(out / "runs.csv", "w") as fh:
            fh.write(_meta_line(cfg))
            fh.write("index,hit,hit_iteration,steps,elapsed_s,elapsed_to_hit_s\n")
            for r in summary.runs:
                fh.write(
                    f"{r.index},{int(r.hit)},"
                    f"{'' if r.hit_iteration is None else r.hit_iteration},"
                    f"{r.n_steps_run},{r.elapsed:.4f},"
                    f"{'' if r.elapsed_to_hit is None else f'{r.elapsed_to_hit:.4f}'}\n"
                )
    if "json" in cfg.formats:
        (out / "summary.json").write_text(json.dumps({
            "config_hash": cfg.config_hash,
            "version": __version__,
            "success": summary.success,
            "n_runs": summary.n_runs,
            "budget": summary.budget,
            "h_true": summary.median_hit_iteration if summary.success >= half else None,
            "time_s": summary.median_elapsed,
            "t_true_s": summary.median_elapsed_to_hit if summary.success >= half else None,
        }, indent=2))
    if run["save_trajectories"]:
        _write_trajectories(cfg, factory)
    print(f"{'metric':12} value")
    print(f"{'Success':12} {summary.success}/{summary.n_runs}")
    print(f"{'H_true':12} {h_true}")
    print(f"{'Time':12} {summary.median_elapsed:.3f}s")
    print(f"{'T_true':12} {t_true}s")
    print(f"outputs in {out}")
    return 0


def _write_trajectories(cfg: Resolved, factory) -> None:
    """Full-length log-probability traces for distribution-style plots."""
    run = cfg.run
    children = np.random.SeedSequence(int(run["seed"])).spawn(int(run["n_runs"]))
    path = cfg.out_dir / "trajectories.csv"
    with open(path, "w") as fh:
        fh.write(_meta_line(cfg))
        fh.write("run,step,log_pi\n")
        for i, child in enumerate(children):
            data_seq, chain_seq = child.spawn(2)
            target, init, _ = factory(i, data_seq)
            trace = run_chain(target, init, cfg.spec, int(run["budget"]), chain_seq)
            for t, lp in enumerate(trace.log_pis):
                fh.write(f"{i},{t},{lp:.6f}\n")


# ---------------------------------------------------------------------------
# certify / diagnose


def _parse_x0(spec_str: str, target: DiscreteTarget, states: list) -> list | None:
    if spec_str in (None, "all"):
        return None
    if spec_str.startswith("top-mass:"):
        frac = float(spec_str.split(":", 1)[1])
        if not 0 < frac <= 1:
            raise ConfigError("top-mass fraction must lie in (0, 1]")
        lps = np.array([target.log_pi(s) for s in states])
        order = np.argsort(-lps)
        mass = np.exp(lps - np.logaddexp.reduce(lps))
        total = 0.0
        chosen = []
        for i in order:
            chosen.append(states[i])
            total += mass[i]
            if total >= frac:
                break
        return chosen
    if spec_str.startswith("smax:"):
        k = int(spec_str.split(":", 1)[1])
        return [s for s in states if sum(s) <= k]
    raise ConfigError(f"cannot parse x0 spec {spec_str!r}")


def _auto_s(spec: KernelSpec, stats) -> float:
    if spec.family == INFORMED and spec.clipped:
        return spec.big_l / stats.m
    return stats.r


def cmd_certify(cfg: Resolved, method: str) -> int:
    target, model_desc = build_static_target(cfg)
    cert = cfg.certify
    try:
        states = enumerate_space(target, int(cert["enum_cap"]))
    except CapExceeded as exc:
        print(f"error: {exc}; shrink model.p or raise certify.enum_cap", file=sys.stderr)
        return 2
    stats = unimodality_stats(target, states)
    epsilon = float(cert["epsilon"])

    lazy_spec = KernelSpec(cfg.spec.family, cfg.spec.ell, cfg.spec.big_l, lazy=True)
    chain = build_transition_matrix(target, lazy_spec, states)
    report = spectral_gap(chain)
    pi_min = float(chain.pi.min())

    x0 = _parse_x0(cert["x0"], target, states)
    restricted_ctx = None
    eta = cert["eta"]
    if x0 is not None:
        rstats = restricted_stats(target, states, x0)
        mass = float(sum(chain.pi[chain.index[s]] for s in x0))
        restricted_ctx = RestrictedContext(
            stats=rstats, mass=mass,
            boundary_log_ratio=boundary_log_ratio(target, states, x0),
        )
        report.restricted_gap = restricted_gap(chain, x0)
        if eta is None:
            eta = float(chain.pi[chain.index[rstats.x_star]])
    report.theorem_bounds = theorem_bounds(
        stats, cfg.spec, pi_min, epsilon, eta=eta, restricted=restricted_ctx
    )

    failures: list[str] = []
    payload: dict = {
        "model": model_desc,
        "kernel": cfg.spec.describe(),
        "stats": stats.to_json_dict(),
        "gap_report": report.to_json_dict(),
        "checks": [],
    }

    def check(name: str, ok: bool, detail: str):
        payload["checks"].append({"name": name, "ok": bool(ok), "detail": detail})
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if not ok:
            failures.append(name)

    for key, bound in report.theorem_bounds.items():
        if not bound.applicable:
            print(f"[ n/a] {key}: {bound.reason}")
            continue
        if key.endswith("relaxation"):
            check(key, report.relaxation_time <= bound.value * (1 + 1e-9),
                  f"exact relaxation {report.relaxation_time:.4g} <= {bound.value:.4g}")
        elif key == "c_rho":
            print(f"[info] c(rho) = {bound.value:.4g} at rho = {bound.extras['rho']:.4g}")

    if method in ("flow", "restricted-flow"):
        restricted = method == "restricted-flow"
        if restricted and x0 is None:
            print("error: restricted-flow needs certify.x0", file=sys.stderr)
            return 2
        use_stats = restricted_ctx.stats if restricted else stats
        s_val = cert["s_threshold"]
        s_threshold = _auto_s(cfg.spec, use_stats) if s_val == "auto" else float(s_val)
        fg = build_flow_graph(chain, s_threshold, x0=x0 if restricted else None)
        rep = congestion(fg, q=cert["q"], max_degree=stats.m)
        payload["congestion"] = rep.to_json_dict()
        gap_name = "restricted gap" if restricted else "gap"
        gap_val = report.restricted_gap if restricted else report.gap
        check("flow lower bound", gap_val >= rep.gap_lower_bound * (1 - 1e-9),
              f"{gap_name} {gap_val:.6g} >= 1/A = {rep.gap_lower_bound:.6g}")
        if rep.a_closed_form is not None:
            check("congestion closed form", rep.a_exact <= rep.a_closed_form * (1 + 1e-9),
                  f"A_exact {rep.a_exact:.6g} <= closed form {rep.a_closed_form:.6g}")
    elif method == "drift":
        if cfg.spec.family != INFORMED:
            print("error: drift certificates target informed kernels", file=sys.stderr)
            return 2
        plain = build_transition_matrix(
            target, KernelSpec(cfg.spec.family, cfg.spec.ell, cfg.spec.big_l, lazy=False),
            states,
        )
        drift_chain = plain if plain.eigensystem()[0][0] >= -1e-10 else chain
        try:
            cert_obj = drift_certificate(drift_chain)
        except Exception as exc:
            print(f"[FAIL] drift certificate: {exc}")
            failures.append("drift")
            cert_obj = None
        if cert_obj is not None:
            payload["drift"] = cert_obj.to_json_dict()
            print(f"[info] drift lambda = {cert_obj.lam:.6g} on {'lazy' if drift_chain.lazy else 'plain'} chain")
            worst = max(states, key=cert_obj.v_of)
            for eps in (0.25, 0.1, 0.01):
                t_exact = tau_x(drift_chain, worst, eps)
                bound = cert_obj.mixing_bound(worst, eps)
                check(f"drift mixing bound (eps={eps})",
                      t_exact is not None and t_exact <= bound,
                      f"exact tau {t_exact} <= bound {bound:.2f}")
    elif method != "none":
        print(f"error: unknown certify method {method!r}", file=sys.stderr)
        return 2

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = cfg.out_dir / "certificate.json"
    out_path.write_text(json.dumps({
        "config_hash": cfg.config_hash, "version": __version__, **payload
    }, indent=2, default=str))
    print(f"report: {out_path}")
    return 1 if failures else 0


def cmd_diagnose(cfg: Resolved) -> int:
    target, model_desc = build_static_target(cfg)
    cert = cfg.certify
    try:
        states = enumerate_space(target, int(cert["enum_cap"]))
    except CapExceeded as exc:
        print(f"error: {exc}; shrink model.p or raise certify.enum_cap", file=sys.stderr)
        return 2
    stats = unimodality_stats(target, states)
    chain = build_transition_matrix(target, cfg.spec, states)
    report = spectral_gap(chain)
    x0 = _parse_x0(cert["x0"], target, states)
    if x0 is not None:
        report.restricted_gap = restricted_gap(chain, x0)
    report.theorem_bounds = theorem_bounds(
        stats, cfg.spec, float(chain.pi.min()), float(cert["epsilon"])
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "gap_report.json").write_text(json.dumps({
        "config_hash": cfg.config_hash, "version": __version__,
        "model": model_desc, "stats": stats.to_json_dict(),
        "gap_report": report.to_json_dict(),
    }, indent=2, default=str))
    worst_start = chain.states[int(np.argmin(chain.log_pis))]
    curve = tv_curve(chain, worst_start, int(cert["t_max"]))
    with open(cfg.out_dir / "tv.csv", "w") as fh:
        fh.write(_meta_line(cfg))
        fh.write(f"# start={worst_start}\n")
        fh.write("t,tv\n")
        for t, val in enumerate(curve.tv):
            fh.write(f"{t},{val:.12g}\n")
    print(f"gap {report.gap:.6g} (rayleigh {report.rayleigh_gap:.6g})"
          + (f", restricted {report.restricted_gap:.6g}" if report.restricted_gap is not None else ""))
    print(f"outputs in {cfg.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="discretemh",
        description="Metropolis-Hastings on finite discrete spaces: experiments and exact certificates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("golden", help="check embedded fixture values against published ones")
    g.add_argument("example", choices=["3", "4", "5", "all"])

    for name in ("experiment", "certify", "diagnose"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=["csv", "json"], action="append", default=None)
        if name == "certify":
            p.add_argument("--method", choices=["flow", "restricted-flow", "drift", "none"],
                           default="flow")

    args = parser.parse_args(argv)
    if args.command == "golden":
        return cmd_golden(args.example)

    try:
        raw = load_config(args.config)
        cfg = resolve_config(raw, seed=args.seed, workers=args.workers, out=args.out)
        if args.format:
            cfg.formats = list(dict.fromkeys(args.format))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "experiment":
            return cmd_experiment(cfg)
        if args.command == "certify":
            return cmd_certify(cfg, args.method)
        if args.command == "diagnose":
            return cmd_diagnose(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
