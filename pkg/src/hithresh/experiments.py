"""Scenario runners, metrics reports and curve files."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .activations import ActivationSpec, choose_threshold
from .config import ExperimentConfig, serialize
from .delta import DeltaParams, corollary_peak, direction_scan, random_directions
from .errors import ConfigError, HiThreshError
from .landscape import LandscapeParams, align_and_score, assemble_and_invert, recover_all_one_by_one, \
    recover_simultaneous
from .network import PlantedNetwork, equiangular_weights, random_network
from .polynomial import SparsePolynomial, pairwise_polynomial
from .refine import HalfspaceIntersection, RefineConfig, learn_halfspace_intersection, refine_estimate
from .sampling import Dataset, SampleOracle, gaussian_batch, sample_batch
from .stats_core import make_rng
from .structural import (SupportFamily, binary_support_network, build_graph, default_exp_penalties,
                         even_coefficients, even_recover, exp_ascent, extract_cliques, fit_even_coefficients,
                         pairwise_correlations, suggest_threshold, support_gap, symbolic_alpha)


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    config_hash: str
    metrics: dict
    angles_deg: list = field(default_factory=list)
    matching: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    budget: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    passed: bool | None = None
    version: str = __version__
    elapsed_s: float = 0.0

    def values(self) -> dict:
        """Everything except wall-clock time: identical for identical (config, seed)."""
        d = asdict(self)
        d.pop("elapsed_s")
        return d

    def to_json(self) -> str:
        return json.dumps(_plain(asdict(self)), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# network construction

def build_polynomial(net_cfg: dict, d: int) -> SparsePolynomial:
    kind = net_cfg["polynomial"]
    lin, pair = float(net_cfg["linear"]), float(net_cfg["pair"])
    if kind == "or":
        return SparsePolynomial.or_polynomial(d)
    if kind == "linear":
        return pairwise_polynomial(d, lin, 0.0, pairs=[])
    if kind == "pairwise":
        return pairwise_polynomial(d, lin, pair)
    if kind == "cyclic":
        pairs = [(i, (i + 1) % d) for i in range(d)] if d > 2 else [(0, 1)]
    elif kind == "path":
        pairs = [(i, i + 1) for i in range(d - 1)]
    else:
        pairs = [tuple(p) for p in (net_cfg["pairs"] or [])]
    return pairwise_polynomial(d, lin, pair, pairs=pairs)


def build_activation(net_cfg: dict) -> ActivationSpec:
    kind = net_cfg["activation"]
    t = net_cfg["t"]
    if t is None:
        t = choose_threshold(kind, int(net_cfg["d"]), float(net_cfg["eta"]))
    return ActivationSpec(kind, float(t), float(net_cfg["rate"]), float(net_cfg["cap"]))


def build_network(cfg: ExperimentConfig) -> PlantedNetwork:
    nc = cfg["network"]
    if nc["file"]:
        return PlantedNetwork.load(nc["file"])
    n, d, seed = int(nc["n"]), int(nc["d"]), cfg.seed
    act = build_activation(nc)
    poly = build_polynomial(nc, d)
    if cfg.scenario in ("corrgraph", "exp-ascent"):
        k = int(nc["support_size"])
        if d * k > n:
            raise ConfigError(f"{d} supports of size {k} do not fit in n={n}")
        return binary_support_network(n, [range(i * k, (i + 1) * k) for i in range(d)], act, poly, seed)
    if nc["equiangular_cos"] is not None:
        W = equiangular_weights(d, n, float(nc["equiangular_cos"]), make_rng(seed, 0))
        return PlantedNetwork(W, act, poly, seed)
    return random_network(n, d, act, poly, seed, kappa=float(nc["kappa"]))


def landscape_params(cfg: ExperimentConfig, u: ActivationSpec, d: int) -> LandscapeParams:
    lc = cfg["landscape"]
    return LandscapeParams.from_activation(
        u, lam=lc["lambda"], lam_multiplier=float(lc["lambda_multiplier"]), gamma=float(lc["gamma"]),
        max_iter=int(lc["max_iter"]), restarts=int(lc["restarts"] or 5 * d), max_norm=float(lc["max_norm"]),
        threads=int(cfg["threads"]))


def refine_config(cfg: ExperimentConfig, d: int) -> RefineConfig:
    rc = cfg["refine"]
    return RefineConfig(eps1=float(rc["eps1"]), eps2=math.radians(float(rc["eps2_deg"])),
                        max_iter=int(rc["max_iter"] or 200 * d), budget=int(rc["budget"]),
                        perturb=float(rc["perturb"]), c_acc=float(rc["c_acc"]), threads=int(cfg["threads"]))


def _le(value, bound):
    return None if bound is None else bool(value <= bound)


def _ge(value, bound):
    return None if bound is None else bool(value >= bound)


def _all(*flags):
    flags = [f for f in flags if f is not None]
    return all(flags) if flags else None


# --------------------------------------------------------------------------
# scenarios

def _landscape_obo(cfg, net):
    acc = cfg["acceptance"]
    N = int(cfg["samples"])
    oracle = SampleOracle(net, cfg.seed)
    p = landscape_params(cfg, net.activation, net.d)
    if cfg["landscape"]["fresh_samples"]:
        data = lambda r: sample_batch(oracle, N, stream=r)  # noqa: E731
    else:
        data = sample_batch(oracle, N)
    cands = recover_all_one_by_one(data, p, net.d, cfg.seed)
    W_hat = assemble_and_invert(cands)
    al = align_and_score(W_hat, net.W)
    m = {"max_angle_deg": al.max_angle, "mean_angle_deg": al.mean_angle, "min_abs_cos": float(al.abs_cos.min()),
         "certified": sum(c.certified for c in cands), "lambda": p.lam_value, "t": net.t}
    rep = dict(metrics=m, angles_deg=al.angles_deg.tolist(), matching=al.matching.tolist(),
               certificates=[{"grad_norm": c.grad_norm, "min_eig": c.min_eig, "certified": c.certified,
                              "iterations": c.iterations} for c in cands],
               budget={"samples_per_restart": N, "max_restarts": p.restarts},
               passed=_all(_le(al.max_angle, acc["max_angle_deg"]), _ge(m["min_abs_cos"], acc["min_abs_cos"])))
    return rep


def _landscape_simul(cfg, net):
    acc = cfg["acceptance"]
    N = int(cfg["samples"])
    p = landscape_params(cfg, net.activation, net.d)
    data = sample_batch(SampleOracle(net, cfg.seed), N)
    W_hat = recover_simultaneous(data, p, net.d, cfg.seed)
    al = align_and_score(W_hat, net.W)
    m = {"max_angle_deg": al.max_angle, "mean_angle_deg": al.mean_angle, "min_abs_cos": float(al.abs_cos.min())}
    return dict(metrics=m, angles_deg=al.angles_deg.tolist(), matching=al.matching.tolist(),
                budget={"samples": N},
                passed=_all(_le(al.max_angle, acc["max_angle_deg"]), _ge(m["min_abs_cos"], acc["min_abs_cos"])))


def _refine(cfg, net):
    acc = cfg["acceptance"]
    rc = refine_config(cfg, net.d)
    w = net.W[0]
    rng = make_rng(cfg.seed, 7)
    perp = rng.standard_normal(net.n)
    perp -= (perp @ w) * w
    perp /= np.linalg.norm(perp)
    a = math.radians(float(cfg["refine"]["start_angle_deg"]))
    z0 = math.cos(a) * w + math.sin(a) * perp
    res = refine_estimate(SampleOracle(net, cfg.seed), z0, rc, cfg.seed, truth=w)
    br = np.array(res.brackets)
    final = res.true_angles[-1]
    m = {"final_angle_deg": final, "estimated_angle_deg": res.alpha_deg, "proposals": res.proposals,
         "accepted": res.accepted, "reached": res.reached,
         "bracket_min_t1": float(br[:, 0].min()),
         "bracket_ordered": bool(np.all(br[:, 0] <= br[:, 1])),
         "bracket_max_excess": float(np.max(br[:, 1] - br[:, 2]))}
    return dict(metrics=m, angles_deg=[final], budget={"slab_samples_per_query": rc.budget,
                                                       "queries": len(res.brackets)},
                extra={"true_angle_trace_deg": res.true_angles},
                passed=_all(_le(final, acc["max_angle_deg"])))


def _halfspaces(cfg, net):
    acc = cfg["acceptance"]
    N = int(cfg["samples"])
    d, t = net.d, net.t
    # the configured network's rows are the intersection's normals
    hs = HalfspaceIntersection(net.W, t)
    seed = cfg.seed

    def data(r):
        X = gaussian_batch(seed, N, net.n, 1, r)
        return Dataset(X, hs.labels(X), seed)

    oracle = SampleOracle(hs.complement_network(seed), seed)
    p = landscape_params(cfg, ActivationSpec("sign-threshold", t), d)
    res = learn_halfspace_intersection(data, d, t, oracle, seed, p, refine_config(cfg, d))
    al = align_and_score(res.W, net.W)
    coarse = align_and_score(res.coarse, net.W)
    m = {"max_angle_deg": al.max_angle, "mean_angle_deg": al.mean_angle,
         "coarse_max_angle_deg": coarse.max_angle,
         "proposals": sum(r.proposals for r in res.refinements)}
    return dict(metrics=m, angles_deg=al.angles_deg.tolist(), matching=al.matching.tolist(),
                budget={"samples_per_restart": N, "max_restarts": p.restarts},
                passed=_all(_le(al.max_angle, acc["max_angle_deg"])))


def _delta_scan(cfg, net):
    acc = cfg["acceptance"]
    dc = cfg["delta"]
    p = DeltaParams(float(dc["eps_outer"]), float(dc["eps_inner"]), int(dc["budget"]), int(cfg["threads"]))
    rand = random_directions(net.n, int(dc["random_candidates"]), make_rng(cfg.seed, 3))
    cands = np.vstack([net.W, rand])
    prof = direction_scan(SampleOracle(net, cfg.seed), cands, net.t, p, float(dc["eps3"]))
    means = prof.means
    planted = list(range(net.d))
    peaks = [corollary_peak(net.poly, i, net.t) for i in planted]
    z = [prof.values[i].zscore(peaks[i]) for i in planted]
    ratio = float(means[:net.d].min() / max(np.abs(means[net.d:]).max(), 1e-300))
    m = {"accepted_exactly_planted": list(prof.accepted) == planted, "peak_ratio": ratio,
         "max_abs_zscore": float(np.max(np.abs(z))), "threshold": prof.threshold}
    return dict(metrics=m, budget={"samples_per_candidate": p.budget, "candidates": len(cands)},
                extra={"peaks": means[:net.d].tolist(), "predicted": peaks,
                       "random_max": float(np.abs(means[net.d:]).max())},
                passed=_all(m["accepted_exactly_planted"], _le(m["max_abs_zscore"], acc["max_zscore"])))


def planted_supports(net: PlantedNetwork) -> SupportFamily:
    return SupportFamily(tuple(frozenset(np.flatnonzero(row).tolist()) for row in net.W))


def _corrgraph(cfg, net, out: Path | None):
    acc = cfg["acceptance"]
    sc = cfg["structural"]
    N = int(cfg["samples"])
    data = sample_batch(SampleOracle(net, cfg.seed), N)
    g = pairwise_correlations(data)
    fam = planted_supports(net)
    rho = sc["rho_g"]
    if rho is None:
        sym = np.zeros((net.n, net.n))
        for i in range(net.n):
            for j in range(i + 1, net.n):
                sym[i, j] = sym[j, i] = symbolic_alpha(net, i, j)
        w, c = support_gap(type(g)(sym, sym * 0), fam)
        rho = 0.5 * (w + c)
    elif rho == "auto":
        rho = suggest_threshold(g)
    graph = build_graph(g, float(rho))
    found = extract_cliques(graph)
    w, c = support_gap(g, fam)
    gap = w / c if c > 0 else math.inf
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        graph.export_edgelist(out / "graph.edgelist")
    m = {"recovered_equals_planted": found == fam, "gap_ratio": gap, "within_min": w, "cross_max": c,
         "rho_g": float(rho), "edges": len(graph.edges)}
    return dict(metrics=m, budget={"samples": N},
                extra={"supports": [sorted(S) for S in sorted(found.supports, key=min)]},
                passed=_all(m["recovered_equals_planted"], _ge(gap, acc["min_gap"])))


def _exp_ascent(cfg, net):
    sc = cfg["structural"]
    N = int(cfg["samples"])
    data = sample_batch(SampleOracle(net, cfg.seed), N)
    lam, gam = default_exp_penalties(net)
    lam = float(sc["lambda_p"]) if sc["lambda_p"] is not None else lam
    gam = float(sc["gamma_p"]) if sc["gamma_p"] is not None else gam
    runs = exp_ascent(data, lam, gam, int(sc["restarts"]), cfg.seed, cap=float(sc["cap"]),
                      threads=int(cfg["threads"]))
    fam = planted_supports(net)
    found = [sorted(r.support) for r in runs]
    on = [float(r.z[sorted(r.support)].min()) if r.support else 0.0 for r in runs]
    off = [float(np.delete(r.z, sorted(r.support)).max()) if len(r.support) < net.n else 0.0 for r in runs]
    spread = [float(np.ptp(r.z[sorted(r.support)])) if r.support else 0.0 for r in runs]
    ok = all(frozenset(s) in fam.as_sets() for s in found)
    m = {"all_supports_planted": ok, "min_on_support": min(on), "max_off_support": max(off),
         "max_spread": max(spread), "lambda_p": lam, "gamma_p": gam}
    return dict(metrics=m, budget={"samples": N, "restarts": len(runs)},
                extra={"supports": found, "z": [r.z.tolist() for r in runs]}, passed=ok)


def even_grid(seed: int, count: int, d: int) -> np.ndarray:
    """Random directions in R^d with radii uniform in [0.5, 1.5] (non-unit, so every feature is identifiable)."""
    rng = make_rng(seed, 5)
    Z = rng.standard_normal((count, d))
    return Z * (rng.uniform(0.5, 1.5, count) / np.linalg.norm(Z, axis=1))[:, None]


def _even(cfg, net):
    acc = cfg["acceptance"]
    sc = cfg["structural"]
    N = int(cfg["samples"])
    if net.d != net.n or not np.allclose(net.W @ net.W.T, np.eye(net.d), atol=1e-10):
        raise ConfigError("even scenario needs an orthonormal d = n network")
    ec = even_coefficients(net.poly, net.activation, net.d)
    data = sample_batch(SampleOracle(net, cfg.seed), N)
    basis = Dataset(data.X @ net.W.T, data.y, data.seed)      # coordinates along the planted rows
    Z = even_grid(cfg.seed, int(sc["grid"]), net.d)
    coef, se = fit_even_coefficients(basis, Z, net.d)
    zs = (coef - ec.vector()) / se
    m = {"max_abs_zscore": float(np.max(np.abs(zs))), "u0": ec.u0, "u2": ec.u2, "u4": ec.u4,
         "condition_violations": [list(p) for p in ec.violations()]}
    out = dict(metrics=m, budget={"samples": N, "grid": len(Z)},
               extra={"symbolic": ec.vector().tolist(), "fit": coef.tolist(), "stderr": se.tolist()})
    flags = [_le(m["max_abs_zscore"], acc["max_zscore"])]
    if sc["recover"]:
        W_hat = even_recover(data, net.d, cfg.seed, coeffs=ec)
        al = align_and_score(W_hat, net.W)
        m["max_angle_deg"] = al.max_angle
        out["angles_deg"] = al.angles_deg.tolist()
        out["matching"] = al.matching.tolist()
        flags.append(_le(al.max_angle, acc["max_angle_deg"]))
    out["passed"] = _all(*flags)
    return out


RUNNERS = {
    "landscape-obo": _landscape_obo,
    "landscape-simul": _landscape_simul,
    "refine": _refine,
    "halfspaces": _halfspaces,
    "delta-scan": _delta_scan,
    "exp-ascent": _exp_ascent,
    "even": _even,
}


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> MetricsReport:
    """Run the configured scenario; with ``write`` the report, resolved config and curves go to cfg['out']."""
    out = Path(cfg["out"]) if write else None
    sweep = cfg["sweep"]
    if sweep["variable"] and sweep["values"]:
        return _run_sweep(cfg, out)
    start = time.perf_counter()
    try:
        net = build_network(cfg)
        if cfg.scenario == "corrgraph":
            body = _corrgraph(cfg, net, out)
        else:
            body = RUNNERS[cfg.scenario](cfg, net)
    except HiThreshError as exc:
        raise type(exc)(f"[{cfg.scenario}] {exc}") from exc
    rep = MetricsReport(cfg.scenario, cfg.seed, cfg.config_hash(), **body)
    rep.elapsed_s = time.perf_counter() - start
    if out is not None:
        atomic_write(out / "report.json", rep.to_json())
        atomic_write(out / "config.yaml", serialize(cfg))
    return rep


def _run_sweep(cfg: ExperimentConfig, out: Path | None) -> MetricsReport:
    sweep = cfg["sweep"]
    var, metric = sweep["variable"], sweep["metric"]
    start = time.perf_counter()
    points, reports = [], []
    for k, val in enumerate(sweep["values"]):
        sub = cfg.with_value(var, val).with_value("sweep.variable", None)
        if out is not None:
            sub = sub.with_value("out", str(out / f"point{k:03d}"))
        rep = run_experiment(sub, write=out is not None)
        reports.append(rep)
        points.append((val, float(rep.metrics[metric]), math.nan))
    rep = MetricsReport(cfg.scenario, cfg.seed, cfg.config_hash(),
                        metrics={"points": len(points), "sweep_variable": var, "metric": metric},
                        extra={"curve": [list(p) for p in points]},
                        passed=_all(*[r.passed for r in reports]))
    rep.elapsed_s = time.perf_counter() - start
    if out is not None:
        emit_curve(points, out / "curve.csv", var, metric)
        atomic_write(out / "report.json", rep.to_json())
        atomic_write(out / "config.yaml", serialize(cfg))
    return rep


# --------------------------------------------------------------------------
# curves

def curve_text(points, variable: str, metric: str) -> str:
    if not points:
        raise ConfigError("a curve needs at least one point")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([variable, metric, "stderr"])
    for x, y, se in points:
        w.writerow([x, repr(float(y)), "" if se is None or not math.isfinite(se) else repr(float(se))])
    return buf.getvalue()


def emit_curve(points, path, variable: str, metric: str) -> None:
    """Comma-separated (sweep value, metric, stderr) rows behind a header line."""
    atomic_write(path, curve_text(points, variable, metric))


def merge_seeds(per_seed: dict) -> list[tuple]:
    """{seed: [(x, value), ...]} -> [(x, mean, stderr)] across seeds, in first-seen x order."""
    order, vals = [], {}
    for seed in sorted(per_seed):
        for x, v in per_seed[seed]:
            if x not in vals:
                order.append(x)
                vals[x] = []
            vals[x].append(float(v))
    out = []
    for x in order:
        a = np.array(vals[x])
        se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else math.nan
        out.append((x, float(a.mean()), se))
    return out


def read_curve(path) -> list[tuple]:
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    out = []
    for x, y, se in rows[1:]:
        out.append((_num(x), float(y), float(se) if se else math.nan))
    return out


def _num(s: str):
    try:
        v = float(s)
    except ValueError:
        return s
    return int(v) if v.is_integer() and "." not in s and "e" not in s.lower() else v
