"""Named batch experiments with persisted reports.

Each experiment draws everything from one seeded generator, writes CSV
tables and a ``summary.json`` into the output directory (plus SVG plots on
request) and returns a manifest listing every file with its SHA-256 digest.
Numbers are written with 17 significant digits, so reruns with the same
config and seed give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .branching import estimate_survival, rb_survival_samples, rescaled_path, sample_conditioned_batch
from .conditioned import (_chain_signs, eta_series_partial_sums, plus_expectation, sample_plus,
                          sample_walks_given_Ln, tanaka_ladder_check, theta_ratio, theta_series)
from .environment import EnvironmentModel, IncrementLaw, sample_environment
from .errors import BudgetExceeded, InvalidParameter
from .gf import agresti_lower_bound, jirina_residual, lf_survival_exact, survival_given_env
from .offspring import OffspringLaw, eta, g_eval, zeta
from .rng import make_rng, map_chunks, set_threads
from .stats import ks_two_sample, loglog_slope, mean_estimate, ratio_estimate, wilson_interval
from .walk import (check_harmonicity, estimate_renewal_v, fluctuation_summary,
                   prospective_minima)

EXPERIMENTS = ("survival-asymptotics", "theta-consistency", "growth-law", "tau-min-limit",
               "walk-limit", "renewal", "validate")

# sizes used when the config leaves them out
DEFAULTS = {
    "survival-asymptotics": {"n": [64, 256, 1024], "N": 100_000},
    "theta-consistency": {"n": [1024], "N": 100_000, "K": 40, "horizon": 2000},
    "growth-law": {"n": [128, 512], "count": 1000},
    "tau-min-limit": {"n": [256, 1024], "count": 5000},
    "walk-limit": {"n": [1024], "count": 5000, "t": [0.5, 1.0]},
    "renewal": {"N": 100_000, "grid": [5.0 * i / 19 for i in range(20)],
                "x": [0.0, 0.5, 1.0, 2.0, 4.0],
                "model": {"family": "geometric",
                          "increment": {"kind": "gaussian", "params": {"sigma": 1.0}}}},
    "validate": {"N": 20_000, "lookahead": 128},
}

_KEYS = {"model", "n", "N", "K", "horizon", "lookahead", "count", "t", "grid", "x", "alpha"}


@dataclass
class ExperimentConfig:
    experiment: str
    model: EnvironmentModel
    seed: int
    out: Path
    n: list[int] = field(default_factory=list)
    N: int = 100_000
    K: int = 40
    horizon: int = 2000
    lookahead: int = 1024
    count: int = 1000
    t: list[float] = field(default_factory=lambda: [0.5, 1.0])
    grid: list[float] = field(default_factory=list)
    x: list[float] = field(default_factory=list)
    alpha: float = 0.01
    threads: int = 1
    svg: bool = False

    @classmethod
    def build(cls, experiment: str, seed: int, out, options: dict | None = None,
              threads: int = 1, svg: bool = False) -> "ExperimentConfig":
        """Merge ``options`` (parsed config JSON) over the experiment defaults."""
        if experiment not in EXPERIMENTS:
            raise InvalidParameter(f"unknown experiment {experiment!r}; "
                                   f"choose from {', '.join(EXPERIMENTS)}")
        options = dict(options or {})
        named = options.pop("experiment", experiment)
        if named != experiment:
            raise InvalidParameter(f"config is for {named!r}, not {experiment!r}")
        unknown = set(options) - _KEYS
        if unknown:
            raise InvalidParameter(f"unknown config keys: {sorted(unknown)}")
        merged = {**DEFAULTS[experiment], **options}
        model = merged.pop("model", None)
        model = EnvironmentModel.default() if model is None else EnvironmentModel.from_json(model)
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise InvalidParameter("seed must be an unsigned 64-bit integer")
        cfg = cls(experiment, model, seed, Path(out), threads=threads, svg=svg, **merged)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        sizes = [self.N, self.K, self.horizon, self.lookahead, self.count, self.threads, *self.n]
        if any(int(s) != s or s < 1 for s in sizes):
            raise InvalidParameter("all sizes must be integers >= 1")
        if not 0 < self.alpha < 1:
            raise InvalidParameter("alpha must lie in (0, 1)")
        if any(not 0 <= t <= 1 for t in self.t):
            raise InvalidParameter("times t must lie in [0, 1]")

    def to_json(self) -> dict:
        return {"experiment": self.experiment, "model": self.model.to_json(), "seed": self.seed,
                "n": list(self.n), "N": self.N, "K": self.K, "horizon": self.horizon,
                "lookahead": self.lookahead, "count": self.count, "t": list(self.t),
                "grid": list(self.grid), "x": list(self.x), "alpha": self.alpha}


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_time: float
    verdicts: dict
    files: list
    status: str = "complete"

    @property
    def passed(self) -> bool:
        return self.status == "complete" and all(v["passed"] for v in self.verdicts.values())

    def to_json(self) -> dict:
        return {"config": self.config, "version": self.version, "status": self.status,
                "wall_time_s": self.wall_time, "passed": self.passed,
                "verdicts": self.verdicts, "files": self.files}


# ------------------------------------------------------------------ output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _clean(obj):
    """JSON-ready copy with numpy scalars and arrays unwrapped."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


class _Report:
    """Collects files and verdicts for one run."""

    def __init__(self, out: Path):
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.verdicts: dict = {}
        self.results: dict = {}

    def csv(self, name, header, rows):
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append(name)

    def check(self, name, ok, /, **measured):
        self.verdicts[name] = _clean({**measured, "passed": bool(ok)})

    def svg(self, name, draw):
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        matplotlib.rcParams["svg.hashsalt"] = "bpre"
        fig, ax = plt.subplots(figsize=(6, 4))
        draw(ax)
        fig.tight_layout()
        fig.savefig(self.out / name, format="svg", metadata={"Date": None})
        plt.close(fig)
        self.files.append(name)

    def json(self, name, obj):
        with open(self.out / name, "w") as fh:
            json.dump(_clean(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.files.append(name)

    def digests(self):
        out = []
        for name in sorted(self.files):
            data = (self.out / name).read_bytes()
            out.append({"name": name, "sha256": hashlib.sha256(data).hexdigest(),
                        "bytes": len(data)})
        return out


def _ecdf_rows(tag, values):
    xs = np.sort(np.asarray(values, dtype=float))
    return [(tag, x, (i + 1) / xs.size) for i, x in enumerate(xs)]


# -------------------------------------------------------------- experiments

def _survival_asymptotics(cfg, rng, rep):
    ns = sorted(cfg.n)
    if len(ns) < 3:
        raise InvalidParameter("survival-asymptotics needs at least 3 values of n")
    rows, surv, ratios = [], [], []
    for n, child in zip(ns, rng.spawn(len(ns))):
        r, ok = rb_survival_samples(cfg.model, n, cfg.N, child)
        ps, pw = mean_estimate(r), mean_estimate(ok)
        ratio = ratio_estimate(r, ok)
        surv.append(ps.value)
        ratios.append(ratio.value)
        rows.append((n, ps.value, ps.stderr, pw.value, pw.stderr, ratio.value, ratio.ci_low,
                     ratio.ci_high))
    rep.csv("survival.csv", ["n", "p_survival", "se_survival", "p_nonnegative", "se_nonnegative",
                             "ratio", "ratio_ci_low", "ratio_ci_high"], rows)
    slope, slope_se = loglog_slope(ns, surv)
    rho = cfg.model.rho if cfg.model.rho is not None else 0.5
    spread = max(ratios) / min(ratios)
    rep.check("ratio_stabilizes", spread < 1.15, max_over_min=spread, threshold=1.15)
    rep.check("survival_slope", abs(slope + (1 - rho)) <= 0.08, slope=slope, stderr=slope_se,
              expected=-(1 - rho), tolerance=0.08)
    rep.results.update(n=ns, p_survival=surv, ratio=ratios, slope=slope, slope_stderr=slope_se,
                       rho=rho)
    if cfg.svg:
        def draw(ax):
            ax.loglog(ns, surv, "o-", label="P(Z_n > 0)")
            ax.loglog(ns, [s / r for s, r in zip(surv, ratios)], "s--", label="P(L_n >= 0)")
            ax.set_xlabel("n")
            ax.legend()
        rep.svg("survival.svg", draw)


def _theta_consistency(cfg, rng, rep):
    n = max(cfg.n)
    r_rng, s_rng = rng.spawn(2)
    ratio = theta_ratio(cfg.model, n, cfg.N, r_rng)
    series = theta_series(cfg.model, cfg.K, cfg.horizon, cfg.N, s_rng)
    trunc = series.diagnostics["truncated"]
    rows = [("ratio", n, ratio.value, ratio.ci[0], ratio.ci[1], ratio.estimate.stderr),
            ("series", cfg.K, series.value, series.ci[0], series.ci[1], series.estimate.stderr),
            ("series-truncated", cfg.K, trunc["value"], trunc["ci_low"], trunc["ci_high"],
             trunc["stderr"])]
    rep.csv("theta.csv", ["method", "size", "value", "ci_low", "ci_high", "stderr"], rows)
    terms = series.diagnostics["terms"]
    rep.csv("theta_terms.csv", ["k", "term", "partial_sum"],
            [(k, t, s) for k, (t, s) in enumerate(zip(terms, np.cumsum(terms)))])
    overlap = ratio.ci[0] <= series.ci[1] and series.ci[0] <= ratio.ci[1]
    rep.check("ci_overlap", overlap, ratio=ratio.value, ratio_ci=list(ratio.ci),
              series=series.value, series_ci=list(series.ci), truncated_series=trunc["value"])
    rep.results.update(ratio=ratio.to_dict(), series=series.to_dict())
    if cfg.svg:
        def draw(ax):
            ax.plot(np.cumsum(terms), ".-", label="series partial sums")
            ax.axhline(ratio.value, color="k", ls="--", label="ratio estimate")
            ax.axhline(series.value, color="r", ls=":", label="series with tail")
            ax.set_xlabel("k")
            ax.legend()
        rep.svg("theta.svg", draw)


def _growth_law(cfg, rng, rep):
    ns = sorted(cfg.n)
    grid = np.round(np.arange(21) * 0.05, 2)
    ratio_rows, grid_rows, medians, w_all = [], [], [], {}
    all_positive = True
    for n, child in zip(ns, rng.spawn(len(ns))):
        batch = sample_conditioned_batch(cfg.model, n, cfg.count, child)
        r = n // 5
        ratios, ws = np.empty(batch.size), np.empty(batch.size)
        lo = int(math.floor(0.2 * (n - r)))
        for i in range(batch.size):
            vals = rescaled_path(batch.path(i), r).values
            late = vals[lo:]
            ratios[i] = late.max() / late.min()
            ws[i] = vals[-1]
            idx = np.floor(grid * (n - r)).astype(int)
            grid_rows.extend((n, i, t, v) for t, v in zip(grid, vals[idx]))
        ratio_rows.extend((n, i, q, w) for i, (q, w) in enumerate(zip(ratios, ws)))
        medians.append(float(np.median(ratios)))
        w_all[n] = ws
        all_positive &= bool(np.all(ws > 0))
    rep.csv("growth_ratios.csv", ["n", "path", "max_over_min", "W"], ratio_rows)
    rep.csv("growth_paths.csv", ["n", "path", "t", "X"], grid_rows)
    rows = []
    for n in ns:
        rows.extend((n,) + row[1:] for row in _ecdf_rows(n, w_all[n]))
    rep.csv("growth_w_ecdf.csv", ["n", "W", "ecdf"], rows)
    decreasing = all(a > b for a, b in zip(medians, medians[1:]))
    rep.check("median_ratio_small", medians[-1] < 1.5, median=medians[-1], threshold=1.5,
              n=ns[-1])
    rep.check("median_ratio_decreasing", decreasing, medians=medians, n=ns)
    rep.check("endpoint_positive", all_positive)
    rep.results.update(n=ns, medians=medians, r=[n // 5 for n in ns])
    if cfg.svg:
        def draw(ax):
            for n in ns:
                xs = np.sort(w_all[n])
                ax.step(xs, np.arange(1, xs.size + 1) / xs.size, where="post", label=f"n={n}")
            ax.set_xscale("log")
            ax.set_xlabel("W = Z_n / mu_n")
            ax.legend()
        rep.svg("growth_w_ecdf.svg", draw)


def _tau_min_limit(cfg, rng, rep):
    ns = sorted(cfg.n)
    if len(ns) < 2:
        raise InvalidParameter("tau-min-limit needs at least 2 values of n")
    samples, rows = {}, []
    for n, child in zip(ns, rng.spawn(len(ns))):
        S = sample_conditioned_batch(cfg.model, n, cfg.count, child).env.partial_sums
        tau = np.argmin(S, axis=1)
        low = S.min(axis=1)
        samples[n] = (tau, low)
        rows.extend((n, i, t, m) for i, (t, m) in enumerate(zip(tau, low)))
    rep.csv("tau_min.csv", ["n", "sample", "tau", "min_S"], rows)
    ref = ns[-1]
    for n in ns[:-1]:
        kt = ks_two_sample(samples[n][0], samples[ref][0], alpha=cfg.alpha)
        km = ks_two_sample(samples[n][1], samples[ref][1], alpha=cfg.alpha)
        rep.check(f"tau_ks_{n}_vs_{ref}", kt.passed, **kt.to_dict())
        rep.check(f"min_ks_{n}_vs_{ref}", km.passed, **km.to_dict())
    rep.results.update(n=ns, mean_tau={n: float(samples[n][0].mean()) for n in ns},
                       mean_min={n: float(samples[n][1].mean()) for n in ns})
    if cfg.svg:
        def draw(ax):
            for n in ns:
                xs = np.sort(samples[n][1])
                ax.step(xs, np.arange(1, xs.size + 1) / xs.size, where="post", label=f"n={n}")
            ax.set_xlabel("min(S_0..S_n) given Z_n > 0")
            ax.legend()
        rep.svg("tau_min_ecdf.svg", draw)


def _walk_limit(cfg, rng, rep):
    n = max(cfg.n)
    a_rng, b_rng = rng.spawn(2)
    surv = sample_conditioned_batch(cfg.model, n, cfg.count, a_rng)
    ref, _ = sample_walks_given_Ln(cfg.model, n, cfg.count, b_rng)
    SA, LZ, SB = surv.env.partial_sums, surv.log_z, ref.partial_sums
    # one deterministic-in-spirit scale for every sample: a common factor leaves
    # each KS statistic unchanged, while separate medians on a lattice differ by
    # whole steps and would distort the comparison
    scale = float(np.median(np.abs(SB[:, -1])))
    if scale <= 0:
        raise InvalidParameter("median of |S_n| is 0; the walk is too short to normalize")
    rows = []
    for t in cfg.t:
        k = int(math.floor(n * t))
        for name, a in (("S", SA[:, k]), ("logZ", LZ[:, k])):
            ks = ks_two_sample(a / scale, SB[:, k] / scale, alpha=cfg.alpha)
            rep.check(f"{name}_t{t:g}", ks.passed, **ks.to_dict())
        rows.extend(("survival", i, t, s / scale, z / scale)
                    for i, (s, z) in enumerate(zip(SA[:, k], LZ[:, k])))
        rows.extend(("nonnegative", i, t, s / scale, "") for i, s in enumerate(SB[:, k]))
    rep.csv("walk_limit.csv", ["sample", "index", "t", "S_scaled", "logZ_scaled"], rows)
    offset = LZ[:, -1] - SA[:, -1]
    rep.results.update(n=n, scale=scale, mean_log_W=float(offset.mean()),
                       offset_over_scale=float(offset.mean() / scale))
    if cfg.svg:
        def draw(ax):
            for lab, v in (("S | Z_n>0", SA[:, -1]), ("log Z | Z_n>0", LZ[:, -1]),
                           ("S | L_n>=0", SB[:, -1])):
                xs = np.sort(v / scale)
                ax.step(xs, np.arange(1, xs.size + 1) / xs.size, where="post", label=lab)
            ax.set_xlabel("value at t = 1 / scale")
            ax.legend()
        rep.svg("walk_limit_ecdf.svg", draw)


def _renewal(cfg, rng, rep):
    grid = np.asarray(cfg.grid, dtype=float)
    l_rng, t_rng, h_rng = rng.spawn(3)
    ladder = estimate_renewal_v(cfg.model, grid, cfg.N, l_rng, "ladder", force_simulation=True)
    tau = estimate_renewal_v(cfg.model, grid, cfg.N, t_rng, "tau", force_simulation=True)
    se = np.hypot(ladder.stderr, tau.stderr)
    z = np.divide(ladder.v_hat - tau.v_hat, se, out=np.zeros_like(se), where=se > 0)
    exact = cfg.model.exact_v(ladder.grid)
    rows = [(x, a, sa, b, sb, zz, "" if exact is None else e)
            for x, a, sa, b, sb, zz, e in zip(ladder.grid, ladder.v_hat, ladder.stderr,
                                              tau.v_hat, tau.stderr, z,
                                              exact if exact is not None else ladder.grid)]
    rep.csv("renewal.csv", ["x", "v_ladder", "se_ladder", "v_tau", "se_tau", "z", "v_exact"], rows)
    rep.check("estimators_agree", bool(np.all(np.abs(z) <= 4)), max_abs_z=float(np.max(np.abs(z))),
              threshold=4.0, points=int(grid.size))
    if exact is not None:
        zx = np.abs(ladder.v_hat - exact) / np.maximum(ladder.stderr, 1e-300)
        rep.check("matches_closed_form", bool(np.all((zx <= 4) | (ladder.v_hat == exact))),
                  max_abs_z=float(np.max(zx)))
    hrows = []
    ok = True
    for x, child in zip(cfg.x, h_rng.spawn(len(cfg.x))):
        est = check_harmonicity(ladder, cfg.model, x, cfg.N, child)
        good = est.value == 0 or abs(est.value) <= 4 * est.stderr
        ok &= good
        hrows.append((x, est.value, est.stderr, int(good)))
    rep.csv("harmonicity.csv", ["x", "residual", "stderr", "within_4se"], hrows)
    rep.check("harmonic", ok, points=len(hrows))
    rep.results.update(slope=ladder.slope, slope_tau=tau.slope)
    if cfg.svg:
        def draw(ax):
            ax.errorbar(ladder.grid, ladder.v_hat, 2 * ladder.stderr, fmt=".", label="ladder")
            ax.errorbar(tau.grid, tau.v_hat, 2 * tau.stderr, fmt="x", label="first-minimum")
            ax.set_xlabel("x")
            ax.set_ylabel("v(x)")
            ax.legend()
        rep.svg("renewal.svg", draw)


# ---------------------------------------------------------------- validate

def _validation_checks(cfg, rng):
    """(name, passed, measured value) for quick property checks of every module."""
    checks = []
    add = lambda name, ok, value: checks.append((name, bool(ok), float(value)))
    streams = iter(rng.spawn(16))
    lf = EnvironmentModel.default()

    # offspring: eta bounds and g within [0, eta]
    worst = math.inf
    laws = [OffspringLaw.poisson(1.3), OffspringLaw.geometric(0.7), OffspringLaw.binary(0.4),
            OffspringLaw.bounded([0.2, 0.3, 0.1, 0.4])]
    for law in laws:
        worst = min(worst, eta(law) - zeta(law, 2) / 2)
        for s in np.linspace(0, 0.999, 50):
            g = g_eval(law, s)
            worst = min(worst, g, eta(law) - g)
    add("offspring.zeta2_half_le_eta_and_g_bounds", worst >= -1e-12, worst)

    # gf: recursion vs closed form, Jirina residual, Agresti bound
    g = next(streams)
    err = jir = 0.0
    agresti_ok = True
    for _ in range(200):
        env = sample_environment(lf, int(g.integers(1, 200)), g)
        a, b = survival_given_env(env), lf_survival_exact(env)
        err = max(err, abs(a - b) / b)
    for fam in ("poisson", "geometric", "binary"):
        model = EnvironmentModel(fam, IncrementLaw.two_point(math.log(2) if fam == "binary"
                                                             else 0.5))
        for _ in range(100):
            env = sample_environment(model, int(g.integers(2, 100)), g)
            k, s = int(g.integers(0, env.n)), float(g.random() * 0.99)
            jir = max(jir, jirina_residual(env, k, s))
            agresti_ok &= agresti_lower_bound(env, k, s) <= survival_given_env(env, k, s) * (1 + 1e-12)
    add("gf.recursion_matches_closed_form", err <= 1e-12, err)
    add("gf.jirina_identity", jir <= 1e-9, jir)
    add("gf.agresti_bound", agresti_ok, 0.0)

    # walk: worked prospective-minimum example and fluctuation summary
    idx, cens = prospective_minima(np.array([0, -1, 1, -0.5, 2, 3]), 2)
    add("walk.prospective_minima_example", list(idx[~cens]) == [1, 3], idx.size)
    fs = fluctuation_summary(np.array([0.0, -1.0, 0.5, -2.0]))
    add("walk.fluctuation_summary", list(fs.ladder_epochs) == [1, 3] and fs.iota == 2
        and fs.tau_n == 3, fs.L_n)

    # walk: exact harmonicity on the lattice
    unit = EnvironmentModel("geometric", IncrementLaw.two_point(1.0))
    table = estimate_renewal_v(unit, np.arange(0, 11.0), 10, next(streams))
    worst = max(abs(check_harmonicity(table, unit, float(x), 10, next(streams)).value)
                for x in (0, 3))
    add("walk.harmonic_at_integers", worst == 0.0, worst)

    # conditioned: E v(S_n) 1{L_n >= 0} = 1
    est = plus_expectation(unit, lambda S: np.ones(S.shape[0]), 0, 16, cfg.N, next(streams))
    add("conditioned.martingale_mean_one", est.within(1.0, 4.0), est.value)

    # conditioned: exact P+ chain keeps the walk nonnegative
    G = _chain_signs(2000, 64, next(streams))
    add("conditioned.chain_nonnegative", np.cumsum(G, axis=1).min() >= 0, np.cumsum(G, axis=1).min())

    # conditioned: Tanaka decomposition on a short horizon
    tk = tanaka_ladder_check(unit, 4 * cfg.lookahead, cfg.lookahead, cfg.N, next(streams), max_censoring=0.05)
    add("conditioned.tanaka_time", tk.ks_time.passed, tk.ks_time.statistic)
    add("conditioned.tanaka_height", tk.ks_height.passed, tk.ks_height.statistic)

    # conditioned: eta series converges under P+
    batch = sample_plus(lf, 400, 20, next(streams))
    worst = max(eta_series_partial_sums(batch.path(i), 400).last_decade_increment
                for i in range(batch.size))
    add("conditioned.eta_series_settles", worst < 0.05, worst)

    # branching: naive survival agrees with the Rao-Blackwell estimate
    naive = estimate_survival(lf, 32, cfg.N, next(streams), mode="naive")
    rb = estimate_survival(lf, 32, cfg.N, next(streams))
    gap = abs(naive.value - rb.value) / math.hypot(naive.stderr if math.isfinite(naive.stderr)
                                                   else (naive.ci_high - naive.ci_low) / 3.92,
                                                   rb.stderr)
    add("branching.naive_vs_rao_blackwell", gap <= 4, gap)

    # stats: boundary cases
    w0, w10 = wilson_interval(0, 10), wilson_interval(10, 10)
    add("stats.wilson_boundaries", w0.ci_low == 0 and w10.ci_high == 1, 0.0)
    add("stats.ks_identical", ks_two_sample([1, 2, 3], [1, 2, 3]).statistic == 0, 0.0)
    s, _ = loglog_slope([1, 4, 16], [1, 0.5, 0.25])
    add("stats.loglog_slope", abs(s + 0.5) < 1e-12, s)

    # rng: chunked results do not depend on the thread count
    f = lambda size, child: child.random(size).sum()
    one = map_chunks(f, 50_000, make_rng(5), 4096, threads=1)
    two = map_chunks(f, 50_000, make_rng(5), 4096, threads=2)
    add("rng.threads_do_not_change_results", one == two, 0.0)
    return checks


def _validate(cfg, rng, rep):
    checks = _validation_checks(cfg, rng)
    rep.csv("validate.csv", ["check", "passed", "value"], checks)
    for name, ok, value in checks:
        rep.check(name, ok, value=value)
    rep.results.update(checks=len(checks))


_RUNNERS = {
    "survival-asymptotics": _survival_asymptotics,
    "theta-consistency": _theta_consistency,
    "growth-law": _growth_law,
    "tau-min-limit": _tau_min_limit,
    "walk-limit": _walk_limit,
    "renewal": _renewal,
    "validate": _validate,
}


def run_experiment(cfg: ExperimentConfig) -> RunManifest:
    """Run one experiment, write its reports and ``manifest.json``.

    A :class:`BudgetExceeded` from a sampler is re-raised with the partial
    manifest (files written so far, status "budget-exceeded") attached.
    """
    set_threads(cfg.threads)
    rep = _Report(cfg.out)
    rng = make_rng(cfg.seed)
    start = time.perf_counter()
    status = "complete"
    error = None
    try:
        _RUNNERS[cfg.experiment](cfg, rng, rep)
    except BudgetExceeded as exc:
        status, error = "budget-exceeded", exc
    if status == "complete":
        rep.json("summary.json", {"experiment": cfg.experiment, "config": cfg.to_json(),
                                  "version": __version__, "results": rep.results,
                                  "verdicts": rep.verdicts,
                                  "passed": all(v["passed"] for v in rep.verdicts.values())})
    manifest = RunManifest(cfg.to_json(), __version__, time.perf_counter() - start,
                           rep.verdicts, rep.digests(), status)
    with open(cfg.out / "manifest.json", "w") as fh:
        json.dump(_clean(manifest.to_json()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if error is not None:
        error.partial = {"cause": error.partial, "manifest": manifest.to_json()}
        raise error
    return manifest
