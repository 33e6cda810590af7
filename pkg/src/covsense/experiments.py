"""Monte-Carlo experiment runner for the GCG-Alt and DCOMP-style estimators.

Every trial draws its scenario from a stream keyed by ``(seed, trial)`` and
its fading gains from a second per-trial stream (the first ``T`` of
``max(T)`` draws), so all sweep points of one trial share geometry and
channels; training and receiver noise come from streams keyed by
``(seed, S, trial, estimator)``. Results are therefore reproducible bit-for-bit for a given seed and configuration,
independent of the thread count.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baseline, metrics, sensing, solver, structure
from .channel import AngularSpread, ArrayGeometry, ArrayKind, ConfigurationError, realize_channels, sample_scenario, build_covariance

ESTIMATORS = ("gcg_alt", "dcomp")
MODES = ("energy", "sweep_t", "sweep_s", "sweep_spread", "flops", "estimate")


@dataclass
class ExperimentConfig:
    """Experiment description; angles in degrees, as in the JSON config files."""

    mode: str = "sweep_t"
    array_kind: str = "ULA"
    N_t: int = 16
    N_r: int = 8
    K_t: int = 4
    K_r: int = 4
    K: int = 1
    L: int = 30
    carrier_hz: float = 28e9
    spreads_deg: tuple = (10.2, 0.0, 15.5, 6.0)
    S: list = field(default_factory=lambda: [16])
    T: list = field(default_factory=lambda: [10, 20, 40, 80])
    # (tx azimuth, rx azimuth) spread pairs for sweep_spread
    spread_sweep_deg: list = field(default_factory=lambda: [[5.0, 7.5], [10.2, 15.5], [20.0, 30.0]])
    clusters: list = field(default_factory=lambda: [1, 2, 3, 4])
    pnr_db: float = 10.0
    trials: int = 20
    seed: int = 0
    estimators: list = field(default_factory=lambda: ["gcg_alt", "dcomp"])
    p_e: float = 0.99
    r_R_override: int | None = None
    num_paths: int | None = None
    grid_factor: int = 2
    subtract_noise: bool = False
    phase_bits: int = 0
    mu: float | None = None
    eps: float = 0.003
    eps_altmin: float = 0.1
    max_outer: int = 64
    max_altmin: int = 10
    dcomp_varying_training: bool = True
    flops_r_est: int = 4
    flops_I_a: int = 2
    flops_num_paths: int = 18
    out: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        for name in ("S", "T", "spread_sweep_deg", "clusters", "estimators"):
            if not getattr(self, name):
                raise ConfigurationError(f"{name} must be non-empty")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ConfigurationError(f"unknown estimators {sorted(bad)}")
        self.spreads_deg = tuple(float(x) for x in self.spreads_deg)
        self.tx_geometry()  # validates array sizes

    def tx_geometry(self) -> ArrayGeometry:
        return ArrayGeometry.from_carrier(self.array_kind, self.N_t, self.carrier_hz)

    def rx_geometry(self) -> ArrayGeometry:
        return ArrayGeometry.from_carrier(self.array_kind, self.N_r, self.carrier_hz)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ResultRow:
    mode: str
    kind: str  # "trial" or "mean"
    estimator: str
    array_kind: str
    N_t: int
    N_r: int
    K: int
    S: int
    T: int
    spread_tx_deg: float
    spread_rx_deg: float
    pnr_db: float
    trial: int = -1
    eta: float = math.nan
    nmse: float = math.nan
    eta_se: float = math.nan
    nmse_se: float = math.nan
    r_R: float = math.nan
    r_est: float = math.nan
    altmin_iters: float = math.nan
    flops: float = math.nan
    wall_time: float = math.nan
    n_ok: int = 0
    n_failed: int = 0
    error: str = ""


@dataclass
class EnergyRow:
    K: int
    trial: int
    r_sub: int
    pe_R: float
    pe_Rp: float
    r_R: int
    r_p: int


@dataclass
class FlopsRow:
    T: int
    M: int
    gcg_alt: float
    dcomp: float
    r_est: int
    I_a: int
    L_p: int
    G_t: int
    G_r: int


# wall_time is left out of the CSV by default so files are byte-reproducible
TIMING_COLUMNS = ("wall_time",)

CSV_COLUMNS = {
    "result": [f.name for f in dataclasses.fields(ResultRow) if f.name not in TIMING_COLUMNS],
    "energy": [f.name for f in dataclasses.fields(EnergyRow)],
    "flops": [f.name for f in dataclasses.fields(FlopsRow)],
}


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def dictionary_sizes(cfg: ExperimentConfig):
    if ArrayKind(cfg.array_kind) is ArrayKind.USPA:
        return (cfg.grid_factor * math.isqrt(cfg.N_t)) ** 2, (cfg.grid_factor * math.isqrt(cfg.N_r)) ** 2
    return cfg.grid_factor * cfg.N_t, cfg.grid_factor * cfg.N_r


def estimate_gcg_alt(batch: sensing.MeasurementBatch, plan: sensing.TrainingPlan, kind, N_t, N_r,
                     config: solver.SolverConfig | None = None, subtract_noise=False):
    """Full GCG-Alt pipeline from a measurement batch; returns ``(R_hat, U, V, trace)``."""
    gu = structure.build_weight_matrix(kind, N_t)
    gv = structure.build_weight_matrix(kind, N_r)
    op = sensing.assemble_Q(plan, gu, gv)
    s_p = sensing.sensing_vector(batch.scm_permuted, batch.noise_variance if subtract_noise else None,
                                 batch.num_beams, batch.num_chains)
    config = config or solver.SolverConfig(mu=batch.noise_variance)
    U, V, trace = solver.gcg_alt(op, s_p, config)
    R_hat = solver.reconstruct_covariance(U @ V.T, gu, gv, N_t, N_r)
    return R_hat, U, V, trace


def run_trial(cfg: ExperimentConfig, S: int, T: int, spreads: AngularSpread, point: int, trial: int):
    """One Monte-Carlo trial at one sweep point; returns a ``ResultRow`` per estimator."""
    tx, rx = cfg.tx_geometry(), cfg.rx_geometry()
    scen_rng = _stream(cfg.seed, 0, trial)
    scenario = sample_scenario(scen_rng, tx, rx, cfg.K, cfg.L, spreads)
    cov = build_covariance(scenario)
    r_R = cfg.r_R_override or structure.rank_for_energy(cov.singular_values, cfg.p_e)
    H = realize_channels(scenario, _stream(cfg.seed, 1, trial), max(max(cfg.T), T))[:T]
    sigma2 = sensing.noise_variance_from_pnr(cfg.pnr_db)
    M = S * cfg.K_r
    base = dict(mode=cfg.mode, kind="trial", array_kind=cfg.array_kind, N_t=cfg.N_t, N_r=cfg.N_r, K=cfg.K,
                S=S, T=T, spread_tx_deg=float(np.rad2deg(spreads.tx_azimuth)),
                spread_rx_deg=float(np.rad2deg(spreads.rx_azimuth)), pnr_db=cfg.pnr_db, trial=trial, r_R=r_R)
    rows = []
    for name in cfg.estimators:
        est_rng = _stream(cfg.seed, 2, S, trial, ESTIMATORS.index(name))
        t0 = time.perf_counter()
        try:
            if name == "gcg_alt":
                plan = sensing.design_training(est_rng, cfg.N_t, cfg.N_r, cfg.K_t, cfg.K_r, S, cfg.phase_bits)
                batch = sensing.MeasurementBatch(sensing.measure(H, plan, sigma2, est_rng), sigma2, cfg.pnr_db,
                                                 S, cfg.K_r)
                sconf = solver.SolverConfig(mu=sigma2 if cfg.mu is None else cfg.mu, eps=cfg.eps,
                                            eps_altmin=cfg.eps_altmin, max_outer=cfg.max_outer,
                                            max_altmin=cfg.max_altmin)
                R_hat, U, V, trace = estimate_gcg_alt(batch, plan, cfg.array_kind, cfg.N_t, cfg.N_r, sconf,
                                                      cfg.subtract_noise)
                r_est = U.shape[1]
                I_a = float(np.mean(trace.altmin_iterations)) if trace.altmin_iterations else 0.0
                flops = metrics.flops_gcg_alt(cfg.N_t, cfg.N_r, r_est, I_a, M)
                extra = dict(r_est=r_est, altmin_iters=I_a, flops=flops)
            else:
                G_t, G_r = dictionary_sizes(cfg)
                dico = baseline.build_dictionary(tx, rx, G_t, G_r)
                L_p = cfg.num_paths or r_R
                if cfg.dcomp_varying_training:
                    plans = [sensing.design_training(est_rng, cfg.N_t, cfg.N_r, cfg.K_t, cfg.K_r, S, cfg.phase_bits)
                             for _ in range(T)]
                    scms = [structure.permute(sensing.sample_covariance(sensing.measure(H[t], p, sigma2, est_rng)),
                                              S, cfg.K_r) for t, p in enumerate(plans)]
                else:
                    plan = sensing.design_training(est_rng, cfg.N_t, cfg.N_r, cfg.K_t, cfg.K_r, S, cfg.phase_bits)
                    plans = [plan]
                    scms = [structure.permute(sensing.sample_covariance(sensing.measure(H, plan, sigma2, est_rng)),
                                              S, cfg.K_r)]
                R_hat, picks, _ = baseline.dcomp_estimate(scms, plans, dico, L_p,
                                                           sigma2 if cfg.subtract_noise else None)
                extra = dict(r_est=len(picks), flops=baseline.flops_dcomp(T, L_p, G_t, G_r, M))
            eta = metrics.subspace_efficiency(R_hat, cov.R, r_R)
            err = metrics.nmse(R_hat, cov.R)
            if not (np.isfinite(eta) and np.isfinite(err)):
                raise FloatingPointError("non-finite metric")
            rows.append(ResultRow(estimator=name, eta=eta, nmse=err, n_ok=1,
                                  wall_time=time.perf_counter() - t0, **base, **extra))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            rows.append(ResultRow(estimator=name, n_failed=1, error=f"{type(exc).__name__}: {exc}",
                                  wall_time=time.perf_counter() - t0, **base))
    return rows


def _sweep_points(cfg: ExperimentConfig):
    sp = AngularSpread.from_degrees(*cfg.spreads_deg)
    if cfg.mode == "sweep_s":
        return [(S, cfg.T[0], sp) for S in cfg.S]
    if cfg.mode == "sweep_spread":
        return [(cfg.S[0], cfg.T[0], dataclasses.replace(sp, tx_azimuth=float(np.deg2rad(a)),
                                                        rx_azimuth=float(np.deg2rad(b))))
                for a, b in cfg.spread_sweep_deg]
    return [(cfg.S[0], T, sp) for T in cfg.T]


def aggregate(rows):
    """Mean rows (with standard errors) per sweep point and estimator; failures excluded."""
    groups = {}
    for r in rows:
        key = (r.estimator, r.S, r.T, r.spread_tx_deg, r.spread_rx_deg)
        groups.setdefault(key, []).append(r)
    out = []
    for key, rs in groups.items():
        ok = [r for r in rs if r.n_ok]
        first = rs[0]

        def stat(name):
            v = np.array([getattr(r, name) for r in ok], dtype=float)
            if v.size == 0:
                return math.nan, math.nan
            se = v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else math.nan
            return float(v.mean()), float(se)

        eta, eta_se = stat("eta")
        err, err_se = stat("nmse")
        out.append(dataclasses.replace(
            first, kind="mean", trial=-1, eta=eta, eta_se=eta_se, nmse=err, nmse_se=err_se,
            r_R=stat("r_R")[0], r_est=stat("r_est")[0], altmin_iters=stat("altmin_iters")[0],
            flops=stat("flops")[0], wall_time=float(sum(r.wall_time for r in rs)),
            n_ok=len(ok), n_failed=len(rs) - len(ok), error=""))
    return out


def run_sweep(cfg: ExperimentConfig, threads: int = 1):
    points = _sweep_points(cfg)
    tasks = [(p, t) for p in range(len(points)) for t in range(cfg.trials)]

    def work(task):
        p, t = task
        S, T, sp = points[p]
        return run_trial(cfg, S, T, sp, p, t)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, tasks))
    else:
        results = [work(t) for t in tasks]
    rows = [r for rs in results for r in rs]
    return rows + aggregate(rows)


def energy_curves(cfg: ExperimentConfig, max_r_sub: int | None = None):
    """Captured-energy curves of ``R`` and ``R_p`` for every cluster count in ``cfg.clusters``."""
    tx, rx = cfg.tx_geometry(), cfg.rx_geometry()
    sp = AngularSpread.from_degrees(*cfg.spreads_deg)
    rows = []
    for K in cfg.clusters:
        for trial in range(cfg.trials):
            scenario = sample_scenario(_stream(cfg.seed, 3, K, trial), tx, rx, K, cfg.L, sp)
            sv_R = build_covariance(scenario).singular_values
            sv_Rp = structure.permuted_singular_values(scenario)
            cR, cP = structure.energy_curve(sv_R), structure.energy_curve(sv_Rp)
            r_R = structure.rank_for_energy(sv_R, cfg.p_e)
            r_p = structure.rank_for_energy(sv_Rp, cfg.p_e)
            n = max_r_sub or max(r_R, r_p)
            for r in range(1, n + 1):
                rows.append(EnergyRow(K, trial, r, float(cR[min(r, cR.size) - 1]),
                                      float(cP[min(r, cP.size) - 1]), r_R, r_p))
    return rows


def flops_table(cfg: ExperimentConfig):
    G_t, G_r = dictionary_sizes(cfg)
    M = cfg.S[0] * cfg.K_r
    return [FlopsRow(T, M, metrics.flops_gcg_alt(cfg.N_t, cfg.N_r, cfg.flops_r_est, cfg.flops_I_a, M),
                     baseline.flops_dcomp(T, cfg.flops_num_paths, G_t, G_r, M),
                     cfg.flops_r_est, cfg.flops_I_a, cfg.flops_num_paths, G_t, G_r)
            for T in cfg.T]


def run_experiment(cfg: ExperimentConfig, threads: int = 1):
    """Dispatch on ``cfg.mode``; ``estimate`` runs a single trial at the first sweep point."""
    if cfg.mode == "energy":
        return energy_curves(cfg)
    if cfg.mode == "flops":
        return flops_table(cfg)
    if cfg.mode == "estimate":
        S, T, sp = _sweep_points(cfg)[0]
        return run_trial(cfg, S, T, sp, 0, 0)
    return run_sweep(cfg, threads)


def rows_to_csv(rows, timing: bool = False) -> str:
    """CSV text with a header line; ``timing`` adds the wall-time column."""
    buf = io.StringIO()
    if not rows:
        return ""
    names = [f.name for f in dataclasses.fields(rows[0]) if timing or f.name not in TIMING_COLUMNS]
    w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in dataclasses.asdict(r).items()})
    return buf.getvalue()


def write_results(rows, cfg: ExperimentConfig, out_path, timing: bool = False):
    """CSV of ``rows`` plus a ``.json`` sidecar echoing the configuration."""
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(rows_to_csv(rows, timing))
    meta = {"config": cfg.to_dict(), "seed": cfg.seed, "baseline": baseline.BASELINE_LABEL}
    out.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return out


def run_single(cfg: ExperimentConfig):
    """One GCG-Alt estimate at the first sweep point (trial 0).

    Returns ``(R_hat, R, trace, row)`` so callers can dump the estimate and
    the solver trace alongside the metrics.
    """
    S, T, sp = _sweep_points(cfg)[0]
    tx, rx = cfg.tx_geometry(), cfg.rx_geometry()
    scenario = sample_scenario(_stream(cfg.seed, 0, 0), tx, rx, cfg.K, cfg.L, sp)
    cov = build_covariance(scenario)
    r_R = cfg.r_R_override or structure.rank_for_energy(cov.singular_values, cfg.p_e)
    H = realize_channels(scenario, _stream(cfg.seed, 1, 0), T)
    sigma2 = sensing.noise_variance_from_pnr(cfg.pnr_db)
    rng = _stream(cfg.seed, 2, S, 0, 0)
    plan = sensing.design_training(rng, cfg.N_t, cfg.N_r, cfg.K_t, cfg.K_r, S, cfg.phase_bits)
    batch = sensing.MeasurementBatch(sensing.measure(H, plan, sigma2, rng), sigma2, cfg.pnr_db, S, cfg.K_r)
    sconf = solver.SolverConfig(mu=sigma2 if cfg.mu is None else cfg.mu, eps=cfg.eps,
                                eps_altmin=cfg.eps_altmin, max_outer=cfg.max_outer, max_altmin=cfg.max_altmin)
    t0 = time.perf_counter()
    R_hat, U, V, trace = estimate_gcg_alt(batch, plan, cfg.array_kind, cfg.N_t, cfg.N_r, sconf, cfg.subtract_noise)
    I_a = float(np.mean(trace.altmin_iterations)) if trace.altmin_iterations else 0.0
    row = ResultRow(mode="estimate", kind="trial", estimator="gcg_alt", array_kind=cfg.array_kind,
                    N_t=cfg.N_t, N_r=cfg.N_r, K=cfg.K, S=S, T=T,
                    spread_tx_deg=float(np.rad2deg(sp.tx_azimuth)), spread_rx_deg=float(np.rad2deg(sp.rx_azimuth)),
                    pnr_db=cfg.pnr_db, trial=0, eta=metrics.subspace_efficiency(R_hat, cov.R, r_R),
                    nmse=metrics.nmse(R_hat, cov.R), r_R=r_R, r_est=U.shape[1], altmin_iters=I_a,
                    flops=metrics.flops_gcg_alt(cfg.N_t, cfg.N_r, U.shape[1], I_a, S * cfg.K_r),
                    wall_time=time.perf_counter() - t0, n_ok=1)
    return R_hat, cov.R, trace, row
