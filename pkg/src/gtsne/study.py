"""Finite-n convergence study: sample, calibrate, embed, and compare against continuum references."""
from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from . import hot
from .affinity import GRADIENT_FACTOR, joint_affinities
from .calibrate import calibrate_all, pairwise_dtheta
from .continuum import (
    JointSample,
    big_F_rows,
    functional_I,
    measure_from_spec,
    p_matrix,
    sigma_star_field,
    stationarity_residual,
)
from .descent import OptimizerConfig, optimize_embedding, run_metadata
from .errors import ConfigError, GTSNEError
from .files import csv_text, write_csv, write_json, write_text
from .kernels import cauchy_kernel, input_kernel_from_config, output_kernel_from_config, power_kernel


def _component_sample(spec, n, rng):
    fam = spec["family"]
    lower = np.atleast_1d(np.asarray(spec["lower"], dtype=float))
    upper = np.atleast_1d(np.asarray(spec["upper"], dtype=float))
    d = lower.size
    if fam == "uniform-box":
        return rng.uniform(lower, upper, size=(n, d))
    mean = np.broadcast_to(np.asarray(spec.get("mean", (lower + upper) / 2), dtype=float), (d,))
    std = np.broadcast_to(np.asarray(spec.get("std", 1.0), dtype=float), (d,))
    a, b = (lower - mean) / std, (upper - mean) / std
    cols = [stats.truncnorm.rvs(a[k], b[k], loc=mean[k], scale=std[k], size=n, random_state=rng) for k in range(d)]
    return np.stack(cols, axis=1)


def sample_measure(spec, n, seed) -> np.ndarray:
    """``n`` i.i.d. draws from a box-supported measure spec; deterministic in ``seed``."""
    measure_from_spec(spec, nodes=2)  # validates the measure description
    rng = np.random.default_rng(seed)
    if spec["family"] != "mixture":
        return _component_sample(spec, n, rng)
    comps = spec["components"]
    w = np.asarray(spec.get("weights", [1.0] * len(comps)), dtype=float)
    labels = rng.choice(len(comps), size=n, p=w / w.sum())
    d = len(np.atleast_1d(comps[0]["lower"]))
    out = np.empty((n, d))
    for k, comp in enumerate(comps):
        idx = np.flatnonzero(labels == k)
        if idx.size:
            out[idx] = sample_measure(comp, idx.size, rng) if comp["family"] == "mixture" else _component_sample(comp, idx.size, rng)
    return out


@dataclass
class StudyConfig:
    measure: dict
    n_grid: list
    seeds: list
    rho: float
    kernels: dict = field(default_factory=lambda: {"input": {"family": "power", "a": 1.0, "theta": 2.0}, "output": {"family": "cauchy", "b": 1.0}})
    optimizer: dict = field(default_factory=lambda: {"iterations": 3000})
    output_dir: str = "study_out"
    dim: int = 1  # embedding dimension s
    # target for the max stationarity residual; the descent stop tolerance is derived from it per n
    stationarity_target: float = 1e-5
    reference_refinement: int = 4
    sigma_grid_points: int = 16

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        self.seeds = [int(s) for s in self.seeds]
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError(f"n_grid must be non-empty and strictly increasing, got {self.n_grid}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (0, 1), got {self.rho}")
        bad = [n for n in self.n_grid if not n * self.rho > 1]
        if bad:
            raise ConfigError(f"n * rho must exceed 1; fails for n = {bad}")
        if self.dim < 1:
            raise ConfigError("embedding dimension must be >= 1")
        if self.stationarity_target <= 0:
            raise ConfigError("stationarity_target must be positive")
        measure_from_spec(self.measure, nodes=2)
        self.kernel_in()
        self.kernel_out()
        OptimizerConfig.from_dict(self.optimizer)

    def kernel_in(self):
        cfg = self.kernels.get("input")
        return power_kernel() if cfg is None else input_kernel_from_config(cfg)

    def kernel_out(self):
        cfg = self.kernels.get("output")
        return cauchy_kernel() if cfg is None else output_kernel_from_config(cfg)

    def optimizer_for(self, n, seed):
        base = dict(self.optimizer)
        base["seed"] = seed
        # max residual is n |grad_i| / c, see continuum.stationarity_residual
        tol = self.stationarity_target * GRADIENT_FACTOR / n / 2.0
        base["stop_tol"] = min(float(base.get("stop_tol", tol)), tol)
        return OptimizerConfig.from_dict(base)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown study keys: {sorted(unknown)}")
        missing = {"measure", "n_grid", "seeds", "rho"} - set(d)
        if missing:
            raise ConfigError(f"missing study keys: {sorted(missing)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class StudyRow:
    n: int
    seed: int
    d_n_rho: float = math.nan
    sup_sigma_dev: float = math.nan
    sup_F_dev: float = math.nan
    diameter: float = math.nan
    entropy_expansion_residual: float = math.nan
    I_empirical: float = math.nan
    loss_I_gap: float = math.nan
    max_stationarity_residual: float = math.nan
    iterations: int = 0
    converged: bool = False
    error: str = ""


ROW_FIELDS = [f.name for f in fields(StudyRow)]
METRICS = [
    "d_n_rho",
    "sup_sigma_dev",
    "sup_F_dev",
    "diameter",
    "entropy_expansion_residual",
    "I_empirical",
    "loss_I_gap",
    "max_stationarity_residual",
]


def _discrete_F(X, kernel, rho, sigma):
    n = X.shape[0]
    dth = pairwise_dtheta(X, kernel.theta)
    wts = np.full((n, n), 1.0 / n)
    np.fill_diagonal(wts, 0.0)
    return hot.f_rows(dth, wts, np.full(n, sigma), math.log(rho), kernel)


def run_cell(cfg: StudyConfig, n, seed, reference):
    """One ``(n, seed)`` cell. Returns ``(row, artifacts)``; artifacts are written by the caller."""
    kin, kout = cfg.kernel_in(), cfg.kernel_out()
    row = StudyRow(n=n, seed=seed)
    X = sample_measure(cfg.measure, n, seed)
    cal = calibrate_all(X, kin, cfg.rho)
    P = joint_affinities(X, cal.sigmas, kin)
    opt = cfg.optimizer_for(n, seed)
    emb = optimize_embedding(P, kout, cfg.dim, opt)
    emb.calibration = cal
    row.d_n_rho = emb.final_loss
    row.iterations = len(emb.trace)
    row.converged = emb.converged
    row.diameter = emb.diameter()

    ref_sigma = sigma_star_field(reference, kin, cfg.rho, X)
    row.sup_sigma_dev = float(np.max(np.abs(cal.sigmas - ref_sigma)))

    grid = np.geomspace(cal.sigmas.min(), cal.sigmas.max(), cfg.sigma_grid_points)
    row.sup_F_dev = max(
        float(np.max(np.abs(_discrete_F(X, kin, cfg.rho, s) - big_F_rows(reference, kin, cfg.rho, X, s)))) for s in grid
    )

    pc = p_matrix(reference, kin, X, ref_sigma)
    with np.errstate(divide="ignore", invalid="ignore"):
        integral = float(np.sum(np.where(pc > 0, pc * np.log(pc), 0.0)) / n**2)
    row.entropy_expansion_residual = abs(hot.plogp(P) + 2.0 * math.log(n) - integral)

    sample = JointSample(X, emb.coords)
    row.I_empirical = functional_I(sample, kin, kout, cfg.rho, sigmas=cal.sigmas)
    row.loss_I_gap = abs(row.d_n_rho - row.I_empirical)
    row.max_stationarity_residual = float(stationarity_residual(sample, kin, kout, cfg.rho, sigmas=cal.sigmas).max())

    artifacts = {
        "embedding.csv": csv_text(None, emb.coords.tolist()),
        "trace.csv": csv_text(["iteration", "loss", "grad_norm"], [(i, l, g) for i, (l, g) in enumerate(zip(emb.trace, emb.grad_norms))]),
        "sigmas.csv": csv_text(
            ["index", "sigma", "residual", "iterations", "sigma_star"],
            [(i, s, r, it, ss) for (i, s, r, it), ss in zip(cal.rows(), ref_sigma)],
        ),
        "points.csv": csv_text(None, X.tolist()),
    }
    meta = run_metadata(emb, kin, kout, cfg.rho, opt)
    return row, artifacts, meta


def convergence_study(cfg: StudyConfig, write=True):
    """Run every ``(n, seed)`` cell; failures are recorded in the row's ``error`` field."""
    out = Path(cfg.output_dir)
    reference = measure_from_spec(cfg.measure).refined(cfg.reference_refinement)
    rows, outputs = [], {}
    for n in cfg.n_grid:
        for seed in cfg.seeds:
            try:
                row, artifacts, meta = run_cell(cfg, n, seed, reference)
                outputs[(n, seed)] = (artifacts, meta)
            except GTSNEError as e:
                row = StudyRow(n=n, seed=seed, error=f"{type(e).__name__}: {e}")
            rows.append(row)
    if write:
        for (n, seed), (artifacts, meta) in outputs.items():
            cell = out / str(n) / str(seed)
            for name, text in artifacts.items():
                write_text(cell / name, text)
            write_json(cell / "metadata.json", meta)
        emit_csv(rows, out / "rows.csv")
        emit_svg(summary_series(rows), out / "summary.svg")
        write_json(out / "config.json", cfg.to_dict())
    return rows


def medians(rows, metric):
    """``{n: median over successful seeds}`` in grid order."""
    by_n = {}
    for r in rows:
        v = getattr(r, metric)
        if not r.error and math.isfinite(v):
            by_n.setdefault(r.n, []).append(v)
    return {n: statistics.median(v) for n, v in sorted(by_n.items())}


def non_increasing(values, slack=0.2):
    """Each value at most ``(1 + slack)`` times its predecessor."""
    values = list(values)
    return all(b <= (1.0 + slack) * a for a, b in zip(values, values[1:]))


def summary_series(rows, metrics=None):
    out = {}
    for m in metrics or [m for m in METRICS if m not in ("d_n_rho", "I_empirical")]:
        med = medians(rows, m)
        if med:
            out[m] = (list(med), list(med.values()))
    return out


def emit_csv(rows, path):
    write_csv(path, ROW_FIELDS, [[getattr(r, f) for f in ROW_FIELDS] for r in rows])


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]


def _ticks(lo, hi, log):
    if log:
        return [10.0**k for k in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1)]
    return list(np.linspace(lo, hi, 5))


def emit_svg(series, path, x_label="n", y_label="median over seeds", log_x=True, log_y=True, title="convergence diagnostics"):
    """Line plot with one polyline per series; ``series`` maps name to ``(xs, ys)``."""
    W, H, L, R, T, B = 720, 440, 80, 200, 40, 60
    pts = {}
    for name, (xs, ys) in series.items():
        keep = [(float(x), float(y)) for x, y in zip(xs, ys)
                if math.isfinite(x) and math.isfinite(y) and (x > 0 or not log_x) and (y > 0 or not log_y)]
        if keep:
            pts[name] = keep
    allx = [x for p in pts.values() for x, _ in p] or [1.0, 10.0]
    ally = [y for p in pts.values() for _, y in p] or [1.0, 10.0]
    tx = (lambda v: math.log10(v)) if log_x else (lambda v: v)
    ty = (lambda v: math.log10(v)) if log_y else (lambda v: v)
    x0, x1 = tx(min(allx)), tx(max(allx))
    y0, y1 = ty(min(ally)), ty(max(ally))
    if log_x:
        x0, x1 = math.floor(x0), math.ceil(x1)
    if log_y:
        y0, y1 = math.floor(y0), math.ceil(y1)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1

    def px(v):
        return L + (tx(v) - x0) / (x1 - x0) * (W - L - R)

    def py(v):
        return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{_esc(title)}</text>',
        f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
        f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>',
    ]
    lo_x, hi_x = (10.0**x0, 10.0**x1) if log_x else (x0, x1)
    lo_y, hi_y = (10.0**y0, 10.0**y1) if log_y else (y0, y1)
    for v in _ticks(lo_x, hi_x, log_x):
        out.append(f'<line x1="{px(v):.1f}" y1="{H - B}" x2="{px(v):.1f}" y2="{H - B + 5}" stroke="black"/>')
        out.append(f'<text x="{px(v):.1f}" y="{H - B + 18}" text-anchor="middle">{v:g}</text>')
    for v in _ticks(lo_y, hi_y, log_y):
        out.append(f'<line x1="{L - 5}" y1="{py(v):.1f}" x2="{L}" y2="{py(v):.1f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{py(v) + 4:.1f}" text-anchor="end">{v:g}</text>')
    out.append(f'<text x="{(L + W - R) / 2:.1f}" y="{H - 15}" text-anchor="middle">{_esc(x_label)}{" (log scale)" if log_x else ""}</text>')
    out.append(
        f'<text x="18" y="{(T + H - B) / 2:.1f}" text-anchor="middle" transform="rotate(-90 18 {(T + H - B) / 2:.1f})">'
        f'{_esc(y_label)}{" (log scale)" if log_y else ""}</text>'
    )
    for k, (name, p) in enumerate(pts.items()):
        color = _PALETTE[k % len(_PALETTE)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in p)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"><title>{_esc(name)}</title></polyline>')
        ly = T + 16 * k + 8
        out.append(f'<rect x="{W - R + 12}" y="{ly - 8}" width="12" height="4" fill="{color}"/>')
        out.append(f'<text x="{W - R + 30}" y="{ly}">{_esc(name)}</text>')
    out.append("</svg>")
    write_text(path, "\n".join(out) + "\n")


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
