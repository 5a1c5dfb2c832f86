"""Study drivers: waist scans, error-model fits, disorder Monte Carlo.

Reproduces the quantitative behavior of finite square arrays: the two-term
error model

    eps(N, d, w0) ~ C(d) (lambda/w0)^4 + 1 - Erf^2(N d / sqrt(2) w0),

the optimal-waist scaling eps_opt ~ (log N_a)^2 / (4 N_a^2), the hole
(defect) regression, the sigma^2 position-disorder law, and the two-level
vs isotropic comparison. Every Monte Carlo result is reproducible from
(config, seed); outputs are plain CSV tables plus JSON summaries.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import __version__ as _version
from .errors import FitWindowError, InvalidArgumentError
from .geometry import apply_position_disorder, build_square_array, remove_holes
from .greens import ISOTROPIC, TWO_LEVEL, interaction_matrix
from .modes import DetectionMode, sample_mode
from .retrieval import efficiency_of_spin_wave, k_matrix, max_efficiency
from .spectral import eigendecompose

MAX_N_TWO_LEVEL = 30
MAX_N_ISOTROPIC = 14
DEFAULT_C_SEED = 2.4e-3
DEFAULT_SEED = 12345


def _check_scale(n: int, model: str, allow_large: bool) -> None:
    cap = MAX_N_ISOTROPIC if model == ISOTROPIC else MAX_N_TWO_LEVEL
    if n > cap and not allow_large:
        raise InvalidArgumentError(
            f"N={n} exceeds the desk-scale cap {cap} for the {model} model; "
            "pass allow_large=True (--allow-large) to override"
        )


@dataclass
class ScanResult:
    """One study axis with per-point efficiencies and provenance."""

    study: str
    axis_name: str
    axis: list
    eta: list
    epsilon: list
    rows: list
    provenance: dict

    def __post_init__(self):
        ax = np.asarray(self.axis, dtype=float)
        if len(ax) > 1 and not np.all(np.diff(ax) > 0):
            raise InvalidArgumentError("scan axis must be strictly increasing")
        for e in self.epsilon:
            if not (-1e-9 <= e <= 1.0 + 1e-9):
                raise InvalidArgumentError(f"error {e!r} outside [0, 1]")


@dataclass
class FitResult:
    model: str
    parameters: dict
    stderr: dict
    window: dict
    residual_norm: float


def clipping_error(n: int, d: float, w0) -> np.ndarray:
    """Fraction of the beam's energy beyond the array boundary."""
    return 1.0 - erf(n * d / (np.sqrt(2.0) * np.asarray(w0, dtype=float))) ** 2


def model_error(n: int, d: float, w0, c: float = DEFAULT_C_SEED) -> np.ndarray:
    """Two-term error model with fit constant c."""
    w0 = np.asarray(w0, dtype=float)
    return c / w0**4 + clipping_error(n, d, w0)


def _pipeline_epsilon(dec, geometry, w0, model, two_sided, tol):
    mode = DetectionMode(w0=float(w0), two_sided=two_sided, quadrature_tolerance=tol)
    samples = sample_mode(mode, geometry, model)
    sol = max_efficiency(k_matrix(dec, samples))
    return sol, samples


def scan_waist(
    n: int,
    d: float,
    w0_list,
    model: str = TWO_LEVEL,
    two_sided: bool = True,
    tol: float = 1e-10,
    allow_large: bool = False,
) -> ScanResult:
    """Minimum retrieval error for each waist on the perfect array."""
    _check_scale(n, model, allow_large)
    w0_list = [float(w) for w in w0_list]
    if any(w <= 0 for w in w0_list) or sorted(w0_list) != w0_list:
        raise InvalidArgumentError("w0_list must be positive and sorted")
    g = build_square_array(n, d)
    dec = eigendecompose(interaction_matrix(g, model))
    rows = []
    etas = []
    for w0 in w0_list:
        sol, _ = _pipeline_epsilon(dec, g, w0, model, two_sided, tol)
        etas.append(sol.eta_max)
        rows.append(
            {
                "w0": w0,
                "eta": sol.eta_max,
                "epsilon": 1.0 - sol.eta_max,
                "clip_term": float(clipping_error(n, d, w0)),
                "spectral_gap": sol.diagnostics["spectral_gap"],
            }
        )
    eps = [1.0 - e for e in etas]
    interior_minima = sum(
        1
        for i in range(1, len(eps) - 1)
        if eps[i] < eps[i - 1] and eps[i] < eps[i + 1]
    )
    return ScanResult(
        study="scan-waist",
        axis_name="w0",
        axis=w0_list,
        eta=etas,
        epsilon=eps,
        rows=rows,
        provenance={
            "N": n,
            "d": d,
            "model": model,
            "two_sided": two_sided,
            "tol": tol,
            "unimodal": interior_minima <= 1,
            "version": _version,
        },
    )


def fit_error_model(scan: ScanResult, d: float) -> FitResult:
    """Least-squares C with the exponent pinned at 4.

    Only points where the clipping term stays below 10% of the measured
    error enter the fit; the window is recorded explicitly.
    """
    n = scan.provenance["N"]
    w0 = np.asarray(scan.axis, dtype=float)
    eps = np.asarray(scan.epsilon, dtype=float)
    clip = clipping_error(n, d, w0)
    mask = clip < 0.1 * eps
    if not np.any(mask):
        raise FitWindowError("no scan points with clipping below 10% of the error")
    x = 1.0 / w0[mask] ** 4
    y = eps[mask] - clip[mask]
    c = float(np.sum(x * y) / np.sum(x * x))
    resid = y - c * x
    dof = max(len(x) - 1, 1)
    c_err = float(np.sqrt(np.sum(resid**2) / dof / np.sum(x * x)))
    return FitResult(
        model="C/w0^4 + clipping",
        parameters={"C": c},
        stderr={"C": c_err},
        window={
            "criterion": "clip < 0.1*eps",
            "w0_used": [float(v) for v in w0[mask]],
        },
        residual_norm=float(np.linalg.norm(resid)),
    )


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass
class OptimalWaist:
    w0: float
    epsilon: float
    eta: float
    spin_wave: np.ndarray = field(repr=False)
    n_evaluations: int
    bracket_fallback: bool


def _model_seed_waist(n: int, d: float, c: float = DEFAULT_C_SEED) -> float:
    """Analytic-model minimizer used to seed the bracketed search."""
    grid = np.geomspace(0.25, max(1.5 * n * d, 1.0), 300)
    return float(grid[np.argmin(model_error(n, d, grid, c))])


def optimal_waist(
    n: int,
    d: float,
    model: str = TWO_LEVEL,
    two_sided: bool = True,
    tol: float = 1e-10,
    w0_tol: float = 1e-3,
    allow_large: bool = False,
    geometry=None,
) -> OptimalWaist:
    """Golden-section minimization of eps(w0), seeded by the error model."""
    if n < 2:
        raise InvalidArgumentError("waist optimization needs N >= 2")
    _check_scale(n, model, allow_large)
    g = geometry if geometry is not None else build_square_array(n, d)
    dec = eigendecompose(interaction_matrix(g, model))
    evaluations = {}

    def eps_of(w0):
        w0 = round(float(w0), 12)
        if w0 not in evaluations:
            sol, _ = _pipeline_epsilon(dec, g, w0, model, two_sided, tol)
            evaluations[w0] = (1.0 - sol.eta_max, sol)
        return evaluations[w0][0]

    seed = _model_seed_waist(n, d)
    fallback = False
    a, b = seed / 1.4, seed * 1.4
    fa, fm, fb = eps_of(a), eps_of(seed), eps_of(b)
    grow = 0
    while not (fm < fa and fm < fb) and grow < 12:
        if fa <= fm:
            a /= 1.4
            fa = eps_of(a)
        if fb <= fm:
            b *= 1.4
            fb = eps_of(b)
        mid = np.sqrt(a * b)
        fm = eps_of(mid)
        seed = mid
        grow += 1
    if not (fm < fa and fm < fb):
        # no clean bracket: fall back to a fine grid scan
        fallback = True
        grid = np.geomspace(a, b, 80)
        vals = [eps_of(w) for w in grid]
        w_best = float(grid[int(np.argmin(vals))])
    else:
        # golden-section contraction of [a, b] around the seed
        invphi = (np.sqrt(5.0) - 1.0) / 2.0
        lo, hi = a, b
        x1 = hi - invphi * (hi - lo)
        x2 = lo + invphi * (hi - lo)
        f1, f2 = eps_of(x1), eps_of(x2)
        while hi - lo > w0_tol:
            if f1 <= f2:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - invphi * (hi - lo)
                f1 = eps_of(x1)
            else:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + invphi * (hi - lo)
                f2 = eps_of(x2)
        w_best = min(evaluations, key=lambda w: evaluations[w][0])
    eps_best, sol_best = evaluations[w_best]
    return OptimalWaist(
        w0=float(w_best),
        epsilon=float(eps_best),
        eta=float(sol_best.eta_max),
        spin_wave=sol_best.spin_wave,
        n_evaluations=len(evaluations),
        bracket_fallback=fallback,
    )


# ---------------------------------------------------------------------------
# Monte Carlo studies. Randomness is drawn up front in the driving process,
# so parallel and serial runs produce identical tables.
# ---------------------------------------------------------------------------


def _run_tasks(fn, tasks, workers):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(tasks) // (workers * 4))
        return list(pool.map(fn, tasks, chunksize=chunk))


def _hole_task(args):
    n, d, w0, holes, two_sided, tol = args
    g = remove_holes(build_square_array(n, d), list(holes))
    dec = eigendecompose(interaction_matrix(g, TWO_LEVEL))
    sol, _ = _pipeline_epsilon(dec, g, w0, TWO_LEVEL, two_sided, tol)
    return sol.eta_max


@dataclass
class HoleStudy:
    rows: list
    alpha: FitResult
    eta_perfect: float
    provenance: dict


def hole_study(
    n: int,
    d: float,
    w0: float,
    hole_counts,
    n_samples: int,
    seed: int = DEFAULT_SEED,
    two_sided: bool = True,
    tol: float = 1e-10,
    workers: int = 1,
    allow_large: bool = False,
) -> HoleStudy:
    """Random-hole Monte Carlo with per-configuration re-optimization.

    Regresses the relative efficiency loss against the fraction of the
    detection-mode intensity falling on the removed sites; the slope is
    the defect constant alpha.
    """
    _check_scale(n, TWO_LEVEL, allow_large)
    hole_counts = [int(h) for h in hole_counts]
    if any(h < 1 or h > 0.2 * n * n for h in hole_counts):
        raise InvalidArgumentError("hole counts must stay within 20% of the sites")
    g0 = build_square_array(n, d)
    dec0 = eigendecompose(interaction_matrix(g0, TWO_LEVEL))
    sol0, samples0 = _pipeline_epsilon(dec0, g0, w0, TWO_LEVEL, two_sided, tol)
    eta0 = sol0.eta_max
    weights = samples0.intensities()
    total_intensity = float(weights.sum())

    rng = np.random.default_rng(seed)
    tasks = []
    meta = []
    for n_holes in hole_counts:
        for k in range(n_samples):
            holes = tuple(
                sorted(int(v) for v in rng.choice(n * n, size=n_holes, replace=False))
            )
            tasks.append((n, d, w0, holes, two_sided, tol))
            meta.append((n_holes, k, holes))
    etas = _run_tasks(_hole_task, tasks, workers)

    rows = []
    xs = []
    ys = []
    for (n_holes, k, holes), eta_def in zip(meta, etas):
        frac = float(weights[list(holes)].sum() / total_intensity)
        rel_loss = (eta0 - eta_def) / eta0
        xs.append(frac)
        ys.append(rel_loss)
        rows.append(
            {
                "n_holes": n_holes,
                "sample": k,
                "holes": " ".join(str(h) for h in holes),
                "intensity_fraction": frac,
                "eta_def": eta_def,
                "rel_loss": rel_loss,
            }
        )
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    alpha = float(np.sum(xs * ys) / np.sum(xs * xs))
    resid = ys - alpha * xs
    stderr = float(np.sqrt(np.sum(resid**2) / max(len(xs) - 1, 1) / np.sum(xs * xs)))
    fit = FitResult(
        model="rel_loss = alpha * intensity_fraction",
        parameters={"alpha": alpha},
        stderr={"alpha": stderr},
        window={"intercept": 0.0, "pooled_samples": len(xs)},
        residual_norm=float(np.linalg.norm(resid)),
    )
    return HoleStudy(
        rows=rows,
        alpha=fit,
        eta_perfect=eta0,
        provenance={
            "N": n,
            "d": d,
            "w0": w0,
            "hole_counts": hole_counts,
            "n_samples": n_samples,
            "seed": seed,
            "tol": tol,
            "version": _version,
        },
    )


def _disorder_task(args):
    n, d, w0, sigma, sub_seed, spin_wave, two_sided, tol = args
    g = apply_position_disorder(build_square_array(n, d), sigma, sub_seed)
    dec = eigendecompose(interaction_matrix(g, TWO_LEVEL))
    mode = DetectionMode(w0=w0, two_sided=two_sided, quadrature_tolerance=tol)
    samples = sample_mode(mode, g, TWO_LEVEL)
    mat = k_matrix(dec, samples)
    return efficiency_of_spin_wave(mat, np.asarray(spin_wave))


@dataclass
class DisorderStudy:
    rows: list
    summary: list
    provenance: dict


def position_disorder_study(
    n: int,
    d: float,
    sigma_list,
    n_samples: int,
    seed: int = DEFAULT_SEED,
    w0: float | None = None,
    two_sided: bool = True,
    tol: float = 1e-10,
    workers: int = 1,
    allow_large: bool = False,
) -> DisorderStudy:
    """Mean efficiency loss under in-plane Gaussian position disorder.

    The spin wave and beam waist stay fixed at the perfect-lattice optimum
    (no re-optimization), so the result isolates the disorder penalty.
    """
    _check_scale(n, TWO_LEVEL, allow_large)
    sigma_list = [float(s) for s in sigma_list]
    if any(s <= 0 for s in sigma_list) or sorted(sigma_list) != sigma_list:
        raise InvalidArgumentError("sigma_list must be positive and sorted")
    if w0 is None:
        opt = optimal_waist(n, d, tol=tol, allow_large=allow_large)
        w0 = opt.w0
        eta0 = opt.eta
        spin = opt.spin_wave
    else:
        g0 = build_square_array(n, d)
        dec0 = eigendecompose(interaction_matrix(g0, TWO_LEVEL))
        sol0, _ = _pipeline_epsilon(dec0, g0, w0, TWO_LEVEL, two_sided, tol)
        eta0 = sol0.eta_max
        spin = sol0.spin_wave

    rng = np.random.default_rng(seed)
    sub_seeds = rng.integers(0, 2**63 - 1, size=(len(sigma_list), n_samples))
    tasks = []
    for i, sigma in enumerate(sigma_list):
        for k in range(n_samples):
            tasks.append(
                (n, d, w0, sigma, int(sub_seeds[i, k]), spin, two_sided, tol)
            )
    etas = _run_tasks(_disorder_task, tasks, workers)

    rows = []
    summary = []
    idx = 0
    for i, sigma in enumerate(sigma_list):
        vals = []
        for k in range(n_samples):
            eta_dis = etas[idx]
            rows.append(
                {
                    "sigma": sigma,
                    "sample": k,
                    "seed": int(sub_seeds[i, k]),
                    "eta_dis": eta_dis,
                }
            )
            vals.append(eta_dis)
            idx += 1
        vals = np.asarray(vals)
        summary.append(
            {
                "sigma": sigma,
                "eta_mean": float(vals.mean()),
                "eta_stderr": float(vals.std(ddof=1) / np.sqrt(len(vals)))
                if len(vals) > 1
                else 0.0,
                "loss_mean": float(eta0 - vals.mean()),
            }
        )
    return DisorderStudy(
        rows=rows,
        summary=summary,
        provenance={
            "N": n,
            "d": d,
            "w0": w0,
            "eta_perfect": eta0,
            "sigma_list": sigma_list,
            "n_samples": n_samples,
            "seed": seed,
            "tol": tol,
            "version": _version,
        },
    )


def isotropic_comparison(
    n_list,
    d: float,
    tol: float = 1e-10,
    allow_large: bool = False,
) -> list:
    """Optimal error of the three-excited-state model vs the two-level one."""
    rows = []
    for n in n_list:
        tl = optimal_waist(n, d, model=TWO_LEVEL, tol=tol, allow_large=allow_large)
        iso = optimal_waist(n, d, model=ISOTROPIC, tol=tol, allow_large=allow_large)
        rows.append(
            {
                "N": int(n),
                "eps_two_level": tl.epsilon,
                "eps_isotropic": iso.epsilon,
                "relative_increase": (iso.epsilon - tl.epsilon) / tl.epsilon,
                "w0_two_level": tl.w0,
                "w0_isotropic": iso.w0,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Artifact output: CSV tables (deterministic bytes) + JSON summaries.
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, fieldnames, rows) -> None:
    """Plain CSV with shortest round-trip float formatting.

    Rows are written in a deterministic order and contain no timestamps,
    so identical (config, seed) runs produce identical bytes.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in fieldnames])


def write_summary(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialize {type(obj)!r}")


def artifact_stem(study: str, n: int, d: float, timestamp: bool = True) -> str:
    stem = f"{study}_{n}_{d:g}"
    if timestamp:
        stem += time.strftime("_%Y%m%dT%H%M%S")
    return stem
