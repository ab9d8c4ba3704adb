"""Power-law exponent extraction from ensemble scaling curves.

The primary estimator is a weighted log-log fit with an automatic plateau
window; bootstrap over ensemble members supplies the uncertainty.  A
numerical Mellin transform provides an independent cross-check: the value of
s below which the extrapolated small-t tail of the transform diverges marks
the same exponent as a pole would.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeds import rng_from


class NoPlateauError(RuntimeError):
    """Raised when no stable scaling window exists; carries the slope series."""

    def __init__(self, message, times, slopes):
        super().__init__(message)
        self.times = times
        self.slopes = slopes


@dataclass(frozen=True)
class ScalingEstimate:
    """Fitted decay exponent (-dlogB/dlogt), its error, window, and fit quality."""

    exponent: float
    stderr: float
    window: tuple[float, float]
    r2: float

    def __post_init__(self):
        if not self.stderr > 0:
            raise ValueError("stderr must be positive")
        if not self.window[0] < self.window[1]:
            raise ValueError("window must be ordered")


@dataclass(frozen=True)
class ScalingSeries:
    """Ensemble-averaged curve B(t) on a geometric time grid.

    member_values optionally holds the per-ensemble-member curves
    (samples x times) and enables bootstrap errors on fitted exponents.
    """

    times: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    samples: int
    member_values: np.ndarray | None = None

    def __post_init__(self):
        t = self.times
        if len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        ratios = t[1:] / t[:-1]
        if np.ptp(ratios) > 1e-12 * ratios[0]:
            raise ValueError("time grid must be geometric")
        if np.any(self.values <= 0):
            raise ValueError("series values must be positive")
        for arr in (self.times, self.values, self.errors):
            arr.setflags(write=False)

    @property
    def ratio(self) -> float:
        return float(self.times[1] / self.times[0])


def geometric_times(t_min: float, t_max: float, ratio: float = 2**0.25) -> np.ndarray:
    """Geometric grid t_min * ratio^j covering [t_min, t_max]."""
    if not (t_min > 0 and t_max > t_min and ratio > 1):
        raise ValueError("need 0 < t_min < t_max and ratio > 1")
    m = int(np.floor(np.log(t_max / t_min) / np.log(ratio) + 1e-9)) + 1
    return t_min * ratio ** np.arange(m)


def series_from_members(times: np.ndarray, member_values: np.ndarray) -> ScalingSeries:
    """Build a series from per-member curves, trimming the non-positive tail."""
    member_values = np.atleast_2d(member_values)
    mean = member_values.mean(axis=0)
    s = member_values.shape[0]
    err = member_values.std(axis=0, ddof=1) / np.sqrt(s) if s > 1 else np.zeros_like(mean)
    good = mean > 0
    if not good.all():
        stop = int(np.argmin(good))  # first failure; keep the clean head
        times, mean, err = times[:stop], mean[:stop], err[:stop]
        member_values = member_values[:, :stop]
    return ScalingSeries(times=times.copy(), values=mean, errors=err,
                         samples=s, member_values=member_values)


def difference_series(series: ScalingSeries, lag: int = 4) -> ScalingSeries:
    """Pair-difference curve d(t) = B(t) - B(t * ratio^lag).

    Subtracting the curve at a fixed time multiple cancels any additive
    equilibrium floor exactly while preserving the power-law exponent, which
    widens the usable fitting window on a finite periodic domain.
    """
    if lag < 1 or lag >= len(series.times):
        raise ValueError("lag out of range")
    t = series.times[:-lag]
    if series.member_values is not None:
        mv = series.member_values[:, :-lag] - series.member_values[:, lag:]
        return series_from_members(t, mv)
    d = series.values[:-lag] - series.values[lag:]
    e = np.hypot(series.errors[:-lag], series.errors[lag:])
    good = d > 0
    stop = len(d) if good.all() else int(np.argmin(good))
    return ScalingSeries(times=t[:stop].copy(), values=d[:stop], errors=e[:stop],
                         samples=series.samples)


def local_slopes(series: ScalingSeries) -> tuple[np.ndarray, np.ndarray]:
    """Centered finite-difference slopes of log B versus log t."""
    if len(series.times) < 3:
        raise ValueError("need at least 3 points")
    lt, lb = np.log(series.times), np.log(series.values)
    sl = (lb[2:] - lb[:-2]) / (lt[2:] - lt[:-2])
    return series.times[1:-1], sl


def _plateau_window(series: ScalingSeries, tol: float, min_points: int):
    t_mid, sl = local_slopes(series)
    best = None
    for i in range(len(sl)):
        for j in range(i + min_points - 2, len(sl)):
            seg = sl[i : j + 1]
            if np.ptp(seg) < tol:
                if best is None or (j - i) > (best[1] - best[0]):
                    best = (i, j)
            else:
                break
    if best is None:
        raise NoPlateauError("no scaling plateau found", t_mid, sl)
    # local-slope index i corresponds to series point i+1
    return series.times[best[0]], series.times[best[1] + 2]


def _wls_exponent(lt, lb, w):
    W = np.sum(w)
    xm = np.sum(w * lt) / W
    ym = np.sum(w * lb) / W
    sxx = np.sum(w * (lt - xm) ** 2)
    slope = np.sum(w * (lt - xm) * (lb - ym)) / sxx
    inter = ym - slope * xm
    return slope, inter


def fit_power_law(
    series: ScalingSeries,
    window: tuple[float, float] | None = None,
    plateau_tol: float = 0.05,
    min_points: int = 5,
    bootstrap: int = 200,
    seed: int = 0,
) -> ScalingEstimate:
    """Weighted least-squares exponent of B ~ t^-alpha.

    Without an explicit window, selects the longest sub-window whose local
    slopes vary by less than ``plateau_tol``.  The error is a bootstrap over
    ensemble members when those are available, otherwise a parametric
    bootstrap from the per-point errors, falling back to the least-squares
    formula for noiseless input.
    """
    if window is None:
        window = _plateau_window(series, plateau_tol, min_points)
    lo, hi = window
    m = (series.times >= lo * (1 - 1e-12)) & (series.times <= hi * (1 + 1e-12))
    if m.sum() < min_points:
        raise ValueError(f"window contains {int(m.sum())} < {min_points} points")
    t, b, e = series.times[m], series.values[m], series.errors[m]
    lt, lb = np.log(t), np.log(b)
    rel = np.where(b > 0, e / b, np.inf)
    w = 1.0 / np.maximum(rel, 1e-12) ** 2 if np.any(e > 0) else np.ones_like(lt)
    slope, inter = _wls_exponent(lt, lb, w)

    resid = lb - (inter + slope * lt)
    ss_tot = float(np.sum(w * (lb - np.average(lb, weights=w)) ** 2))
    r2 = 1.0 - float(np.sum(w * resid**2)) / ss_tot if ss_tot > 0 else 1.0

    rng = rng_from(seed, 0)
    boots = []
    if series.member_values is not None and series.samples > 1:
        mv = series.member_values[:, m]
        s = mv.shape[0]
        for _ in range(bootstrap):
            pick = rng.integers(0, s, size=s)
            bb = mv[pick].mean(axis=0)
            ok = bb > 0
            if ok.sum() >= 3:
                sl, _ = _wls_exponent(lt[ok], np.log(bb[ok]), w[ok])
                boots.append(sl)
    elif np.any(e > 0):
        for _ in range(bootstrap):
            bb = b + e * rng.standard_normal(len(b))
            ok = bb > 0
            if ok.sum() >= 3:
                sl, _ = _wls_exponent(lt[ok], np.log(bb[ok]), w[ok])
                boots.append(sl)
    if boots:
        stderr = float(np.std(boots, ddof=1))
    else:
        dof = max(len(t) - 2, 1)
        sxx = float(np.sum(w * (lt - np.average(lt, weights=w)) ** 2))
        stderr = float(np.sqrt(np.sum(w * resid**2) / dof / sxx))
    return ScalingEstimate(exponent=-float(slope), stderr=max(stderr, 1e-15),
                           window=(float(t[0]), float(t[-1])), r2=r2)


@dataclass(frozen=True)
class MellinResult:
    s_grid: np.ndarray
    values: np.ndarray
    tail_diverges: np.ndarray
    tail_exponent: float


def mellin_transform(
    series: ScalingSeries,
    s_grid: np.ndarray,
    tail_points: int = 8,
    include_tail: bool = True,
) -> MellinResult:
    """Numerical transform M(s) = integral of t^(s-1) B(t) dt.

    The measured range is integrated by trapezoid; the unmeasured small-t
    tail is extrapolated with a power law fitted to the first ``tail_points``
    of the series.  Entries of ``s_grid`` at or below that exponent are
    flagged: the tail integral diverges there, the finite-size shadow of the
    pole that marks the scaling exponent.
    """
    t, b = series.times, series.values
    if t[-1] / t[0] < 1e3:
        raise ValueError("series must span at least 3 decades for the transform")
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(s_grid <= 0) or np.any(s_grid >= 2):
        raise ValueError("s grid must lie in (0, 2)")
    head = slice(0, max(3, tail_points))
    slope, inter = np.polyfit(np.log(t[head]), np.log(b[head]), 1)
    alpha = -slope
    amp = np.exp(inter)
    values = np.empty_like(s_grid)
    diverges = s_grid <= alpha + 1e-12
    for i, s in enumerate(s_grid):
        body = np.trapezoid(t ** (s - 1) * b, t)
        if diverges[i]:
            values[i] = np.inf
        else:
            tail = amp * t[0] ** (s - alpha) / (s - alpha) if include_tail else 0.0
            values[i] = body + tail
    return MellinResult(s_grid=s_grid, values=values, tail_diverges=diverges,
                        tail_exponent=float(alpha))


def write_series_csv(series: ScalingSeries, path, metadata: dict | None = None) -> None:
    """CSV dump: metadata comment line, then columns t, mean, stderr, samples."""
    md = metadata or {}
    meta = " ".join(f"{k}={_fmt(v)}" for k, v in md.items())
    lines = [f"# {meta}".rstrip(), "t,mean,stderr,samples"]
    for t, v, e in zip(series.times, series.values, series.errors):
        lines.append(f"{_fmt(t)},{_fmt(v)},{_fmt(e)},{series.samples}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_series_csv(path) -> tuple[ScalingSeries, dict]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    metadata = {}
    if lines and lines[0].startswith("#"):
        for tok in lines[0][1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                metadata[k] = v
        lines = lines[1:]
    assert lines[0] == "t,mean,stderr,samples"
    rows = [ln.split(",") for ln in lines[1:] if ln]
    t = np.array([float(r[0]) for r in rows])
    v = np.array([float(r[1]) for r in rows])
    e = np.array([float(r[2]) for r in rows])
    samples = int(rows[0][3]) if rows else 0
    return ScalingSeries(times=t, values=v, errors=e, samples=samples), metadata


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)
