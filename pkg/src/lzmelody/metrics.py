"""Distribution metrics between generated and reference token corpora.

Consistency/variance follow the framewise overlapping-area recipe: Gaussians
are fit to pitch and duration samples in sliding 4-measure windows and the
overlap of adjacent windows is summarized per corpus.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .tokens import ALPHABET_SIZE, CONTINUATION, FIRST_PITCH

STEPS_PER_MEASURE = 16
WINDOW = 4 * STEPS_PER_MEASURE
HOP = 2 * STEPS_PER_MEASURE
SIGMA_FLOOR = 1e-6
KL_SMOOTHING = 1e-9


class MetricError(ValueError):
    pass


class NotComputableError(MetricError):
    """The corpora do not contain enough material for the statistic."""


@dataclass(frozen=True)
class WindowStats:
    pitch_mean: float
    pitch_std: float
    duration_mean: float
    duration_std: float
    empty: bool = False


@dataclass(frozen=True)
class OaSummary:
    pitch_mean: float
    pitch_var: float
    duration_mean: float
    duration_var: float
    pairs: int


@dataclass
class MetricsReport:
    c_pitch: float | None = None
    var_pitch: float | None = None
    c_duration: float | None = None
    var_duration: float | None = None
    wd: float | None = None
    kl: float | None = None
    fad: float | None = None
    n_generated: int = 0
    n_reference: int = 0
    notes: list[str] = field(default_factory=list)

    KEYS = ("c_pitch", "var_pitch", "c_duration", "var_duration", "wd", "kl", "fad")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.KEYS if k != "fad" or self.fad is not None}
        d["n_generated"] = self.n_generated
        d["n_reference"] = self.n_reference
        if self.notes:
            d["status"] = list(self.notes)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def to_table(self) -> str:
        rows = [(k, getattr(self, k)) for k in self.KEYS if k != "fad" or self.fad is not None]
        width = max(len(k) for k, _ in rows)
        lines = [f"{k.ljust(width)}  {'n/a' if v is None else f'{v:.6f}':>12}" for k, v in rows]
        lines.append(f"{'samples'.ljust(width)}  {f'{self.n_generated} vs {self.n_reference}':>12}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)


# -- window statistics -------------------------------------------------------

def _note_durations(seq: np.ndarray) -> np.ndarray:
    """Duration in steps of the note starting at each position (0 where no onset)."""
    n = len(seq)
    dur = np.zeros(n, dtype=np.int64)
    run = 0
    for t in range(n - 1, -1, -1):
        tok = seq[t]
        if tok >= FIRST_PITCH:
            dur[t] = 1 + run
            run = 0
        elif tok == CONTINUATION:
            run += 1
        else:
            run = 0
    return dur


def _fit(x: np.ndarray) -> tuple[float, float]:
    return float(x.mean()), max(float(x.std()), SIGMA_FLOOR)


def window_stats(seq, window: int = WINDOW, hop: int = HOP) -> list[WindowStats]:
    """Gaussian fits of onset pitch tokens and note durations per window.

    A note belongs to the window containing its onset and keeps its full
    duration even when it sustains past the window edge.
    """
    seq = np.asarray(seq, dtype=np.int64)
    if len(seq) < window:
        raise MetricError(f"sequence of length {len(seq)} is shorter than one window ({window})")
    durations = _note_durations(seq)
    out = []
    for start in range(0, len(seq) - window + 1, hop):
        w = seq[start:start + window]
        onset = w >= FIRST_PITCH
        if not onset.any():
            out.append(WindowStats(math.nan, math.nan, math.nan, math.nan, empty=True))
            continue
        pm, ps = _fit(w[onset].astype(np.float64))
        dm, ds = _fit(durations[start:start + window][onset].astype(np.float64))
        out.append(WindowStats(pm, ps, dm, ds))
    return out


# -- overlapping area ---------------------------------------------------------

def _check_finite(*xs):
    if not all(math.isfinite(x) for x in xs):
        raise MetricError("non-finite Gaussian parameters")


def _intersections(mu1, s1, mu2, s2) -> list[float]:
    """Real points where the two densities are equal (two when s1 != s2)."""
    if s1 == s2:
        return [] if mu1 == mu2 else [(mu1 + mu2) / 2]
    a = 1 / (2 * s1 ** 2) - 1 / (2 * s2 ** 2)
    b = mu2 / s2 ** 2 - mu1 / s1 ** 2
    c = mu1 ** 2 / (2 * s1 ** 2) - mu2 ** 2 / (2 * s2 ** 2) - math.log(s2 / s1)
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    r = math.sqrt(disc)
    # numerically stable pair of roots
    q = -0.5 * (b + math.copysign(r, b))
    roots = [q / a, c / q] if q != 0 else [-b / (2 * a)]
    return sorted(roots)


def gaussian_intersection(mu1, sigma1, mu2, sigma2) -> float:
    """The equal-density point between the two means.

    With equal variances this is the midpoint. Otherwise the quadratic root
    lying between the means is returned, or, if neither does, the root
    closest to the midpoint.
    """
    _check_finite(mu1, sigma1, mu2, sigma2)
    if sigma1 <= 0 or sigma2 <= 0:
        raise MetricError("standard deviations must be positive")
    if sigma1 == sigma2:
        return (mu1 + mu2) / 2
    roots = _intersections(mu1, sigma1, mu2, sigma2)
    lo, hi = min(mu1, mu2), max(mu1, mu2)
    between = [r for r in roots if lo <= r <= hi]
    if between:
        return between[0]
    mid = (mu1 + mu2) / 2
    return min(roots, key=lambda r: abs(r - mid))


def _cdf(x, mu, s):
    return 0.5 * math.erfc(-(x - mu) / (math.sqrt(2) * s))


def overlap_area(mu1, sigma1, mu2, sigma2) -> float:
    """Area under min(pdf1, pdf2) for two univariate Gaussians.

    For equal variances this is ``1 + erf((c - mu2)/(sqrt2 s)) / 2 -
    erf((c - mu1)/(sqrt2 s)) / 2`` with ``c`` the midpoint (``mu1 <= mu2``).
    With unequal variances the densities cross twice; the narrower Gaussian
    is the minimum outside the crossings and the wider one between them, so
    both crossings enter the sum.
    """
    _check_finite(mu1, sigma1, mu2, sigma2)
    if sigma1 <= 0 or sigma2 <= 0:
        raise MetricError("standard deviations must be positive")
    if mu1 > mu2:
        mu1, sigma1, mu2, sigma2 = mu2, sigma2, mu1, sigma1
    if sigma1 == sigma2:
        if mu1 == mu2:
            return 1.0
        c = (mu1 + mu2) / 2
        oa = 1 + 0.5 * math.erf((c - mu2) / (math.sqrt(2) * sigma2)) \
            - 0.5 * math.erf((c - mu1) / (math.sqrt(2) * sigma1))
        return min(max(oa, 0.0), 1.0)
    roots = _intersections(mu1, sigma1, mu2, sigma2)
    (mn, sn), (mw, sw) = sorted([(mu1, sigma1), (mu2, sigma2)], key=lambda t: t[1])
    if len(roots) < 2:
        return 0.0
    r1, r2 = roots
    narrow = _cdf(r1, mn, sn) + (1 - _cdf(r2, mn, sn))
    wide = _cdf(r2, mw, sw) - _cdf(r1, mw, sw)
    return min(max(narrow + wide, 0.0), 1.0)


def oa_summary(corpus: Iterable[Sequence[int]]) -> OaSummary:
    """Mean and variance of adjacent-window overlaps, pooled over the corpus.

    Pairs where either window has no onsets are skipped.
    """
    op, od = [], []
    for seq in corpus:
        ws = window_stats(seq)
        for a, b in zip(ws, ws[1:]):
            if a.empty or b.empty:
                continue
            op.append(overlap_area(a.pitch_mean, a.pitch_std, b.pitch_mean, b.pitch_std))
            od.append(overlap_area(a.duration_mean, a.duration_std, b.duration_mean, b.duration_std))
    if not op:
        raise NotComputableError("no adjacent window pair contains notes")
    op, od = np.array(op), np.array(od)
    return OaSummary(float(op.mean()), float(op.var()), float(od.mean()), float(od.var()), len(op))


def consistency_variance(gen_mean, gen_var, ref_mean, ref_var) -> tuple[float, float]:
    """``C = max(0, 1 - |mu - mu_gt| / mu_gt)``; ``Var`` likewise on variances."""
    if ref_mean <= 0 or ref_var <= 0:
        raise MetricError("ground-truth mean and variance must be positive")
    c = max(0.0, 1 - abs(gen_mean - ref_mean) / ref_mean)
    v = max(0.0, 1 - abs(gen_var - ref_var) / ref_var)
    return c, v


# -- distribution distances ---------------------------------------------------

def token_histogram(corpus: Iterable[Sequence[int]], alphabet_size: int = ALPHABET_SIZE) -> np.ndarray:
    h = np.zeros(alphabet_size, dtype=np.int64)
    for seq in corpus:
        h += np.bincount(np.asarray(seq, dtype=np.int64), minlength=alphabet_size)[:alphabet_size]
    return h


def kl_divergence(p_hist, q_hist) -> float:
    """D(p || q) in nats between two histograms after additive smoothing."""
    p = np.asarray(p_hist, dtype=np.float64)
    q = np.asarray(q_hist, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise MetricError("histograms must have equal length")
    if p.sum() <= 0 or q.sum() <= 0:
        raise MetricError("histograms must have positive mass")
    support = p > 0
    p = p / p.sum() + KL_SMOOTHING
    q = q / q.sum() + KL_SMOOTHING
    p /= p.sum()
    q /= q.sum()
    # bins empty in p contribute 0 ln 0 = 0; smoothing only keeps q positive there
    p, q = p[support], q[support]
    return max(0.0, float(np.sum(p * np.log(p / q))))


def wasserstein_1d(x, y) -> float:
    """Order-1 Wasserstein distance between two empirical distributions:
    the integral of ``|F_x - F_y|`` over the merged support."""
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    y = np.sort(np.asarray(y, dtype=np.float64).ravel())
    if x.size == 0 or y.size == 0:
        raise MetricError("both samples must be nonempty")
    if x.size == y.size:
        return float(np.abs(x - y).mean())
    allv = np.concatenate([x, y])
    allv.sort(kind="mergesort")
    gaps = np.diff(allv)
    fx = np.searchsorted(x, allv[:-1], side="right") / x.size
    fy = np.searchsorted(y, allv[:-1], side="right") / y.size
    return float(np.sum(np.abs(fx - fy) * gaps))


def pitch_values(corpus: Iterable[Sequence[int]]) -> np.ndarray:
    """Pooled pitch-onset tokens (>= 2) across a corpus."""
    parts = [np.asarray(s)[np.asarray(s) >= FIRST_PITCH] for s in corpus]
    return np.concatenate(parts) if parts else np.zeros(0)


# -- Frechet distance ---------------------------------------------------------

@dataclass
class EmbeddingSet:
    vectors: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim == 1:
            self.vectors = self.vectors[:, None]
        if self.vectors.ndim != 2 or self.vectors.shape[1] < 1:
            raise MetricError("embeddings must be an n x d matrix")
        if self.vectors.shape[0] < 2:
            raise MetricError("need at least two embeddings to fit a covariance")
        if not np.isfinite(self.vectors).all():
            raise MetricError("embeddings contain non-finite values")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def gaussian_fit(e: EmbeddingSet, reg: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    mu = e.vectors.mean(axis=0)
    cov = np.atleast_2d(np.cov(e.vectors, rowvar=False, ddof=1)) + reg * np.eye(e.dim)
    return mu, cov


def frechet_distance(a: EmbeddingSet, b: EmbeddingSet) -> float:
    if a.dim != b.dim:
        raise MetricError(f"embedding dimensions differ ({a.dim} vs {b.dim})")
    mu_a, cov_a = gaussian_fit(a)
    mu_b, cov_b = gaussian_fit(b)
    ra = _psd_sqrt(cov_a)
    cross = _psd_sqrt(ra @ cov_b @ ra)
    d = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2 * np.trace(cross))
    return max(d, 0.0)


def read_embeddings(text: str, label: str = "") -> EmbeddingSet:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("dim="):
        raise MetricError("embedding file must start with a 'dim=<d>' line")
    d = int(lines[0][4:])
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        vals = [float(v) for v in ln.split(",")]
        if len(vals) != d:
            raise MetricError(f"line {i}: expected {d} values, got {len(vals)}")
        rows.append(vals)
    return EmbeddingSet(np.array(rows, dtype=np.float64).reshape(len(rows), d), label)


def write_embeddings(e: EmbeddingSet) -> str:
    lines = [f"dim={e.dim}"] + [",".join(repr(float(v)) for v in row) for row in e.vectors]
    return "\n".join(lines) + "\n"


# -- corpus report ------------------------------------------------------------

def evaluate(generated, reference, emb_generated: EmbeddingSet | None = None,
             emb_reference: EmbeddingSet | None = None,
             alphabet_size: int = ALPHABET_SIZE) -> MetricsReport:
    gen, ref = list(generated), list(reference)
    report = MetricsReport(n_generated=len(gen), n_reference=len(ref))
    try:
        g, r = oa_summary(gen), oa_summary(ref)
        report.c_pitch, report.var_pitch = consistency_variance(
            g.pitch_mean, g.pitch_var, r.pitch_mean, r.pitch_var)
        report.c_duration, report.var_duration = consistency_variance(
            g.duration_mean, g.duration_var, r.duration_mean, r.duration_var)
    except MetricError as exc:
        report.notes.append(f"consistency/variance not computable: {exc}")
    gp, rp = pitch_values(gen), pitch_values(ref)
    if gp.size and rp.size:
        report.wd = wasserstein_1d(gp, rp)
    else:
        report.notes.append("wasserstein distance not computable: no pitched notes")
    try:
        report.kl = kl_divergence(token_histogram(ref, alphabet_size), token_histogram(gen, alphabet_size))
    except MetricError as exc:
        report.notes.append(f"kl divergence not computable: {exc}")
    if emb_generated is not None and emb_reference is not None:
        report.fad = frechet_distance(emb_reference, emb_generated)
    return report
