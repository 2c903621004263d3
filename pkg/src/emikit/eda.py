"""Exploratory-analysis suite: split summaries and distribution-shift tests.

Everything here is a pure function over immutable sample lists. Frame counts
are vision-sequence lengths; "zero-valued" labels mean exactly 0.0 with no
epsilon, since the zero fractions describe sparse annotations; standard
deviations use the n-1 estimator to match common statistical reporting.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .data import EMOTION_DIMENSIONS, NUM_DIMENSIONS, Sample, missing_text_fraction
from .errors import ValidationError

LONG_TAIL_FRAMES = 120


@dataclass
class SplitSummary:
    sample_count: int
    frames_mean: float
    frames_std: float
    frames_median: float
    frames_min: int
    frames_max: int
    label_mean: list[float]
    label_std: list[float]
    zero_fraction: list[float]
    missing_text_fraction: float
    tail_fraction_over_120_frames: float


@dataclass
class ShiftRow:
    dimension: str
    train_mean: float
    train_std: float
    valid_mean: float
    valid_std: float
    delta_mu: float
    zero_pct_train: float
    zero_pct_valid: float
    ks_statistic: float
    p_value: float


@dataclass
class ShiftReport:
    rows: list[ShiftRow]


def _label_matrix(samples: list[Sample], context: str) -> np.ndarray:
    missing = [s.id for s in samples if s.labels is None]
    if missing:
        raise ValidationError(f"{context}: {len(missing)} samples without labels (e.g. {missing[0]})")
    return np.stack([s.labels for s in samples]).astype(np.float64)


def summarize_split(samples: list[Sample]) -> SplitSummary:
    if not samples:
        raise ValidationError("cannot summarize an empty split")
    frames = np.array([s.frame_count for s in samples], dtype=np.float64)
    labels = _label_matrix(samples, "summarize_split")
    n = len(samples)
    frames_std = float(frames.std(ddof=1)) if n > 1 else 0.0
    label_std = labels.std(axis=0, ddof=1) if n > 1 else np.zeros(NUM_DIMENSIONS)
    return SplitSummary(
        sample_count=n,
        frames_mean=float(frames.mean()),
        frames_std=frames_std,
        frames_median=float(np.median(frames)),
        frames_min=int(frames.min()),
        frames_max=int(frames.max()),
        label_mean=[float(v) for v in labels.mean(axis=0)],
        label_std=[float(v) for v in label_std],
        zero_fraction=[float(np.mean(labels[:, d] == 0.0)) for d in range(NUM_DIMENSIONS)],
        missing_text_fraction=missing_text_fraction(samples),
        tail_fraction_over_120_frames=float(np.mean(frames > LONG_TAIL_FRAMES)),
    )


def _kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, Q(lam) = P(K > lam).

    Two rapidly convergent series: the theta-function form for small lam, the
    alternating exponential form elsewhere.
    """
    if lam <= 0.0:
        return 1.0
    if lam < 1.18:
        # Q = 1 - sqrt(2*pi)/lam * sum exp(-(2j-1)^2 pi^2 / (8 lam^2))
        factor = math.sqrt(2.0 * math.pi) / lam
        q = math.exp(-math.pi * math.pi / (8.0 * lam * lam))
        total = 0.0
        j = 1
        while True:
            term = q ** ((2 * j - 1) ** 2)
            total += term
            if term < 1e-18 * max(total, 1e-300) or j > 200:
                break
            j += 1
        return max(0.0, min(1.0, 1.0 - factor * total))
    total = 0.0
    sign = 1.0
    for j in range(1, 201):
        term = sign * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) < 1e-18:
            break
        sign = -sign
    return max(0.0, min(1.0, 2.0 * total))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic p-value.

    D is the sup over the merged sorted support of |ECDF_a - ECDF_b|, which
    handles ties by evaluating both ECDFs at every observed point. The
    p-value uses the asymptotic Kolmogorov distribution at effective size
    n*m/(n+m).
    """
    xa = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    xb = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    n, m = xa.shape[0], xb.shape[0]
    if n == 0 or m == 0:
        raise ValidationError("ks_two_sample requires two nonempty samples")
    support = np.concatenate([xa, xb])
    cdf_a = np.searchsorted(xa, support, side="right") / n
    cdf_b = np.searchsorted(xb, support, side="right") / m
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    effective = n * m / (n + m)
    p = _kolmogorov_sf(math.sqrt(effective) * d)
    return d, p


def shift_report(train_samples: list[Sample], valid_samples: list[Sample]) -> ShiftReport:
    """Per-dimension train/valid label comparison with KS shift tests."""
    train = _label_matrix(train_samples, "shift_report train split")
    valid = _label_matrix(valid_samples, "shift_report valid split")
    n_train, n_valid = train.shape[0], valid.shape[0]
    rows = []
    for d, name in enumerate(EMOTION_DIMENSIONS):
        col_t = train[:, d]
        col_v = valid[:, d]
        stat, p = ks_two_sample(col_t, col_v)
        rows.append(
            ShiftRow(
                dimension=name,
                train_mean=float(col_t.mean()),
                train_std=float(col_t.std(ddof=1)) if n_train > 1 else 0.0,
                valid_mean=float(col_v.mean()),
                valid_std=float(col_v.std(ddof=1)) if n_valid > 1 else 0.0,
                delta_mu=float(col_t.mean() - col_v.mean()),
                zero_pct_train=float(np.mean(col_t == 0.0) * 100.0),
                zero_pct_valid=float(np.mean(col_v == 0.0) * 100.0),
                ks_statistic=stat,
                p_value=p,
            )
        )
    return ShiftReport(rows=rows)


# ---------------------------------------------------------------------------
# report rendering
# ---------------------------------------------------------------------------


def render_summary_text(summaries: dict[str, SplitSummary]) -> str:
    header = (
        f"{'Split':<8}{'Samples':>9}{'Frames (Mean ± Std)':>24}{'Median':>9}"
        f"{'Min':>6}{'Max':>7}{'>120f %':>9}{'NoText %':>10}"
    )
    lines = [header, "-" * len(header)]
    for name, s in summaries.items():
        lines.append(
            f"{name:<8}{s.sample_count:>9}"
            f"{s.frames_mean:>15.2f} ± {s.frames_std:<6.2f}"
            f"{s.frames_median:>9.1f}{s.frames_min:>6}{s.frames_max:>7}"
            f"{s.tail_fraction_over_120_frames * 100:>9.2f}"
            f"{s.missing_text_fraction * 100:>10.2f}"
        )
    lines.append("")
    header2 = f"{'Split':<8}" + "".join(f"{d[:9]:>11}" for d in EMOTION_DIMENSIONS)
    lines.append("Label means:")
    lines.append(header2)
    for name, s in summaries.items():
        lines.append(f"{name:<8}" + "".join(f"{v:>11.4f}" for v in s.label_mean))
    lines.append("Zero fractions:")
    for name, s in summaries.items():
        lines.append(f"{name:<8}" + "".join(f"{v:>11.4f}" for v in s.zero_fraction))
    return "\n".join(lines) + "\n"


def render_summary_csv(summaries: dict[str, SplitSummary]) -> str:
    buf = io.StringIO()
    cols = ["split", "samples", "frames_mean", "frames_std", "frames_median", "frames_min", "frames_max"]
    cols += [f"mean_{d}" for d in EMOTION_DIMENSIONS]
    cols += [f"std_{d}" for d in EMOTION_DIMENSIONS]
    cols += [f"zero_frac_{d}" for d in EMOTION_DIMENSIONS]
    cols += ["missing_text_fraction", "tail_fraction_over_120_frames"]
    buf.write(",".join(cols) + "\n")
    for name, s in summaries.items():
        row = [name, str(s.sample_count)]
        row += [f"{v:.6f}" for v in (s.frames_mean, s.frames_std, s.frames_median)]
        row += [str(s.frames_min), str(s.frames_max)]
        row += [f"{v:.6f}" for v in s.label_mean]
        row += [f"{v:.6f}" for v in s.label_std]
        row += [f"{v:.6f}" for v in s.zero_fraction]
        row += [f"{s.missing_text_fraction:.6f}", f"{s.tail_fraction_over_120_frames:.6f}"]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def render_shift_text(report: ShiftReport) -> str:
    header = (
        f"{'Label':<14}{'Train':>16}{'Valid':>16}{'Δμ':>9}"
        f"{'Zero% t/v':>14}{'KS':>8}{'p':>10}"
    )
    lines = [header, "-" * len(header)]
    for r in report.rows:
        p_text = "<.001" if r.p_value < 0.001 else f"{r.p_value:.3f}"
        lines.append(
            f"{r.dimension:<14}"
            f"{r.train_mean:>8.3f}±{r.train_std:<7.3f}"
            f"{r.valid_mean:>8.3f}±{r.valid_std:<7.3f}"
            f"{r.delta_mu:>9.3f}"
            f"{r.zero_pct_train:>7.1f}/{r.zero_pct_valid:<6.1f}"
            f"{r.ks_statistic:>8.3f}{p_text:>10}"
        )
    return "\n".join(lines) + "\n"


def render_shift_csv(report: ShiftReport) -> str:
    buf = io.StringIO()
    buf.write(
        "label,train_mean,train_std,valid_mean,valid_std,delta_mu,"
        "zero_pct_train,zero_pct_valid,ks_statistic,p_value\n"
    )
    for r in report.rows:
        buf.write(
            f"{r.dimension},{r.train_mean:.6f},{r.train_std:.6f},"
            f"{r.valid_mean:.6f},{r.valid_std:.6f},{r.delta_mu:.6f},"
            f"{r.zero_pct_train:.6f},{r.zero_pct_valid:.6f},"
            f"{r.ks_statistic:.6f},{r.p_value:.6g}\n"
        )
    return buf.getvalue()
