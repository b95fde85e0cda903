"""Per-mel-bin activation statistics and histogram distance matrices.

Workflow: build per-class mean activation profiles from normalized
training spectrograms, run one nearest-mean classifier per mel bin over
test clips, collect per-class histograms of correctly classified bins,
then turn pairwise histogram distances into a confusion-style matrix via
max-normalize -> 1 - exp(-k*x) -> max-normalize -> 1 - x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

METRICS = ("chisq", "kl", "hellinger")
KL_SMOOTHING = 1e-12


@dataclass
class ClassProfileSet:
    """Per-class mean activation over time (and channels): (n_classes, F)."""

    class_ids: list
    profiles: np.ndarray

    def __post_init__(self):
        self.profiles = np.asarray(self.profiles, dtype=np.float64)
        if self.profiles.ndim != 2 or self.profiles.shape[0] != len(self.class_ids):
            raise ValueError(f"profiles must be (n_classes, F), got {self.profiles.shape}")
        if not np.all(np.isfinite(self.profiles)):
            raise ValueError("profiles contain non-finite values")


@dataclass
class BinHistogramSet:
    """Per-class frequency of correct per-bin classification, max-normalized."""

    class_ids: list
    hist: np.ndarray

    def __post_init__(self):
        self.hist = np.asarray(self.hist, dtype=np.float64)
        if self.hist.ndim != 2 or self.hist.shape[0] != len(self.class_ids):
            raise ValueError(f"hist must be (n_classes, F), got {self.hist.shape}")
        if np.any(self.hist < 0) or np.any(self.hist > 1):
            raise ValueError("histogram values must lie in [0, 1]")


@dataclass
class DistanceMatrix:
    """Confusion-style similarity matrix after the full transform pipeline."""

    values: np.ndarray
    metric: str
    k: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.values.shape[0]
        if self.values.shape != (n, n):
            raise ValueError("matrix must be square")


def _clip_summary(spec_data: np.ndarray, channel_mode: str) -> np.ndarray:
    """Temporal mean per bin; channels averaged or first-only."""
    means = np.asarray(spec_data, dtype=np.float64).mean(axis=2)  # (C, F)
    if channel_mode == "average":
        return means.mean(axis=0)
    if channel_mode == "first":
        return means[0]
    raise ValueError(f"unknown channel mode {channel_mode!r}")


def class_mean_profiles(features, labels, class_ids, channel_mode: str = "average") -> ClassProfileSet:
    """Mean activation per (class, bin), concatenating samples over time.

    features: iterable of (C, F, T) arrays or Spectrogram objects.
    Frames are weighted equally, so samples of unequal length contribute
    proportionally to their frame counts.
    """
    arrays = [np.asarray(getattr(s, "data", s), dtype=np.float64) for s in features]
    labels = np.asarray(labels)
    if len(arrays) != len(labels):
        raise ValueError("features and labels length mismatch")
    n_classes = len(class_ids)
    f_bins = arrays[0].shape[1]
    sums = np.zeros((n_classes, f_bins), dtype=np.float64)
    frames = np.zeros(n_classes, dtype=np.int64)
    for data, label in zip(arrays, labels):
        if channel_mode == "average":
            per_bin = data.mean(axis=0).sum(axis=1)  # (F,) summed over frames
        else:
            per_bin = data[0].sum(axis=1)
        sums[label] += per_bin
        frames[label] += data.shape[2]
    missing = [class_ids[c] for c in range(n_classes) if frames[c] == 0]
    if missing:
        raise ValueError(f"classes with zero samples: {missing}")
    return ClassProfileSet(class_ids=list(class_ids), profiles=sums / frames[:, None])


def per_bin_classify(test, profiles: ClassProfileSet, channel_mode: str = "average") -> np.ndarray:
    """Nearest-mean prediction at every mel bin independently.

    Returns a length-F int array: argmin over classes of the squared
    difference between the clip's temporal mean at that bin and the class
    profile. Ties break toward the lowest class index.
    """
    summary = _clip_summary(np.asarray(getattr(test, "data", test)), channel_mode)
    if summary.shape[0] != profiles.profiles.shape[1]:
        raise ValueError(f"clip has {summary.shape[0]} bins, profiles have {profiles.profiles.shape[1]}")
    sq = (profiles.profiles - summary[None, :]) ** 2  # (n_classes, F)
    return np.argmin(sq, axis=0)


def bin_histograms(test_set, labels, profiles: ClassProfileSet, channel_mode: str = "average") -> BinHistogramSet:
    """Per-class histogram of bins that classified the clip correctly.

    Counts, per class c and bin f, the test clips of class c whose bin-f
    prediction equals c, then scales each class row so its maximum is 1.
    """
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("empty test set")
    n_classes = len(profiles.class_ids)
    counts = np.zeros((n_classes, profiles.profiles.shape[1]), dtype=np.float64)
    seen = np.zeros(n_classes, dtype=np.int64)
    for spec, label in zip(test_set, labels):
        preds = per_bin_classify(spec, profiles, channel_mode)
        counts[label] += preds == label
        seen[label] += 1
    missing = [profiles.class_ids[c] for c in range(n_classes) if seen[c] == 0]
    if missing:
        raise ValueError(f"classes absent from test set: {missing}")
    peak = counts.max(axis=1)
    normalized = np.divide(counts, peak[:, None], out=np.zeros_like(counts), where=peak[:, None] > 0)
    return BinHistogramSet(class_ids=list(profiles.class_ids), hist=normalized)


def _mass_normalize(h: np.ndarray) -> np.ndarray:
    total = h.sum()
    if total <= 0:
        raise ValueError("cannot mass-normalize an all-zero histogram")
    return h / total


def histogram_distance(p, q, metric: str) -> float:
    """Distance between two non-negative histograms of equal length.

    chisq operates on the inputs as given (0/0 bins contribute 0);
    hellinger and kl first normalize both to unit mass, and kl smooths
    with 1e-12 before taking logs.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"histogram shapes differ: {p.shape} vs {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("histograms must be non-negative")
    if metric == "chisq":
        denom = p + q
        num = (p - q) ** 2
        terms = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
        return 0.5 * float(terms.sum())
    if metric == "hellinger":
        ph, qh = _mass_normalize(p), _mass_normalize(q)
        return float(np.sqrt(np.sum((np.sqrt(ph) - np.sqrt(qh)) ** 2)) / np.sqrt(2.0))
    if metric == "kl":
        ph = _mass_normalize(p) + KL_SMOOTHING
        qh = _mass_normalize(q) + KL_SMOOTHING
        ph, qh = ph / ph.sum(), qh / qh.sum()
        forward = np.sum(ph * np.log(ph / qh))
        backward = np.sum(qh * np.log(qh / ph))
        return 0.5 * float(forward + backward)
    raise ValueError(f"unknown metric {metric!r}; pick from {METRICS}")


def pairwise_distances(hists: BinHistogramSet, metric: str) -> np.ndarray:
    n = len(hists.class_ids)
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = histogram_distance(hists.hist[i], hists.hist[j], metric)
    return out


def confusion_like_matrix(hists: BinHistogramSet, metric: str = "chisq", k: float = 10.0) -> DistanceMatrix:
    """Distance matrix pushed through the confusion-resemblance pipeline.

    Steps: pairwise distances, divide by max, x -> 1 - exp(-k*x), divide
    by max, x -> 1 - x. Ends symmetric with unit diagonal and entries in
    [0, 1]; small values flag the most confusable class pairs.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    raw = pairwise_distances(hists, metric)
    peak = raw.max()
    if peak <= 0:
        raise ValueError("all pairwise distances are zero; need at least two distinct classes")
    x = raw / peak
    x = 1.0 - np.exp(-k * x)
    x = x / x.max()
    x = 1.0 - x
    return DistanceMatrix(values=x, metric=metric, k=k)


def most_similar_pair(matrix: DistanceMatrix) -> tuple[int, int]:
    """Class index pair with the highest post-pipeline similarity."""
    values = matrix.values.copy()
    np.fill_diagonal(values, -np.inf)
    i, j = np.unravel_index(np.argmax(values), values.shape)
    return (min(i, j), max(i, j))


def _format(value: float) -> str:
    return f"{value:.6g}"


def write_histograms_tsv(path, hists: BinHistogramSet) -> None:
    """Combined table: one row per mel bin, one column per class."""
    with open(path, "w") as fh:
        fh.write("bin\t" + "\t".join(str(c) for c in hists.class_ids) + "\n")
        for f in range(hists.hist.shape[1]):
            fh.write(f"{f}\t" + "\t".join(_format(v) for v in hists.hist[:, f]) + "\n")


def write_class_histogram_tsv(path, hists: BinHistogramSet, index: int) -> None:
    """Single-class histogram, one (bin, value) row per mel bin."""
    with open(path, "w") as fh:
        fh.write(f"bin\t{hists.class_ids[index]}\n")
        for f, v in enumerate(hists.hist[index]):
            fh.write(f"{f}\t{_format(v)}\n")


def write_matrix_tsv(path, matrix: DistanceMatrix, class_names) -> None:
    with open(path, "w") as fh:
        fh.write("class\t" + "\t".join(class_names) + "\n")
        for name, row in zip(class_names, matrix.values):
            fh.write(name + "\t" + "\t".join(_format(v) for v in row) + "\n")
