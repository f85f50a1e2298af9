"""Descriptor-based verification: gallery enrollment, scoring, ROC and
threshold calibration.

Distances are computed in float64.  Acceptance is strictly below the
threshold everywhere in this package.  The empirical false-accept rate at
a threshold counts negatives strictly below it, so FAR(min(negatives))
is 0.
"""

from dataclasses import dataclass

import numpy as np


def distance(a, b, kind: str = "euclidean") -> float:
    """Euclidean or cosine distance between two descriptor vectors.

    Cosine distance is ``1 - a.b / (|a||b|)``; zero-norm inputs are
    rejected for it.
    """
    va = np.asarray(a, dtype=np.float64).reshape(-1)
    vb = np.asarray(b, dtype=np.float64).reshape(-1)
    if va.shape != vb.shape:
        raise ValueError(f"length mismatch: {va.shape[0]} vs {vb.shape[0]}")
    if kind == "euclidean":
        d = va - vb
        return float(np.sqrt(np.dot(d, d)))
    if kind == "cosine":
        na = float(np.sqrt(np.dot(va, va)))
        nb = float(np.sqrt(np.dot(vb, vb)))
        if na == 0.0 or nb == 0.0:
            raise ValueError("cosine distance undefined for zero vectors")
        return float(1.0 - np.dot(va, vb) / (na * nb))
    raise ValueError(f"unknown distance kind {kind!r}")


@dataclass(frozen=True)
class GalleryTemplate:
    """Mean descriptor of one enrolled identity (kept un-normalized)."""

    identity: str
    mean_descriptor: np.ndarray
    enrollment_count: int

    def __post_init__(self):
        vec = np.ascontiguousarray(
            np.asarray(self.mean_descriptor, dtype=np.float32).reshape(-1)
        )
        vec.flags.writeable = False
        object.__setattr__(self, "mean_descriptor", vec)
        if self.enrollment_count < 1:
            raise ValueError("enrollment_count must be at least 1")


def enroll(identity: str, descriptors) -> GalleryTemplate:
    """Build a gallery template as the arithmetic mean of raw descriptors."""
    vecs = [np.asarray(d, dtype=np.float32).reshape(-1) for d in descriptors]
    if not vecs:
        raise ValueError(f"no descriptors to enroll for {identity!r}")
    length = vecs[0].shape[0]
    for v in vecs:
        if v.shape[0] != length:
            raise ValueError(f"descriptor length mismatch while enrolling {identity!r}")
    mean = np.mean(np.stack(vecs).astype(np.float64), axis=0).astype(np.float32)
    return GalleryTemplate(identity, mean, len(vecs))


def score_all(probes, gallery, kind: str = "euclidean"):
    """Score every probe against every template.

    Args:
        probes: iterable of ``(identity, descriptor)`` pairs.
        gallery: iterable of GalleryTemplate.

    Returns:
        (positives, negatives): float64 arrays of genuine and impostor
        scores, in probe-major then gallery order.
    """
    positives, negatives = [], []
    gallery = list(gallery)
    for identity, descriptor in probes:
        for template in gallery:
            d = distance(descriptor, template.mean_descriptor, kind)
            if identity == template.identity:
                positives.append(d)
            else:
                negatives.append(d)
    return np.asarray(positives, np.float64), np.asarray(negatives, np.float64)


@dataclass(frozen=True)
class RocCurve:
    """Operating points swept over the union of observed scores.

    ``thresholds`` is strictly increasing and ends with +inf so the curve
    always reaches (1, 1); ``far`` and ``tar`` are non-decreasing.
    """

    thresholds: np.ndarray
    far: np.ndarray
    tar: np.ndarray


def roc(positives, negatives) -> RocCurve:
    """Empirical ROC: for each candidate threshold, the fraction of
    negatives (FAR) and positives (TAR) strictly below it."""
    pos = np.sort(np.asarray(positives, np.float64).reshape(-1))
    neg = np.sort(np.asarray(negatives, np.float64).reshape(-1))
    if pos.size == 0 or neg.size == 0:
        raise ValueError("roc needs at least one positive and one negative score")
    thresholds = np.unique(np.concatenate([pos, neg, [np.inf]]))
    far = np.searchsorted(neg, thresholds, side="left") / neg.size
    tar = np.searchsorted(pos, thresholds, side="left") / pos.size
    return RocCurve(thresholds, far, tar)


def threshold_at_far(negatives, far_target: float) -> float:
    """Largest candidate threshold whose empirical FAR stays at or below
    ``far_target``.

    Candidates are the distinct negative scores.  Requires enough
    negatives for the target to be meaningful (``far_target * n >= 1``).
    """
    neg = np.sort(np.asarray(negatives, np.float64).reshape(-1))
    n = neg.size
    if not 0.0 < far_target < 1.0:
        raise ValueError("far_target must lie in (0, 1)")
    required = int(np.ceil(1.0 / far_target))
    if n < required:
        raise ValueError(
            f"need at least {required} negatives for far_target={far_target}, got {n}"
        )
    # small epsilon so e.g. 0.003 * 1000 counts as 3, not 2
    allowed = int(np.floor(far_target * n + 1e-9))
    candidates = np.unique(neg)
    below = np.searchsorted(neg, candidates, side="left")
    ok = candidates[below <= allowed]
    return float(ok[-1])


def verify(descriptor, template: GalleryTemplate, threshold: float, kind: str = "euclidean"):
    """Accept iff the distance to the template is strictly below threshold.

    Returns:
        (accepted, distance)
    """
    d = distance(descriptor, template.mean_descriptor, kind)
    return d < threshold, d
