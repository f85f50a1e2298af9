"""Peak-normalized gradient mimicry attacks.

The attack perturbs a raw-pixel image so that its feature vector at a
chosen tap approaches an arbitrary target vector.  Each step takes the
gradient of the half squared Euclidean feature distance, rescales it so
the largest absolute entry equals ``step_linf``, subtracts it from a
continuous working copy, clips to the pixel domain and rounds half away
from zero to get the discrete candidate.  The stopping predicate is
always evaluated on the rounded candidate, never the working copy.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from featmimic.network import NetworkSpec, Tap, classify, features, grad_input
from featmimic.verification import distance


class ZeroGradientError(ValueError):
    """The feature-distance gradient vanished; no direction exists."""


@dataclass(frozen=True)
class MimicPredicate:
    """Stopping condition for an attack.

    kind:
        ``euclidean_below``  feature distance to target < threshold
        ``cosine_below``     cosine distance to target < threshold
        ``classified_as``    end-to-end predicted class == label
    Distance comparisons are strict, matching the verification side.
    """

    kind: str
    threshold: float = 0.0
    label: int = -1

    def __post_init__(self):
        if self.kind not in ("euclidean_below", "cosine_below", "classified_as"):
            raise ValueError(f"unknown predicate kind {self.kind!r}")
        if self.kind != "classified_as" and self.threshold <= 0.0:
            raise ValueError("distance predicates need a positive threshold")
        if self.kind == "classified_as" and self.label < 0:
            raise ValueError("classified_as needs a non-negative label")


@dataclass(frozen=True)
class AttackConfig:
    max_steps: int = 500
    step_linf: float = 1.0
    pixel_domain: tuple = (0.0, 255.0)

    def __post_init__(self):
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        if not self.step_linf > 0.0:
            raise ValueError("step_linf must be positive")
        lo, hi = self.pixel_domain
        if not lo < hi:
            raise ValueError(f"bad pixel domain {self.pixel_domain}")


@dataclass(frozen=True)
class AttackOutcome:
    """Result of one attack run.

    ``perturbed`` is always discrete (integral values inside the pixel
    domain).  ``success`` means the predicate held on ``perturbed`` when
    the attack stopped; ``final_distance`` is the Euclidean feature
    distance to the target at the tap (or the predicate's own distance
    for distance predicates).  ``steps_used`` counts gradient steps for
    the iterative attack and candidate evaluations for the line-search
    variant.
    """

    perturbed: np.ndarray
    origin: np.ndarray
    success: bool
    steps_used: int
    final_distance: float
    zero_gradient_abort: bool = False


def one_hot_target(num_classes: int, index: int) -> np.ndarray:
    """Float32 one-hot vector, the mimicry target for softmax outputs."""
    if num_classes < 1:
        raise ValueError("num_classes must be positive")
    if not 0 <= index < num_classes:
        raise ValueError(f"index {index} outside [0, {num_classes})")
    t = np.zeros(num_classes, dtype=np.float32)
    t[index] = 1.0
    return t


def _round_half_away(x):
    return (np.sign(x) * np.floor(np.abs(x) + np.float32(0.5))).astype(np.float32)


def _check_origin(origin, domain):
    x = np.asarray(origin, dtype=np.float32)
    lo, hi = domain
    if x.size == 0:
        raise ValueError("empty origin")
    if x.min() < lo or x.max() > hi:
        raise ValueError(f"origin outside pixel domain [{lo}, {hi}]")
    if not np.array_equal(x, np.trunc(x)):
        raise ValueError("origin must hold integral pixel values")
    return x.copy()


def _predicate_state(net, x, tap, target, predicate):
    """(satisfied, recorded distance) for a discrete candidate."""
    feats = features(net, x, tap)
    if predicate.kind == "classified_as":
        label = classify(net, x)
        return label == predicate.label, distance(feats, target, "euclidean")
    d = distance(feats, target, predicate.kind.removesuffix("_below"))
    return d < predicate.threshold, d


def lots_direction(net: NetworkSpec, x, tap: Tap, target) -> np.ndarray:
    """Feature-distance gradient rescaled so its largest magnitude is 1.

    Raises:
        ZeroGradientError: the gradient is identically zero.
    """
    g = grad_input(net, x, tap, target)
    peak = float(np.abs(g).max())
    if peak == 0.0:
        raise ZeroGradientError("feature-distance gradient is identically zero")
    return (g / np.float32(peak)).astype(np.float32)


def lots_iterative(
    net: NetworkSpec,
    origin,
    tap: Tap,
    target,
    predicate: MimicPredicate,
    config: AttackConfig = AttackConfig(),
    callback: Optional[Callable] = None,
) -> AttackOutcome:
    """Iterate peak-normalized gradient steps until the predicate holds.

    The continuous working copy accumulates the steps; the returned image
    is its rounded snapshot.  If the predicate already holds at the
    origin, the origin is returned unchanged with ``steps_used == 0``.
    A zero gradient aborts the run (recorded on the outcome, no restart).
    Exceeding ``config.max_steps`` gradient steps fails honestly.

    Args:
        callback: optional ``f(step, working, discrete, distance)`` called
            after each completed step, for instrumentation.
    """
    target = np.asarray(target, dtype=np.float32).reshape(-1)
    origin = _check_origin(origin, config.pixel_domain)
    lo = np.float32(config.pixel_domain[0])
    hi = np.float32(config.pixel_domain[1])
    work = origin.copy()
    disc = origin.copy()
    satisfied, dist = _predicate_state(net, disc, tap, target, predicate)
    steps = 0
    while not satisfied:
        if steps >= config.max_steps:
            return AttackOutcome(disc, origin, False, steps, dist)
        g = grad_input(net, work, tap, target)
        peak = np.abs(g).max()
        if peak == 0.0:
            return AttackOutcome(disc, origin, False, steps, dist, True)
        work = np.clip(work - g * (np.float32(config.step_linf) / peak), lo, hi)
        disc = _round_half_away(work)
        steps += 1
        satisfied, dist = _predicate_state(net, disc, tap, target, predicate)
        if callback is not None:
            callback(steps, work, disc, dist)
    return AttackOutcome(disc, origin, True, steps, dist)


def lots_single(
    net: NetworkSpec,
    origin,
    tap: Tap,
    target,
    predicate: MimicPredicate,
    max_scale: float = 255.0,
    iterations: int = 20,
    config: AttackConfig = AttackConfig(),
) -> AttackOutcome:
    """One gradient direction, binary line search over the step scale.

    Searches scale in (0, max_scale] for the smallest value whose rounded,
    clipped candidate satisfies the predicate.  Fails when even
    ``max_scale`` does not satisfy it, or when no usable direction exists
    at the origin (zero gradient, recorded on the outcome).
    ``steps_used`` counts candidate evaluations.
    """
    if not max_scale > 0.0:
        raise ValueError("max_scale must be positive")
    target = np.asarray(target, dtype=np.float32).reshape(-1)
    origin = _check_origin(origin, config.pixel_domain)
    satisfied, dist = _predicate_state(net, origin, tap, target, predicate)
    if satisfied:
        return AttackOutcome(origin.copy(), origin, True, 0, dist)
    try:
        direction = lots_direction(net, origin, tap, target)
    except ZeroGradientError:
        return AttackOutcome(origin.copy(), origin, False, 0, dist, True)
    lo_px = np.float32(config.pixel_domain[0])
    hi_px = np.float32(config.pixel_domain[1])

    def candidate(scale):
        return _round_half_away(
            np.clip(origin - direction * np.float32(scale), lo_px, hi_px)
        )

    evals = 0
    cand = candidate(max_scale)
    satisfied, dist = _predicate_state(net, cand, tap, target, predicate)
    evals += 1
    if not satisfied:
        return AttackOutcome(cand, origin, False, evals, dist)
    lo, hi = 0.0, float(max_scale)
    best, best_dist = cand, dist
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        cand = candidate(mid)
        satisfied, dist = _predicate_state(net, cand, tap, target, predicate)
        evals += 1
        if satisfied:
            hi, best, best_dist = mid, cand, dist
        else:
            lo = mid
    return AttackOutcome(best, origin, True, evals, best_dist)
