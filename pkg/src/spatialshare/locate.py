"""Simulated ultra-wideband ranging and least-squares position solving.

One solver serves both the cloud role and a device-local fallback: ranges to
known anchors are generated with seeded Gaussian noise, an initial estimate
comes from the pairwise-difference linear system, and a damped Gauss-Newton
refinement minimizes the squared range residuals.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateGeometryError, OrderingError
from .twin import DigitalTwin, Point3

RANGE_FLOOR_M = 1e-9
STEP_TOLERANCE_M = 1e-9
MAX_ITERATIONS = 50
INITIAL_DAMPING = 1e-3

_COPLANAR_TOL = 1e-9


class FixQuality(str, Enum):
    GOOD = "Good"
    LOW = "Low"
    NONE = "None"


@dataclass(frozen=True)
class Anchor:
    anchor_id: str
    position: Point3


@dataclass(frozen=True)
class RangeSet:
    """Measured anchor distances at one instant; empty under dropout."""

    timestamp: int
    ranges: dict[str, float]
    dropout: bool = False


@dataclass(frozen=True)
class PositionFix:
    """Solved device position. ``position`` is absent when quality is None."""

    timestamp: int
    position: Point3 | None
    rms_residual: float | None
    quality: FixQuality


def default_residual_threshold(noise_sigma: float) -> float:
    """Good/Low residual cut: strict for clean scenarios, 3-sigma otherwise."""
    return 0.05 if noise_sigma == 0 else 3.0 * noise_sigma


def twin_anchors(twin: DigitalTwin) -> list[Anchor]:
    """Anchor list in sorted-id order (the deterministic measurement order)."""
    return [Anchor(aid, twin.anchors[aid]) for aid in sorted(twin.anchors)]


def simulate_ranges(
    twin: DigitalTwin,
    true_position: Point3,
    noise_sigma: float,
    rng: np.random.Generator,
    timestamp: int = 0,
) -> RangeSet:
    """Generate one range per anchor: true distance plus Gaussian noise.

    Ranges are clamped to stay strictly positive. Identical seeds produce
    bit-identical range sets because anchors are visited in sorted-id order.
    """
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    ranges = {}
    for anchor in twin_anchors(twin):
        r = true_position.distance_to(anchor.position) + rng.normal(0.0, noise_sigma)
        ranges[anchor.anchor_id] = max(r, RANGE_FLOOR_M)
    return RangeSet(timestamp=timestamp, ranges=ranges, dropout=False)


def _residuals(p: np.ndarray, positions: np.ndarray, measured: np.ndarray) -> np.ndarray:
    return np.linalg.norm(positions - p, axis=1) - measured


def _linear_initial_guess(positions: np.ndarray, measured: np.ndarray) -> np.ndarray:
    # Subtracting the first range equation from the others cancels |p|^2,
    # leaving a linear system 2(a0 - ai) . p = ri^2 - r0^2 - |ai|^2 + |a0|^2.
    a0, r0 = positions[0], measured[0]
    rows = 2.0 * (a0 - positions[1:])
    rhs = (
        measured[1:] ** 2
        - r0**2
        - (positions[1:] ** 2).sum(axis=1)
        + (a0**2).sum()
    )
    guess, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    return guess


def solve_position(
    anchors: list[Anchor], ranges: RangeSet, residual_threshold: float
) -> PositionFix:
    """Solve min_p sum_i (|p - a_i| - r_i)^2 by damped Gauss-Newton.

    Damping multiplies by 10 whenever a step would increase the objective
    and divides by 10 on acceptance, so the objective never increases.
    Non-convergence is not an error: the best iterate is returned with
    quality Low. Fewer than four usable anchors, or a coplanar set, is a
    ``DegenerateGeometryError``.
    """
    if ranges.dropout:
        raise DegenerateGeometryError("range set is a dropout; nothing to solve")
    usable = [a for a in anchors if a.anchor_id in ranges.ranges]
    if len(usable) < 4:
        raise DegenerateGeometryError(
            f"position solve requires >= 4 anchors with measurements, got {len(usable)}"
        )
    positions = np.array([a.position.as_list() for a in usable])
    measured = np.array([ranges.ranges[a.anchor_id] for a in usable])
    singular = np.linalg.svd(positions - positions[0], compute_uv=False)
    if singular[2] <= _COPLANAR_TOL * max(1.0, singular[0]):
        raise DegenerateGeometryError("anchors are coplanar; solve is degenerate")

    p = _linear_initial_guess(positions, measured)
    f = _residuals(p, positions, measured)
    objective = float(f @ f)
    damping = INITIAL_DAMPING
    for _ in range(MAX_ITERATIONS):
        dists = np.linalg.norm(positions - p, axis=1)
        jac = (p - positions) / np.maximum(dists, 1e-12)[:, None]
        lhs = jac.T @ jac + damping * np.eye(3)
        step = np.linalg.solve(lhs, -jac.T @ f)
        trial = p + step
        f_trial = _residuals(trial, positions, measured)
        objective_trial = float(f_trial @ f_trial)
        if objective_trial <= objective:
            p, f, objective = trial, f_trial, objective_trial
            damping /= 10.0
            if float(np.linalg.norm(step)) < STEP_TOLERANCE_M:
                break
        else:
            damping *= 10.0

    rms = math.sqrt(objective / len(usable))
    quality = FixQuality.GOOD if rms <= residual_threshold else FixQuality.LOW
    return PositionFix(
        timestamp=ranges.timestamp,
        position=Point3(*p),
        rms_residual=rms,
        quality=quality,
    )


def in_windows(t: int, windows: list[tuple[int, int]]) -> bool:
    """Closed-interval membership used for dropout and spoof windows."""
    return any(lo <= t <= hi for lo, hi in windows)


def localization_loop(
    twin: DigitalTwin,
    trajectory: list[tuple[int, Point3]],
    noise_sigma: float,
    dropout_windows: list[tuple[int, int]],
    rng: np.random.Generator,
    residual_threshold: float | None = None,
) -> list[PositionFix]:
    """One fix per trajectory sample, quality None inside dropout windows."""
    threshold = (
        default_residual_threshold(noise_sigma)
        if residual_threshold is None
        else residual_threshold
    )
    anchors = twin_anchors(twin)
    fixes: list[PositionFix] = []
    last_t: int | None = None
    for t, true_position in trajectory:
        if last_t is not None and t <= last_t:
            raise OrderingError(f"trajectory timestamps must strictly increase at t={t}")
        last_t = t
        if in_windows(t, dropout_windows):
            fixes.append(PositionFix(t, None, None, FixQuality.NONE))
            continue
        ranges = simulate_ranges(twin, true_position, noise_sigma, rng, timestamp=t)
        fixes.append(solve_position(anchors, ranges, threshold))
    return fixes
