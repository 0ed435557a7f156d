"""Inverse problem: channel powers and duties for a target spectrum.

Finds non-negative per-channel broadband powers, capped at each channel's
full-drive irradiance and summing to the requested total, that minimize the
weighted squared mismatch between the achieved and target band irradiances.
Solved by projected gradient descent with an exact Euclidean projection onto
the capped simplex; duties are then recovered by inverting each channel's
dimming power law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .lightboard import ChannelSet, duty_from_code, quantize_duty
from .spectral import (AM15G_BIN_FRACTIONS, BIN_EDGES_NM, N_BINS, Spectrum,
                       _class_for_ratios, bin_fractions, integrate_between)

MAX_ITERATIONS = 5000
STEP_TOLERANCE = 1.0e-10

PRESET_LEVELS_W_M2 = (1.0, 10.0, 50.0, 300.0, 500.0, 750.0)


class Unachievable(ValueError):
    """Requested total irradiance outside the board's achievable span."""


def channel_bin_matrix(channels: ChannelSet) -> NDArray[np.floating]:
    """Fraction of each channel's power landing in each grading band.

    Returns a (bands x channels) matrix; column sums are at most 1 because
    a channel may emit slightly outside the 400-1100 nm grading window.
    """
    from .lightboard import WAVELENGTH_GRID_NM

    shape_matrix = channels.shape_matrix()
    m = np.empty((N_BINS, len(channels)))
    for j in range(len(channels)):
        spec = Spectrum(WAVELENGTH_GRID_NM.copy(), shape_matrix[j])
        for i in range(N_BINS):
            m[i, j] = integrate_between(spec, BIN_EDGES_NM[i],
                                        BIN_EDGES_NM[i + 1])
    return m


def project_capped_simplex(v: NDArray[np.floating],
                           caps: NDArray[np.floating],
                           total: float) -> NDArray[np.floating]:
    """Euclidean projection onto {0 <= p <= caps, sum(p) = total}.

    Water-filling: the projection has the form clip(v - theta, 0, caps)
    whose coordinate sum is a piecewise-linear decreasing function of theta
    with breakpoints at v_i and v_i - cap_i. Scanning the sorted breakpoints
    finds the crossing segment, on which theta solves a linear equation.
    Exact up to rounding, which keeps fixed points of projected gradient
    steps genuinely fixed instead of wobbling at the bisection floor.
    """
    if total < 0 or total > caps.sum() + 1e-12:
        raise ValueError("requested sum outside the feasible box")
    points = np.unique(np.concatenate([v - caps, v]))
    sums = np.clip(v[None, :] - points[:, None], 0.0, caps).sum(axis=1)
    # sums is decreasing in theta; find the segment bracketing the target.
    idx = int(np.searchsorted(-sums, -total))
    if idx == 0:
        theta = points[0]
    elif idx == len(points):
        theta = points[-1]
    else:
        left, right = points[idx - 1], points[idx]
        s_left, s_right = sums[idx - 1], sums[idx]
        if s_left == s_right:
            theta = left
        else:
            theta = left + (s_left - total) * (right - left) / (s_left - s_right)
    return np.clip(v - theta, 0.0, caps)


@dataclass(frozen=True)
class FitProblem:
    """Inputs of one spectrum fit.

    ``duty_bounds`` optionally restricts individual channels to a duty
    window inside [0, 1] (row per channel: low, high); None means the full
    range everywhere.
    """

    channels: ChannelSet
    target_fractions: NDArray[np.floating]
    total_w_m2: float
    weights: NDArray[np.floating] | None = None
    duty_bounds: NDArray[np.floating] | None = None
    max_iterations: int = MAX_ITERATIONS
    tolerance: float = STEP_TOLERANCE


@dataclass(frozen=True)
class FitResult:
    """Solution of one spectrum fit.

    ``achieved_fractions`` and ``ratios`` are verified through the forward
    spectral path (quantized duties -> summed board spectrum -> band
    fractions), not taken from the optimizer's own algebra.
    """

    duties: NDArray[np.floating]
    duty_codes: NDArray[np.integer]
    powers_w_m2: NDArray[np.floating]
    achieved_fractions: NDArray[np.floating]
    ratios: NDArray[np.floating]
    achieved_class: str
    iterations: int
    converged: bool
    objective: float


def _default_weights(target_bins: NDArray[np.floating]) -> NDArray[np.floating]:
    # Inverse of each band's class-A half-width in irradiance units, so one
    # unit of weighted error is "one full class-A margin".
    return 1.0 / (0.25 * target_bins)


def _neutral_directions(wm: NDArray[np.floating]) -> NDArray[np.floating]:
    """Orthonormal basis of the objective-neutral, sum-preserving directions.

    These are the null vectors of the weighted band matrix stacked with the
    all-ones row: moving along them changes no band integral and keeps the
    power total.
    """
    stacked = np.vstack([wm, np.ones(wm.shape[1])])
    _, s, vt = np.linalg.svd(stacked)
    tol = max(stacked.shape) * np.finfo(float).eps * (s[0] if len(s) else 1.0)
    rank = int((s > tol).sum())
    return vt[rank:]


def _pin_neutral(p: NDArray[np.floating],
                 neutral: NDArray[np.floating],
                 caps: NDArray[np.floating]) -> NDArray[np.floating]:
    """Minimize ||p|| along each neutral direction, staying inside the box.

    One exact bounded line-minimization per direction; for the generic
    single-direction case this is the exact minimum-norm representative.
    """
    for d in neutral:
        alpha = -float(p @ d)
        live = np.abs(d) > 1e-15
        if not np.any(live):
            continue
        with np.errstate(divide="ignore"):
            lo_bounds = np.where(d > 0, -p, p - caps)[live] / np.abs(d[live])
            hi_bounds = np.where(d > 0, caps - p, p)[live] / np.abs(d[live])
        alpha = min(max(alpha, float(lo_bounds.max())), float(hi_bounds.min()))
        p = np.clip(p + alpha * d, 0.0, caps)
    return p


def _solve_pgd(wm: NDArray[np.floating], wt: NDArray[np.floating],
               caps: NDArray[np.floating], total: float,
               max_iterations: int, tolerance: float,
               ) -> tuple[NDArray[np.floating], int, bool]:
    """Projected gradient descent for min ||wm @ p - wt||^2 on the capped
    simplex {0 <= p <= caps, sum p = total}.  Fixed step 1/L; stops when the
    relative step shrinks below ``tolerance``."""
    hessian = 2.0 * wm.T @ wm
    step = 1.0 / float(np.linalg.eigvalsh(hessian).max())

    # Directions that change neither any band integral nor the power sum
    # leave the objective exactly constant; equivalent optima differ only
    # along them. Each iteration pins those coordinates to the smallest
    # feasible norm, which makes the tie-break explicit and the fixed
    # point unique. (Out-of-band emission keeps the all-ones row outside
    # the band matrix's row space, so without the pin the iterate creeps
    # along this family below any useful step tolerance.)
    neutral = _neutral_directions(wm)

    def objective(q: NDArray[np.floating]) -> float:
        r = wm @ q - wt
        return float(r @ r)

    p = project_capped_simplex(np.full(caps.size, total / caps.size),
                               caps, total)
    p = _pin_neutral(p, neutral, caps)
    obj = objective(p)
    iterations = 0
    converged = False
    for iterations in range(1, max_iterations + 1):
        grad = 2.0 * (wm.T @ (wm @ p - wt))
        p_next = project_capped_simplex(p - step * grad, caps, total)
        p_next = _pin_neutral(p_next, neutral, caps)
        obj_next = objective(p_next)
        assert obj_next <= obj + 1e-12 * max(obj, 1.0), \
            "descent step increased the objective"
        delta = float(np.linalg.norm(p_next - p))
        p, obj = p_next, obj_next
        if delta <= tolerance * max(float(np.linalg.norm(p)), 1e-30):
            converged = True
            break
    return p, iterations, converged


def fit_duties(problem: FitProblem) -> FitResult:
    """Solve for channel duties approximating the target band fractions.

    Optimization runs in channel-power space where the problem is convex;
    duties come from inverting each dimming law afterward.  If that
    inversion lands outside a channel's allowed duty window, the channel is
    clamped to the violated edge, its power is frozen there, and the
    remaining channels are re-solved once against the leftover target.
    """
    channels = problem.channels
    fractions = np.asarray(problem.target_fractions, dtype=float)
    if fractions.shape != (N_BINS,):
        raise ValueError(f"expected {N_BINS} target fractions")
    if np.any(fractions <= 0):
        raise ValueError("target fractions must be positive")
    if abs(fractions.sum() - 100.0) > 1.0:
        raise ValueError("target fractions must sum to 100")
    fractions = fractions / fractions.sum() * 100.0

    n = len(channels)
    total = float(problem.total_w_m2)
    caps = channels.irr_max_vector
    gammas = channels.gamma_vector
    floor = float(channels.irr_min_vector.sum())
    if not (floor <= total <= float(caps.sum())):
        raise Unachievable(
            f"total {total:g} W/m^2 outside achievable span "
            f"[{floor:g}, {caps.sum():g}]")

    if problem.duty_bounds is None:
        duty_lo = np.zeros(n)
        duty_hi = np.ones(n)
    else:
        bounds = np.asarray(problem.duty_bounds, dtype=float)
        if bounds.shape != (n, 2):
            raise ValueError(f"duty bounds must be shaped ({n}, 2)")
        duty_lo, duty_hi = bounds[:, 0], bounds[:, 1]
        if (np.any(duty_lo < 0) or np.any(duty_hi > 1)
                or np.any(duty_lo > duty_hi)):
            raise ValueError("duty bounds must satisfy 0 <= low <= high <= 1")

    m = channel_bin_matrix(channels)
    target_bins = fractions / 100.0 * total
    weights = (np.asarray(problem.weights, dtype=float)
               if problem.weights is not None
               else _default_weights(target_bins))
    if weights.shape != (N_BINS,):
        raise ValueError(f"expected {N_BINS} weights")

    wm = weights[:, None] * m
    wt = weights * target_bins

    def invert(powers: NDArray[np.floating]) -> NDArray[np.floating]:
        duties = np.zeros(n)
        on = powers > 0
        duties[on] = (powers[on] / caps[on]) ** (1.0 / gammas[on])
        return np.clip(duties, 0.0, 1.0)

    free = np.ones(n, dtype=bool)
    p = np.zeros(n)
    iterations = 0
    converged = True
    for _resolve in range(2):
        fixed_powers = np.where(free, 0.0, p)
        budget = min(max(total - fixed_powers.sum(), 0.0),
                     float(caps[free].sum())) if free.any() else 0.0
        if free.any():
            p_free, iters, conv = _solve_pgd(
                wm[:, free], wt - wm @ fixed_powers, caps[free], budget,
                problem.max_iterations, problem.tolerance)
            p = fixed_powers
            p[free] = p_free
            iterations += iters
            converged = converged and conv
        duties_raw = invert(p)
        clamped = free & ((duties_raw < duty_lo - 1e-12)
                          | (duties_raw > duty_hi + 1e-12))
        if not clamped.any():
            break
        # Freeze violators at the violated edge and give the rest one more
        # pass at the leftover target.
        pinned = np.clip(duties_raw, duty_lo, duty_hi)
        p[clamped] = caps[clamped] * pinned[clamped] ** gammas[clamped]
        free &= ~clamped
    duties = np.clip(invert(p), duty_lo, duty_hi)
    codes = np.array([quantize_duty(float(d)) for d in duties])
    duties_q = np.array([duty_from_code(int(c)) for c in codes])

    spectrum = channels.spectrum(duties_q)
    achieved = bin_fractions(spectrum)
    ratios = achieved / fractions
    residual = weights * (m @ p - target_bins)
    return FitResult(
        duties=duties_q,
        duty_codes=codes,
        powers_w_m2=p,
        achieved_fractions=achieved,
        ratios=ratios,
        achieved_class=_class_for_ratios(ratios),
        iterations=iterations,
        converged=converged,
        objective=float(residual @ residual),
    )


def fit_am15g(channels: ChannelSet, total_w_m2: float) -> FitResult:
    """Fit the built-in AM1.5G band fractions at the requested total."""
    return fit_duties(FitProblem(
        channels=channels,
        target_fractions=np.asarray(AM15G_BIN_FRACTIONS, dtype=float),
        total_w_m2=total_w_m2,
    ))


class PresetCache:
    """Per-board cache of solved AM1.5G duty vectors.

    The six standard evaluation levels are anchor points; other levels
    between anchors interpolate duties geometrically (then renormalize the
    implied powers so the total matches exactly), avoiding a fresh solve for
    every setpoint change.
    """

    def __init__(self, channels: ChannelSet):
        self.channels = channels
        self._anchor_duties: dict[float, NDArray[np.floating]] = {}

    def _solve(self, level: float) -> NDArray[np.floating]:
        return fit_am15g(self.channels, level).duties

    def _anchor(self, level: float) -> NDArray[np.floating]:
        if level not in self._anchor_duties:
            self._anchor_duties[level] = self._solve(level)
        return self._anchor_duties[level]

    def duties_for_level(self, level: float) -> NDArray[np.floating]:
        """Duty vector producing the AM1.5G mix at the requested total."""
        floor = float(self.channels.irr_min_vector.sum())
        ceil = float(self.channels.irr_max_vector.sum())
        if not (floor <= level <= ceil):
            raise Unachievable(
                f"level {level:g} W/m^2 outside achievable span "
                f"[{floor:g}, {ceil:g}]")
        levels = PRESET_LEVELS_W_M2
        if level in levels:
            return self._anchor(level)
        if level < levels[0] or level > levels[-1]:
            return self._solve(level)
        hi_idx = next(i for i, lv in enumerate(levels) if lv > level)
        lo_level, hi_level = levels[hi_idx - 1], levels[hi_idx]
        lo = self._anchor(lo_level)
        hi = self._anchor(hi_level)
        alpha = math.log(level / lo_level) / math.log(hi_level / lo_level)
        with np.errstate(divide="ignore"):
            duties = np.where((lo > 0) & (hi > 0),
                              lo ** (1.0 - alpha) * hi ** alpha, 0.0)
        # Renormalize through power space so the total lands exactly.
        gammas = self.channels.gamma_vector
        caps = self.channels.irr_max_vector
        powers = caps * duties ** gammas
        scale = level / powers.sum()
        powers *= scale
        duties = np.where(powers > 0, (powers / caps) ** (1.0 / gammas), 0.0)
        codes = [quantize_duty(float(min(d, 1.0))) for d in duties]
        return np.array([duty_from_code(c) for c in codes])
