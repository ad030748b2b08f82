from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from capbound.margins.margin_report import MarginReport, RobustConfig, SampleMargins
from capbound.net_engine.dataset import Dataset, sample_ball
from capbound.net_engine.dense_net import DenseNet, check_input, forward, forward_batch
from capbound.net_engine.jacobian import FEATURES, batch_jacobians, jacobian, spectral_norms
from capbound.net_engine.rng import Stream, stream

logger = logging.getLogger(__name__)

SCAN_POINTS = 256
REFINE_STEPS = 48
GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0

ON_BOUNDARY = "on_boundary"
ZERO_GRADIENT = "zero_gradient"
NO_CROSSING = "no_crossing"
DEGENERATE_JACOBIAN = "degenerate_jacobian"
MISCLASSIFIED = "misclassified"


@dataclass(frozen=True)
class RaySearch:
    """Result of the steepest-descent ray search from x.

    The sign of f has changed at distance ``upper`` but not at ``lower``;
    both are infinite when no change was found within the search radius.
    """

    lower: float
    upper: float
    direction: Optional[np.ndarray]
    flag: Optional[str] = None

    @property
    def found(self) -> bool:
        return math.isfinite(self.upper)

    def boundary_point(self, x: np.ndarray) -> Optional[np.ndarray]:
        if not self.found or self.direction is None:
            return None
        return x + self.upper * self.direction


@dataclass(frozen=True)
class Certificate:
    """Sampled lower certificate gamma_op / J_hat on the input margin."""

    value: float
    jacobian_sup: float
    samples: int
    output_margin: float
    search: RaySearch
    flag: Optional[str] = None


def output_margin(net: DenseNet, x: np.ndarray) -> float:
    """|phi_P(x) . w| / ||w||: distance of the feature vector to the output hyperplane.

    :raises ValueError: If the output weight vector is zero.
    """
    w = net.output_weights
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise ValueError("output weight vector is zero; the output hyperplane is undefined")
    return abs(float(forward(net, x).features @ w)) / norm


def output_margins(net: DenseNet, X: np.ndarray) -> np.ndarray:
    """Vectorized `output_margin`, returning zeros for a zero output vector."""
    w = net.output_weights
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        return np.zeros(X.shape[0])
    return np.abs(forward_batch(net, X).features @ w) / norm


def ray_search(net: DenseNet, x: np.ndarray, radius: float, tol: Optional[float] = None) -> RaySearch:
    """Finds the first sign change of f along -sign(f(x)) * grad f(x).

    See `first_crossing` for the scan; bisection narrows the bracket until its
    width is at most ``tol`` (default 1e-6 * R).
    """
    x = check_input(net, x, batched=False)
    tol = tol if tol is not None else 1e-6 * radius
    f0 = forward(net, x).output
    if f0 == 0.0:
        return RaySearch(0.0, 0.0, None, ON_BOUNDARY)

    gradient = jacobian(net, x)[0]
    gradient_norm = float(np.linalg.norm(gradient))
    if gradient_norm == 0.0:
        return RaySearch(math.inf, math.inf, None, ZERO_GRADIENT)
    sign = math.copysign(1.0, f0)
    direction = -sign * gradient / gradient_norm

    def signed_scores(t: np.ndarray) -> np.ndarray:
        return sign * forward_batch(net, x[None, :] + t[:, None] * direction[None, :]).outputs

    bracket = first_crossing(signed_scores, abs(f0), 4.0 * radius, tol)
    if bracket is None:
        return RaySearch(math.inf, math.inf, direction, NO_CROSSING)
    return RaySearch(bracket[0], bracket[1], direction)


def first_crossing(
    signed_scores: Callable[[np.ndarray], np.ndarray], start: float, reach: float, tol: float
) -> Optional[tuple[float, float]]:
    """Bracket [lower, upper] of the first zero of a function that is positive at t = 0.

    A scan of SCAN_POINTS steps over (0, reach] finds the first nonpositive
    point. Dips between scan points (local minima of the scanned values ahead
    of that point) are then searched by golden section, so a crossing narrower
    than one step is still found when it is the only minimum of its interval.

    :param signed_scores: Vectorized function of t, positive on the side of t = 0.
    :param start: Its value at t = 0.
    :param reach: End of the scan.
    :param tol: Largest width of the returned bracket.
    :return: The bracket, or None when no crossing was found.
    """
    steps = np.linspace(0.0, reach, SCAN_POINTS + 1)
    values = np.concatenate([[start], signed_scores(steps[1:])])
    hits = np.flatnonzero(values[1:] <= 0.0) + 1
    end = int(hits[0]) if hits.size else len(steps) - 1

    inner = np.arange(1, end)
    dips = inner[(values[inner] < values[inner - 1]) & (values[inner] <= values[inner + 1])]
    lower, upper = (float(steps[end - 1]), float(steps[end])) if hits.size else (math.nan, math.inf)
    if dips.size:
        crossings = _dip_crossings(signed_scores, steps[dips - 1], steps[dips + 1])
        found = np.flatnonzero(np.isfinite(crossings))
        if found.size:
            k = int(found[0])
            lower, upper = float(steps[dips[k] - 1]), float(crossings[k])
            logger.debug(f"Ray scan refined: crossing at t={upper:.6g} lies between scan points")
    if not math.isfinite(upper):
        return None

    while upper - lower > tol:
        middle = 0.5 * (lower + upper)
        if middle <= lower or middle >= upper:
            break
        if signed_scores(np.array([middle]))[0] <= 0.0:
            upper = middle
        else:
            lower = middle
    return lower, upper


def _dip_crossings(
    signed_scores: Callable[[np.ndarray], np.ndarray], lows: np.ndarray, highs: np.ndarray
) -> np.ndarray:
    """Golden-section descent on every interval at once; per interval the smallest nonpositive t seen, else inf."""
    a, b = lows.astype(np.float64), highs.astype(np.float64)
    crossings = np.full(a.shape, math.inf)
    for _ in range(REFINE_STEPS):
        c = b - GOLDEN_RATIO * (b - a)
        d = a + GOLDEN_RATIO * (b - a)
        fc, fd = signed_scores(c), signed_scores(d)
        crossings = np.minimum(crossings, np.where(fc <= 0.0, c, math.inf))
        crossings = np.minimum(crossings, np.where(fd <= 0.0, d, math.inf))
        left = fc < fd
        a, b = np.where(left, a, c), np.where(left, d, b)
    return crossings


def input_margin_upper(
    net: DenseNet, x: np.ndarray, radius: float, tol: Optional[float] = None
) -> float:
    """Upper estimate of the input margin: distance to the first sign change along the ray.

    :param radius: Data radius R; the search stops at 4R.
    :param tol: Bracket width; defaults to 1e-6 * R.
    :return: The outer bracket end, 0 if f(x) = 0, infinity when nothing was found.
    """
    search = ray_search(net, x, radius, tol)
    if search.flag == ZERO_GRADIENT or search.flag == NO_CROSSING:
        logger.debug(f"Input margin search found no sign change ({search.flag})")
    return search.upper


def certify(net: DenseNet, x: np.ndarray, cfg: RobustConfig) -> Certificate:
    """Builds the sampled input-margin certificate with its diagnostics.

    J_hat is the largest of the sampled ||J_phi_P(z)||_2 over points z in the
    ball of radius gamma_upper around x (4R when no crossing was found), the
    norm at x itself, and the secant slope to the boundary point found by
    the ray search.
    """
    x = check_input(net, x, batched=False)
    gamma_op = output_margin(net, x)
    search = ray_search(net, x, cfg.radius, cfg.tol)
    if search.flag == ON_BOUNDARY:
        return Certificate(0.0, 0.0, 0, gamma_op, search, ON_BOUNDARY)

    ball = search.upper if search.found else cfg.search_radius
    rng = stream(cfg.seed, Stream.PROBE, 1)
    probes = x[None, :] + sample_ball(rng, cfg.ball_samples, x.shape[0], ball)
    points = np.vstack([x[None, :], probes])
    norms, _, _ = spectral_norms(batch_jacobians(net, points, FEATURES), seed=cfg.seed)
    j_hat = float(np.max(norms))

    boundary = search.boundary_point(x)
    if boundary is not None:
        step = float(np.linalg.norm(boundary - x))
        if step > 0.0:
            secant = float(np.linalg.norm(forward(net, boundary).features - forward(net, x).features)) / step
            j_hat = max(j_hat, secant)

    if j_hat == 0.0:
        return Certificate(math.inf, 0.0, cfg.ball_samples, gamma_op, search, DEGENERATE_JACOBIAN)
    return Certificate(gamma_op / j_hat, j_hat, cfg.ball_samples, gamma_op, search, search.flag)


def input_margin_certificate(net: DenseNet, x: np.ndarray, cfg: RobustConfig) -> float:
    """gamma_op(x) / J_hat, a sampled lower certificate on the input margin."""
    return certify(net, x, cfg).value


def margin_report(net: DenseNet, dataset: Dataset, cfg: RobustConfig) -> MarginReport:
    """Margins of every sample; misclassified samples are flagged and carry zeros."""
    scores = forward_batch(net, dataset.samples).outputs
    rows = []
    for i, (x, y, score) in enumerate(zip(dataset.samples, dataset.labels, scores)):
        if not (y * score > 0.0):
            rows.append(
                SampleMargins(
                    index=i,
                    label=float(y),
                    score=float(score),
                    output_margin=0.0,
                    input_margin_upper=0.0,
                    input_margin_certificate=0.0,
                    jacobian_sup=0.0,
                    certificate_samples=0,
                    misclassified=True,
                    flags=[MISCLASSIFIED],
                )
            )
            continue
        certificate = certify(net, x, cfg)
        rows.append(
            SampleMargins(
                index=i,
                label=float(y),
                score=float(score),
                output_margin=certificate.output_margin,
                input_margin_upper=certificate.search.upper,
                input_margin_certificate=certificate.value,
                jacobian_sup=certificate.jacobian_sup,
                certificate_samples=certificate.samples,
                flags=[certificate.flag] if certificate.flag else [],
            )
        )

    report = MarginReport(rows, cfg.ball_samples, cfg.tol)
    logger.info(
        f"Margin report over {len(rows)} samples: {report.misclassified_count} misclassified, "
        f"{report.sandwich_violations()} sandwich violations"
    )
    return report
