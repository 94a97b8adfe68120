# -*- coding: utf-8 -*-
"""Training losses and class balancing weights with analytic gradients.

These are per-sample values: how a trainer sums or averages them over the
pixels of an image or the anchors of a batch is left to the trainer.
"""
import numpy as np

from .exceptions import BadLossInput

EPSILON = 1e-7

FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25
CLASSIFICATION_WEIGHT = 1.5

PIXELS = "pixels"
IMAGES = "images"


def _clamp(p):
    return np.clip(p, EPSILON, 1.0)


def _vector(values, name):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise BadLossInput("`{}` must be a non-empty vector.".format(name))
    if not np.all(np.isfinite(values)):
        raise BadLossInput("`{}` has non-finite entries.".format(name))
    return values


def _one_hot(y):
    y = _vector(y, "y")
    if not (np.all((y == 0) | (y == 1)) and y.sum() == 1):
        raise BadLossInput("`y` must be one-hot, got `{}`.".format(y.tolist()))
    return y


def _probabilities(y_hat, size=None):
    y_hat = _vector(y_hat, "y_hat")
    if np.any(y_hat < 0):
        raise BadLossInput("`y_hat` has negative entries.")
    if size is not None and y_hat.size != size:
        raise BadLossInput(
            "`y_hat` has {} classes, expected {}.".format(y_hat.size, size)
        )
    return y_hat


def _weights(alpha, size):
    alpha = _vector(alpha, "alpha")
    if alpha.size != size:
        raise BadLossInput(
            "`alpha` has {} weights, expected {}.".format(alpha.size, size)
        )
    if np.any(alpha < 0):
        raise BadLossInput("`alpha` has negative weights.")
    return alpha


def weighted_ce(y, y_hat, alpha):
    """Weighted categorical cross-entropy ``-sum(alpha_i * y_i * log y_hat_i)``.

    `y_hat` is clamped to ``EPSILON`` before the logarithm.
    """
    y = _one_hot(y)
    y_hat = _probabilities(y_hat, y.size)
    alpha = _weights(alpha, y.size)
    return float(-np.sum(alpha * y * np.log(_clamp(y_hat))))


def weighted_ce_gradient(y, y_hat, alpha):
    y = _one_hot(y)
    y_hat = _probabilities(y_hat, y.size)
    alpha = _weights(alpha, y.size)
    return -alpha * y / _clamp(y_hat)


def median_frequency_weights(class_pixel_counts, mode=PIXELS):
    """Median frequency balancing weights ``median(f) / f_c``.

    :param class_pixel_counts:
        Per-class pixel counts. With ``mode="pixels"`` a vector of C counts
        over the whole dataset; with ``mode="images"`` an (images, C) matrix,
        where a class frequency only counts the pixels of the images that
        contain the class.

    :returns:
        A vector of C weights; absent classes get 0. The median is taken over
        the classes that are present.
    """
    counts = np.asarray(class_pixel_counts, dtype=np.float64)
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise BadLossInput("Class counts must be finite and non-negative.")

    if mode == PIXELS:
        if counts.ndim != 1:
            raise BadLossInput("Pixel mode expects a vector of class counts.")
        per_class = counts
        totals = np.full_like(counts, counts.sum())
    elif mode == IMAGES:
        if counts.ndim != 2:
            raise BadLossInput("Image mode expects an (images, classes) matrix.")
        per_class = counts.sum(axis=0)
        image_totals = counts.sum(axis=1)
        totals = np.array(
            [image_totals[counts[:, c] > 0].sum() for c in range(counts.shape[1])]
        )
    else:
        raise BadLossInput("Frequency mode `{}` not valid.".format(mode))

    present = per_class > 0
    if not present.any():
        raise BadLossInput("All class counts are zero.")

    frequencies = np.zeros_like(per_class)
    frequencies[present] = per_class[present] / totals[present]
    median = np.median(frequencies[present])

    weights = np.zeros_like(per_class)
    weights[present] = median / frequencies[present]
    return weights


def _true_probability(y_hat, true_class):
    y_hat = _probabilities(y_hat)
    if not 0 <= true_class < y_hat.size:
        raise BadLossInput(
            "Class `{}` out of range for {} classes.".format(true_class, y_hat.size)
        )
    return y_hat, float(_clamp(y_hat[true_class]))


def _focal_parameters(gamma, alpha_t):
    if gamma < 0:
        raise BadLossInput("`gamma` should not be negative: {}".format(gamma))
    if not 0.0 <= alpha_t <= 1.0:
        raise BadLossInput("`alpha_t` not in [0, 1]: {}".format(alpha_t))


def cross_entropy(y_hat, true_class):
    _, p_t = _true_probability(y_hat, true_class)
    return float(-np.log(p_t))


def focal_loss(y_hat, true_class, gamma=FOCAL_GAMMA, alpha_t=FOCAL_ALPHA):
    """``-alpha_t * (1 - p_t) ** gamma * log(p_t)`` with ``p_t = y_hat[true_class]``."""
    _focal_parameters(gamma, alpha_t)
    _, p_t = _true_probability(y_hat, true_class)
    return float(-alpha_t * (1.0 - p_t) ** gamma * np.log(p_t))


def focal_gradient(y_hat, true_class, gamma=FOCAL_GAMMA, alpha_t=FOCAL_ALPHA):
    """Gradient of :func:`focal_loss` with respect to `y_hat`.

    Only the true-class entry is non-zero.
    """
    _focal_parameters(gamma, alpha_t)
    y_hat, p_t = _true_probability(y_hat, true_class)
    q = 1.0 - p_t
    if q == 0.0:
        modulated = 0.0
    else:
        modulated = gamma * q ** (gamma - 1.0) * np.log(p_t)
    grad = np.zeros_like(y_hat)
    grad[true_class] = alpha_t * (modulated - q ** gamma / p_t)
    return grad


def smooth_l1(x):
    x = float(x)
    if not np.isfinite(x):
        raise BadLossInput("`x` must be finite, got `{}`.".format(x))
    ax = abs(x)
    return 0.5 * x * x if ax < 1.0 else ax - 0.5


def smooth_l1_gradient(x):
    """Derivative of :func:`smooth_l1`; the quadratic branch owns ``|x| = 1``."""
    x = float(x)
    if not np.isfinite(x):
        raise BadLossInput("`x` must be finite, got `{}`.".format(x))
    return np.array([x if abs(x) <= 1.0 else float(np.sign(x))])


def detection_loss(
    classification_term, regression_term, classification_weight=CLASSIFICATION_WEIGHT
):
    terms = (classification_term, regression_term)
    if not all(np.isfinite(t) for t in terms):
        raise BadLossInput("Loss terms must be finite, got `{}`.".format(terms))
    return classification_weight * classification_term + regression_term


def detection_loss_gradient(
    classification_term,
    regression_term,
    classification_weight=CLASSIFICATION_WEIGHT,
):
    detection_loss(classification_term, regression_term, classification_weight)
    return np.array([classification_weight, 1.0])


GRADIENTS = {
    weighted_ce: weighted_ce_gradient,
    focal_loss: focal_gradient,
    smooth_l1: smooth_l1_gradient,
    detection_loss: detection_loss_gradient,
}


def gradient(loss, *args, **kwargs):
    """Analytic gradient of `loss` at the given inputs.

    Example::

        gradient(weighted_ce, y, y_hat, alpha)   # d/d y_hat
        gradient(smooth_l1, 3.0)                 # array([1.0])
    """
    try:
        analytic = GRADIENTS[loss]
    except (KeyError, TypeError):
        raise BadLossInput("No analytic gradient for `{}`.".format(loss))
    return analytic(*args, **kwargs)
