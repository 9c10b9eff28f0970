"""Shared generators and sampling oracles for the test suite."""

import numpy as np
from scipy.ndimage import gaussian_filter

from perceptiq import GrayImage


def natural_like(seed, h=96, w=96, contrast=45.0):
    """Synthetic natural-looking image: mixed-scale smoothed noise.

    Correlated structure at several scales gives heavy-tailed normalized
    coefficients and texture in every tile, which is what the feature
    pipeline expects of clean photographic content.
    """
    rng = np.random.default_rng(seed)
    acc = np.zeros((h, w))
    for sigma, amp in ((1.0, 0.6), (3.0, 1.0), (8.0, 1.6)):
        acc += amp * gaussian_filter(rng.standard_normal((h, w)), sigma, mode="reflect")
    acc = (acc - acc.mean()) / acc.std()
    return GrayImage(np.clip(128.0 + contrast * acc, 0.0, 255.0))


def add_noise(img, sigma, seed):
    if sigma == 0:
        return img
    rng = np.random.default_rng(seed)
    return GrayImage(np.clip(img.data + rng.normal(0.0, sigma, img.shape), 0.0, 255.0))


def blur(img, sigma):
    return GrayImage(gaussian_filter(img.data, sigma, mode="reflect"))


def sample_ggd(rng, alpha, beta, n):
    """Draw from the symmetric generalized Gaussian.

    |X| = beta * G**(1/alpha) with G ~ Gamma(1/alpha, 1) gives the correct
    magnitude law; the sign is a fair coin.  alpha=2, beta=sqrt(2) is the
    standard normal, alpha=1 the unit Laplacian.
    """
    mag = beta * rng.gamma(1.0 / alpha, 1.0, n) ** (1.0 / alpha)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return sign * mag


def sample_aggd(rng, gamma, beta_l, beta_r, n):
    """Draw from the asymmetric generalized Gaussian.

    Side mass is proportional to the side scale; within a side the magnitude
    follows the one-sided law with that scale.
    """
    left = rng.random(n) < beta_l / (beta_l + beta_r)
    mag = rng.gamma(1.0 / gamma, 1.0, n) ** (1.0 / gamma)
    return np.where(left, -beta_l * mag, beta_r * mag)
