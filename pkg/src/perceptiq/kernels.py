"""Low-level numeric kernels, in numba and pure-numpy variants.

Everything here works on plain float64 arrays; the typed wrappers live in
:mod:`perceptiq.nss`.  Each public function dispatches on the active backend
(see :mod:`perceptiq.backend`).  The two variants keep the same tap and
accumulation order, so they agree to float64 round-off.

The generalized-Gaussian fits use moment matching against tables evaluated
once at import on a fixed shape grid (0.2 to 10.0, step 0.001).  Targets
falling outside a table are clamped to the nearest end and flagged.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gamma as _gamma_fn

from . import backend
from .backend import njit

# Shape-parameter grid and the moment-ratio tables derived from it.  The
# tables are passed into the jit kernels as arguments rather than read as
# globals, so the compiled code never bakes them in as constants.
ALPHA_GRID = np.linspace(0.2, 10.0, 9801)
_G1 = _gamma_fn(1.0 / ALPHA_GRID)
_G2 = _gamma_fn(2.0 / ALPHA_GRID)
_G3 = _gamma_fn(3.0 / ALPHA_GRID)

GGD_RHO = _G1 * _G3 / (_G2 * _G2)  # rho(alpha), strictly decreasing
GGD_BETA = _G1 / _G2  # beta = mean|x| * GGD_BETA[i]
AGGD_RGAM = (_G2 * _G2) / (_G1 * _G3)  # strictly increasing
AGGD_BETA = np.sqrt(_G1 / _G3)  # beta_side = sigma_side * AGGD_BETA[i]
AGGD_ETA = _G2 / _G1  # eta = (beta_l - beta_r) * AGGD_ETA[i]

# Fit status codes shared by both backends.
FIT_OK = 0
FIT_DEGENERATE = 1  # no nonzero samples
FIT_ONE_SIDED = 2  # all nonzero samples share a sign


def gaussian_kernel(window: int) -> np.ndarray:
    """Normalized 1-d Gaussian taps for a given odd window, sigma = window/6."""
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    r = window // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    sigma = window / 6.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def box_kernel(window: int) -> np.ndarray:
    """Uniform 1-d taps (moving average) for a given odd window."""
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    return np.full(window, 1.0 / window)


# ---------------------------------------------------------------------------
# nearest-index lookups on monotone tables
#
# Both backends bisect with the same comparisons, so ties resolve to the
# same index either way.  Second return value is 1 when the target fell
# outside the table and the end index was used.


@njit(cache=True)
def _nearest_desc(arr, t):
    n = arr.size
    if t >= arr[0]:
        return 0, (1 if t > arr[0] else 0)
    if t <= arr[n - 1]:
        return n - 1, (1 if t < arr[n - 1] else 0)
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if arr[mid] >= t:
            lo = mid
        else:
            hi = mid
    if arr[lo] - t <= t - arr[hi]:
        return lo, 0
    return hi, 0


@njit(cache=True)
def _nearest_asc(arr, t):
    n = arr.size
    if t <= arr[0]:
        return 0, (1 if t < arr[0] else 0)
    if t >= arr[n - 1]:
        return n - 1, (1 if t > arr[n - 1] else 0)
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if arr[mid] <= t:
            lo = mid
        else:
            hi = mid
    if t - arr[lo] <= arr[hi] - t:
        return lo, 0
    return hi, 0


def _nearest_desc_py(arr, t):
    n = arr.size
    if t >= arr[0]:
        return 0, (1 if t > arr[0] else 0)
    if t <= arr[n - 1]:
        return n - 1, (1 if t < arr[n - 1] else 0)
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if arr[mid] >= t:
            lo = mid
        else:
            hi = mid
    if arr[lo] - t <= t - arr[hi]:
        return lo, 0
    return hi, 0


def _nearest_asc_py(arr, t):
    n = arr.size
    if t <= arr[0]:
        return 0, (1 if t < arr[0] else 0)
    if t >= arr[n - 1]:
        return n - 1, (1 if t > arr[n - 1] else 0)
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if arr[mid] <= t:
            lo = mid
        else:
            hi = mid
    if t - arr[lo] <= arr[hi] - t:
        return lo, 0
    return hi, 0


# ---------------------------------------------------------------------------
# local mean / deviation maps (separable correlation, mirrored borders)


@njit(cache=True)
def _correlate2_jit(a, k):
    h, w = a.shape
    r = k.size // 2
    tmp = np.empty((h, w))
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            s = 0.0
            for t in range(-r, r + 1):
                jj = j + t
                if jj < 0:
                    jj = -jj
                elif jj >= w:
                    jj = 2 * w - 2 - jj
                s += k[t + r] * a[i, jj]
            tmp[i, j] = s
    for i in range(h):
        for j in range(w):
            s = 0.0
            for t in range(-r, r + 1):
                ii = i + t
                if ii < 0:
                    ii = -ii
                elif ii >= h:
                    ii = 2 * h - 2 - ii
                s += k[t + r] * tmp[ii, j]
            out[i, j] = s
    return out


@njit(cache=True)
def _local_stats_jit(a, k):
    mu = _correlate2_jit(a, k)
    m2 = _correlate2_jit(a * a, k)
    h, w = a.shape
    sigma = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            v = m2[i, j] - mu[i, j] * mu[i, j]
            sigma[i, j] = np.sqrt(v) if v > 0.0 else 0.0
    return mu, sigma


def _correlate1_np(a, k, axis):
    r = k.size // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    ap = np.pad(a, pad, mode="reflect")
    n = a.shape[axis]
    out = np.zeros_like(a)
    for t in range(k.size):
        if axis == 1:
            out += k[t] * ap[:, t : t + n]
        else:
            out += k[t] * ap[t : t + n, :]
    return out


def _local_stats_np(a, k):
    mu = _correlate1_np(_correlate1_np(a, k, 1), k, 0)
    m2 = _correlate1_np(_correlate1_np(a * a, k, 1), k, 0)
    sigma = np.sqrt(np.maximum(m2 - mu * mu, 0.0))
    return mu, sigma


def local_stats(img: np.ndarray, kernel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Local weighted mean and deviation maps of ``img``.

    Returns ``(mu, sigma)``, both the same shape as the input.  Borders are
    handled by mirror reflection without repeating the edge sample, and
    ``sigma`` is clipped at zero before the square root.
    """
    a = np.ascontiguousarray(img, dtype=np.float64)
    k = np.ascontiguousarray(kernel, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    if k.size > min(a.shape):
        raise ValueError(
            f"window {k.size} larger than smallest image side {min(a.shape)}"
        )
    if backend.use_numba():
        return _local_stats_jit(a, k)
    return _local_stats_np(a, k)


# ---------------------------------------------------------------------------
# moment-matching fits


@njit(cache=True)
def _ggd_fit_jit(x, alpha_grid, rho_desc, beta_fac):
    n = x.size
    sa = 0.0
    sq = 0.0
    for i in range(n):
        v = x[i]
        sa += abs(v)
        sq += v * v
    if n == 0 or sq <= 0.0:
        return 0.0, 0.0, 0, FIT_DEGENERATE
    mean_abs = sa / n
    t = (sq / n) / (mean_abs * mean_abs)  # 1/r, matched against rho(alpha)
    idx, clamped = _nearest_desc(rho_desc, t)
    return alpha_grid[idx], mean_abs * beta_fac[idx], clamped, FIT_OK


def _ggd_fit_np(x):
    n = x.size
    if n == 0:
        return 0.0, 0.0, 0, FIT_DEGENERATE
    sq = float(np.mean(x * x))
    if sq <= 0.0:
        return 0.0, 0.0, 0, FIT_DEGENERATE
    mean_abs = float(np.mean(np.abs(x)))
    t = sq / (mean_abs * mean_abs)
    idx, clamped = _nearest_desc_py(GGD_RHO, t)
    return float(ALPHA_GRID[idx]), mean_abs * float(GGD_BETA[idx]), clamped, FIT_OK


@njit(cache=True)
def _aggd_fit_jit(x, alpha_grid, rgam_asc, beta_fac, eta_fac):
    n = x.size
    nl = 0
    nr = 0
    sl = 0.0
    sr = 0.0
    sa = 0.0
    for i in range(n):
        v = x[i]
        if v < 0.0:
            sl += v * v
            nl += 1
        elif v > 0.0:
            sr += v * v
            nr += 1
        sa += abs(v)
    if nl == 0 or nr == 0:
        return 0.0, 0.0, 0.0, 0.0, 0, FIT_ONE_SIDED
    sigma_l = np.sqrt(sl / nl)
    sigma_r = np.sqrt(sr / nr)
    gh = sigma_l / sigma_r
    mean_abs = sa / n
    rhat = mean_abs * mean_abs / ((sl + sr) / n)
    gh2 = gh * gh
    rnorm = rhat * (gh * gh2 + 1.0) * (gh + 1.0) / ((gh2 + 1.0) * (gh2 + 1.0))
    idx, clamped = _nearest_asc(rgam_asc, rnorm)
    bl = sigma_l * beta_fac[idx]
    br = sigma_r * beta_fac[idx]
    eta = (bl - br) * eta_fac[idx]
    return alpha_grid[idx], bl, br, eta, clamped, FIT_OK


def _aggd_fit_np(x):
    n = x.size
    if n == 0:
        return 0.0, 0.0, 0.0, 0.0, 0, FIT_ONE_SIDED
    neg = x[x < 0.0]
    pos = x[x > 0.0]
    if neg.size == 0 or pos.size == 0:
        return 0.0, 0.0, 0.0, 0.0, 0, FIT_ONE_SIDED
    sigma_l = float(np.sqrt(np.mean(neg * neg)))
    sigma_r = float(np.sqrt(np.mean(pos * pos)))
    gh = sigma_l / sigma_r
    mean_abs = float(np.mean(np.abs(x)))
    rhat = mean_abs * mean_abs / float(np.mean(x * x))
    gh2 = gh * gh
    rnorm = rhat * (gh * gh2 + 1.0) * (gh + 1.0) / ((gh2 + 1.0) * (gh2 + 1.0))
    idx, clamped = _nearest_asc_py(AGGD_RGAM, rnorm)
    bl = sigma_l * float(AGGD_BETA[idx])
    br = sigma_r * float(AGGD_BETA[idx])
    eta = (bl - br) * float(AGGD_ETA[idx])
    return float(ALPHA_GRID[idx]), bl, br, eta, clamped, FIT_OK


def ggd_fit(x: np.ndarray) -> tuple[float, float, int, int]:
    """Moment-matching symmetric fit; returns (alpha, beta, clamped, status)."""
    a = np.ascontiguousarray(x, dtype=np.float64).ravel()
    if backend.use_numba():
        al, be, cl, st = _ggd_fit_jit(a, ALPHA_GRID, GGD_RHO, GGD_BETA)
        return float(al), float(be), int(cl), int(st)
    return _ggd_fit_np(a)


def aggd_fit(x: np.ndarray) -> tuple[float, float, float, float, int, int]:
    """Moment-matching asymmetric fit.

    Returns (gamma, beta_l, beta_r, eta, clamped, status).  Zeros are kept in
    the overall moments but count toward neither side's deviation.
    """
    a = np.ascontiguousarray(x, dtype=np.float64).ravel()
    if backend.use_numba():
        g, bl, br, e, cl, st = _aggd_fit_jit(a, ALPHA_GRID, AGGD_RGAM, AGGD_BETA, AGGD_ETA)
        return float(g), float(bl), float(br), float(e), int(cl), int(st)
    return _aggd_fit_np(a)


# ---------------------------------------------------------------------------
# 18-dimensional patch descriptor
#
# Layout, frozen for serialized models:
#   [0]  ggd alpha        [1]  ggd beta
#   [2:6]   horizontal products   (gamma, beta_l, beta_r, eta)
#   [6:10]  vertical products
#   [10:14] main-diagonal products
#   [14:18] anti-diagonal products
# Neighbour products come from plain slicing, so nothing wraps around the
# patch border.


@njit(cache=True)
def _patch18_jit(c, alpha_grid, rho_desc, ggd_beta, rgam_asc, aggd_beta, eta_fac):
    out = np.zeros(18)
    al, be, _cl, st = _ggd_fit_jit(c.ravel(), alpha_grid, rho_desc, ggd_beta)
    if st != FIT_OK:
        return out, st
    out[0] = al
    out[1] = be

    ph = (c[:, :-1] * c[:, 1:]).ravel()
    g, bl, br, e, _cl, st = _aggd_fit_jit(ph, alpha_grid, rgam_asc, aggd_beta, eta_fac)
    if st != FIT_OK:
        return out, st
    out[2] = g
    out[3] = bl
    out[4] = br
    out[5] = e

    pv = (c[:-1, :] * c[1:, :]).ravel()
    g, bl, br, e, _cl, st = _aggd_fit_jit(pv, alpha_grid, rgam_asc, aggd_beta, eta_fac)
    if st != FIT_OK:
        return out, st
    out[6] = g
    out[7] = bl
    out[8] = br
    out[9] = e

    pd1 = (c[:-1, :-1] * c[1:, 1:]).ravel()
    g, bl, br, e, _cl, st = _aggd_fit_jit(pd1, alpha_grid, rgam_asc, aggd_beta, eta_fac)
    if st != FIT_OK:
        return out, st
    out[10] = g
    out[11] = bl
    out[12] = br
    out[13] = e

    pd2 = (c[:-1, 1:] * c[1:, :-1]).ravel()
    g, bl, br, e, _cl, st = _aggd_fit_jit(pd2, alpha_grid, rgam_asc, aggd_beta, eta_fac)
    if st != FIT_OK:
        return out, st
    out[14] = g
    out[15] = bl
    out[16] = br
    out[17] = e
    return out, FIT_OK


def _patch18_np(c):
    out = np.zeros(18)
    al, be, _cl, st = _ggd_fit_np(c.ravel())
    if st != FIT_OK:
        return out, st
    out[0] = al
    out[1] = be
    products = (
        c[:, :-1] * c[:, 1:],
        c[:-1, :] * c[1:, :],
        c[:-1, :-1] * c[1:, 1:],
        c[:-1, 1:] * c[1:, :-1],
    )
    k = 2
    for p in products:
        g, bl, br, e, _cl, st = _aggd_fit_np(np.ascontiguousarray(p).ravel())
        if st != FIT_OK:
            return out, st
        out[k] = g
        out[k + 1] = bl
        out[k + 2] = br
        out[k + 3] = e
        k += 4
    return out, FIT_OK


def patch_feature18(coeff_patch: np.ndarray) -> tuple[np.ndarray, int]:
    """18-vector of fit parameters for one square block of coefficients."""
    c = np.ascontiguousarray(coeff_patch, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] < 2 or c.shape[1] < 2:
        raise ValueError(f"patch must be 2-d with sides >= 2, got shape {c.shape}")
    if backend.use_numba():
        vec, st = _patch18_jit(
            c, ALPHA_GRID, GGD_RHO, GGD_BETA, AGGD_RGAM, AGGD_BETA, AGGD_ETA
        )
        return vec, int(st)
    return _patch18_np(c)


def warm_up() -> None:
    """Compile the jit kernels on tiny inputs so later calls run at speed."""
    if not backend.use_numba():
        return
    rng = np.random.default_rng(0)
    a = rng.standard_normal((8, 8))
    local_stats(a, gaussian_kernel(3))
    ggd_fit(a.ravel())
    aggd_fit(a.ravel())
    patch_feature18(a)
