"""Perceptual quality of perturbations: alignment, structural similarity
and the combined score.

The combined score registers the perturbed image onto the original with
an intensity-invariant correlation maximizer (forward-additive update on
a translation/affine/homography model), then measures structural
similarity of the aligned pair.  Identical images score exactly 1.0.
All quality math runs in float64.
"""

from dataclasses import dataclass

import numpy as np

from featmimic import kernels

_LUMA = (0.299, 0.587, 0.114)


def to_grayscale(image) -> np.ndarray:
    """Map an image to a float64 (h, w) luminance plane.

    Accepts (h, w), (1, h, w) or (3, h, w) channel-first arrays; color
    collapses with weights 0.299 / 0.587 / 0.114.
    """
    a = np.asarray(image, dtype=np.float64)
    if a.ndim == 2:
        return a.copy()
    if a.ndim == 3 and a.shape[0] == 1:
        return a[0].copy()
    if a.ndim == 3 and a.shape[0] == 3:
        return _LUMA[0] * a[0] + _LUMA[1] * a[1] + _LUMA[2] * a[2]
    raise ValueError(f"expected (h,w), (1,h,w) or (3,h,w), got {a.shape}")


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def ssim(a, b, data_range: float = 255.0) -> float:
    """Mean structural similarity over an 11x11 Gaussian window (sigma 1.5).

    Stabilizers use K1=0.01 and K2=0.03 on the given dynamic range.  The
    statistics come from valid-mode filtering, so inputs must be at least
    11 pixels on each side.
    """
    ia = np.asarray(a, dtype=np.float64)
    ib = np.asarray(b, dtype=np.float64)
    if ia.shape != ib.shape or ia.ndim != 2:
        raise ValueError("ssim expects two equally shaped 2-d images")
    if min(ia.shape) < 11:
        raise ValueError("ssim needs images of at least 11x11 pixels")
    k = _gaussian_kernel()
    mu_a = kernels.sepfilter2d_valid(ia, k)
    mu_b = kernels.sepfilter2d_valid(ib, k)
    s_aa = kernels.sepfilter2d_valid(ia * ia, k) - mu_a * mu_a
    s_bb = kernels.sepfilter2d_valid(ib * ib, k) - mu_b * mu_b
    s_ab = kernels.sepfilter2d_valid(ia * ib, k) - mu_a * mu_b
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * s_ab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (s_aa + s_bb + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class EccConfig:
    model: str = "homography"
    max_iterations: int = 100
    epsilon: float = 0.01

    def __post_init__(self):
        if self.model not in ("translation", "affine", "homography"):
            raise ValueError(f"unknown motion model {self.model!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class MotionModel:
    """Recovered warp as a 3x3 matrix (last entry normalized to 1)."""

    model: str
    matrix: np.ndarray


@dataclass(frozen=True)
class EccResult:
    aligned: np.ndarray
    transform: MotionModel
    correlation: float
    iterations: int
    fallback: bool


_N_PARAMS = {"translation": 2, "affine": 6, "homography": 8}


def _params_to_matrix(model, p):
    m = np.eye(3, dtype=np.float64)
    if model == "translation":
        m[0, 2], m[1, 2] = p
    elif model == "affine":
        m[0, :] = p[0:3]
        m[1, :] = p[3:6]
    else:
        m[0, :] = p[0:3]
        m[1, :] = p[3:6]
        m[2, 0], m[2, 1] = p[6], p[7]
    return m


def _identity_params(model):
    if model == "translation":
        return np.zeros(2)
    if model == "affine":
        return np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    return np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])


def _jacobian(model, wgx, wgy, xs, ys, m):
    gx = wgx.ravel()
    gy = wgy.ravel()
    x = xs.ravel()
    y = ys.ravel()
    if model == "translation":
        return np.stack([gx, gy], axis=1)
    if model == "affine":
        return np.stack([gx * x, gx * y, gx, gy * x, gy * y, gy], axis=1)
    den = m[2, 0] * x + m[2, 1] * y + 1.0
    wx = (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / den
    wy = (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / den
    gxd = gx / den
    gyd = gy / den
    mix = gxd * wx + gyd * wy
    return np.stack(
        [gxd * x, gxd * y, gxd, gyd * x, gyd * y, gyd, -mix * x, -mix * y],
        axis=1,
    )


def ecc_align(moving, fixed, config: EccConfig = EccConfig()) -> EccResult:
    """Warp ``moving`` onto ``fixed`` by maximizing their enhanced
    correlation coefficient.

    Forward-additive iterations from the identity warp; stops when the
    correlation improves by less than ``config.epsilon`` or the iteration
    budget runs out.  Sampling is bilinear with border replication.  The
    returned warp is the best one observed, so the result never
    correlates worse than the identity start.  Degenerate inputs (zero
    variance) and singular normal equations fall back to the identity
    warp with ``fallback=True``.
    """
    mov = np.asarray(moving, dtype=np.float64)
    fix = np.asarray(fixed, dtype=np.float64)
    if mov.shape != fix.shape or mov.ndim != 2:
        raise ValueError("ecc_align expects two equally shaped 2-d images")
    if min(mov.shape) < 3:
        raise ValueError("images too small to align")
    h, w = fix.shape
    identity = MotionModel(config.model, np.eye(3, dtype=np.float64))
    if float(mov.std()) == 0.0 or float(fix.std()) == 0.0:
        return EccResult(mov.copy(), identity, 0.0, 0, True)

    fix_zm = (fix - fix.mean()).ravel()
    norm_fix = float(np.sqrt(np.dot(fix_zm, fix_zm)))
    gy, gx = np.gradient(mov)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    p = _identity_params(config.model)
    best_rho = -np.inf
    best_m = np.eye(3, dtype=np.float64)
    prev_rho = None
    iterations = 0
    for _ in range(config.max_iterations):
        m = _params_to_matrix(config.model, p)
        warped = kernels.warp_bilinear(mov, m, h, w)
        iw_zm = (warped - warped.mean()).ravel()
        norm_iw = float(np.sqrt(np.dot(iw_zm, iw_zm)))
        if norm_iw == 0.0:
            return EccResult(mov.copy(), identity, 0.0, iterations, True)
        corr = float(np.dot(fix_zm, iw_zm))
        rho = corr / (norm_fix * norm_iw)
        if not np.isfinite(rho):
            return EccResult(mov.copy(), identity, 0.0, iterations, True)
        iterations += 1
        if rho > best_rho:
            best_rho = rho
            best_m = m.copy()
        if prev_rho is not None and abs(rho - prev_rho) < config.epsilon:
            break
        prev_rho = rho
        wgx = kernels.warp_bilinear(gx, m, h, w)
        wgy = kernels.warp_bilinear(gy, m, h, w)
        jac = _jacobian(config.model, wgx, wgy, xs, ys, m)
        hess = jac.T @ jac
        try:
            hess_inv = np.linalg.inv(hess)
        except np.linalg.LinAlgError:
            return EccResult(mov.copy(), identity, 0.0, iterations, True)
        proj_fix = jac.T @ fix_zm
        proj_iw = jac.T @ iw_zm
        num = norm_iw * norm_iw - float(proj_iw @ hess_inv @ proj_iw)
        den = corr - float(proj_fix @ hess_inv @ proj_iw)
        if den <= 0.0:
            return EccResult(mov.copy(), identity, 0.0, iterations, True)
        err = (num / den) * fix_zm - iw_zm
        p = p + hess_inv @ (jac.T @ err)

    aligned = kernels.warp_bilinear(mov, best_m, h, w)
    return EccResult(
        aligned, MotionModel(config.model, best_m), best_rho, iterations, False
    )


@dataclass(frozen=True)
class PassResult:
    """Perceptual score in [~0, 1] plus the alignment fallback flag."""

    score: float
    align_fallback: bool


def pass_score(perturbed, original, config: EccConfig = EccConfig()) -> PassResult:
    """Structural similarity of the perturbed image after aligning it
    onto the original.  1.0 means perceptually identical."""
    gray_p = to_grayscale(perturbed)
    gray_o = to_grayscale(original)
    if gray_p.shape != gray_o.shape:
        raise ValueError("image shapes differ")
    res = ecc_align(gray_p, gray_o, config)
    return PassResult(float(ssim(res.aligned, gray_o)), res.fallback)


def perturbation_norms(perturbed, original):
    """(l2, linf) of the raw pixel difference, in float64."""
    p = np.asarray(perturbed, dtype=np.float64)
    o = np.asarray(original, dtype=np.float64)
    if p.shape != o.shape:
        raise ValueError("image shapes differ")
    d = (p - o).ravel()
    l2 = float(np.sqrt(np.dot(d, d)))
    linf = float(np.max(np.abs(d))) if d.size else 0.0
    return l2, linf
