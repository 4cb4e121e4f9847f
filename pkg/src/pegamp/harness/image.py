"""Compressive imaging with a DCT sparsifying basis.

The image is sensed as ``y = Phi v + noise`` with ``v`` the vectorized image
and ``Phi`` a row-normalized Gaussian matrix.  Recovery works on the basis
coefficients ``x`` with ``v = Psi^T x``, so the solver sees ``A = Phi Psi^T``.
"""

from __future__ import annotations

import math
from importlib import resources
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy.fft import dctn, idctn

from ..gamp import DivergenceError, SensingOperator, SolverOptions
from .problems import Problem, generate_matrix, psnr
from .sweeps import IMAGE_COLUMNS, SweepResult, _coord, solve

MAX_SIDE = 64


class Basis(Protocol):
    def analyze(self, image: np.ndarray) -> np.ndarray: ...

    def synthesize(self, coeffs: np.ndarray, shape: tuple) -> np.ndarray: ...

    def compose(self, phi: np.ndarray, shape: tuple) -> np.ndarray: ...


class DctBasis:
    """Orthonormal 2-D DCT-II, coefficients flattened row-major."""

    def analyze(self, image):
        return dctn(np.asarray(image, dtype=np.float64), norm="ortho").ravel()

    def synthesize(self, coeffs, shape):
        return idctn(np.asarray(coeffs).reshape(shape), norm="ortho")

    def compose(self, phi, shape):
        # row m of Phi Psi^T is Psi applied to row m of Phi
        rows = phi.reshape((phi.shape[0],) + tuple(shape))
        return dctn(rows, axes=(1, 2), norm="ortho").reshape(phi.shape[0], -1)


def bundled_image_path() -> Path:
    return Path(str(resources.files("pegamp") / "data" / "camera64.npy"))


def load_image(path=None) -> np.ndarray:
    """Grayscale image as a float array; ``.npy`` natively, other formats via Pillow."""
    path = Path(path) if path is not None else bundled_image_path()
    if path.suffix == ".npy":
        img = np.load(path)
    else:
        try:
            from PIL import Image
        except ImportError as exc:  # pragma: no cover - depends on the install
            raise ValueError("reading non-.npy images needs Pillow (pip install pegamp[image])") from exc
        img = np.asarray(Image.open(path).convert("L"))
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError("image must be square and grayscale")
    if img.shape[0] > MAX_SIDE:
        raise ValueError(f"image side exceeds {MAX_SIDE}")
    return img


def downsample(img: np.ndarray, factor: int) -> np.ndarray:
    side = img.shape[0]
    if side % factor:
        raise ValueError("factor must divide the image side")
    k = side // factor
    return img.reshape(k, factor, k, factor).mean(axis=(1, 3))


def image_problem(img: np.ndarray, sigma: float, snr_db: float, seed, basis: Basis = DctBasis()):
    """Sensing problem for one sampling ratio; ``snr_db = inf`` means noiseless."""
    shape = img.shape
    N = img.size
    M = max(1, int(round(sigma * N)))
    ss = np.random.SeedSequence([int(seed), _coord(sigma)])
    matrix_seed, noise_seed = ss.spawn(2)
    # uncentered rows: centering would hide the image mean (the DC coefficient)
    phi = generate_matrix(M, N, matrix_seed, center=False).entries
    clean = phi @ img.ravel()
    if math.isinf(snr_db):
        noise = np.zeros(M)
    else:
        scale = np.linalg.norm(clean) / math.sqrt(M) * 10.0 ** (-snr_db / 20.0)
        noise = scale * np.random.default_rng(noise_seed).standard_normal(M)
    A = SensingOperator(basis.compose(phi, shape))
    return Problem(A, basis.analyze(img), clean + noise, noise)


def run_image_recovery(
    img: np.ndarray,
    sigma_grid,
    snr_db: float = 30.0,
    variants=("pe_bgm", "pe_lasso"),
    opts: SolverOptions = SolverOptions(),
    seed: int = 0,
    basis: Basis = DctBasis(),
) -> SweepResult:
    """PSNR of each variant at each sampling ratio."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError("image must be square and grayscale")
    if img.shape[0] > MAX_SIDE:
        raise ValueError(f"image side exceeds {MAX_SIDE}")
    records = []
    for sigma in sigma_grid:
        if not 0 < sigma <= 1:
            raise ValueError("sampling ratios must lie in (0, 1]")
        problem = image_problem(img, sigma, snr_db, seed, basis)
        for variant in variants:
            if variant == "oracle":
                raise ValueError("the oracle variant is not defined for images")
            try:
                result = solve(variant, problem, None, opts)
                rec_img = basis.synthesize(result.x_hat, img.shape)
                score, iters = psnr(img, rec_img), result.iterations_used
            except DivergenceError as exc:
                score, iters = 0.0, exc.iteration
            records.append({"sigma": sigma, "variant": variant, "psnr_db": score,
                            "iterations": iters})
    config = {"sigma_grid": list(sigma_grid), "snr_db": snr_db, "variants": list(variants),
              "seed": seed, "side": img.shape[0]}
    return SweepResult("image", IMAGE_COLUMNS, records, config, {"seed": seed})
