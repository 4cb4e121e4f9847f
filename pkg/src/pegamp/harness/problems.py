"""Random sensing matrices, sparse test signals and scoring metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..gamp import SensingOperator

SNR_CAP_DB = 300.0
FAMILIES = ("BG", "BE")


def generate_matrix(M: int, N: int, seed, center: bool = True) -> SensingOperator:
    """Gaussian matrix whose rows are centered and scaled to unit norm.

    Centering puts the all-ones vector in the null space; pass
    ``center=False`` when the signal has a mean that must be recovered.
    """
    if M < 1 or N < 1:
        raise ValueError("matrix dimensions must be positive")
    if N == 1 and center:
        raise ValueError("degenerate row")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((M, N))
    if center:
        a -= a.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("degenerate row")
    return SensingOperator(a / norms)


def generate_iid_matrix(M: int, N: int, seed) -> SensingOperator:
    """I.i.d. N(0, 1/M) entries, the ensemble the state evolution assumes."""
    if M < 1 or N < 1:
        raise ValueError("matrix dimensions must be positive")
    rng = np.random.default_rng(seed)
    return SensingOperator(rng.standard_normal((M, N)) / math.sqrt(M))


@dataclass(frozen=True)
class ProblemSpec:
    N: int
    M: int
    S: int
    family: str = "BG"
    noise_scale: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"signal family must be one of {FAMILIES}")
        if self.S < 1 or self.S > self.N:
            raise ValueError("infeasible sparsity")
        if self.noise_scale < 0:
            raise ValueError("noise scale must be non-negative")

    @classmethod
    def from_ratios(cls, N: int, sigma: float, rho: float, family: str = "BG",
                    noise_scale: float = 0.0) -> "ProblemSpec":
        M = max(1, int(round(sigma * N)))
        return cls(N, M, int(round(rho * M)), family, noise_scale)


@dataclass(frozen=True)
class Problem:
    A: SensingOperator
    x: np.ndarray
    y: np.ndarray
    noise: np.ndarray


def generate_problem(spec: ProblemSpec, seed, iid: bool = False) -> Problem:
    """Sparse signal with a uniformly random support, measured as y = A x + nu w."""
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    matrix_seed, signal_seed = ss.spawn(2)
    make = generate_iid_matrix if iid else generate_matrix
    A = make(spec.M, spec.N, matrix_seed)
    rng = np.random.default_rng(signal_seed)
    x = np.zeros(spec.N)
    support = rng.choice(spec.N, size=spec.S, replace=False)
    if spec.family == "BG":
        x[support] = rng.standard_normal(spec.S)
    else:
        x[support] = rng.exponential(1.0, size=spec.S)
    noise = spec.noise_scale * rng.standard_normal(spec.M)
    return Problem(A, x, A.forward(x) + noise, noise)


def relative_error(x_true, x_hat) -> float:
    x_true = np.asarray(x_true, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_true.shape != x_hat.shape:
        raise ValueError("length mismatch")
    ref = float(np.linalg.norm(x_true))
    if ref == 0:
        raise ValueError("undefined relative error")
    return float(np.linalg.norm(x_true - x_hat)) / ref


def success(x_true, x_hat, threshold: float = 1e-3) -> bool:
    return relative_error(x_true, x_hat) < threshold


def snr(x_true, x_hat) -> float:
    """Reconstruction SNR in dB, capped at 300 dB for exact recovery."""
    err = relative_error(x_true, x_hat)
    if err == 0:
        return SNR_CAP_DB
    return min(-20.0 * math.log10(err), SNR_CAP_DB)


def psnr(img_true, img_hat, peak: float = 255.0) -> float:
    img_true = np.asarray(img_true, dtype=np.float64)
    img_hat = np.asarray(img_hat, dtype=np.float64)
    if img_true.shape != img_hat.shape:
        raise ValueError("image shapes differ")
    mse = float(np.mean((img_true - img_hat) ** 2))
    if mse == 0:
        return SNR_CAP_DB
    return min(10.0 * math.log10(peak * peak / mse), SNR_CAP_DB)


def measurement_snr(problem: Problem) -> float:
    """SNR of y in dB: clean measurement energy over noise energy."""
    clean = problem.y - problem.noise
    noise = float(problem.noise @ problem.noise)
    if noise == 0:
        return SNR_CAP_DB
    return 10.0 * math.log10(float(clean @ clean) / noise)
