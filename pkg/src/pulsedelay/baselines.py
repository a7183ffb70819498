"""Comparison estimators: OMP over the pulse dictionary and leakage-blind SAGE.

Both are told the true number of paths.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .pulse import DelayGrid, SensingModel, SubcarrierMask
from .sbl import EstimationResult

RIDGE = 1e-12


@dataclass(frozen=True)
class OmpConfig:
    num_paths: int = 3

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError("num_paths must be at least 1")


@dataclass(frozen=True)
class SageConfig:
    num_paths: int = 3
    search_grid: DelayGrid = field(default_factory=DelayGrid)
    convergence_tol: float = 1e-4
    max_iterations: int = 1000

    def __post_init__(self):
        if self.num_paths < 1 or self.max_iterations < 1:
            raise ValueError("num_paths and max_iterations must be at least 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")


def _least_squares(Bs: np.ndarray, y: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(Bs, y, rcond=None)
    if rank < Bs.shape[1]:
        warnings.warn(f"OMP support of size {Bs.shape[1]} is rank deficient (rank {rank}); "
                      f"using a {RIDGE:g} ridge", RuntimeWarning, stacklevel=3)
        G = Bs.conj().T @ Bs + RIDGE * np.eye(Bs.shape[1])
        coef = np.linalg.solve(G, Bs.conj().T @ y)
    return coef


def omp_estimate(y: np.ndarray, model: SensingModel, cfg: OmpConfig) -> EstimationResult:
    """Greedy support search with least-squares refit after every pick.

    Selection uses the norm-normalised correlation ``|b_m^H r| / ||b_m||``;
    ties go to the lowest column index.
    """
    B = model.sensing_matrix
    if cfg.num_paths > B.shape[1]:
        raise ValueError(f"num_paths {cfg.num_paths} exceeds dictionary size {B.shape[1]}")
    y = np.asarray(y, dtype=np.complex128)
    norms = np.linalg.norm(B, axis=0)
    norms = np.where(norms > 0, norms, np.inf)
    BH = B.conj().T
    available = np.ones(B.shape[1], dtype=bool)
    support: list[int] = []
    r = y.copy()
    coef = np.zeros(0, dtype=np.complex128)
    for _ in range(cfg.num_paths):
        score = np.abs(BH @ r) / norms
        score[~available] = -np.inf
        m = int(np.argmax(score))
        support.append(m)
        available[m] = False
        coef = _least_squares(B[:, support], y)
        r = y - B[:, support] @ coef
    support_arr = np.array(support)
    order = np.argsort(model.column_delays_ns[support_arr], kind="stable")
    support_arr, coef = support_arr[order], coef[order]
    return EstimationResult(model.column_delays_ns[support_arr].copy(), coef,
                            B[:, support_arr] @ coef, cfg.num_paths, True)


def steering_vector(delay_ns, mask: SubcarrierMask, sampling_period_ns: float) -> np.ndarray:
    """Response of an ideal, unshaped path: ``exp(-j 2 pi k tau / (K T))`` on each used ``k``.

    A vector of delays gives one column per delay.
    """
    tau = np.asarray(delay_ns, dtype=np.float64)
    period = mask.fft_size * sampling_period_ns
    # reduce the phase in cycles before scaling by 2*pi
    cycles = np.mod(np.multiply.outer(mask.indices, tau) / period, 1.0)
    return np.exp(-2j * np.pi * cycles)


def sage_estimate(y: np.ndarray, mask: SubcarrierMask, cfg: SageConfig,
                  sampling_period_ns: float) -> EstimationResult:
    """SAGE with exhaustive grid search in each M-step.

    Paths are initialised one at a time by successive cancellation, then
    refined cyclically: the E-step strips the other paths' contributions
    from ``y``, the M-step maximises ``|s(tau)^H x|^2 / ||s(tau)||^2`` over the
    search grid and sets the amplitude to the matched-filter output.
    """
    y = np.asarray(y, dtype=np.complex128)
    grid = cfg.search_grid.delays_ns
    S = steering_vector(grid, mask, sampling_period_ns)
    SH = S.conj().T
    energy = np.sum(np.abs(S) ** 2, axis=0)
    L = cfg.num_paths
    idx = np.zeros(L, dtype=np.int64)
    amp = np.zeros(L, dtype=np.complex128)

    def m_step(x: np.ndarray) -> tuple[int, complex]:
        corr = SH @ x
        m = int(np.argmax(np.abs(corr) ** 2 / energy))
        return m, corr[m] / energy[m]

    x = y.copy()
    for ell in range(L):
        idx[ell], amp[ell] = m_step(x)
        x = x - amp[ell] * S[:, idx[ell]]

    converged = False
    iterations = 0
    while iterations < cfg.max_iterations:
        iterations += 1
        prev = amp.copy()
        for ell in range(L):
            fit = S[:, idx] @ amp
            x_ell = y - fit + amp[ell] * S[:, idx[ell]]
            idx[ell], amp[ell] = m_step(x_ell)
        change = np.linalg.norm(amp - prev) / max(np.linalg.norm(prev), 1e-30)
        if change < cfg.convergence_tol:
            converged = True
            break

    y_hat = S[:, idx] @ amp
    order = np.argsort(grid[idx], kind="stable")
    return EstimationResult(grid[idx][order], amp[order], y_hat, iterations, converged)
