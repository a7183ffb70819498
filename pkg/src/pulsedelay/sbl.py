"""Variational sparse Bayesian learning over a delay dictionary.

The measurement model is ``y = B @ alpha + n`` with a complex Gaussian prior
``alpha_m ~ CN(0, 1/gamma_m)``, Gamma hyperpriors on every ``gamma_m`` and on
the noise precision ``beta``, and a mean-field posterior
``q(alpha) q(gamma) q(beta)`` refined by coordinate ascent.

The dictionary is handled in factored form ``B = outer @ atoms``.  For the
pulse model ``outer`` is the ``|I| x N`` partial DFT and ``atoms`` the real
``N x M`` pulse dictionary, so the Woodbury inner system is only ``N x N``.
A plain matrix ``B`` is factored as ``I @ B``, which reduces the inner system
to the familiar ``(I + beta B D^-1 B^H)^-1``.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.special import digamma, gammaln

from .pulse import SensingModel

TraceFn = Callable[[dict], None]


class NumericalFailure(RuntimeError):
    """A posterior precision matrix lost positive definiteness.

    ``state`` holds the estimator state at the moment of failure.
    """

    def __init__(self, message: str, state: "SblState | None" = None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class SblHyperparams:
    a: float = 1e-6
    b: float = 1e-6
    c: float = 1e-6
    d: float = 1e-6
    prune_threshold: float = 1e5
    max_paths: int = 10
    min_separation_ns: float = 5.0
    convergence_tol: float = 1e-4
    max_iterations: int = 1000

    def __post_init__(self):
        for name in ("a", "b", "c", "d", "min_separation_ns", "convergence_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        # the running minimum must survive its own threshold
        if not self.prune_threshold > 1:
            raise ValueError(f"prune_threshold must exceed 1, got {self.prune_threshold}")
        if self.max_paths < 1 or self.max_iterations < 1:
            raise ValueError("max_paths and max_iterations must be at least 1")


@dataclass(eq=False)
class SblState:
    """Mutable estimator state over the active (unpruned) grid points.

    ``posterior_var`` always holds ``diag(Sigma)``; the full ``posterior_cov``
    is only materialised on request or when the active set is small.
    """

    active_index: np.ndarray
    active_delays_ns: np.ndarray
    atoms: np.ndarray
    outer: np.ndarray
    gram_chol: np.ndarray
    gamma_mean: np.ndarray
    noise_precision_mean: float
    iteration: int = 0
    posterior_mean: np.ndarray | None = None
    posterior_var: np.ndarray | None = None
    posterior_cov: np.ndarray | None = None
    expected_sq_residual: float | None = None
    residual_norm: float | None = None
    logdet_cov: float | None = None

    @property
    def num_active(self) -> int:
        return self.active_index.size

    @property
    def active_matrix(self) -> np.ndarray:
        return self.outer @ self.atoms


@dataclass(eq=False)
class EstimationResult:
    delays_ns: np.ndarray
    amplitudes: np.ndarray
    reconstructed_csi: np.ndarray
    iterations_used: int
    converged: bool

    @property
    def num_paths(self) -> int:
        return int(self.delays_ns.size)

    def to_dict(self) -> dict:
        return {
            "delays_ns": self.delays_ns.tolist(),
            "amplitudes_re": self.amplitudes.real.tolist(),
            "amplitudes_im": self.amplitudes.imag.tolist(),
            "num_paths": self.num_paths,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
        }


def _factor(model) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a dictionary into ``(outer, atoms, delays)`` with ``B = outer @ atoms``."""
    if isinstance(model, SensingModel):
        F, A = model.partial_dft, model.time_dictionary
        if F.shape[1] < F.shape[0] and np.linalg.cond(F) < 1e8:
            return F, A, model.column_delays_ns
        B = model.sensing_matrix
        return np.eye(B.shape[0], dtype=np.complex128), B, model.column_delays_ns
    B = np.asarray(model, dtype=np.complex128)
    if B.ndim != 2:
        raise ValueError("dictionary must be a matrix")
    return np.eye(B.shape[0], dtype=np.complex128), B, np.arange(B.shape[1], dtype=np.float64)


def init_state(model, hp: SblHyperparams, delays_ns: np.ndarray | None = None) -> SblState:
    """Start from the full grid with ``<gamma_m> = a/b`` and ``<beta> = c/d``.

    ``model`` is a :class:`SensingModel` or a plain ``|I| x M`` matrix.
    """
    outer, atoms, grid_delays = _factor(model)
    if delays_ns is not None:
        grid_delays = np.asarray(delays_ns, dtype=np.float64)
    M = atoms.shape[1]
    return SblState(
        active_index=np.arange(M),
        active_delays_ns=np.array(grid_delays, dtype=np.float64),
        atoms=atoms,
        outer=outer,
        gram_chol=np.linalg.cholesky(outer.conj().T @ outer),
        gamma_mean=np.full(M, hp.a / hp.b),
        noise_precision_mean=hp.c / hp.d,
    )


def _cholesky(P: np.ndarray, state: SblState) -> np.ndarray:
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"posterior precision not positive definite at iteration "
                               f"{state.iteration} with {state.num_active} active atoms",
                               copy.copy(state)) from exc


def _apply(atoms: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``atoms @ z`` without promoting a real ``atoms`` to complex."""
    if np.iscomplexobj(atoms):
        return atoms @ z
    out = atoms @ np.ascontiguousarray(z).view(np.float64).reshape(-1, 2)
    return out[..., 0] + 1j * out[..., 1]


def _hermitian_inverse(L: np.ndarray) -> np.ndarray:
    Linv = sla.solve_triangular(L, np.eye(L.shape[0]), lower=True, check_finite=False)
    return Linv.conj().T @ Linv


def woodbury_inverse(B: np.ndarray, gamma: np.ndarray, beta: float) -> np.ndarray:
    """``(beta B^H B + diag(gamma))^-1`` through an ``|I| x |I|`` inner inverse."""
    B = np.asarray(B, dtype=np.complex128)
    Dinv = 1.0 / np.asarray(gamma, dtype=np.float64)
    BD = B * Dinv
    inner = np.eye(B.shape[0]) + beta * (BD @ B.conj().T)
    K = np.linalg.solve(inner, BD)
    return np.diag(Dinv) - beta * (BD.conj().T @ K)


def update_alpha_posterior(state: SblState, y: np.ndarray, full_cov: bool = False) -> SblState:
    """Gaussian posterior of the amplitudes given ``<gamma>`` and ``<beta>``.

    Uses the Woodbury identity whenever the active set is larger than the
    inner dimension of the factored dictionary, and a direct Cholesky
    inverse otherwise.
    """
    beta = state.noise_precision_mean
    gam = state.gamma_mean
    At, outer = state.atoms, state.outer
    T = At.shape[1]
    N = At.shape[0]
    z = outer.conj().T @ y

    if T > N:
        # with outer^H outer = R R^H the inner system I + beta R^H S R is
        # Hermitian with eigenvalues >= 1, however badly conditioned R is
        R = state.gram_chol
        Dinv = 1.0 / gam
        S = (At * Dinv) @ At.conj().T
        inner = beta * (R.conj().T @ S @ R)
        inner[np.diag_indices(N)] += 1.0
        L = _cholesky(inner, state)
        Minv = _hermitian_inverse(L)
        Q = R @ Minv @ R.conj().T
        if np.iscomplexobj(At):
            QA = Q @ At
            q = np.einsum("ij,ij->j", At.conj(), QA).real
        else:
            # imaginary part of a Hermitian Q drops out of a real quadratic form
            QA = np.ascontiguousarray(Q.real) @ At
            q = np.einsum("ij,ij->j", At, QA)
        var = np.maximum(Dinv - beta * Dinv * Dinv * q, 0.0)
        w = sla.solve_triangular(R, z, lower=True, check_finite=False)
        mu = beta * Dinv * _apply(At.conj().T, R @ (Minv @ w))
        trace = float(Dinv @ q)
        logdet = -(float(np.sum(np.log(gam))) + 2.0 * float(np.sum(np.log(L.diagonal().real))))
        cov = None
        if full_cov:
            AQA = At.conj().T @ Q @ At
            cov = np.diag(Dinv).astype(np.complex128) - beta * (Dinv[:, None] * AQA * Dinv[None, :])
    else:
        Bt = outer @ At
        H = Bt.conj().T @ Bt
        P = beta * H
        P[np.diag_indices(T)] += gam
        L = _cholesky(P, state)
        cov = _hermitian_inverse(L)
        mu = beta * (cov @ (Bt.conj().T @ y))
        var = cov.diagonal().real.copy()
        trace = float(np.sum(cov * H.T).real)
        logdet = -2.0 * float(np.sum(np.log(L.diagonal().real)))

    r = y - outer @ _apply(At, mu)
    rr = float(np.vdot(r, r).real)
    state.posterior_mean = mu
    state.posterior_var = var
    state.posterior_cov = cov
    state.residual_norm = math.sqrt(rr)
    state.expected_sq_residual = rr + trace
    state.logdet_cov = logdet
    return state


def update_gamma_posterior(state: SblState, hp: SblHyperparams) -> SblState:
    mu = state.posterior_mean
    second_moment = mu.real ** 2 + mu.imag ** 2 + state.posterior_var
    state.gamma_mean = (hp.a + 1.0) / (hp.b + second_moment)
    return state


def update_noise_posterior(state: SblState, y: np.ndarray, hp: SblHyperparams) -> SblState:
    state.noise_precision_mean = (hp.c + np.size(y)) / (hp.d + state.expected_sq_residual)
    return state


def prune_basis(state: SblState, hp: SblHyperparams) -> SblState:
    """Drop every atom whose ``<gamma_m>`` exceeds ``prune_threshold`` times the minimum."""
    gam = state.gamma_mean
    keep = gam <= hp.prune_threshold * gam.min()
    if keep.all():
        return state
    state.active_index = state.active_index[keep]
    state.active_delays_ns = state.active_delays_ns[keep]
    state.atoms = state.atoms[:, keep]
    state.gamma_mean = gam[keep]
    if state.posterior_mean is not None:
        state.posterior_mean = state.posterior_mean[keep]
        state.posterior_var = state.posterior_var[keep]
    # recomputed on the next alpha update
    state.posterior_cov = None
    return state


def relative_change(prev: SblState, state: SblState) -> float:
    """Relative change of the posterior mean over atoms active in both states."""
    pos = np.searchsorted(prev.active_index, state.active_index)
    pos = np.minimum(pos, prev.active_index.size - 1)
    common = prev.active_index[pos] == state.active_index
    old = prev.posterior_mean[pos[common]]
    new = state.posterior_mean[common]
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(old), 1e-30))


def check_convergence(prev: SblState, state: SblState, hp: SblHyperparams) -> bool:
    """Stop when amplitudes settle below ``convergence_tol`` or the iteration budget is spent."""
    if state.iteration >= hp.max_iterations:
        return True
    return relative_change(prev, state) < hp.convergence_tol


def select_delays(state: SblState, hp: SblHyperparams) -> np.ndarray:
    """Pick final grid points (positions in ``state.active_index``), sorted by delay.

    At most ``max_paths`` atoms with the smallest ``<gamma>`` are considered,
    in ascending ``<gamma>`` order; an atom is discarded when it lies within
    ``min_separation_ns`` of any atom ranked before it.
    """
    order = np.argsort(state.gamma_mean, kind="stable")[: hp.max_paths]
    d = state.active_delays_ns[order]
    keep = [i for i in range(order.size)
            if not np.any(np.abs(d[:i] - d[i]) <= hp.min_separation_ns)]
    chosen = order[keep]
    return chosen[np.argsort(state.active_delays_ns[chosen], kind="stable")]


def _snapshot(state: SblState) -> SblState:
    # update functions rebind arrays rather than writing into them
    return copy.copy(state)


def _trace_record(state: SblState, stage: str) -> dict:
    return {
        "stage": stage,
        "iteration": state.iteration,
        "num_active": state.num_active,
        "noise_precision": state.noise_precision_mean,
        "gamma_min": float(state.gamma_mean.min()),
        "gamma_max": float(state.gamma_mean.max()),
        "residual_norm": state.residual_norm,
    }


def iterate(state: SblState, y: np.ndarray, hp: SblHyperparams, prune: bool = True,
            trace: TraceFn | None = None, stage: str = "search") -> tuple[SblState, bool]:
    """Run update cycles until convergence; returns the state and whether amplitudes settled."""
    prev = None
    settled = False
    while True:
        state.iteration += 1
        update_alpha_posterior(state, y)
        update_gamma_posterior(state, hp)
        update_noise_posterior(state, y, hp)
        if prune:
            prune_basis(state, hp)
        if trace is not None:
            trace(_trace_record(state, stage))
        if prev is not None and check_convergence(prev, state, hp):
            settled = relative_change(prev, state) < hp.convergence_tol
            break
        if state.iteration >= hp.max_iterations:
            break
        prev = _snapshot(state)
    return state, settled


def refine_amplitudes(y: np.ndarray, model, selected: np.ndarray, hp: SblHyperparams,
                      trace: TraceFn | None = None) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Re-run the updates on the selected atoms only, without pruning.

    ``selected`` indexes columns of the full dictionary.  Returns the posterior
    mean amplitudes, the cleaned CSI ``B_sel @ mu``, the iteration count and
    whether the amplitudes settled.
    """
    state = init_state(model, hp)
    state.active_index = state.active_index[selected]
    state.active_delays_ns = state.active_delays_ns[selected]
    state.atoms = state.atoms[:, selected]
    state.gamma_mean = state.gamma_mean[selected]
    state, settled = iterate(state, y, hp, prune=False, trace=trace, stage="refine")
    y_hat = state.outer @ _apply(state.atoms, state.posterior_mean)
    return state.posterior_mean, y_hat, state.iteration, settled


def run(y: np.ndarray, model, hp: SblHyperparams | None = None,
        trace: TraceFn | None = None) -> EstimationResult:
    """Full estimator: grid search with pruning, delay selection, amplitude refinement."""
    hp = hp or SblHyperparams()
    y = np.asarray(y, dtype=np.complex128)
    state = init_state(model, hp)
    state, settled = iterate(state, y, hp, prune=True, trace=trace)
    picked = select_delays(state, hp)
    if picked.size == 0:
        return EstimationResult(np.empty(0), np.empty(0, dtype=np.complex128),
                                np.zeros_like(y), state.iteration, settled)
    grid_index = state.active_index[picked]
    amplitudes, y_hat, _, _ = refine_amplitudes(y, model, grid_index, hp, trace=trace)
    return EstimationResult(state.active_delays_ns[picked].copy(), amplitudes, y_hat,
                            state.iteration, settled)


def compute_elbo(state: SblState, y: np.ndarray, hp: SblHyperparams) -> float:
    """Evidence lower bound after a full alpha/gamma/beta cycle.

    ``q(alpha)`` is the stored Gaussian; ``q(gamma_m)`` and ``q(beta)`` are the
    Gamma posteriors whose means are the current ``<gamma_m>`` and ``<beta>``.
    """
    a, b, c, d = hp.a, hp.b, hp.c, hp.d
    P = np.size(y)
    T = state.num_active
    shape_g = a + 1.0
    rate_g = shape_g / state.gamma_mean
    shape_b = c + P
    rate_b = shape_b / state.noise_precision_mean
    e_gamma = state.gamma_mean
    e_beta = state.noise_precision_mean
    e_log_gamma = digamma(shape_g) - np.log(rate_g)
    e_log_beta = digamma(shape_b) - math.log(rate_b)
    mu = state.posterior_mean
    second_moment = mu.real ** 2 + mu.imag ** 2 + state.posterior_var
    log_pi = math.log(math.pi)

    likelihood = P * (e_log_beta - log_pi) - e_beta * state.expected_sq_residual
    prior_alpha = np.sum(e_log_gamma - log_pi - e_gamma * second_moment)
    prior_gamma = np.sum(a * math.log(b) - gammaln(a) + (a - 1.0) * e_log_gamma - b * e_gamma)
    prior_beta = c * math.log(d) - gammaln(c) + (c - 1.0) * e_log_beta - d * e_beta
    h_alpha = T * (log_pi + 1.0) + state.logdet_cov
    h_gamma = np.sum(shape_g - np.log(rate_g) + gammaln(shape_g) + (1.0 - shape_g) * digamma(shape_g))
    h_beta = shape_b - math.log(rate_b) + gammaln(shape_b) + (1.0 - shape_b) * digamma(shape_b)
    return float(likelihood + prior_alpha + prior_gamma + prior_beta + h_alpha + h_gamma + h_beta)
