"""Truncated raised-cosine pulse, delay-grid dictionary and partial-DFT sensing matrix."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# |2*rolloff*t/T - 1| below this is treated as the removable singularity
SINGULARITY_TOL = 1e-9


@dataclass(frozen=True)
class PulseConfig:
    """Composite (TX * RX) raised-cosine pulse.

    Parameters
    ----------
    sampling_period_ns : float
        Sampling period ``T`` in nanoseconds.
    rolloff : float
        Roll-off factor in ``(0, 1]``.
    half_length_taps : int
        Truncation half-length ``L_p``; the pulse vanishes for ``|t| > L_p * T``.
    """

    sampling_period_ns: float = 50.0
    rolloff: float = 0.05
    half_length_taps: int = 8

    def __post_init__(self):
        if not self.sampling_period_ns > 0:
            raise ValueError(f"sampling_period_ns must be positive, got {self.sampling_period_ns}")
        if not 0 < self.rolloff <= 1:
            raise ValueError(f"rolloff must lie in (0, 1], got {self.rolloff}")
        if int(self.half_length_taps) != self.half_length_taps or self.half_length_taps < 1:
            raise ValueError(f"half_length_taps must be a positive integer, got {self.half_length_taps}")

    @property
    def support_ns(self) -> float:
        return self.half_length_taps * self.sampling_period_ns


@dataclass(frozen=True)
class DelayGrid:
    """Uniform candidate delays ``m * resolution_ns`` for ``m = 0..num_points-1``."""

    resolution_ns: float = 1.0
    num_points: int = 850

    def __post_init__(self):
        if not self.resolution_ns > 0:
            raise ValueError(f"resolution_ns must be positive, got {self.resolution_ns}")
        if int(self.num_points) != self.num_points or self.num_points < 1:
            raise ValueError(f"num_points must be a positive integer, got {self.num_points}")

    @property
    def delays_ns(self) -> np.ndarray:
        return np.arange(self.num_points) * self.resolution_ns

    @property
    def max_delay_ns(self) -> float:
        return (self.num_points - 1) * self.resolution_ns


def _wifi_used_subcarriers() -> tuple[int, ...]:
    return tuple(range(1, 27)) + tuple(range(38, 64))


@dataclass(frozen=True)
class SubcarrierMask:
    """FFT size ``K`` and the ordered set of subcarriers carrying data/pilots."""

    fft_size: int = 64
    used_indices: tuple[int, ...] = field(default_factory=_wifi_used_subcarriers)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.used_indices)
        object.__setattr__(self, "used_indices", idx)
        if self.fft_size < 1:
            raise ValueError(f"fft_size must be positive, got {self.fft_size}")
        if not idx:
            raise ValueError("used_indices must be non-empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("used_indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= self.fft_size:
            raise ValueError(f"used_indices must lie in [0, {self.fft_size - 1}]")

    @property
    def indices(self) -> np.ndarray:
        return np.asarray(self.used_indices, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.used_indices)


def _sinc(x: np.ndarray) -> np.ndarray:
    # reduce the argument so that integer x gives an exact zero
    k = np.rint(x)
    sign = np.where(np.mod(k, 2) == 0, 1.0, -1.0)
    num = sign * np.sin(np.pi * (x - k))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / (np.pi * x)
    return np.where(x == 0, 1.0, out)


def eval_pulse(t_ns, cfg: PulseConfig):
    """Evaluate the truncated raised-cosine pulse ``g(t)``.

    Accepts a scalar or an array of times (ns) and returns the same shape.
    The removable singularity at ``|t| = T / (2 * rolloff)`` is replaced by
    its limit ``(pi / 4) * sinc(1 / (2 * rolloff))``.
    """
    t = np.asarray(t_ns, dtype=np.float64)
    # |t| makes the pulse exactly even
    x = np.abs(t) / cfg.sampling_period_ns
    u = 2.0 * cfg.rolloff * x
    singular = np.abs(u - 1.0) < SINGULARITY_TOL
    with np.errstate(invalid="ignore", divide="ignore"):
        shaped = np.cos(np.pi * cfg.rolloff * x) / (1.0 - u * u)
    # cos(pi u / 2) / (1 - u^2) -> pi / 4 as u -> 1
    shaped = np.where(singular, np.pi / 4.0, shaped)
    g = _sinc(x) * shaped
    g = np.where(x > cfg.half_length_taps, 0.0, g)
    return float(g) if g.ndim == 0 else g


def build_time_dictionary(pulse: PulseConfig, grid: DelayGrid, cir_length: int) -> np.ndarray:
    """Real ``N x M`` matrix with entries ``g(n*T - m*T_g)``."""
    if cir_length < 1:
        raise ValueError(f"cir_length must be positive, got {cir_length}")
    n = np.arange(cir_length) * pulse.sampling_period_ns
    return eval_pulse(n[:, None] - grid.delays_ns[None, :], pulse)


def build_partial_dft(mask: SubcarrierMask, cir_length: int) -> np.ndarray:
    """Rows ``I`` and the first ``N`` columns of the ``K``-point DFT matrix."""
    if cir_length < 1:
        raise ValueError(f"cir_length must be positive, got {cir_length}")
    if cir_length > mask.fft_size:
        raise ValueError(f"cir_length {cir_length} exceeds fft_size {mask.fft_size}")
    # reduce k*n mod K before scaling to keep the twiddles exact
    kn = np.outer(mask.indices, np.arange(cir_length)) % mask.fft_size
    return np.exp(-2j * np.pi * kn / mask.fft_size)


@dataclass(frozen=True, eq=False)
class SensingModel:
    """Everything an estimator needs to map grid amplitudes to measured CSI.

    ``sensing_matrix`` equals ``partial_dft @ time_dictionary``; the two factors
    are kept because the estimators exploit ``N < |I|``.
    """

    pulse: PulseConfig
    grid: DelayGrid
    mask: SubcarrierMask
    cir_length: int
    time_dictionary: np.ndarray
    partial_dft: np.ndarray
    sensing_matrix: np.ndarray
    column_delays_ns: np.ndarray

    @property
    def num_measurements(self) -> int:
        return self.sensing_matrix.shape[0]

    @property
    def num_atoms(self) -> int:
        return self.sensing_matrix.shape[1]


def build_sensing_model(
    pulse: PulseConfig | None = None,
    grid: DelayGrid | None = None,
    mask: SubcarrierMask | None = None,
    cir_length: int = 32,
) -> SensingModel:
    pulse = pulse or PulseConfig()
    grid = grid or DelayGrid()
    mask = mask or SubcarrierMask()
    A = build_time_dictionary(pulse, grid, cir_length)
    F = build_partial_dft(mask, cir_length)
    for arr in (A, F):
        arr.setflags(write=False)
    B = F @ A
    B.setflags(write=False)
    delays = grid.delays_ns
    delays.setflags(write=False)
    return SensingModel(pulse, grid, mask, cir_length, A, F, B, delays)
