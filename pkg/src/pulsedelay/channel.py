"""Ground-truth multipath channels and noisy partial-band CSI."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pulse import DelayGrid, PulseConfig, SubcarrierMask, eval_pulse


@dataclass(frozen=True, eq=False)
class GroundTruthChannel:
    """Physical paths: delays in ns (strictly increasing) and complex amplitudes."""

    delays_ns: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.delays_ns, dtype=np.float64))
        a = np.atleast_1d(np.asarray(self.amplitudes, dtype=np.complex128))
        if d.shape != a.shape or d.ndim != 1:
            raise ValueError("delays_ns and amplitudes must be 1-D vectors of equal length")
        if d.size == 0:
            raise ValueError("a channel needs at least one path")
        if np.any(d < 0) or np.any(np.diff(d) <= 0):
            raise ValueError("delays must be non-negative and strictly increasing")
        if np.any(a == 0):
            raise ValueError("path amplitudes must be nonzero")
        object.__setattr__(self, "delays_ns", d)
        object.__setattr__(self, "amplitudes", a)

    @property
    def num_paths(self) -> int:
        return self.delays_ns.size

    def fits_grid(self, grid: DelayGrid) -> bool:
        return bool(self.delays_ns[-1] <= grid.max_delay_ns)

    def to_dict(self) -> dict:
        return {
            "delays_ns": self.delays_ns.tolist(),
            "amplitudes_re": self.amplitudes.real.tolist(),
            "amplitudes_im": self.amplitudes.imag.tolist(),
        }


@dataclass(frozen=True)
class ChannelProfile:
    """Deterministic power-delay profile; only the path phases are random.

    The first path has power ``10**(snr_db/10) * noise_variance`` and every
    following path is ``per_path_decay_db`` weaker than its predecessor.
    """

    delays_ns: tuple[float, ...] = (24.0, 65.0, 103.0)
    snr_db: float = 30.0
    per_path_decay_db: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "delays_ns", tuple(float(d) for d in self.delays_ns))

    def path_powers(self, noise_variance: float) -> np.ndarray:
        steps = np.arange(len(self.delays_ns))
        return noise_variance * 10.0 ** ((self.snr_db - steps * self.per_path_decay_db) / 10.0)


@dataclass(frozen=True, eq=False)
class CsiMeasurement:
    y: np.ndarray
    y_clean: np.ndarray
    mask: SubcarrierMask
    noise_variance: float


def sample_channel(profile: ChannelProfile, noise_variance: float,
                   rng: np.random.Generator) -> GroundTruthChannel:
    """Draw one channel realisation: fixed magnitudes, i.i.d. uniform phases."""
    if not profile.delays_ns:
        raise ValueError("profile has no paths")
    if not noise_variance > 0:
        raise ValueError(f"noise_variance must be positive, got {noise_variance}")
    power = profile.path_powers(noise_variance)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=power.size)
    return GroundTruthChannel(np.array(profile.delays_ns), np.sqrt(power) * np.exp(1j * phase))


def synthesize_cir(gt: GroundTruthChannel, pulse: PulseConfig, cir_length: int) -> np.ndarray:
    """Sampled composite channel ``h_n = sum_l alpha_l g(nT - tau_l)``, ``n = 0..N-1``."""
    t = np.arange(cir_length) * pulse.sampling_period_ns
    taps = eval_pulse(t[:, None] - gt.delays_ns[None, :], pulse)
    return taps @ gt.amplitudes


def synthesize_csi(cir: np.ndarray, mask: SubcarrierMask) -> np.ndarray:
    """Frequency response of ``cir`` on the used subcarriers of a ``K``-point DFT."""
    cir = np.asarray(cir)
    if cir.ndim != 1:
        raise ValueError("cir must be a vector")
    if cir.size > mask.fft_size:
        raise ValueError(f"cir length {cir.size} exceeds fft_size {mask.fft_size}")
    # zero-padded FFT, same twiddles as the partial DFT matrix
    return np.fft.fft(cir, n=mask.fft_size)[mask.indices]


def add_noise(y_clean: np.ndarray, noise_variance: float,
              rng: np.random.Generator) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise of per-element variance ``noise_variance``."""
    if noise_variance < 0:
        raise ValueError(f"noise_variance must be non-negative, got {noise_variance}")
    y_clean = np.asarray(y_clean, dtype=np.complex128)
    n = rng.standard_normal((2, y_clean.size))
    return y_clean + np.sqrt(noise_variance / 2.0) * (n[0] + 1j * n[1])


def measure(gt: GroundTruthChannel, pulse: PulseConfig, mask: SubcarrierMask,
            cir_length: int, noise_variance: float,
            rng: np.random.Generator) -> CsiMeasurement:
    y_clean = synthesize_csi(synthesize_cir(gt, pulse, cir_length), mask)
    return CsiMeasurement(add_noise(y_clean, noise_variance, rng), y_clean, mask, noise_variance)
