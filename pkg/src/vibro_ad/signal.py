"""Vibration signal container, spectra and band energies."""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import FormatError, InvalidBand, InvalidSignal

WindowKind = Literal["rectangular", "hann"]

MIN_SPECTRUM_SAMPLES = 8
BINARY_MAGIC = b"VIB1"


class EmptyBandWarning(UserWarning):
    """A band-energy query did not cover any spectral bin."""


@dataclass(frozen=True)
class VibrationSignal:
    """Uniformly sampled acceleration record."""

    samples: np.ndarray
    sample_rate: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64).ravel()
        if x.size == 0:
            raise InvalidSignal("signal has no samples")
        if not np.all(np.isfinite(x)):
            raise InvalidSignal("signal contains NaN or Inf")
        fs = float(self.sample_rate)
        if not np.isfinite(fs) or fs <= 0:
            raise InvalidSignal(f"sample_rate must be positive, got {self.sample_rate!r}")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", fs)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0


@dataclass(frozen=True)
class Spectrum:
    """One-sided amplitude spectrum.

    ``magnitudes`` are amplitude-corrected: a tone of amplitude A centred on a
    bin reads A at that bin. ``enbw`` is the equivalent noise bandwidth of the
    window in bins (1 for rectangular).
    """

    bin_freqs: np.ndarray
    magnitudes: np.ndarray
    df: float
    n_samples: int
    window: str = "rectangular"
    enbw: float = 1.0

    def __post_init__(self):
        if len(self.bin_freqs) != len(self.magnitudes):
            raise ValueError("bin_freqs and magnitudes differ in length")

    @property
    def has_nyquist(self) -> bool:
        return self.n_samples % 2 == 0

    def peak(self, exclude_dc: bool = True) -> tuple[float, float]:
        """(frequency, magnitude) of the largest bin."""
        start = 1 if exclude_dc and len(self.magnitudes) > 1 else 0
        i = start + int(np.argmax(self.magnitudes[start:]))
        return float(self.bin_freqs[i]), float(self.magnitudes[i])

    def total_energy(self) -> float:
        return float(np.sum(self.magnitudes**2))


def _window(kind: str, n: int) -> np.ndarray:
    if kind == "rectangular":
        return np.ones(n)
    if kind == "hann":
        # periodic Hann, the DFT-even form
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    raise ValueError(f"unknown window {kind!r}")


def compute_spectrum(signal: VibrationSignal, window: WindowKind = "rectangular") -> Spectrum:
    """One-sided amplitude spectrum with coherent-gain correction.

    df is exactly ``sample_rate / N``; no zero padding is applied.
    """
    x = signal.samples
    n = x.size
    if n < MIN_SPECTRUM_SAMPLES:
        raise InvalidSignal(f"need at least {MIN_SPECTRUM_SAMPLES} samples, got {n}")
    w = _window(window, n)
    coherent_gain = w.sum()
    mags = np.abs(np.fft.rfft(x * w)) / coherent_gain
    # DC and (for even N) Nyquist are not doubled
    stop = mags.size - 1 if n % 2 == 0 else mags.size
    mags[1:stop] *= 2.0
    df = signal.sample_rate / n
    enbw = n * float(np.sum(w**2)) / coherent_gain**2
    return Spectrum(
        bin_freqs=np.arange(mags.size) * df,
        magnitudes=mags,
        df=df,
        n_samples=n,
        window=window,
        enbw=enbw,
    )


def spectral_mean_square(spectrum: Spectrum) -> float:
    """Mean square of the time signal implied by an amplitude spectrum.

    Exact (Parseval) for the rectangular window; for other windows it is the
    ENBW-corrected estimate.
    """
    m2 = spectrum.magnitudes**2
    total = m2[0]
    if spectrum.has_nyquist:
        total += 0.5 * m2[1:-1].sum() + m2[-1]
    else:
        total += 0.5 * m2[1:].sum()
    return float(total / spectrum.enbw)


def analytic_envelope(signal: VibrationSignal, band: tuple[float, float]) -> np.ndarray:
    """Envelope of the band-limited analytic signal.

    The band pass is a brick-wall mask applied in the frequency domain, and
    the analytic signal is built by dropping negative frequencies.
    """
    low, high = float(band[0]), float(band[1])
    fs = signal.sample_rate
    if not (0.0 <= low < high <= fs / 2.0):
        raise InvalidBand(f"band ({low}, {high}) must satisfy 0 <= low < high <= {fs / 2.0}")
    x = signal.samples
    n = x.size
    spec = np.fft.fft(x)
    freqs = np.fft.fftfreq(n, d=1.0 / fs)
    positive = (freqs > 0) & (freqs >= low) & (freqs <= high)
    z = np.zeros(n, dtype=complex)
    z[positive] = 2.0 * spec[positive]
    if low == 0.0:
        z[0] = spec[0]
    if n % 2 == 0 and high >= fs / 2.0:
        # the Nyquist bin is its own mirror image
        z[n // 2] = spec[n // 2]
    if not positive.any() and low > 0.0:
        raise InvalidBand(f"band ({low}, {high}) contains no spectral bins at df={fs / n}")
    return np.abs(np.fft.ifft(z))


def envelope_spectrum(
    signal: VibrationSignal,
    band: tuple[float, float],
    window: WindowKind = "rectangular",
) -> Spectrum:
    """Amplitude spectrum of the band-passed envelope.

    The DC bin is kept: it carries the mean envelope level.
    """
    env = analytic_envelope(signal, band)
    return compute_spectrum(VibrationSignal(env, signal.sample_rate), window)


def band_energy(spectrum: Spectrum, center_hz: float, half_width_hz: float) -> float:
    """Sum of squared magnitudes with ``|f - center| <= half_width``."""
    if center_hz < 0:
        raise InvalidBand(f"center_hz must be >= 0, got {center_hz}")
    if half_width_hz <= 0:
        raise InvalidBand(f"half_width_hz must be > 0, got {half_width_hz}")
    # tolerate round-off at band edges
    tol = 1e-9 * max(spectrum.df, 1.0)
    sel = np.abs(spectrum.bin_freqs - center_hz) <= half_width_hz + tol
    if not sel.any():
        warnings.warn(
            f"band {center_hz}+/-{half_width_hz} Hz holds no bins", EmptyBandWarning, stacklevel=2
        )
        return 0.0
    return float(np.sum(spectrum.magnitudes[sel] ** 2))


# ---------------------------------------------------------------------------
# ingestion


def read_signal_csv(path: str | Path) -> VibrationSignal:
    """Read a one-column CSV whose first line is ``# sample_rate=<Hz>``."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        key, _, value = header.lstrip("#").strip().partition("=")
        if key.strip() != "sample_rate" or not value:
            raise FormatError(f"{path}: first line must be '# sample_rate=<Hz>'")
        try:
            fs = float(value)
        except ValueError:
            raise FormatError(f"{path}: bad sample rate {value!r}") from None
        rows = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    try:
        samples = np.array([float(r.split(",")[0]) for r in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return VibrationSignal(samples, fs, meta={"source": path.name})


def write_signal_csv(signal: VibrationSignal, path: str | Path) -> None:
    fs = signal.sample_rate
    rate = str(int(fs)) if fs.is_integer() else repr(fs)
    lines = [f"# sample_rate={rate}"]
    lines.extend(repr(float(v)) for v in signal.samples)
    Path(path).write_text("\n".join(lines) + "\n")


def read_signal_bin(path: str | Path) -> VibrationSignal:
    """Read the ``VIB1`` format: magic, u32 LE sample rate, f32 LE samples."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 8 or blob[:4] != BINARY_MAGIC:
        raise FormatError(f"{path}: missing VIB1 header")
    (fs,) = struct.unpack("<I", blob[4:8])
    if (len(blob) - 8) % 4:
        raise FormatError(f"{path}: payload is not a whole number of float32 values")
    samples = np.frombuffer(blob, dtype="<f4", offset=8).astype(np.float64)
    return VibrationSignal(samples, float(fs), meta={"source": path.name})


def write_signal_bin(signal: VibrationSignal, path: str | Path) -> None:
    fs = signal.sample_rate
    if not fs.is_integer() or fs >= 2**32:
        raise FormatError("VIB1 stores integer sample rates only")
    payload = np.asarray(signal.samples, dtype="<f4").tobytes()
    Path(path).write_bytes(BINARY_MAGIC + struct.pack("<I", int(fs)) + payload)


SIGNAL_SUFFIXES = {".csv": read_signal_csv, ".vib": read_signal_bin, ".bin": read_signal_bin}


def read_signal(path: str | Path) -> VibrationSignal:
    path = Path(path)
    reader = SIGNAL_SUFFIXES.get(path.suffix.lower())
    if reader is None:
        raise FormatError(f"{path}: unsupported signal file type")
    return reader(path)
