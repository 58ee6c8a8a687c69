"""2-D frequency decomposition of latent tensors and band-limited difference norms.

Each (frame, channel) slice is transformed with a unitary 2-D DFT (forward and
inverse both scaled by 1/sqrt(H*W)), so Parseval holds with constant 1 and
band energies partition the spatial energy exactly. The low band is a centered
circular disk over signed frequency indices; everything else is the high band.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError
from .tensor import Tensor4

#: Default low-band radius as a fraction of min(H, W).
DEFAULT_RADIUS_SCALE = 0.2


@dataclass(frozen=True)
class FrequencyMask:
    """Boolean low-band membership grid over an (H, W) frequency plane."""

    height: int
    width: int
    radius: float
    membership: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise DimensionError(f"mask grid must be at least 1x1, got {self.height}x{self.width}")
        if self.radius < 0:
            raise DomainError(f"mask radius must be >= 0, got {self.radius}")
        m = np.asarray(self.membership, dtype=bool)
        if m.shape != (self.height, self.width):
            raise DimensionError(f"membership grid {m.shape} does not match ({self.height}, {self.width})")
        m = np.ascontiguousarray(m)
        m.flags.writeable = False
        object.__setattr__(self, "membership", m)

    @property
    def low_bin_count(self) -> int:
        return int(np.count_nonzero(self.membership))


def circular_mask(height: int, width: int, radius: float) -> FrequencyMask:
    """Centered circular mask: bin (u, v) is low iff its signed-index distance <= radius.

    Signed frequency indices follow the standard DFT convention: bins above
    the midpoint wrap to negative frequencies, so the disk is centered on DC.
    """
    if height < 1 or width < 1:
        raise DimensionError(f"mask grid must be at least 1x1, got {height}x{width}")
    if radius < 0:
        raise DomainError(f"mask radius must be >= 0, got {radius}")
    fu = np.fft.fftfreq(height) * height
    fv = np.fft.fftfreq(width) * width
    dist = np.sqrt(fu[:, None] ** 2 + fv[None, :] ** 2)
    return FrequencyMask(height, width, float(radius), dist <= radius)


def default_mask(height: int, width: int, scale: float = DEFAULT_RADIUS_SCALE) -> FrequencyMask:
    """Mask with the default radius rule: scale * min(H, W), no flooring."""
    if scale <= 0:
        raise DomainError(f"radius scale must be > 0, got {scale}")
    return circular_mask(height, width, scale * min(height, width))


@dataclass(frozen=True)
class SpectrumPair:
    """Low/high complex spectra of one tensor; low + high is the full spectrum."""

    low: np.ndarray = field(repr=False)
    high: np.ndarray = field(repr=False)
    mask: FrequencyMask

    def __post_init__(self):
        for name, arr in (("low", self.low), ("high", self.high)):
            a = np.asarray(arr, dtype=np.complex128)
            if a.ndim != 4:
                raise DimensionError(f"{name} spectrum must be 4-D, got {a.ndim} axes")
            a = np.ascontiguousarray(a)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if self.low.shape != self.high.shape:
            raise DimensionError(f"band shapes differ: {self.low.shape} vs {self.high.shape}")

    def low_energy(self) -> float:
        return float(np.sum(self.low.real ** 2 + self.low.imag ** 2))

    def high_energy(self) -> float:
        return float(np.sum(self.high.real ** 2 + self.high.imag ** 2))

    def reconstruct(self) -> Tensor4:
        """Inverse-transform low + high back to the spatial domain."""
        return Tensor4(np.fft.ifft2(self.low + self.high, axes=(1, 2), norm="ortho").real)


def _unitary_spectrum(x: Tensor4) -> np.ndarray:
    return np.fft.fft2(x.data, axes=(1, 2), norm="ortho")


def _require_mask_fit(x: Tensor4, mask: FrequencyMask) -> None:
    if (x.height, x.width) != (mask.height, mask.width):
        raise DimensionError(
            f"mask grid ({mask.height}, {mask.width}) does not match tensor plane ({x.height}, {x.width})"
        )


def fft2_split(x: Tensor4, mask: FrequencyMask) -> SpectrumPair:
    """Unitary per-slice 2-D DFT split into low/high bands by the mask."""
    _require_mask_fit(x, mask)
    spec = _unitary_spectrum(x)
    m = mask.membership[None, :, :, None]
    return SpectrumPair(low=spec * m, high=spec * ~m, mask=mask)


def _band_diff_norm(a: Tensor4, b: Tensor4, mask: FrequencyMask, low: bool) -> float:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    _require_mask_fit(a, mask)
    d = _unitary_spectrum(a) - _unitary_spectrum(b)
    m = mask.membership if low else ~mask.membership
    sel = d[:, m, :]
    return float(np.sqrt(np.sum(sel.real ** 2 + sel.imag ** 2)))


def lowfreq_diff(a: Tensor4, b: Tensor4, mask: FrequencyMask) -> float:
    """L2 norm of (spectrum(a) - spectrum(b)) restricted to the low band."""
    return _band_diff_norm(a, b, mask, low=True)


def highfreq_diff(a: Tensor4, b: Tensor4, mask: FrequencyMask) -> float:
    """L2 norm of (spectrum(a) - spectrum(b)) restricted to the high band."""
    return _band_diff_norm(a, b, mask, low=False)


def splice_bands(low_source: Tensor4, high_source: Tensor4, mask: FrequencyMask) -> Tensor4:
    """Recombine the low band of one tensor with the high band of another.

    The mask is symmetric under index negation, so the spliced spectrum of two
    real tensors stays Hermitian and the inverse transform is real up to
    rounding; the imaginary residue is discarded.
    """
    if low_source.shape != high_source.shape:
        raise DimensionError(f"shape mismatch {low_source.shape} vs {high_source.shape}")
    _require_mask_fit(low_source, mask)
    m = mask.membership[None, :, :, None]
    spec = _unitary_spectrum(low_source) * m + _unitary_spectrum(high_source) * ~m
    return Tensor4(np.fft.ifft2(spec, axes=(1, 2), norm="ortho").real)
