"""Shoebox room impulse responses by mirror-image enumeration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class GeometryError(ValueError):
    pass


@dataclass
class RoomConfig:
    """Walls are ordered ``(x=0, x=Lx, y=0, y=Ly, z=0, z=Lz)``."""

    dimensions: Sequence[float]
    absorption: Sequence[float] = (0.4,) * 6
    mics: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    sources: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    speed_of_sound: float = 343.0
    max_order: int = 10

    def __post_init__(self):
        self.dimensions = np.asarray(self.dimensions, dtype=np.float64)
        self.absorption = np.asarray(self.absorption, dtype=np.float64)
        if np.isscalar(self.absorption) or self.absorption.ndim == 0:
            self.absorption = np.full(6, float(self.absorption))
        self.mics = np.asarray(self.mics, dtype=np.float64).reshape(-1, 3)
        self.sources = np.asarray(self.sources, dtype=np.float64).reshape(-1, 3)
        if self.dimensions.shape != (3,) or np.any(self.dimensions <= 0):
            raise GeometryError(f"room dimensions must be 3 positive lengths, got {self.dimensions}")
        if self.absorption.shape != (6,) or np.any((self.absorption < 0) | (self.absorption > 1)):
            raise GeometryError(f"absorption must be 6 values in [0, 1], got {self.absorption}")
        for label, pts in (("microphone", self.mics), ("source", self.sources)):
            for p in pts:
                self.check_inside(p, label)

    def check_inside(self, point, label: str = "point") -> None:
        p = np.asarray(point, dtype=np.float64)
        if np.any(p <= 0) or np.any(p >= self.dimensions):
            raise GeometryError(f"{label} {p.tolist()} is not strictly inside room "
                                f"{self.dimensions.tolist()}")

    @property
    def reflection(self) -> np.ndarray:
        return np.sqrt(1.0 - self.absorption)


def image_sources(room: RoomConfig, source) -> tuple:
    """Return ``(positions (M, 3), gains (M,), orders (M,))`` up to ``room.max_order``.

    Per axis an image sits at ``(1 - 2q) s + 2 n L`` and has met the low wall
    ``|n - q|`` times and the high wall ``|n|`` times.
    """
    s = np.asarray(source, dtype=np.float64)
    order = room.max_order
    beta = room.reflection
    n = np.arange(-order, order + 1)
    axes = []
    for ax in range(3):
        nn, qq = np.meshgrid(n, [0, 1], indexing="ij")
        nn, qq = nn.ravel(), qq.ravel()
        lo, hi = np.abs(nn - qq), np.abs(nn)
        keep = lo + hi <= order
        nn, qq, lo, hi = nn[keep], qq[keep], lo[keep], hi[keep]
        pos = (1 - 2 * qq) * s[ax] + 2 * nn * room.dimensions[ax]
        gain = beta[2 * ax] ** lo * beta[2 * ax + 1] ** hi
        axes.append((pos, gain, lo + hi))
    (px, gx, ox), (py, gy, oy), (pz, gz, oz) = axes
    ix, iy, iz = np.meshgrid(np.arange(len(px)), np.arange(len(py)), np.arange(len(pz)),
                             indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    orders = ox[ix] + oy[iy] + oz[iz]
    keep = orders <= order
    ix, iy, iz = ix[keep], iy[keep], iz[keep]
    positions = np.stack([px[ix], py[iy], pz[iz]], axis=1)
    gains = gx[ix] * gy[iy] * gz[iz]
    return positions, gains, orders[keep]


def simulate_rir(room: RoomConfig, source, mic, sample_rate: int = 16000,
                 length: int = 4000) -> np.ndarray:
    """Impulse response of ``length`` taps from ``source`` to ``mic``.

    Each image contributes ``gain / (4 pi d)`` at tap ``round(d / c * fs)``.
    """
    room.check_inside(source, "source")
    room.check_inside(mic, "microphone")
    positions, gains, _ = image_sources(room, source)
    d = np.linalg.norm(positions - np.asarray(mic, dtype=np.float64), axis=1)
    taps = np.rint(d / room.speed_of_sound * sample_rate).astype(np.int64)
    amp = gains / (4.0 * np.pi * np.maximum(d, 1e-3))
    keep = (taps < length) & (amp != 0)
    h = np.zeros(length)
    np.add.at(h, taps[keep], amp[keep])
    return h


def simulate_rirs(room: RoomConfig, source, sample_rate: int = 16000,
                  length: int = 4000) -> np.ndarray:
    """``(C, length)`` responses from ``source`` to every microphone in ``room``."""
    return np.stack([simulate_rir(room, source, m, sample_rate, length) for m in room.mics])
