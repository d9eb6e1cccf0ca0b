"""RIFF/WAVE reader and writer for PCM16 and IEEE float32, any channel count."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

PCM = 0x0001
IEEE_FLOAT = 0x0003
EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    pass


@dataclass
class MultichannelWaveform:
    """``samples`` is ``(C, N)`` float64, nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate


def write_wav(waveform: MultichannelWaveform, path: Union[str, Path], codec: str = "float32") -> None:
    x = waveform.samples
    channels, n = x.shape
    if codec == "float32":
        fmt, bits = IEEE_FLOAT, 32
        payload = np.ascontiguousarray(x.T, dtype="<f4").tobytes()
    elif codec == "pcm16":
        fmt, bits = PCM, 16
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        payload = np.ascontiguousarray(q.T).tobytes()
    else:
        raise WavError(f"unsupported codec {codec!r} (use 'float32' or 'pcm16')")
    block = channels * bits // 8
    fmt_chunk = struct.pack("<HHIIHH", fmt, channels, waveform.sample_rate,
                            waveform.sample_rate * block, block, bits)
    if fmt == IEEE_FLOAT:
        fmt_chunk += struct.pack("<H", 0)
    body = b"WAVE"
    body += b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
    if fmt == IEEE_FLOAT:
        body += b"fact" + struct.pack("<II", 4, n)
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) % 2:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def read_wav(path: Union[str, Path]) -> MultichannelWaveform:
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")
    off = 12
    fmt = None
    data = None
    while off + 8 <= len(blob):
        cid = blob[off:off + 4]
        (size,) = struct.unpack_from("<I", blob, off + 4)
        start = off + 8
        chunk = blob[start:start + size]
        if cid == b"fmt ":
            if size < 16:
                raise WavError(f"{path}: fmt chunk too short ({size} bytes)")
            tag, channels, rate, _, block, bits = struct.unpack_from("<HHIIHH", chunk)
            if tag == EXTENSIBLE:
                if size < 40:
                    raise WavError(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE header")
                (tag,) = struct.unpack_from("<H", chunk, 24)
            fmt = (tag, channels, rate, block, bits)
        elif cid == b"data":
            data = chunk
        off = start + size + (size & 1)
    if fmt is None:
        raise WavError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavError(f"{path}: missing data chunk")
    tag, channels, rate, block, bits = fmt
    if channels < 1 or rate <= 0:
        raise WavError(f"{path}: invalid header (channels={channels}, rate={rate})")
    if tag == PCM and bits == 16:
        dtype, scale = "<i2", 1.0 / 32768.0
    elif tag == IEEE_FLOAT and bits == 32:
        dtype, scale = "<f4", 1.0
    else:
        raise WavError(f"{path}: unsupported codec (format tag {tag:#06x}, {bits} bits)")
    frames = len(data) // (channels * np.dtype(dtype).itemsize)
    raw = np.frombuffer(data[:frames * channels * np.dtype(dtype).itemsize], dtype=dtype)
    samples = raw.reshape(frames, channels).T.astype(np.float64) * scale
    return MultichannelWaveform(samples, rate)
