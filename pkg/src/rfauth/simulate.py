"""Synthetic transmitter fingerprints on a shared reference waveform.

Every transmitter applies the same chain of analog impairments, with its
own parameters, to the same 256-sample reference burst:

    IQ imbalance -> cubic AM/AM compression -> DC offset -> CFO rotation
    -> phase-noise random walk -> random channel phase -> AWGN
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

FRAME_LENGTH = 256
DEFAULT_SAMPLE_RATE = 25e6
MAX_TRANSMITTERS = 71
FRAME_COUNT_BOUNDS = (200, 1500)
WAVEFORM_KINDS = ("qpsk-preamble", "constant-envelope-chirp")


@dataclass(frozen=True)
class SymbolFrame:
    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.samples.shape != (FRAME_LENGTH,):
            raise ValueError(f"reference frame must have {FRAME_LENGTH} samples, got {self.samples.shape}")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")


@dataclass(frozen=True)
class TransmitterProfile:
    tx_id: int
    iq_gain_imbalance_db: float = 0.0
    iq_phase_imbalance_rad: float = 0.0
    dc_offset: complex = 0j
    cfo_normalized: float = 0.0
    phase_noise_std_rad: float = 0.0
    nonlinearity_coeff: float = 0.0

    def __post_init__(self):
        if self.tx_id < 0:
            raise ValueError("tx_id must be >= 0")
        values = [self.iq_gain_imbalance_db, self.iq_phase_imbalance_rad, self.dc_offset.real,
                  self.dc_offset.imag, self.cfo_normalized, self.phase_noise_std_rad,
                  self.nonlinearity_coeff]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("profile fields must be finite")
        if abs(self.cfo_normalized) > 0.01:
            raise ValueError("|cfo_normalized| must not exceed 0.01 cycles/sample")
        if self.phase_noise_std_rad < 0 or self.nonlinearity_coeff < 0:
            raise ValueError("phase_noise_std_rad and nonlinearity_coeff must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dc_offset"] = [self.dc_offset.real, self.dc_offset.imag]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TransmitterProfile":
        d = dict(d)
        re, im = d.pop("dc_offset")
        return cls(dc_offset=complex(re, im), **d)


@dataclass(frozen=True)
class ImpairmentRanges:
    """Closed sampling interval ``(low, high)`` for each profile field.

    The DC offset is drawn as independent real and imaginary parts.
    """

    iq_gain_imbalance_db: tuple[float, float] = (-2.0, 2.0)
    iq_phase_imbalance_rad: tuple[float, float] = (-0.2, 0.2)
    dc_offset_real: tuple[float, float] = (-0.1, 0.1)
    dc_offset_imag: tuple[float, float] = (-0.1, 0.1)
    cfo_normalized: tuple[float, float] = (-0.008, 0.008)
    phase_noise_std_rad: tuple[float, float] = (0.0, 0.01)
    nonlinearity_coeff: tuple[float, float] = (0.0, 0.2)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"invalid interval for {f.name}: ({lo}, {hi})")
        if max(abs(v) for v in self.cfo_normalized) > 0.01:
            raise ValueError("cfo_normalized range must lie within [-0.01, 0.01]")
        if self.phase_noise_std_rad[0] < 0 or self.nonlinearity_coeff[0] < 0:
            raise ValueError("phase_noise_std_rad and nonlinearity_coeff ranges must be >= 0")

    def scaled(self, factor: float) -> "ImpairmentRanges":
        """Every interval multiplied by ``factor`` (CFO capped at 0.01)."""
        out = {}
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            lo, hi = lo * factor, hi * factor
            if f.name == "cfo_normalized":
                lo, hi = max(lo, -0.01), min(hi, 0.01)
            out[f.name] = (lo, hi)
        return ImpairmentRanges(**out)

    def to_dict(self) -> dict:
        return {f.name: list(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ImpairmentRanges":
        return cls(**{k: tuple(v) for k, v in d.items()})

    @classmethod
    def zero(cls) -> "ImpairmentRanges":
        return cls(**{f.name: (0.0, 0.0) for f in fields(cls)})


@dataclass(frozen=True)
class IQFrame:
    samples: np.ndarray
    tx_id: int
    snr_db: float

    def __post_init__(self):
        if self.samples.shape != (FRAME_LENGTH,):
            raise ValueError(f"frame must have {FRAME_LENGTH} samples, got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("frame samples must be finite")


@dataclass
class Corpus:
    """Fingerprinted frames for a pool of transmitters.

    ``samples[tx_id]`` is a complex array of shape ``(n_frames, 256)``.
    """

    profiles: dict[int, TransmitterProfile]
    samples: dict[int, np.ndarray]
    seed: int
    snr_db: float
    ranges: ImpairmentRanges = field(default_factory=ImpairmentRanges)
    waveform: str = "qpsk-preamble"

    def __post_init__(self):
        if set(self.profiles) != set(self.samples):
            raise ValueError("profiles and samples must cover the same transmitters")
        for tx, arr in self.samples.items():
            if arr.ndim != 2 or arr.shape[1] != FRAME_LENGTH:
                raise ValueError(f"transmitter {tx}: expected (n, {FRAME_LENGTH}) array")

    @property
    def tx_ids(self) -> list[int]:
        return sorted(self.samples)

    def frame_counts(self) -> dict[int, int]:
        return {tx: len(self.samples[tx]) for tx in self.tx_ids}

    def frames(self, tx_id: int) -> list[IQFrame]:
        return [IQFrame(s, tx_id, self.snr_db) for s in self.samples[tx_id]]


def make_reference_waveform(kind: str = "qpsk-preamble", length: int = FRAME_LENGTH) -> SymbolFrame:
    if length != FRAME_LENGTH:
        raise ValueError(f"reference length must be {FRAME_LENGTH}, got {length}")
    n = np.arange(length)
    if kind == "constant-envelope-chirp":
        # linear sweep across the full normalized band
        s = np.exp(1j * np.pi * n**2 / length)
    elif kind == "qpsk-preamble":
        # fixed pseudo-random QPSK, 4 samples/symbol, 3-tap smoothing
        bits = np.random.default_rng(0x5EED).integers(0, 2, size=(length // 4, 2))
        symbols = ((2 * bits[:, 0] - 1) + 1j * (2 * bits[:, 1] - 1)) / np.sqrt(2)
        s = np.repeat(symbols, 4)
        s = np.convolve(np.concatenate([s[-1:], s, s[:1]]), [0.25, 0.5, 0.25], mode="valid")
    else:
        raise ValueError(f"unknown waveform kind {kind!r}; expected one of {WAVEFORM_KINDS}")
    s = s / np.sqrt(np.mean(np.abs(s) ** 2))
    return SymbolFrame(s.astype(np.complex128))


def _profile_rng(rng_seed: int, tx_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([rng_seed, tx_id, 0xF1]))


def sample_profile(rng_seed: int, tx_id: int, ranges: ImpairmentRanges | None = None) -> TransmitterProfile:
    ranges = ranges or ImpairmentRanges()
    rng = _profile_rng(rng_seed, tx_id)
    draw = {f.name: rng.uniform(*getattr(ranges, f.name)) for f in fields(ranges)}
    return TransmitterProfile(
        tx_id=tx_id,
        iq_gain_imbalance_db=float(draw["iq_gain_imbalance_db"]),
        iq_phase_imbalance_rad=float(draw["iq_phase_imbalance_rad"]),
        dc_offset=complex(draw["dc_offset_real"], draw["dc_offset_imag"]),
        cfo_normalized=float(draw["cfo_normalized"]),
        phase_noise_std_rad=float(draw["phase_noise_std_rad"]),
        nonlinearity_coeff=float(draw["nonlinearity_coeff"]),
    )


def spread_profiles(n_tx: int, rng_seed: int, ranges: ImpairmentRanges | None = None) -> list[TransmitterProfile]:
    """Profiles laid out as a Latin hypercube over ``ranges``.

    Every impairment takes the ``n_tx`` evenly spaced values ``(k + 0.5) / n_tx``
    across its range, each in its own seeded order, so no two transmitters
    share a stratum in any dimension.
    """
    ranges = ranges or ImpairmentRanges()
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0xF3]))
    u = (np.arange(n_tx) + 0.5) / n_tx
    draw = {}
    for f in fields(ranges):
        lo, hi = getattr(ranges, f.name)
        draw[f.name] = lo + (hi - lo) * rng.permutation(u)
    return [TransmitterProfile(
        tx_id=i,
        iq_gain_imbalance_db=float(draw["iq_gain_imbalance_db"][i]),
        iq_phase_imbalance_rad=float(draw["iq_phase_imbalance_rad"][i]),
        dc_offset=complex(draw["dc_offset_real"][i], draw["dc_offset_imag"][i]),
        cfo_normalized=float(draw["cfo_normalized"][i]),
        phase_noise_std_rad=float(draw["phase_noise_std_rad"][i]),
        nonlinearity_coeff=float(draw["nonlinearity_coeff"][i]),
    ) for i in range(n_tx)]


def _impair(x: np.ndarray, p: TransmitterProfile, snr_db: float, rng: np.random.Generator,
            channel_phase: bool | float) -> np.ndarray:
    """Vectorized chain over rows of ``x`` (shape ``(n, L)``)."""
    n_frames, length = x.shape
    g = 10 ** (p.iq_gain_imbalance_db / 20)
    phi = p.iq_phase_imbalance_rad
    mu = (1 + g * np.exp(-1j * phi)) / 2
    nu = (1 - g * np.exp(1j * phi)) / 2
    y = mu * x + nu * np.conj(x)

    y = y * (1 - p.nonlinearity_coeff * np.abs(y) ** 2)
    y = y + p.dc_offset
    y = y * np.exp(2j * np.pi * p.cfo_normalized * np.arange(length))

    steps = rng.normal(0.0, 1.0, size=(n_frames, length - 1)) * p.phase_noise_std_rad
    walk = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(steps, axis=1)], axis=1)
    y = y * np.exp(1j * walk)

    if channel_phase is True:
        theta = rng.uniform(0.0, 2 * np.pi, size=(n_frames, 1))
    else:
        theta = np.full((n_frames, 1), float(channel_phase))
    y = y * np.exp(1j * theta)

    if math.isfinite(snr_db):
        power = np.mean(np.abs(y) ** 2, axis=1, keepdims=True)
        sigma = np.sqrt(power / 10 ** (snr_db / 10) / 2)
        y = y + sigma * (rng.normal(size=y.shape) + 1j * rng.normal(size=y.shape))
    return y


def apply_fingerprint(x: SymbolFrame, p: TransmitterProfile, snr_db: float, rng_seed: int,
                      channel_phase: bool | float = True) -> IQFrame:
    """Impair one reference frame as transmitter ``p`` would.

    ``snr_db=inf`` disables noise. ``channel_phase=True`` draws a uniform
    random phase; a float pins it (``0.0`` disables the rotation).
    """
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ValueError("snr_db must be finite or +inf")
    rng = np.random.default_rng(rng_seed)
    y = _impair(x.samples[None, :], p, snr_db, rng, channel_phase)[0]
    return IQFrame(y, p.tx_id, snr_db)


def generate_corpus(n_tx: int, frames_per_tx: tuple[int, int] = FRAME_COUNT_BOUNDS, snr_db: float = 20.0,
                    seed: int = 0, ranges: ImpairmentRanges | None = None,
                    waveform: str = "qpsk-preamble", max_tx: int = MAX_TRANSMITTERS,
                    dtype=np.complex64, layout: str = "random") -> Corpus:
    """Draw ``n_tx`` transmitter profiles and their frames, reproducibly from ``seed``.

    The frame count of each transmitter is uniform on the closed interval
    ``frames_per_tx``. ``layout="random"`` draws each profile independently;
    ``layout="spread"`` uses :func:`spread_profiles` for deliberately
    well-separated transmitters.
    """
    if layout not in ("random", "spread"):
        raise ValueError(f"unknown profile layout {layout!r}")
    if n_tx <= 0:
        raise ValueError("n_tx must be positive")
    if n_tx > max_tx:
        raise ValueError(f"n_tx={n_tx} exceeds the pool limit {max_tx}")
    lo, hi = frames_per_tx
    if not (0 < lo <= hi):
        raise ValueError(f"invalid frame-count interval {frames_per_tx}")
    ranges = ranges or ImpairmentRanges()
    ref = make_reference_waveform(waveform)

    counts_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    counts = counts_rng.integers(lo, hi + 1, size=n_tx)
    spread = spread_profiles(n_tx, seed, ranges) if layout == "spread" else None
    profiles, samples = {}, {}
    for tx_id, n_frames in zip(range(n_tx), counts):
        p = spread[tx_id] if spread else sample_profile(seed, tx_id, ranges)
        rng = np.random.default_rng(np.random.SeedSequence([seed, tx_id, 0xF2]))
        x = np.broadcast_to(ref.samples, (int(n_frames), FRAME_LENGTH))
        profiles[tx_id] = p
        samples[tx_id] = _impair(x, p, snr_db, rng, True).astype(dtype)
    return Corpus(profiles, samples, seed, snr_db, ranges, waveform)
