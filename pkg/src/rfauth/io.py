"""On-disk corpus format: a raw frame file plus a JSON manifest.

``frames.bin`` holds little-endian float32 interleaved I/Q, 256 complex
samples per frame, transmitters concatenated in ascending ``tx_id``.
``manifest.json`` records how the corpus was generated and where each
transmitter's frames start.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .simulate import FRAME_LENGTH, Corpus, ImpairmentRanges, TransmitterProfile

FRAMES_FILE = "frames.bin"
MANIFEST_FILE = "manifest.json"
FORMAT_VERSION = 1
_BYTES_PER_FRAME = FRAME_LENGTH * 2 * 4


class CorpusFormatError(ValueError):
    pass


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_json(path, obj) -> None:
    path = Path(path)
    _atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def write_corpus(corpus: Corpus, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for tx in corpus.tx_ids:
        arr = np.ascontiguousarray(corpus.samples[tx], dtype=np.complex64)
        # complex64 is two float32s per sample, I then Q
        raw = arr.view(np.float32).astype("<f4").tobytes()
        entries.append({"tx_id": tx, "frame_count": len(arr), "byte_offset": offset,
                        "profile": corpus.profiles[tx].to_dict()})
        chunks.append(raw)
        offset += len(raw)
    _atomic_write_bytes(directory / FRAMES_FILE, b"".join(chunks))
    manifest = {
        "format_version": FORMAT_VERSION,
        "frame_length": FRAME_LENGTH,
        "sample_format": "float32-le-interleaved-iq",
        "seed": corpus.seed,
        "snr_db": corpus.snr_db,
        "waveform": corpus.waveform,
        "impairment_ranges": corpus.ranges.to_dict(),
        "transmitters": entries,
    }
    write_json(directory / MANIFEST_FILE, manifest)
    return directory


def read_corpus(directory) -> Corpus:
    directory = Path(directory)
    manifest_path, frames_path = directory / MANIFEST_FILE, directory / FRAMES_FILE
    if not manifest_path.exists() or not frames_path.exists():
        raise FileNotFoundError(f"no corpus at {directory} (need {MANIFEST_FILE} and {FRAMES_FILE})")
    try:
        manifest = json.loads(manifest_path.read_text())
        entries = manifest["transmitters"]
        if manifest.get("frame_length", FRAME_LENGTH) != FRAME_LENGTH:
            raise CorpusFormatError("unsupported frame length")
    except (json.JSONDecodeError, KeyError) as exc:
        raise CorpusFormatError(f"malformed manifest {manifest_path}: {exc}") from exc

    raw = np.fromfile(frames_path, dtype="<f4")
    profiles, samples = {}, {}
    for e in entries:
        start = e["byte_offset"] // 4
        stop = start + e["frame_count"] * _BYTES_PER_FRAME // 4
        if e["byte_offset"] % _BYTES_PER_FRAME or stop > raw.size:
            raise CorpusFormatError(f"transmitter {e['tx_id']}: frame data out of bounds")
        iq = raw[start:stop].astype(np.float32).view(np.complex64)
        samples[e["tx_id"]] = iq.reshape(e["frame_count"], FRAME_LENGTH)
        profiles[e["tx_id"]] = TransmitterProfile.from_dict(e["profile"]) if "profile" in e \
            else TransmitterProfile(tx_id=e["tx_id"])
    return Corpus(profiles, samples, manifest["seed"], manifest["snr_db"],
                  ImpairmentRanges.from_dict(manifest["impairment_ranges"]),
                  manifest.get("waveform", "qpsk-preamble"))
