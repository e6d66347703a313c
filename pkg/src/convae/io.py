"""WAV files and the model container format.

Model file layout (all integers little-endian)::

    b"CONVAE-MODEL\\n"            magic, 13 bytes
    uint32 format version
    uint64 manifest length L
    L bytes of UTF-8 JSON         the manifest
    float32 blobs                 one per manifest tensor, in manifest order

The manifest holds ``format_version``, the model ``config`` (variant,
shapes-determining sizes, hyperparameters, seed) and a ``tensors`` list of
``{"name", "shape", "dtype": "<f4", "nbytes"}`` entries.
"""

import json
import struct
import wave
from pathlib import Path

import numpy as np

from .dsp import AudioSignal
from .models import ModelConfig, from_manifest, param_shapes, to_manifest

MAGIC = b"CONVAE-MODEL\n"
FORMAT_VERSION = 1
PCM_SCALE = 32768.0


class WavError(ValueError):
    """Unsupported or damaged WAV data."""


class ModelFileError(ValueError):
    """Base class for unreadable model files."""


class VersionMismatchError(ModelFileError):
    pass


class ShapeMismatchError(ModelFileError):
    pass


class TruncatedModelError(ModelFileError):
    pass


# -- WAV -------------------------------------------------------------------------------

def load_wav(path):
    """Read 16-bit PCM (mono, or stereo averaged to mono) scaled by 1/32768."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wav:
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            rate = wav.getframerate()
            n = wav.getnframes()
            if width != 2:
                raise WavError(f"{path}: 'fmt ' chunk declares {8 * width}-bit samples; only 16-bit PCM is supported")
            if channels not in (1, 2):
                raise WavError(f"{path}: 'fmt ' chunk declares {channels} channels; only mono or stereo")
            raw = wav.readframes(n)
    except wave.Error as exc:
        raise WavError(f"{path}: unsupported encoding in 'fmt ' chunk ({exc})") from exc
    except EOFError as exc:
        raise WavError(f"{path}: truncated RIFF header") from exc
    expected = n * channels * 2
    if len(raw) < expected:
        raise WavError(f"{path}: truncated 'data' chunk ({len(raw)} of {expected} bytes)")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    if samples.size == 0:
        raise WavError(f"{path}: empty 'data' chunk")
    return AudioSignal(samples, rate)


def write_wav(path, signal):
    """16-bit mono PCM; samples are clipped to the representable range."""
    ints = np.clip(np.round(signal.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(signal.sample_rate)
        wav.writeframes(ints.tobytes())


# -- models ------------------------------------------------------------------------------

def save_model(params, config, path):
    manifest, arrays = to_manifest(params, config)
    blobs = [np.asarray(a, dtype="<f4").tobytes() for a in arrays]
    for entry, blob in zip(manifest["tensors"], blobs):
        entry["dtype"] = "<f4"
        entry["nbytes"] = len(blob)
    manifest["format_version"] = FORMAT_VERSION
    text = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(text)))
        fh.write(text)
        for blob in blobs:
            fh.write(blob)


def load_model(path):
    """Returns ``(ModelParams, ModelConfig)``; never a partially read model."""
    data = Path(path).read_bytes()
    head = len(MAGIC) + 12
    if len(data) < head:
        raise TruncatedModelError(f"{path}: file ends inside the header")
    if data[: len(MAGIC)] != MAGIC:
        raise ModelFileError(f"{path}: not a model file (bad magic)")
    version, length = struct.unpack("<IQ", data[len(MAGIC) : head])
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    if len(data) < head + length:
        raise TruncatedModelError(f"{path}: file ends inside the manifest")
    try:
        manifest = json.loads(data[head : head + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"{path}: unreadable manifest ({exc})") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: manifest version {manifest.get('format_version')}")

    try:
        config = ModelConfig.from_dict(dict(manifest["config"]))
        entries = list(manifest["tensors"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: manifest has no usable model config ({exc!r})") from exc
    expected = param_shapes(config)
    offset = head + length
    arrays = []
    for entry in entries:
        name, shape = entry["name"], tuple(entry["shape"])
        if entry.get("dtype", "<f4") != "<f4":
            raise ModelFileError(f"{path}: tensor {name} has unsupported dtype {entry['dtype']}")
        if name not in expected or tuple(expected[name]) != shape:
            raise ShapeMismatchError(f"{path}: tensor {name} declared {shape}, config implies {expected.get(name)}")
        nbytes = entry["nbytes"]
        if nbytes != 4 * int(np.prod(shape)):
            raise ShapeMismatchError(f"{path}: tensor {name} declared {shape} but its blob holds {nbytes // 4} values")
        if offset + nbytes > len(data):
            raise TruncatedModelError(f"{path}: blob for {name} is truncated")
        arrays.append(np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape))
        offset += nbytes
    if offset != len(data):
        raise ModelFileError(f"{path}: {len(data) - offset} unexpected trailing bytes")
    return from_manifest(manifest, arrays)
