"""On-disk formats: the spectrogram container and dataset directories.

Container layout (little-endian): magic "SPEC", u32 version, u32 frames,
u32 bins, u32 classes, one byte per class label (0 negative, 1 positive,
2 unknown), then frames*bins IEEE-754 float32 values, time-major.

A dataset is a directory of containers plus ``manifest.json`` naming the
examples, their files, their split assignment, and the class names.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .features import LabeledExample, Spectrogram

MAGIC = b"SPEC"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")

# OpenMIC-2018 instrument taxonomy, reused for synthetic classes.
OPENMIC_CLASS_NAMES = [
    "accordion", "banjo", "bass", "cello", "clarinet",
    "cymbals", "drums", "flute", "guitar", "mallet_percussion",
    "mandolin", "organ", "piano", "saxophone", "synthesizer",
    "trombone", "trumpet", "ukulele", "violin", "voice",
]


def default_class_names(classes: int) -> list[str]:
    names = OPENMIC_CLASS_NAMES[:classes]
    names += [f"class_{i:02d}" for i in range(len(names), classes)]
    return names


def save_example(example: LabeledExample, path) -> None:
    path = Path(path)
    t, f = example.spectrogram.frames, example.spectrogram.bins
    c = example.classes
    label_bytes = bytearray(c)
    for i in range(c):
        if not example.known_mask[i]:
            label_bytes[i] = 2
        else:
            label_bytes[i] = 1 if example.labels[i] >= 0.5 else 0
    payload = example.spectrogram.values.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, t, f, c))
        fh.write(bytes(label_bytes))
        fh.write(payload)


def load_example(path) -> LabeledExample:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header, need {_HEADER.size} bytes at offset 0")
    magic, version, t, f, c = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4")
    labels_off = _HEADER.size
    payload_off = labels_off + c
    if len(raw) < payload_off:
        raise FormatError(f"{path}: truncated label block at offset {labels_off}")
    label_bytes = raw[labels_off:payload_off]
    if any(b not in (0, 1, 2) for b in label_bytes):
        raise FormatError(f"{path}: invalid label byte at offset {labels_off}")
    expected = 4 * t * f
    actual = len(raw) - payload_off
    if actual != expected:
        raise FormatError(
            f"{path}: payload length mismatch at offset {payload_off}: "
            f"expected {expected} bytes, got {actual}"
        )
    values = np.frombuffer(raw, dtype="<f4", count=t * f, offset=payload_off)
    values = values.astype(np.float64).reshape(t, f)
    labels = np.array([1.0 if b == 1 else 0.0 for b in label_bytes])
    mask = np.array([b != 2 for b in label_bytes], dtype=bool)
    return LabeledExample(Spectrogram(values), labels, mask, example_id=path.stem)


@dataclass
class Dataset:
    examples: list[LabeledExample]
    class_names: list[str]
    splits: dict  # example id -> split name

    def split(self, name: str) -> list[LabeledExample]:
        chosen = [ex for ex in self.examples if self.splits.get(ex.example_id) == name]
        if not chosen:
            raise ConfigError(f"split '{name}' is empty")
        return chosen

    @property
    def classes(self) -> int:
        return len(self.class_names)

    def by_id(self, example_id: str) -> LabeledExample:
        for ex in self.examples:
            if ex.example_id == example_id:
                return ex
        raise ConfigError(f"no example with id '{example_id}'")


def save_dataset(
    examples: list[LabeledExample],
    directory,
    class_names: list[str],
    splits: dict,
    generator: dict | None = None,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for ex in examples:
        fname = f"{ex.example_id}.spec"
        save_example(ex, directory / fname)
        entries.append(
            {"id": ex.example_id, "file": fname, "split": splits.get(ex.example_id, "train")}
        )
    manifest = {
        "version": VERSION,
        "class_names": list(class_names),
        "examples": entries,
        "generator": generator,
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"no manifest.json in {directory}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    for key in ("class_names", "examples"):
        if key not in manifest:
            raise FormatError(f"{manifest_path}: missing '{key}'")
    examples = []
    splits = {}
    for entry in manifest["examples"]:
        ex = load_example(directory / entry["file"])
        if ex.classes != len(manifest["class_names"]):
            raise FormatError(
                f"{entry['file']}: {ex.classes} classes, manifest lists "
                f"{len(manifest['class_names'])}"
            )
        examples.append(ex)
        splits[ex.example_id] = entry.get("split", "train")
    return Dataset(examples=examples, class_names=manifest["class_names"], splits=splits)
