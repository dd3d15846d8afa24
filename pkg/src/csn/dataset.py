"""Dataset manifests: the on-disk enumeration of LR/HR slice pairs.

A manifest is a CSV file with columns
``id,hr_path,lr_path,image_type,degradation,scale[,split]`` plus optional
leading ``#`` comment lines recording provenance (e.g. the TD intensity
normalization). Paths are stored relative to the manifest location.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .imageio import read_image
from .training import SamplePair

IMAGE_TYPES = ("PD", "T1", "T2", "SYNTHETIC")
DEGRADATIONS = ("BD", "TD")
SPLITS = ("train", "val", "test")

_COLUMNS = ["id", "hr_path", "lr_path", "image_type", "degradation", "scale", "split"]


@dataclass
class ManifestEntry:
    entry_id: str
    hr_path: str
    lr_path: str
    image_type: str
    degradation: str
    scale: int
    split: str = "train"


def guess_image_type(name: str) -> str:
    stem = os.path.basename(name).lower()
    for t in ("pd", "t1", "t2"):
        if stem.startswith(t):
            return t.upper()
    return "SYNTHETIC"


def write_manifest(path, entries, comments=()):
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh)
        w.writerow(_COLUMNS)
        for e in entries:
            w.writerow([e.entry_id, e.hr_path, e.lr_path, e.image_type,
                        e.degradation, e.scale, e.split])


def read_manifest(path) -> list:
    entries = []
    seen = set()
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))
                if r]
    if not rows or rows[0][:6] != _COLUMNS[:6]:
        raise ValueError(f"{path}: missing manifest header {_COLUMNS[:6]}")
    for row in rows[1:]:
        if len(row) not in (6, 7):
            raise ValueError(f"{path}: bad manifest row {row!r}")
        eid, hr, lr, itype, degr, scale = row[:6]
        split = row[6] if len(row) == 7 else "train"
        if eid in seen:
            raise ValueError(f"{path}: duplicate entry id '{eid}'")
        seen.add(eid)
        if itype not in IMAGE_TYPES:
            raise ValueError(f"{path}: unknown image type '{itype}' for entry '{eid}'")
        if degr not in DEGRADATIONS:
            raise ValueError(f"{path}: unknown degradation '{degr}' for entry '{eid}'")
        if split not in SPLITS:
            raise ValueError(f"{path}: unknown split '{split}' for entry '{eid}'")
        entries.append(ManifestEntry(eid, hr, lr, itype, degr, int(scale), split))
    return entries


def load_pairs(manifest_path, split=None) -> list:
    """Read a manifest and load its images, validating hr = lr * r sizes."""
    root = os.path.dirname(os.path.abspath(manifest_path))
    pairs = []
    for e in read_manifest(manifest_path):
        if split is not None and e.split != split:
            continue
        hr = read_image(os.path.join(root, e.hr_path))
        lr = read_image(os.path.join(root, e.lr_path))
        if hr.shape != (lr.shape[0] * e.scale, lr.shape[1] * e.scale):
            raise ValueError(
                f"{manifest_path}: entry '{e.entry_id}' violates hr = lr * r: "
                f"hr {hr.shape}, lr {lr.shape}, r {e.scale}")
        pairs.append(SamplePair(e.entry_id, lr.astype(np.float32),
                                hr.astype(np.float32), e.scale))
    return pairs
