"""Readers and writers for the on-disk formats (PGM/PPM rasters, TSV tables)."""
import os
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidInputError
from .labels import TagTable

IMAGE_SUFFIXES = (".png", ".ppm", ".pnm")
N_FEATURES = 137


def _fmt(x):
    # shortest repr that round-trips exactly
    return repr(float(x))


def read_image(path):
    """8-bit RGB array from a PNG/PPM file."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("RGB", "RGBA", "L", "P"):
                raise InvalidInputError(f"{path}: unsupported image mode {im.mode}")
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise InvalidInputError(f"{path}: cannot read image ({exc})") from exc


def write_ppm(path, rgb):
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def write_pgm(path, array, maxval=None):
    """Binary PGM (P5); 16-bit big-endian when ``maxval`` exceeds 255."""
    a = np.asarray(array)
    if maxval is None:
        maxval = 255 if a.dtype == np.uint8 else 65535
    if a.min() < 0 or a.max() > maxval:
        raise InvalidInputError(f"{path}: values outside 0..{maxval}")
    h, w = a.shape
    data = a.astype(">u2" if maxval > 255 else np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(data)


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(path):
    raw = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(raw, pos)
        if not m:
            raise InvalidInputError(f"{path}: truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise InvalidInputError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(f) for f in fields[1:])
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    count = w * h
    if len(raw) - pos < count * dtype.itemsize:
        raise InvalidInputError(f"{path}: truncated PGM data")
    a = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).reshape(h, w)
    return a.astype(np.int64) if maxval > 255 else a.copy()


def list_images(directory):
    d = Path(directory)
    if not d.is_dir():
        raise InvalidInputError(f"{directory}: not a directory")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise InvalidInputError(f"{directory}: no PNG/PPM images found")
    return files


def _read_rows(path, expect_header):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc.strerror}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split("\t")[0] != expect_header:
        raise InvalidInputError(f"{path}: missing header starting with {expect_header!r}")
    return lines[0].split("\t"), [ln.split("\t") for ln in lines[1:]]


def write_tags(path, tags):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("image_id\tcategories\n")
        for img, t in zip(tags.image_ids, tags.tags):
            fh.write(f"{img}\t{','.join(str(c) for c in sorted(t))}\n")


def read_tags(path, n_categories=0):
    """Tag table; the category count is inferred from the largest index unless given."""
    _, rows = _read_rows(path, "image_id")
    ids, sets = [], []
    for i, row in enumerate(rows, start=2):
        if len(row) != 2:
            raise InvalidInputError(f"{path}:{i}: expected 2 columns")
        try:
            sets.append({int(c) for c in row[1].split(",") if c.strip()})
        except ValueError:
            raise InvalidInputError(f"{path}:{i}: bad category list {row[1]!r}") from None
        ids.append(row[0])
    C = n_categories or (max((max(s) for s in sets if s), default=-1) + 1)
    return TagTable(ids, sets, C)


def write_regions(path, regions):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        head = ["region_id", "image_id", "rho"] + [f"f{i}" for i in range(N_FEATURES)]
        fh.write("\t".join(head) + "\n")
        for r, (img, rho, feat) in enumerate(zip(regions.image_ids, regions.rho, regions.features)):
            fh.write("\t".join([str(r), img, _fmt(rho)] + [_fmt(x) for x in feat]) + "\n")


def read_regions(path):
    from .pipeline import RegionSet

    head, rows = _read_rows(path, "region_id")
    if len(head) != 3 + N_FEATURES:
        raise InvalidInputError(f"{path}: expected {3 + N_FEATURES} columns, got {len(head)}")
    ids, rho, feats = [], [], []
    for i, row in enumerate(rows, start=2):
        if len(row) != len(head):
            raise InvalidInputError(f"{path}:{i}: expected {len(head)} columns")
        try:
            rho.append(float(row[2]))
            feats.append([float(x) for x in row[3:]])
        except ValueError:
            raise InvalidInputError(f"{path}:{i}: non-numeric value") from None
        ids.append(row[1])
    if not ids:
        raise InvalidInputError(f"{path}: no regions")
    return RegionSet(np.array(feats), ids, np.array(rho))


def write_labels(path, assigned, scores):
    scores = np.asarray(scores)
    C = scores.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(["region_id", "category"] + [f"s{j}" for j in range(C)]) + "\n")
        for r, (c, row) in enumerate(zip(assigned, scores)):
            fh.write("\t".join([str(r), str(int(c))] + [_fmt(x) for x in row]) + "\n")


def read_labels(path):
    head, rows = _read_rows(path, "region_id")
    assigned = np.array([int(r[1]) for r in rows], dtype=np.int64)
    scores = np.array([[float(x) for x in r[2:]] for r in rows]).reshape(len(rows), len(head) - 2)
    return assigned, scores


def read_map_dir(directory, image_ids):
    d = Path(directory)
    out = []
    for img in image_ids:
        p = d / f"{img}.pgm"
        if not p.exists():
            raise InvalidInputError(f"{p}: missing label map")
        out.append(read_pgm(p))
    return out


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
