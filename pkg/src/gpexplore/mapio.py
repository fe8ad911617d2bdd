"""PGM and CSV readers/writers for maps, fields, scan logs and action sets.

PGM rows are stored top row first, while grid row 0 is the bottom of the
map, so images are flipped vertically on the way in and out.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .geometry import GridSpec, Pose2
from .sensor import Scan

FLOAT_FMT = "%.17g"


def _tokens(data: bytes):
    """Yield whitespace separated header tokens, skipping # comments."""
    i, n = 0, len(data)
    while i < n:
        c = data[i:i + 1]
        if c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path) -> np.ndarray:
    """Read a P5 or P2 image as a uint8/uint16 array with row 0 at the bottom."""
    data = Path(path).read_bytes()
    toks = _tokens(data)
    magic, _ = next(toks)
    if magic not in (b"P5", b"P2"):
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    width = int(next(toks)[0])
    height = int(next(toks)[0])
    maxval_tok, end = next(toks)
    maxval = int(maxval_tok)
    if magic == b"P5":
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        body = data[end + 1:]
        img = np.frombuffer(body, dtype=dtype, count=width * height).reshape(height, width)
    else:
        vals = [int(t) for t, _ in toks]
        if len(vals) < width * height:
            raise ValueError(f"{path}: truncated P2 body")
        img = np.array(vals[: width * height]).reshape(height, width)
    return np.flipud(img).astype(np.uint16 if maxval > 255 else np.uint8)


def write_pgm(path, img: np.ndarray) -> None:
    """Write an 8-bit P5 image; ``img`` row 0 is the bottom of the map."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ValueError("write_pgm expects uint8 data")
    h, w = img.shape
    header = f"P5\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + np.flipud(img).tobytes())


def load_environment_pgm(path, threshold: int = 128) -> np.ndarray:
    """Binary occupancy from an image: pixels darker than ``threshold`` are occupied."""
    return read_pgm(path) < threshold


def save_environment_pgm(path, truth: np.ndarray) -> None:
    write_pgm(path, np.where(truth, 0, 255).astype(np.uint8))


def probability_image(p: np.ndarray) -> np.ndarray:
    """Occupancy probability to gray levels: free is white, occupied black."""
    return np.rint(255.0 * (1.0 - np.clip(p, 0.0, 1.0))).astype(np.uint8)


def write_field_pgm(path, field: np.ndarray, lo: Optional[float] = None,
                    hi: Optional[float] = None) -> Tuple[float, float]:
    """Affine-scale ``field`` from [lo, hi] to 0..255 and write it.

    The scale is written to a ``.scale`` sidecar next to the image.
    """
    field = np.asarray(field, dtype=float)
    lo = float(np.min(field)) if lo is None else float(lo)
    hi = float(np.max(field)) if hi is None else float(hi)
    span = hi - lo if hi > lo else 1.0
    img = np.rint(255.0 * np.clip((field - lo) / span, 0.0, 1.0)).astype(np.uint8)
    write_pgm(path, img)
    Path(str(path) + ".scale").write_text(f"lo={lo!r}\nhi={hi!r}\n")
    return lo, hi


def write_map_csv(path, grid: GridSpec, mu, var, prob) -> None:
    X, Y = grid.cell_centers()
    rows = np.column_stack([X.ravel(), Y.ravel(), np.ravel(mu), np.ravel(var), np.ravel(prob)])
    _write_rows(path, ["x", "y", "mu", "sigma", "p"], rows)


def write_field_csv(path, grid: GridSpec, field, name: str) -> None:
    X, Y = grid.cell_centers()
    _write_rows(path, ["x", "y", name], np.column_stack([X.ravel(), Y.ravel(), np.ravel(field)]))


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def read_map_csv(path) -> Tuple[GridSpec, dict]:
    """Read a map CSV and recover its grid from the cell-center coordinates."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    xs = np.unique(data["x"])
    ys = np.unique(data["y"])
    if len(xs) * len(ys) != len(data):
        raise ValueError(f"{path}: rows do not form a full grid")
    res = float(xs[1] - xs[0]) if len(xs) > 1 else float(ys[1] - ys[0])
    grid = GridSpec((float(xs[0] - res / 2), float(ys[0] - res / 2)), res, len(xs), len(ys))
    order = np.lexsort((data["x"], data["y"]))
    fields = {name: np.asarray(data[name])[order].reshape(grid.shape)
              for name in data.dtype.names if name not in ("x", "y")}
    return grid, fields


def write_scan_log(path, scans: Iterable[Scan]) -> None:
    """One row per beam: step, pose_x, pose_y, pose_h, bearing, range."""
    with open(path, "w", newline="") as fh:
        fh.write("step,pose_x,pose_y,pose_h,bearing,range,r_max\n")
        for step, s in enumerate(scans):
            for b, r in zip(s.bearings, s.ranges):
                vals = (s.pose.x, s.pose.y, s.pose.heading, b, r, s.r_max)
                fh.write(f"{step}," + ",".join(FLOAT_FMT % v for v in vals) + "\n")


def read_scan_log(path, r_max: Optional[float] = None) -> List[Scan]:
    scans: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            step = int(row["step"])
            rm = float(row["r_max"]) if row.get("r_max") else r_max
            if rm is None:
                raise ValueError("scan log has no r_max column; pass r_max")
            entry = scans.setdefault(step, {"pose": (float(row["pose_x"]), float(row["pose_y"]),
                                                     float(row["pose_h"])),
                                            "b": [], "r": [], "r_max": rm})
            entry["b"].append(float(row["bearing"]))
            entry["r"].append(float(row["range"]))
    if not scans:
        raise ValueError("no scans")
    out = []
    for step in sorted(scans):
        e = scans[step]
        out.append(Scan(Pose2(*e["pose"]), np.array(e["r"]), np.array(e["b"]), e["r_max"]))
    return out


def write_actions_csv(path, actions) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("cx,cy,size,cost\n")
        for a in actions:
            fh.write(f"{FLOAT_FMT % a.centroid[0]},{FLOAT_FMT % a.centroid[1]},"
                     f"{a.cluster_size},{FLOAT_FMT % a.path_cost}\n")


def format_float(v: float) -> str:
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return FLOAT_FMT % v
