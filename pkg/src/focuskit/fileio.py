"""Serialization for every artifact the toolkit reads or writes.

Formats: PFM (float maps, little-endian, bottom-up rows), binary
little-endian PLY (float32 xyz + optional intensity), 8-bit PNG via Pillow,
and JSON for transforms, metadata, and reports. All writers go through an
atomic temp-file-plus-rename so a crash never leaves a half-written output.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .images import DepthMap, RgbImage
from .pointcloud import PointCloud, RigidTransform


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def config_hash(obj) -> str:
    """sha256 over the canonical compact JSON encoding of a config mapping."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def artifact_metadata(seed: int | None, config: dict) -> dict:
    """The provenance block embedded in every output: tool version, the seed
    that produced the artifact, and a hash of the full command config."""
    return {
        "tool_version": __version__,
        "seed": seed,
        "config_hash": config_hash(config),
    }


def write_json(path, obj) -> None:
    atomic_write_bytes(path, canonical_json(obj).encode("utf-8"))


def read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# PFM: "Pf\n<width> <height>\n<scale>\n" + float32 rows, bottom row first.
# Negative scale marks little-endian; we always write -1.0.


def pfm_bytes(array: np.ndarray) -> bytes:
    a = np.asarray(array, dtype=np.float32)
    if a.ndim != 2:
        raise ValueError(f"pfm writer expects a 2D array, got shape {a.shape}")
    h, w = a.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    return header + np.flipud(a).astype("<f4").tobytes()


def write_pfm(path, array: np.ndarray) -> None:
    atomic_write_bytes(path, pfm_bytes(array))


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    parts = blob.split(b"\n", 3)
    if len(parts) < 4 or parts[0] not in (b"Pf", b"PF"):
        raise ValueError(f"{path}: not a PFM file")
    if parts[0] == b"PF":
        raise ValueError(f"{path}: color PFM not supported, expected grayscale 'Pf'")
    w, h = (int(v) for v in parts[1].split())
    scale = float(parts[2])
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(parts[3], dtype=dtype, count=w * h).reshape(h, w)
    return np.flipud(data).astype(np.float64)


def write_depth_pfm(path, depth: DepthMap) -> None:
    """Depth maps store invalid pixels as 0 (depths are strictly positive)."""
    write_pfm(path, np.where(depth.valid, depth.data, 0.0))


def read_depth_pfm(path) -> DepthMap:
    raw = read_pfm(path)
    valid = np.isfinite(raw) & (raw > 0)
    return DepthMap(np.where(valid, raw, 0.0), valid)


# ---------------------------------------------------------------------------
# PNG via Pillow; values round-trip through 8-bit exactly as round(v * 255).


def png_bytes(image: RgbImage) -> bytes:
    u8 = np.rint(image.data * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def write_png(path, image: RgbImage) -> None:
    atomic_write_bytes(path, png_bytes(image))


def read_png(path) -> RgbImage:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return RgbImage(arr)


# ---------------------------------------------------------------------------
# Binary little-endian PLY. The frame label rides in a comment line so a
# cloud round-trips losslessly.


def ply_bytes(cloud: PointCloud) -> bytes:
    has_intensity = cloud.intensity is not None
    header = [
        "ply",
        "format binary_little_endian 1.0",
        f"comment frame {cloud.frame}",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if has_intensity:
        header.append("property float intensity")
    header.append("end_header")
    cols = 4 if has_intensity else 3
    body = np.empty((len(cloud), cols), dtype="<f4")
    body[:, :3] = cloud.points
    if has_intensity:
        body[:, 3] = cloud.intensity
    return ("\n".join(header) + "\n").encode("ascii") + body.tobytes()


def write_ply(path, cloud: PointCloud) -> None:
    atomic_write_bytes(path, ply_bytes(cloud))


def read_ply(path_or_bytes) -> PointCloud:
    if isinstance(path_or_bytes, (bytes, bytearray)):
        blob = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as f:
            blob = f.read()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise ValueError("not a PLY file")
    header = blob[:end].decode("ascii").splitlines()
    body = blob[end + len(b"end_header\n") :]

    if "format binary_little_endian 1.0" not in header:
        raise ValueError("only binary little-endian PLY is supported")
    frame = "world"
    n = None
    props: list[str] = []
    for line in header:
        if line.startswith("comment frame "):
            frame = line[len("comment frame ") :]
        elif line.startswith("element vertex "):
            n = int(line.split()[-1])
        elif line.startswith("element ") and not line.startswith("element vertex"):
            raise ValueError(f"unsupported PLY element: {line}")
        elif line.startswith("property "):
            kind, name = line.split()[1:3]
            if kind != "float":
                raise ValueError(f"unsupported PLY property type {kind}")
            props.append(name)
    if n is None:
        raise ValueError("PLY header missing vertex element")
    if props[:3] != ["x", "y", "z"]:
        raise ValueError(f"expected x, y, z leading properties, got {props}")
    data = np.frombuffer(body, dtype="<f4", count=n * len(props)).reshape(n, len(props))
    intensity = data[:, props.index("intensity")] if "intensity" in props else None
    return PointCloud(data[:, :3].astype(np.float64), frame, intensity)


# ---------------------------------------------------------------------------
# Rigid transforms as JSON: 4x4 row-major matrix plus frame labels.


def write_transform_json(path, t: RigidTransform) -> None:
    write_json(
        path,
        {
            "matrix": [[float(v) for v in row] for row in t.matrix()],
            "source_frame": t.source_frame,
            "target_frame": t.target_frame,
        },
    )


def read_transform_json(path) -> RigidTransform:
    d = read_json(path)
    return RigidTransform.from_matrix(
        np.asarray(d["matrix"], dtype=np.float64),
        str(d.get("source_frame", "source")),
        str(d.get("target_frame", "target")),
    )
