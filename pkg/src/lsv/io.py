"""Load/save for every artifact type: meshes, textures, cameras, poses, images, manifests.

Binary formats carry a short ASCII magic and little-endian payloads; camera,
pose, shape, and manifest files are JSON. Binary payloads round-trip
bit-exactly; float64 values are narrowed to float32 on save.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError
from .mesh import Pose, Shape, TemplateMesh
from .raster import Camera
from .texture import TextureStack

MESH_MAGIC = b"LSVMESH1"
TEX_MAGIC = b"LSVTEX1"
IMG_MAGIC = b"LSVIMG1"

_MESH_SECTIONS = (
    # (header name, mesh attribute, dtype, shape template)
    ("vertices", "vertices", "<f4", ("V", 3)),
    ("faces", "faces", "<u4", ("F", 3)),
    ("uv_coords", "uv_coords", "<f4", ("F", 3, 2)),
    ("skin_weights", "skin_weights", "<f4", ("V", "J")),
    ("parents", "parents", "<i4", ("J",)),
    ("joint_regressor", "joint_regressor", "<f4", ("J", "V")),
    ("shape_basis", "shape_basis", "<f4", ("B", "V", 3)),
)


def save_mesh(path, mesh: TemplateMesh) -> None:
    mesh.validate()
    counts = {"V": mesh.num_vertices, "F": mesh.num_faces,
              "J": mesh.num_joints, "B": mesh.num_shape_coeffs}
    blobs, sections, offset = [], {}, 0
    for name, attr, dtype, _ in _MESH_SECTIONS:
        arr = np.ascontiguousarray(getattr(mesh, attr)).astype(dtype)
        blobs.append(arr.tobytes())
        sections[name] = {"offset": offset, "dtype": dtype, "shape": list(arr.shape)}
        offset += len(blobs[-1])
    header = json.dumps({"version": 1, "counts": counts, "sections": sections}).encode()
    with open(path, "wb") as fh:
        fh.write(MESH_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_mesh(path) -> TemplateMesh:
    data = Path(path).read_bytes()
    if data[:8] != MESH_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:8]!r}, expected {MESH_MAGIC!r}")
    if len(data) < 12:
        raise FormatError(f"{path}: truncated header")
    (header_len,) = struct.unpack_from("<I", data, 8)
    header_end = 12 + header_len
    if len(data) < header_end:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[12:header_end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    counts = header.get("counts", {})
    dims = {"V": counts.get("V"), "F": counts.get("F"),
            "J": counts.get("J"), "B": counts.get("B")}
    if any(not isinstance(v, int) or v < 0 for v in dims.values()):
        raise FormatError(f"{path}: header counts must be non-negative integers, got {dims}")
    payload = data[header_end:]
    fields = {}
    for name, attr, dtype, shape_tpl in _MESH_SECTIONS:
        sec = header.get("sections", {}).get(name)
        if sec is None:
            raise FormatError(f"{path}: header missing section {name!r}")
        shape = tuple(dims[d] if isinstance(d, str) else d for d in shape_tpl)
        if tuple(sec.get("shape", ())) != shape:
            raise FormatError(
                f"{path}: section {name!r} shape {sec.get('shape')} does not match counts {shape}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        start = sec["offset"]
        if start + nbytes > len(payload):
            raise FormatError(f"{path}: section {name!r} extends past end of file")
        fields[attr] = np.frombuffer(payload, dtype=sec["dtype"], count=int(np.prod(shape, dtype=np.int64)),
                                     offset=start).reshape(shape)
    return TemplateMesh(**fields).validate()


def save_texture(path, tex: TextureStack) -> None:
    with open(path, "wb") as fh:
        fh.write(TEX_MAGIC)
        fh.write(struct.pack("<III", tex.num_layers, tex.height, tex.width))
        fh.write(tex.params.astype("<f4").tobytes())


def load_texture(path) -> TextureStack:
    data = Path(path).read_bytes()
    if data[:7] != TEX_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:7]!r}, expected {TEX_MAGIC!r}")
    if len(data) < 19:
        raise FormatError(f"{path}: truncated header")
    n, h, w = struct.unpack_from("<III", data, 7)
    expected = n * h * w * 4 * 4
    if len(data) != 19 + expected:
        raise FormatError(f"{path}: payload is {len(data) - 19} bytes, expected {expected}")
    params = np.frombuffer(data, dtype="<f4", count=n * h * w * 4, offset=19)
    return TextureStack(params.reshape(n, h, w, 4).astype(np.float64))


def save_float_raster(path, values: np.ndarray) -> None:
    """Float image ('LSVIMG1'): (H, W, C) float32, for loss computation."""
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[:, :, None]
    h, w, c = values.shape
    with open(path, "wb") as fh:
        fh.write(IMG_MAGIC)
        fh.write(struct.pack("<III", h, w, c))
        fh.write(values.astype("<f4").tobytes())


def load_float_raster(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:7] != IMG_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:7]!r}, expected {IMG_MAGIC!r}")
    h, w, c = struct.unpack_from("<III", data, 7)
    if len(data) != 19 + h * w * c * 4:
        raise FormatError(f"{path}: truncated payload")
    return np.frombuffer(data, dtype="<f4", count=h * w * c, offset=19) \
        .reshape(h, w, c).astype(np.float64)


_CAMERA_KEYS = {"fx", "fy", "cx", "cy", "width", "height",
                "rotation", "translation", "near", "far"}


def save_camera(path, cam: Camera) -> None:
    doc = {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
           "width": cam.width, "height": cam.height,
           "rotation": [float(v) for v in cam.rotation.reshape(-1)],
           "translation": [float(v) for v in cam.translation],
           "near": cam.near, "far": cam.far}
    Path(path).write_text(json.dumps(doc, indent=2))


def load_camera(path) -> Camera:
    doc = _load_json_object(path)
    _check_keys(path, "", doc, required=_CAMERA_KEYS)
    rotation = np.asarray(doc["rotation"], dtype=np.float64)
    if rotation.size != 9:
        raise FormatError(f"{path}: /rotation must hold 9 floats, got {rotation.size}")
    cam = Camera(fx=float(doc["fx"]), fy=float(doc["fy"]),
                 cx=float(doc["cx"]), cy=float(doc["cy"]),
                 width=int(doc["width"]), height=int(doc["height"]),
                 rotation=rotation.reshape(3, 3),
                 translation=np.asarray(doc["translation"], dtype=np.float64),
                 near=float(doc["near"]), far=float(doc["far"]))
    return cam.validate()


def save_pose(path, pose: Pose) -> None:
    doc = {"joint_rotations": pose.joint_rotations.tolist(),
           "root_translation": pose.root_translation.tolist()}
    Path(path).write_text(json.dumps(doc, indent=2))


def load_pose(path) -> Pose:
    doc = _load_json_object(path)
    _check_keys(path, "", doc, required={"joint_rotations", "root_translation"})
    return Pose(np.asarray(doc["joint_rotations"], dtype=np.float64),
                np.asarray(doc["root_translation"], dtype=np.float64))


def save_shape(path, shape: Shape) -> None:
    Path(path).write_text(json.dumps({"coeffs": shape.coeffs.tolist()}, indent=2))


def load_shape(path) -> Shape:
    doc = _load_json_object(path)
    _check_keys(path, "", doc, required={"coeffs"})
    return Shape(np.asarray(doc["coeffs"], dtype=np.float64))


@dataclass
class ManifestEntry:
    """One posed view: image plus the camera/pose (and optional shape) that produced it."""

    image: Path
    camera: Path
    pose: Path
    split: str
    shape: Path | None = None


@dataclass
class DatasetManifest:
    """Train/test split over posed multi-view images."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    @property
    def train_entries(self) -> list[ManifestEntry]:
        return self.split("train")

    @property
    def test_entries(self) -> list[ManifestEntry]:
        return self.split("test")


def save_manifest(path, manifest: DatasetManifest) -> None:
    root = Path(path).resolve().parent
    items = []
    for entry in manifest.entries:
        item = {"image": _relativize(entry.image, root),
                "camera": _relativize(entry.camera, root),
                "pose": _relativize(entry.pose, root),
                "split": entry.split}
        if entry.shape is not None:
            item["shape"] = _relativize(entry.shape, root)
        items.append(item)
    Path(path).write_text(json.dumps(items, indent=2))


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if not isinstance(doc, list):
        raise FormatError(f"{path}: top-level value must be a list of entries")
    root = path.resolve().parent
    entries = []
    for i, item in enumerate(doc):
        if not isinstance(item, dict):
            raise FormatError(f"{path}: /{i}: entry must be an object")
        _check_keys(path, f"/{i}", item, required={"image", "camera", "pose", "split"},
                    optional={"shape"})
        if item["split"] not in ("train", "test"):
            raise FormatError(f"{path}: /{i}/split: expected 'train' or 'test', "
                              f"got {item['split']!r}")
        entries.append(ManifestEntry(
            image=root / item["image"], camera=root / item["camera"],
            pose=root / item["pose"], split=item["split"],
            shape=root / item["shape"] if "shape" in item else None))
    return DatasetManifest(entries)


def save_image(path, rgb: np.ndarray, alpha: np.ndarray | None = None) -> None:
    """8-bit RGBA PNG of values in [0, 1]; alpha defaults to fully opaque."""
    rgb8 = np.clip(np.round(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    if alpha is None:
        a8 = np.full(rgb8.shape[:2], 255, dtype=np.uint8)
    else:
        a8 = np.clip(np.round(np.asarray(alpha) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(np.dstack([rgb8, a8]), mode="RGBA").save(path)


def load_image(path) -> np.ndarray:
    """PNG as float64 RGBA in [0, 1], shape (H, W, 4)."""
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGBA"), dtype=np.float64)
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return arr / 255.0


def save_texture_previews(directory, tex: TextureStack) -> list[Path]:
    """Lossy per-layer 8-bit RGBA previews of the activated stack."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    act = tex.activated()
    paths = []
    for n in range(tex.num_layers):
        out = directory / f"layer_{n:02d}.png"
        save_image(out, act[n, :, :, :3], act[n, :, :, 3])
        paths.append(out)
    return paths


def _relativize(target: Path, root: Path) -> str:
    target = Path(target).resolve()
    try:
        return target.relative_to(root).as_posix()
    except ValueError:
        return str(target)


def _load_json_object(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top-level value must be an object")
    return doc


def _check_keys(path, pointer: str, doc: dict, required: set, optional: set = frozenset()):
    for key in required:
        if key not in doc:
            raise FormatError(f"{path}: {pointer}/{key}: missing required field")
    unknown = set(doc) - required - set(optional)
    if unknown:
        warnings.warn(f"{path}: {pointer}: ignoring unknown fields {sorted(unknown)}",
                      stacklevel=2)
