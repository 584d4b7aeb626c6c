"""Procedural test scene: capsule-limb humanoid, off-surface shell geometry,
ground-truth rendering of the true geometry, and multi-view dataset generation.

The ground-truth renderer draws the true geometry (base mesh plus shell) as
opaque textured triangles with a hard nearest-z test: it shares the
projection math with the raster module but none of the layered soft
compositing, so fitted renders can be scored against genuinely independent
images.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .mesh import Pose, Shape, TemplateMesh, lbs, regress_joints
from .raster import Camera, rasterize_layer
from .texture import bilinear_footprint

SEGMENTS = 14
CAP_RINGS = 3


def _orthonormal_frame(axis: np.ndarray):
    axis = axis / np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(helper, axis)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return u, v, axis


@dataclass
class _Part:
    """One capsule piece of the humanoid, with its vertex range and axis stations."""

    name: str
    vert_start: int
    vert_count: int
    stations: list  # (vertex index array excluding the seam duplicate, axis point)
    p0: np.ndarray
    p1: np.ndarray
    radius: float


def _build_capsule(name: str, p0, p1, radius: float, side_rings: int,
                   verts: list, faces: list, vert_uv: list, pole_faces: list,
                   segments: int = SEGMENTS, cap_rings: int = CAP_RINGS,
                   v_lo: float = 0.0, v_hi: float = 1.0) -> _Part:
    """Append a capsule from p0 to p1 to the growing mesh arrays.

    The profile runs bottom pole -> bottom cap -> cylinder -> top cap -> top
    pole; v_lo/v_hi crop it (used for shell pieces like the scalp cap). The
    wrap seam column is duplicated so per-vertex uv stays continuous.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    u_dir, v_dir, a_dir = _orthonormal_frame(p1 - p0)
    length = np.linalg.norm(p1 - p0)

    # stations: (center, ring radius, arclength along profile)
    arc_cap = 0.5 * np.pi * radius
    total = 2 * arc_cap + length
    stations = []
    for i in range(1, cap_rings + 1):
        theta = 0.5 * np.pi * i / cap_rings
        stations.append((p0 - radius * np.cos(theta) * a_dir,
                         radius * np.sin(theta), arc_cap * theta / (0.5 * np.pi)))
    for j in range(1, side_rings):
        stations.append((p0 + (j / side_rings) * length * a_dir,
                         radius, arc_cap + (j / side_rings) * length))
    for i in range(cap_rings):
        theta = 0.5 * np.pi * (1.0 - i / cap_rings)
        stations.append((p1 + radius * np.cos(theta) * a_dir,
                         radius * np.sin(theta),
                         arc_cap + length + arc_cap * (1.0 - theta / (0.5 * np.pi))))

    v_params = np.array([s[2] / total for s in stations])
    keep = (v_params >= v_lo) & (v_params <= v_hi)
    use_bottom_pole = v_lo <= 0.0
    use_top_pole = v_hi >= 1.0

    start = len(verts)
    part_stations = []
    phis = 2.0 * np.pi * np.arange(segments + 1) / segments
    ring_dirs = np.outer(np.cos(phis), u_dir) + np.outer(np.sin(phis), v_dir)

    if use_bottom_pole:
        verts.append(p0 - radius * a_dir)
        vert_uv.append((0.5, 0.0))
    station_rows = []
    for (center, ring_r, arc), vp, kept in zip(stations, v_params, keep):
        if not kept:
            station_rows.append(None)
            continue
        row = np.arange(len(verts), len(verts) + segments + 1)
        station_rows.append(row)
        for c in range(segments + 1):
            verts.append(center + ring_r * ring_dirs[c])
            vert_uv.append((c / segments, vp))
        part_stations.append((row[:segments], center))
    if use_top_pole:
        top_pole = len(verts)
        verts.append(p1 + radius * a_dir)
        vert_uv.append((0.5, 1.0))

    # side quads between consecutive kept stations
    prev = None
    for row in station_rows:
        if row is None:
            prev = None
            continue
        if prev is not None:
            for c in range(segments):
                faces.append((prev[c], prev[c + 1], row[c]))
                faces.append((prev[c + 1], row[c + 1], row[c]))
        prev = row
    # pole fans; wedge uv for the pole corner is patched afterwards
    first_row = next((r for r in station_rows if r is not None), None)
    last_row = next((r for r in reversed(station_rows) if r is not None), None)
    if use_bottom_pole and first_row is not None:
        for c in range(segments):
            faces.append((start, first_row[c + 1], first_row[c]))
            pole_faces.append((len(faces) - 1, 0, (c + 0.5) / segments))
    if use_top_pole and last_row is not None:
        for c in range(segments):
            faces.append((top_pole, last_row[c], last_row[c + 1]))
            pole_faces.append((len(faces) - 1, 0, (c + 0.5) / segments))

    return _Part(name=name, vert_start=start, vert_count=len(verts) - start,
                 stations=part_stations, p0=p0, p1=p1, radius=radius)


_JOINTS = [
    # name, parent, position, (home part, used for the joint regressor)
    ("pelvis", -1, (0.0, 0.95, 0.0), "torso"),
    ("spine", 0, (0.0, 1.15, 0.0), "torso"),
    ("neck", 1, (0.0, 1.42, 0.0), "torso"),
    ("head", 2, (0.0, 1.52, 0.0), "head"),
    ("l_shoulder", 1, (-0.18, 1.38, 0.0), "l_upper_arm"),
    ("l_elbow", 4, (-0.45, 1.38, 0.0), "l_upper_arm"),
    ("l_wrist", 5, (-0.70, 1.38, 0.0), "l_forearm"),
    ("r_shoulder", 1, (0.18, 1.38, 0.0), "r_upper_arm"),
    ("r_elbow", 7, (0.45, 1.38, 0.0), "r_upper_arm"),
    ("r_wrist", 8, (0.70, 1.38, 0.0), "r_forearm"),
    ("l_hip", 0, (-0.09, 0.90, 0.0), "l_thigh"),
    ("l_knee", 10, (-0.09, 0.50, 0.0), "l_thigh"),
    ("l_ankle", 11, (-0.09, 0.10, 0.0), "l_shin"),
    ("r_hip", 0, (0.09, 0.90, 0.0), "r_thigh"),
    ("r_knee", 13, (0.09, 0.50, 0.0), "r_thigh"),
    ("r_ankle", 14, (0.09, 0.10, 0.0), "r_shin"),
]

_PARTS = [
    # name, p0, p1, radius, side rings
    ("torso", (0.0, 0.95, 0.0), (0.0, 1.42, 0.0), 0.14, 6),
    ("head", (0.0, 1.48, 0.0), (0.0, 1.60, 0.0), 0.105, 3),
    ("l_upper_arm", (-0.18, 1.38, 0.0), (-0.45, 1.38, 0.0), 0.050, 4),
    ("l_forearm", (-0.45, 1.38, 0.0), (-0.74, 1.38, 0.0), 0.045, 4),
    ("r_upper_arm", (0.18, 1.38, 0.0), (0.45, 1.38, 0.0), 0.050, 4),
    ("r_forearm", (0.45, 1.38, 0.0), (0.74, 1.38, 0.0), 0.045, 4),
    ("l_thigh", (-0.09, 0.90, 0.0), (-0.09, 0.50, 0.0), 0.075, 5),
    ("l_shin", (-0.09, 0.50, 0.0), (-0.09, 0.08, 0.0), 0.055, 5),
    ("r_thigh", (0.09, 0.90, 0.0), (0.09, 0.50, 0.0), 0.075, 5),
    ("r_shin", (0.09, 0.50, 0.0), (0.09, 0.08, 0.0), 0.055, 5),
]

# atlas slots: 4 columns x 3 rows, one per part (two spare)
_ATLAS_GRID = (4, 3)
_SLOT_MARGIN = 0.08


def _atlas_slot(index: int):
    cols, rows = _ATLAS_GRID
    cx, cy = index % cols, index // cols
    w, h = 1.0 / cols, 1.0 / rows
    return (cx * w + _SLOT_MARGIN * w, cy * h + _SLOT_MARGIN * h,
            w * (1 - 2 * _SLOT_MARGIN), h * (1 - 2 * _SLOT_MARGIN))


def _slot_uv(slot, u, v):
    x0, y0, w, h = slot
    return (x0 + u * w, y0 + v * h)


def _axial_param(part: _Part, verts: np.ndarray) -> np.ndarray:
    """Normalized position of each part vertex along the joint axis p0 -> p1."""
    axis = part.p1 - part.p0
    length2 = float(axis @ axis)
    rel = verts[part.vert_start:part.vert_start + part.vert_count] - part.p0
    return (rel @ axis) / length2


def _ramp(s: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.clip((s - lo) / (hi - lo), 0.0, 1.0)


def _part_weights(name: str, s: np.ndarray, joints: dict) -> list:
    """Analytic (joint, weight-array) pairs for one part; weights sum to 1."""
    if name == "torso":
        w_neck = _ramp(s, 0.75, 1.0) * 0.8
        w_spine = _ramp(s, 0.30, 0.65) * (1.0 - w_neck)
        w_pelvis = 1.0 - w_spine - w_neck
        return [(joints["pelvis"], w_pelvis), (joints["spine"], w_spine),
                (joints["neck"], w_neck)]
    if name == "head":
        w_head = _ramp(s, -0.2, 0.25)
        return [(joints["neck"], 1.0 - w_head), (joints["head"], w_head)]
    side = name[0]
    if "upper_arm" in name:
        w = _ramp(s, 0.55, 0.95)
        return [(joints[f"{side}_shoulder"], 1.0 - w), (joints[f"{side}_elbow"], w)]
    if "forearm" in name:
        w = _ramp(s, 0.55, 0.95)
        return [(joints[f"{side}_elbow"], 1.0 - w), (joints[f"{side}_wrist"], w)]
    if "thigh" in name:
        w = _ramp(s, 0.55, 0.95)
        return [(joints[f"{side}_hip"], 1.0 - w), (joints[f"{side}_knee"], w)]
    if "shin" in name:
        w = _ramp(s, 0.60, 0.98)
        return [(joints[f"{side}_knee"], 1.0 - w), (joints[f"{side}_ankle"], w)]
    raise KeyError(name)


def make_humanoid() -> tuple[TemplateMesh, dict]:
    """Capsule-limb humanoid: ~2k vertices, 16 joints, analytic skin weights.

    Returns the mesh and a dict of construction info (parts, joint names)
    reused by the shell builder and tests.
    """
    verts_list: list = []
    faces_list: list = []
    vert_uv: list = []
    pole_faces: list = []
    parts = {}
    for name, p0, p1, radius, side_rings in _PARTS:
        parts[name] = _build_capsule(name, p0, p1, radius, side_rings,
                                     verts_list, faces_list, vert_uv, pole_faces)
    verts = np.asarray(verts_list)
    faces = np.asarray(faces_list, dtype=np.int32)
    vert_uv = np.asarray(vert_uv)

    # per-wedge uv: vertex uv mapped into the part's atlas slot
    slot_of_vertex = np.empty(len(verts), dtype=np.int64)
    for idx, name in enumerate(parts):
        part = parts[name]
        slot_of_vertex[part.vert_start:part.vert_start + part.vert_count] = idx
    uv_coords = np.empty((len(faces), 3, 2))
    for corner in range(3):
        vid = faces[:, corner]
        slots = np.array([_atlas_slot(s) for s in slot_of_vertex[vid]])
        uv_coords[:, corner, 0] = slots[:, 0] + vert_uv[vid, 0] * slots[:, 2]
        uv_coords[:, corner, 1] = slots[:, 1] + vert_uv[vid, 1] * slots[:, 3]
    for face_idx, corner, u_mid in pole_faces:
        slot = _atlas_slot(slot_of_vertex[faces[face_idx, corner]])
        v_pole = vert_uv[faces[face_idx, corner], 1]
        uv_coords[face_idx, corner] = _slot_uv(slot, u_mid, v_pole)

    joint_names = {name: j for j, (name, _, _, _) in enumerate(_JOINTS)}
    num_joints = len(_JOINTS)
    parents = np.array([p for _, p, _, _ in _JOINTS], dtype=np.int32)
    joint_pos = np.array([pos for _, _, pos, _ in _JOINTS])

    skin_weights = np.zeros((len(verts), num_joints))
    for name, part in parts.items():
        s = _axial_param(part, verts)
        sl = slice(part.vert_start, part.vert_start + part.vert_count)
        for joint, w in _part_weights(name, s, joint_names):
            skin_weights[sl, joint] += w

    joint_regressor = np.zeros((num_joints, len(verts)))
    for j, (_, _, pos, home) in enumerate(_JOINTS):
        part = parts[home]
        axis = part.p1 - part.p0
        t = float((np.asarray(pos) - part.p0) @ axis) / float(axis @ axis)
        centers_t = [float((c - part.p0) @ axis) / float(axis @ axis)
                     for _, c in part.stations]
        order = np.argsort(centers_t)
        pairs = [(centers_t[k], part.stations[k][0]) for k in order]
        lo = max(i for i, (ct, _) in enumerate(pairs) if ct <= t + 1e-12)
        hi = min(lo + 1, len(pairs) - 1)
        if hi == lo:
            alpha = 0.0
        else:
            alpha = (t - pairs[lo][0]) / (pairs[hi][0] - pairs[lo][0])
        for (weight, ring) in ((1.0 - alpha, pairs[lo][1]), (alpha, pairs[hi][1])):
            if weight > 0.0:
                joint_regressor[j, ring] += weight / len(ring)

    # single "bulk" blend shape: radial displacement away from the part axis
    shape_dir = np.zeros_like(verts)
    for part in parts.values():
        sl = slice(part.vert_start, part.vert_start + part.vert_count)
        axis = part.p1 - part.p0
        t = np.clip(_axial_param(part, verts), 0.0, 1.0)
        foot = part.p0 + t[:, None] * axis
        radial = verts[sl] - foot
        shape_dir[sl] = radial / np.linalg.norm(radial, axis=1, keepdims=True)
    shape_basis = (0.03 * shape_dir)[None]

    mesh = TemplateMesh(vertices=verts, faces=faces, uv_coords=uv_coords,
                        skin_weights=skin_weights, parents=parents,
                        joint_regressor=joint_regressor, shape_basis=shape_basis)
    mesh.validate()
    info = {"parts": parts, "joint_names": joint_names, "joint_positions": joint_pos}
    return mesh, info


# ---------------------------------------------------------------------------
# true scene: base + off-surface shell, with ground-truth textures


@dataclass
class TrueScene:
    """Opaque true geometry (base + shell) used to render reference images."""

    base: TemplateMesh
    verts: np.ndarray          # (Vb + Vs, 3)
    faces: np.ndarray          # merged, shell faces index shifted
    uv_coords: np.ndarray      # per wedge; shell faces use the shell texture space
    face_tex: np.ndarray       # (F,) 0 = base texture, 1 = shell texture
    skin_weights: np.ndarray   # (Vb + Vs, J)
    textures: list             # two (H, W, 3) float arrays in [0, 1]
    shell_vert_start: int

    def posed(self, pose: Pose, shape: Shape | None = None) -> np.ndarray:
        base_shaped = self.base.vertices if shape is None else \
            self.base.vertices + np.einsum("b,bvi->vi", shape.coeffs, self.base.shape_basis)
        joints = regress_joints(self.base, base_shaped)
        all_rest = self.verts.copy()
        all_rest[:len(base_shaped)] = base_shaped
        return lbs(all_rest, joints, self.skin_weights, self.base.parents, pose)


SHELL_OFFSET = 0.007  # meters off the base surface, within the 5-8 mm band


def _append_shell_piece(name: str, p0, p1, radius: float, side_rings: int,
                        v_lo: float, v_hi: float, uv_rect,
                        verts, faces, vert_uv, pole_faces) -> _Part:
    part = _build_capsule(name, p0, p1, radius, side_rings, verts, faces,
                          vert_uv, pole_faces, v_lo=v_lo, v_hi=v_hi)
    # remap the piece's uv into its rectangle of the shell texture space
    x0, y0, w, h = uv_rect
    lo = min(v_lo, 1.0)
    span = max(v_hi - v_lo, 1e-9)
    for i in range(part.vert_start, part.vert_start + part.vert_count):
        u, v = vert_uv[i]
        vert_uv[i] = (x0 + u * w, y0 + np.clip((v - lo) / span, 0.0, 1.0) * h)
    return part


def make_true_scene(rng: np.random.Generator, tex_size: int = 512) -> TrueScene:
    """Base humanoid plus hair-cap and clothing-band shells with distinct textures."""
    base, info = make_humanoid()
    parts = info["parts"]
    joints = info["joint_names"]

    verts_list = list(base.vertices)
    vert_uv = [(0.0, 0.0)] * len(verts_list)
    faces_list: list = []
    pole_faces: list = []
    shell_vert_start = len(verts_list)
    shell_face_start = 0

    head = parts["head"]
    scalp = _append_shell_piece(
        "scalp_shell", head.p0, head.p1, head.radius + SHELL_OFFSET, 3,
        v_lo=0.45, v_hi=1.01, uv_rect=(0.02, 0.02, 0.46, 0.96),
        verts=verts_list, faces=faces_list, vert_uv=vert_uv, pole_faces=pole_faces)
    torso = parts["torso"]
    band = _append_shell_piece(
        "band_shell", torso.p0, torso.p1, torso.radius + SHELL_OFFSET, 8,
        v_lo=0.22, v_hi=0.78, uv_rect=(0.52, 0.02, 0.46, 0.96),
        verts=verts_list, faces=faces_list, vert_uv=vert_uv, pole_faces=pole_faces)

    verts = np.asarray(verts_list)
    shell_faces = np.asarray(faces_list, dtype=np.int32)
    vert_uv = np.asarray(vert_uv)

    shell_uv = np.empty((len(shell_faces), 3, 2))
    for corner in range(3):
        shell_uv[:, corner] = vert_uv[shell_faces[:, corner]]
    for face_idx, corner, u_mid in pole_faces:
        vid = shell_faces[face_idx, corner]
        # pole wedges keep the remapped v; u sits mid-fan within the rect
        rect = (0.02, 0.02, 0.46, 0.96) if vid < scalp.vert_start + scalp.vert_count \
            else (0.52, 0.02, 0.46, 0.96)
        shell_uv[face_idx, corner] = (rect[0] + u_mid * rect[2], vert_uv[vid, 1])

    faces = np.concatenate([base.faces, shell_faces])
    uv_coords = np.concatenate([base.uv_coords, shell_uv])
    face_tex = np.zeros(len(faces), dtype=np.int32)
    face_tex[len(base.faces):] = 1

    # shell skinning: scalp follows the head, band follows the torso scheme
    skin = np.zeros((len(verts), base.num_joints))
    skin[:shell_vert_start] = base.skin_weights
    s_scalp = _axial_param(scalp, verts)
    sl = slice(scalp.vert_start, scalp.vert_start + scalp.vert_count)
    for joint, w in _part_weights("head", s_scalp, joints):
        skin[sl, joint] += w
    s_band = _axial_param(band, verts)
    sl = slice(band.vert_start, band.vert_start + band.vert_count)
    for joint, w in _part_weights("torso", s_band, joints):
        skin[sl, joint] += w

    textures = [_base_texture(rng, tex_size), _shell_texture(rng, tex_size)]
    return TrueScene(base=base, verts=verts, faces=faces, uv_coords=uv_coords,
                     face_tex=face_tex, skin_weights=skin, textures=textures,
                     shell_vert_start=shell_vert_start)


def _pattern_grid(size: int):
    u = (np.arange(size) + 0.5) / size
    return np.meshgrid(u, u)  # (uu, vv) with vv varying along rows


def _base_texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Skin-toned base with per-part tints and smooth low-frequency variation."""
    uu, vv = _pattern_grid(size)
    tex = np.empty((size, size, 3))
    skin = np.array([0.83, 0.64, 0.52])
    tex[:] = skin
    tints = rng.uniform(-0.12, 0.12, size=(len(_PARTS), 3))
    for idx in range(len(_PARTS)):
        x0, y0, w, h = _atlas_slot(idx)
        inside = (uu >= x0 - 0.01) & (uu <= x0 + w + 0.01) & \
                 (vv >= y0 - 0.01) & (vv <= y0 + h + 0.01)
        tex[inside] = np.clip(skin + tints[idx], 0.05, 0.95)
    # legs get dark trousers, head slot gets a simple face-ish band
    for idx, (name, *_rest) in enumerate(_PARTS):
        x0, y0, w, h = _atlas_slot(idx)
        inside = (uu >= x0) & (uu <= x0 + w) & (vv >= y0) & (vv <= y0 + h)
        if "thigh" in name or "shin" in name:
            tex[inside] = np.array([0.18, 0.20, 0.32])
        if name == "head":
            band = inside & (vv > y0 + 0.45 * h) & (vv < y0 + 0.62 * h)
            tex[band] = np.array([0.55, 0.36, 0.30])
    wave = 0.08 * np.sin(2 * np.pi * (3.0 * uu + 1.7 * vv))
    tex = np.clip(tex + wave[:, :, None], 0.02, 0.98)
    return tex


def _shell_texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """High-contrast hair (left half) and striped garment (right half)."""
    uu, vv = _pattern_grid(size)
    tex = np.empty((size, size, 3))
    hair = np.array([0.09, 0.06, 0.05])
    hair_sheen = 0.10 * (0.5 + 0.5 * np.sin(2 * np.pi * 11.0 * uu))
    tex[:] = hair
    tex += hair_sheen[:, :, None] * np.array([1.0, 0.85, 0.6])
    right = uu >= 0.5
    stripes = 0.5 + 0.5 * np.sign(np.sin(2 * np.pi * 5.0 * vv))
    garment = np.where(stripes[:, :, None] > 0.5,
                       np.array([0.85, 0.33, 0.10]), np.array([0.10, 0.22, 0.55]))
    tex[right] = garment[right]
    return np.clip(tex, 0.0, 1.0)


def lookup_texture(image: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Plain bilinear lookup into a float image (no activation), uv (M, 2)."""
    h, w = image.shape[:2]
    rows, cols, weights = bilinear_footprint(h, w, uv)
    return np.einsum("mc,mcd->md", weights, image[rows, cols])


def render_reference(scene: TrueScene, cam: Camera, pose: Pose,
                     shape: Shape | None = None,
                     background=(1.0, 1.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Hard-z opaque render of the true geometry. Returns (rgb, alpha)."""
    posed = scene.posed(pose, shape)
    gbuf = rasterize_layer(cam, posed, scene.faces, scene.uv_coords)
    height, width = gbuf.image_size
    rgb = np.empty((height, width, 3))
    rgb[:] = np.asarray(background, dtype=np.float64)
    alpha = gbuf.hit.astype(np.float64)
    for tex_id, image in enumerate(scene.textures):
        mask = gbuf.hit & (scene.face_tex[np.where(gbuf.hit, gbuf.face_id, 0)] == tex_id)
        if mask.any():
            rgb[mask] = lookup_texture(image, gbuf.uv[mask])
    return rgb, alpha


# ---------------------------------------------------------------------------
# dataset generation


def ring_camera(azimuth: float, image_size: int, target=(0.0, 1.22, 0.0),
                distance: float = 1.45, eye_height: float = 1.35) -> Camera:
    """Camera on the fixed-elevation ring, framing the torso-and-head region."""
    target = np.asarray(target, dtype=np.float64)
    eye = target + np.array([distance * np.sin(azimuth),
                             eye_height - target[1],
                             distance * np.cos(azimuth)])
    focal = 1.45 * image_size
    return Camera.look_at(eye, target, up=(0.0, 1.0, 0.0), fx=focal, fy=focal,
                          width=image_size, height=image_size, near=0.05, far=10.0)


def perturbed_pose(rng: np.random.Generator, num_joints: int,
                   scale: float = 0.05) -> Pose:
    rotations = np.zeros((num_joints, 3))
    for name in ("spine", "neck", "l_shoulder", "l_elbow", "r_shoulder",
                 "r_elbow", "l_hip", "r_hip"):
        j = next(i for i, (n, *_r) in enumerate(_JOINTS) if n == name)
        rotations[j] = rng.normal(0.0, scale, size=3)
    return Pose(rotations)


@dataclass
class SyntheticScene:
    """Everything make_synthetic_scene wrote to disk, plus the live objects."""

    root: Path
    mesh_path: Path
    manifest_path: Path
    mesh: TemplateMesh
    true_scene: TrueScene
    manifest: io.DatasetManifest


def make_synthetic_scene(out_dir, seed: int, views: int, image_size: int,
                         background=(1.0, 1.0, 1.0)) -> SyntheticScene:
    """Write a seeded multi-view dataset of the true scene to `out_dir`.

    Layout: meshes/, cameras/, poses/, images/, manifest.json. Reference
    images are RGBA PNG (alpha = coverage) rendered from the true geometry.
    75% of views (floor) become the train split via a seeded shuffle.
    """
    if views < 8:
        raise ValueError(f"need at least 8 views, got {views}")
    root = Path(out_dir)
    for sub in ("meshes", "cameras", "poses", "images"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    scene = make_true_scene(rng)

    mesh_path = root / "meshes" / "template.lsvmesh"
    io.save_mesh(mesh_path, scene.base)

    n_train = int(np.floor(0.75 * views))
    split_order = rng.permutation(views)
    split = np.array(["test"] * views, dtype=object)
    split[split_order[:n_train]] = "train"

    entries = []
    for k in range(views):
        azimuth = 2.0 * np.pi * k / views
        cam = ring_camera(azimuth, image_size)
        pose = perturbed_pose(rng, scene.base.num_joints)
        rgb, alpha = render_reference(scene, cam, pose, background=background)
        cam_path = root / "cameras" / f"view_{k:03d}.json"
        pose_path = root / "poses" / f"view_{k:03d}.json"
        img_path = root / "images" / f"view_{k:03d}.png"
        io.save_camera(cam_path, cam)
        io.save_pose(pose_path, pose)
        io.save_image(img_path, rgb, alpha)
        entries.append(io.ManifestEntry(image=img_path, camera=cam_path,
                                        pose=pose_path, split=str(split[k])))
    manifest = io.DatasetManifest(entries)
    manifest_path = root / "manifest.json"
    io.save_manifest(manifest_path, manifest)
    return SyntheticScene(root=root, mesh_path=mesh_path, manifest_path=manifest_path,
                          mesh=scene.base, true_scene=scene, manifest=manifest)


# ---------------------------------------------------------------------------
# simple analytic meshes for tests and gradient checks

_ICO_T = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array([
    [-1, _ICO_T, 0], [1, _ICO_T, 0], [-1, -_ICO_T, 0], [1, -_ICO_T, 0],
    [0, -1, _ICO_T], [0, 1, _ICO_T], [0, -1, -_ICO_T], [0, 1, -_ICO_T],
    [_ICO_T, 0, -1], [_ICO_T, 0, 1], [-_ICO_T, 0, -1], [-_ICO_T, 0, 1],
], dtype=np.float64)
_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
], dtype=np.int32)


def make_icosphere(radius: float = 1.0, subdivisions: int = 3):
    """Geodesic sphere centered at the origin; faces wound outward."""
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS[0])
    faces = _ICO_FACES.copy()
    for _ in range(subdivisions):
        midpoint: dict = {}
        new_faces = []
        verts = list(verts)

        def mid(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.asarray(verts)
        faces = np.asarray(new_faces, dtype=np.int32)
    verts = verts * radius
    # enforce outward winding
    centroids = verts[faces].mean(axis=1)
    normals = np.cross(verts[faces[:, 1]] - verts[faces[:, 0]],
                       verts[faces[:, 2]] - verts[faces[:, 0]])
    flip = np.einsum("fc,fc->f", normals, centroids) < 0
    faces[flip] = faces[flip][:, ::-1]
    return verts, faces


def icosphere_template(radius: float = 1.0, subdivisions: int = 3) -> TemplateMesh:
    """Icosphere wrapped as a single-joint template (for tests and grad checks)."""
    verts, faces = make_icosphere(radius, subdivisions)
    phi = np.arctan2(verts[:, 2], verts[:, 0])  # [-pi, pi]
    theta = np.arccos(np.clip(verts[:, 1] / radius, -1.0, 1.0))
    vert_uv = np.stack([(phi + np.pi) / (2 * np.pi), theta / np.pi], axis=1)
    uv = vert_uv[faces]
    # faces crossing the seam: pull wrapped corners to the nearest branch in [0, 1]
    span = uv[:, :, 0].max(axis=1) - uv[:, :, 0].min(axis=1)
    for f in np.flatnonzero(span > 0.5):
        u = uv[f, :, 0]
        uv[f, :, 0] = np.where(u < 0.5, np.minimum(u + 1.0, 1.0), u)
    weights = np.ones((len(verts), 1))
    regressor = np.full((1, len(verts)), 1.0 / len(verts))
    return TemplateMesh(vertices=verts, faces=faces, uv_coords=uv,
                        skin_weights=weights, parents=np.array([-1], dtype=np.int32),
                        joint_regressor=regressor,
                        shape_basis=np.zeros((0, len(verts), 3)))
