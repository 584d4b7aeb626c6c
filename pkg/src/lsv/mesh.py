"""Skinned template mesh, blend shapes, LBS posing, and layered shell construction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ValidationError

ROW_SUM_TOL = 1e-5
MIN_FACE_AREA = 1e-12


@dataclass
class TemplateMesh:
    """Articulated skinned base mesh in T-pose.

    Vertex positions are in meters. Faces are counter-clockwise when viewed
    from outside. UVs are per wedge (one 2D coordinate per face corner) so
    texture seams do not require duplicated vertices.
    """

    vertices: np.ndarray         # (V, 3) float
    faces: np.ndarray            # (F, 3) int vertex indices
    uv_coords: np.ndarray        # (F, 3, 2) float in [0, 1]^2
    skin_weights: np.ndarray     # (V, J) float, rows sum to 1
    parents: np.ndarray          # (J,) int, -1 for the root, parent < child
    joint_regressor: np.ndarray  # (J, V) float, rows sum to 1
    shape_basis: np.ndarray      # (B, V, 3) float, B may be 0

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int32)
        self.uv_coords = np.ascontiguousarray(self.uv_coords, dtype=np.float64)
        self.skin_weights = np.ascontiguousarray(self.skin_weights, dtype=np.float64)
        self.parents = np.ascontiguousarray(self.parents, dtype=np.int32)
        self.joint_regressor = np.ascontiguousarray(self.joint_regressor, dtype=np.float64)
        if self.shape_basis is None or np.size(self.shape_basis) == 0:
            self.shape_basis = np.zeros((0, len(self.vertices), 3))
        self.shape_basis = np.ascontiguousarray(self.shape_basis, dtype=np.float64)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def num_joints(self) -> int:
        return self.parents.shape[0]

    @property
    def num_shape_coeffs(self) -> int:
        return self.shape_basis.shape[0]

    def validate(self) -> "TemplateMesh":
        """Check all structural invariants, raising ValidationError on the first failure."""
        v, f, j, b = self.num_vertices, self.num_faces, self.num_joints, self.num_shape_coeffs
        if self.vertices.shape != (v, 3):
            raise ValidationError(f"vertices: expected (V, 3), got {self.vertices.shape}")
        if not np.all(np.isfinite(self.vertices)):
            raise ValidationError("vertices: non-finite values")
        if self.faces.shape != (f, 3):
            raise ValidationError(f"faces: expected (F, 3), got {self.faces.shape}")
        if f and (self.faces.min() < 0 or self.faces.max() >= v):
            bad = int(np.argmax((self.faces < 0).any(axis=1) | (self.faces >= v).any(axis=1)))
            raise ValidationError(f"faces: row {bad} references a vertex outside [0, {v})")
        if self.uv_coords.shape != (f, 3, 2):
            raise ValidationError(f"uvCoords: expected (F, 3, 2), got {self.uv_coords.shape}")
        if f and (self.uv_coords.min() < 0.0 or self.uv_coords.max() > 1.0):
            raise ValidationError("uvCoords: values outside [0, 1]")
        if self.skin_weights.shape != (v, j):
            raise ValidationError(f"skinWeights: expected (V, J), got {self.skin_weights.shape}")
        if np.any(self.skin_weights < 0.0):
            bad = int(np.argmax((self.skin_weights < 0.0).any(axis=1)))
            raise ValidationError(f"skinWeights: row {bad} has a negative entry")
        row_sums = self.skin_weights.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
            bad = int(np.argmax(np.abs(row_sums - 1.0) > ROW_SUM_TOL))
            raise ValidationError(
                f"skinWeights: row {bad} sums to {row_sums[bad]:.6g}, expected 1")
        for idx, parent in enumerate(self.parents):
            if parent != -1 and not 0 <= parent < idx:
                raise ValidationError(
                    f"parents: joint {idx} has parent {parent}; parents must be -1 or a smaller index")
        if self.joint_regressor.shape != (j, v):
            raise ValidationError(
                f"jointRegressor: expected (J, V), got {self.joint_regressor.shape}")
        reg_sums = self.joint_regressor.sum(axis=1)
        if np.any(np.abs(reg_sums - 1.0) > ROW_SUM_TOL):
            bad = int(np.argmax(np.abs(reg_sums - 1.0) > ROW_SUM_TOL))
            raise ValidationError(
                f"jointRegressor: row {bad} sums to {reg_sums[bad]:.6g}, expected 1")
        if self.shape_basis.shape != (b, v, 3):
            raise ValidationError(f"shapeBasis: expected (B, V, 3), got {self.shape_basis.shape}")
        if f:
            areas = face_areas(self.vertices, self.faces)
            if np.any(areas <= MIN_FACE_AREA):
                bad = int(np.argmax(areas <= MIN_FACE_AREA))
                raise ValidationError(
                    f"faces: face {bad} is degenerate (area {areas[bad]:.3g} m^2)")
        return self


@dataclass
class Pose:
    """Per-joint axis-angle rotations (radians) plus a root translation (meters)."""

    joint_rotations: np.ndarray  # (J, 3)
    root_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.joint_rotations = np.asarray(self.joint_rotations, dtype=np.float64).reshape(-1, 3)
        self.root_translation = np.asarray(self.root_translation, dtype=np.float64).reshape(3)

    @classmethod
    def identity(cls, num_joints: int) -> "Pose":
        return cls(np.zeros((num_joints, 3)))

    @property
    def num_joints(self) -> int:
        return self.joint_rotations.shape[0]


@dataclass
class Shape:
    """Blend-shape coefficients (unitless)."""

    coeffs: np.ndarray  # (B,)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(-1)

    @classmethod
    def zeros(cls, num_coeffs: int) -> "Shape":
        return cls(np.zeros(num_coeffs))


@dataclass
class LayerStack:
    """N concentric shells derived from a base mesh by signed normal offsets.

    Offsets run from the most shrunk shell to the most inflated one. All
    shells share the base mesh's faces, UVs, and skinning weights.
    """

    base: TemplateMesh
    num_layers: int
    t_min: float
    t_max: float
    offsets: np.ndarray               # (N,) meters, ascending
    rest_layer_vertices: np.ndarray   # (N, V, 3) zero-shape rest-pose shells


def face_areas(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Triangle areas in m^2."""
    e1 = verts[faces[:, 1]] - verts[faces[:, 0]]
    e2 = verts[faces[:, 2]] - verts[faces[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def apply_shape(mesh: TemplateMesh, shape: Shape) -> np.ndarray:
    """Rest vertices displaced by the linear blend-shape basis."""
    if shape.coeffs.shape[0] != mesh.num_shape_coeffs:
        raise ValueError(
            f"shape has {shape.coeffs.shape[0]} coefficients, mesh basis has "
            f"{mesh.num_shape_coeffs}")
    if mesh.num_shape_coeffs == 0:
        return mesh.vertices.copy()
    return mesh.vertices + np.einsum("b,bvi->vi", shape.coeffs, mesh.shape_basis)


def regress_joints(mesh: TemplateMesh, rest_verts: np.ndarray) -> np.ndarray:
    """Joint locations as affine combinations of (shaped) rest vertices."""
    rest_verts = np.asarray(rest_verts, dtype=np.float64)
    if rest_verts.shape != (mesh.num_vertices, 3):
        raise ValueError(
            f"rest vertices shape {rest_verts.shape} does not match mesh "
            f"({mesh.num_vertices}, 3)")
    return mesh.joint_regressor @ rest_verts


def vertex_normals(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unit vertex normals by area-weighted face-normal accumulation.

    Orientation follows counter-clockwise winding. Raises ValidationError
    when accumulation cancels to zero at some vertex (the normal would be
    undefined there).
    """
    verts = np.asarray(verts, dtype=np.float64)
    faces = np.asarray(faces)
    e1 = verts[faces[:, 1]] - verts[faces[:, 0]]
    e2 = verts[faces[:, 2]] - verts[faces[:, 0]]
    face_n = np.cross(e1, e2)  # length = 2 * area, so accumulation is area-weighted
    acc = np.zeros_like(verts)
    mag = np.zeros(len(verts))
    face_mag = np.linalg.norm(face_n, axis=1)
    for corner in range(3):
        np.add.at(acc, faces[:, corner], face_n)
        np.add.at(mag, faces[:, corner], face_mag)
    norms = np.linalg.norm(acc, axis=1)
    # cancellation check is relative to the accumulated face-normal magnitudes
    used = mag > 0.0
    bad = used & (norms <= 1e-9 * mag)
    if np.any(bad):
        raise ValidationError(
            f"vertex {int(np.argmax(bad))}: face normals cancel, vertex normal undefined")
    out = np.zeros_like(verts)
    out[used] = acc[used] / norms[used, None]
    return out


def layer_offsets(num_layers: int, t_min: float, t_max: float) -> np.ndarray:
    """Signed offset schedule t_n = t_min + n (t_max - t_min) / (N - 1).

    A single layer degenerates to t = 0 (the base mesh itself).
    """
    if num_layers < 1:
        raise ValueError(f"layer count must be >= 1, got {num_layers}")
    if t_min > t_max:
        raise ValueError(f"t_min ({t_min}) must be <= t_max ({t_max})")
    if num_layers == 1:
        return np.zeros(1)
    steps = np.arange(num_layers, dtype=np.float64)
    return t_min + steps * (t_max - t_min) / (num_layers - 1)


def build_layers(mesh: TemplateMesh, num_layers: int, t_min: float, t_max: float) -> LayerStack:
    """Inflate/shrink the base mesh along its vertex normals into N shells."""
    offsets = layer_offsets(num_layers, t_min, t_max)
    normals = vertex_normals(mesh.vertices, mesh.faces)
    rest = mesh.vertices[None, :, :] + offsets[:, None, None] * normals[None, :, :]
    return LayerStack(
        base=mesh,
        num_layers=num_layers,
        t_min=float(t_min),
        t_max=float(t_max),
        offsets=offsets,
        rest_layer_vertices=rest,
    )


def skinning_transforms(rest_joints: np.ndarray, parents: np.ndarray, pose: Pose) -> np.ndarray:
    """Per-joint 4x4 skinning matrices for LBS.

    World transforms are composed down the kinematic chain (axis-angle via
    Rodrigues per joint, rotating about the joint's rest location); the rest
    pose placement is then factored out so rest vertices map to posed ones.
    """
    if not (np.all(np.isfinite(pose.joint_rotations))
            and np.all(np.isfinite(pose.root_translation))):
        raise ValueError("pose contains non-finite values")
    num_joints = rest_joints.shape[0]
    if pose.num_joints != num_joints:
        raise ValueError(
            f"pose has {pose.num_joints} joints, skeleton has {num_joints}")
    rots = Rotation.from_rotvec(pose.joint_rotations).as_matrix().reshape(num_joints, 3, 3)
    world = np.empty((num_joints, 4, 4))
    for j in range(num_joints):
        local = np.eye(4)
        local[:3, :3] = rots[j]
        parent = parents[j]
        if parent < 0:
            local[:3, 3] = rest_joints[j]
            world[j] = local
        else:
            local[:3, 3] = rest_joints[j] - rest_joints[parent]
            world[j] = world[parent] @ local
    skin = world.copy()
    skin[:, :3, 3] -= np.einsum("jab,jb->ja", world[:, :3, :3], rest_joints)
    return skin


def apply_skinning(rest_verts: np.ndarray, weights: np.ndarray, skin: np.ndarray,
                   root_translation: np.ndarray) -> np.ndarray:
    """Blend per-joint rigid transforms of the rest vertices."""
    # (J, V, 3): every vertex under every joint transform, then weighted sum
    per_joint = np.einsum("jab,vb->jva", skin[:, :3, :3], rest_verts) + skin[:, None, :3, 3]
    return np.einsum("vj,jvi->vi", weights, per_joint) + root_translation


def lbs(rest_verts: np.ndarray, rest_joints: np.ndarray, weights: np.ndarray,
        parents: np.ndarray, pose: Pose) -> np.ndarray:
    """Linear blend skinning of rest vertices into the given pose."""
    rest_verts = np.asarray(rest_verts, dtype=np.float64)
    if weights.shape != (rest_verts.shape[0], rest_joints.shape[0]):
        raise ValueError(
            f"weights shape {weights.shape} does not match V={rest_verts.shape[0]}, "
            f"J={rest_joints.shape[0]}")
    skin = skinning_transforms(rest_joints, parents, pose)
    return apply_skinning(rest_verts, weights, skin, pose.root_translation)


def deform_layers(stack: LayerStack, pose: Pose, shape: Shape | None = None) -> np.ndarray:
    """Pose every shell of a layer stack with the shared skeleton.

    Joints are regressed once from the shaped base mesh; shell offsets are
    re-derived from the shaped base normals so shells stay concentric under
    shape change, then all shells are skinned with the shared weights.
    """
    mesh = stack.base
    if shape is None:
        shape = Shape.zeros(mesh.num_shape_coeffs)
    shaped = apply_shape(mesh, shape)
    joints = regress_joints(mesh, shaped)
    normals = vertex_normals(shaped, mesh.faces)
    skin = skinning_transforms(joints, mesh.parents, pose)
    out = np.empty((stack.num_layers, mesh.num_vertices, 3))
    for n, offset in enumerate(stack.offsets):
        layer_rest = shaped + offset * normals
        out[n] = apply_skinning(layer_rest, mesh.skin_weights, skin, pose.root_translation)
    return out
