"""Robot description types, JSON loading/serialization, and builtin instances.

Units are SI throughout and encoded in the file-schema field names
(``mass_kg``, ``a_m``, ``EA_N``, ...).  Models are immutable after
construction: all arrays are made read-only, so instances are safe to
share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any

import numpy as np

from .errors import ModelParseError, ValidationError

_PROPER_EULER_ORDERS = ("XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX")
_AXES = ("X", "Y", "Z")
_JOINT_KINDS = ("revolute", "prismatic")


def _arr(x, shape, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape != shape:
        raise ValidationError(f"{name}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name}: non-finite entries")
    a = a.copy()
    a.flags.writeable = False
    return a


def _check_inertia(I: np.ndarray, name: str, positive_definite: bool) -> None:
    if not np.allclose(I, I.T, rtol=0.0, atol=1e-12):
        raise ValidationError(f"{name}: inertia matrix must be symmetric")
    eig = np.linalg.eigvalsh(0.5 * (I + I.T))
    if positive_definite and eig.min() <= 0.0:
        raise ValidationError(f"{name}: inertia matrix must be positive definite")
    if not positive_definite and eig.min() < -1e-12:
        raise ValidationError(f"{name}: inertia matrix must be positive semidefinite")


@dataclass(frozen=True)
class Anchor:
    """One cable attachment pair: world-frame anchor and body-frame hook point."""

    a: np.ndarray  # anchor on the static frame, world coordinates [m]
    r: np.ndarray  # attachment on the platform, body coordinates [m]

    def __post_init__(self):
        object.__setattr__(self, "a", _arr(self.a, (3,), "anchor a"))
        object.__setattr__(self, "r", _arr(self.r, (3,), "anchor r"))


@dataclass(frozen=True)
class PlatformParams:
    """Mobile-platform rigid body plus its cable suspension.

    ``actuator_groups`` partitions the 1-based cable indices into sets
    sharing one winch.  ``tension_controlled_groups`` names the groups whose
    cables are force-commanded (the rest are length-commanded).
    """

    mass: float
    inertia: np.ndarray
    anchors: tuple[Anchor, ...]
    axial_stiffness: np.ndarray       # EA per cable [N]
    tension_min: np.ndarray           # [N]
    tension_max: np.ndarray           # [N]
    actuator_groups: dict[int, tuple[int, ...]] = field(default_factory=dict)
    tension_controlled_groups: tuple[int, ...] = ()

    # derived, filled in __post_init__
    a_world: np.ndarray = field(init=False, repr=False)
    r_body: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.anchors)
        if self.mass <= 0:
            raise ValidationError("platform mass must be positive")
        object.__setattr__(self, "inertia", _arr(self.inertia, (3, 3), "platform inertia"))
        _check_inertia(self.inertia, "platform", positive_definite=True)
        object.__setattr__(self, "anchors", tuple(self.anchors))
        object.__setattr__(self, "axial_stiffness", _arr(self.axial_stiffness, (n,), "EA"))
        object.__setattr__(self, "tension_min", _arr(self.tension_min, (n,), "Tmin"))
        object.__setattr__(self, "tension_max", _arr(self.tension_max, (n,), "Tmax"))
        if n and np.any(self.axial_stiffness <= 0):
            raise ValidationError("cable axial stiffness EA must be positive")
        if np.any(self.tension_min < 0):
            raise ValidationError("tension bounds: Tmin must be >= 0")
        if np.any(self.tension_min > self.tension_max):
            bad = int(np.argmax(self.tension_min > self.tension_max)) + 1
            raise ValidationError(f"tension bounds: Tmin > Tmax for cable {bad}")
        groups = {int(k): tuple(int(i) for i in v) for k, v in self.actuator_groups.items()}
        object.__setattr__(self, "actuator_groups", groups)
        if groups:
            flat = [i for ids in groups.values() for i in ids]
            if sorted(flat) != list(range(1, n + 1)):
                raise ValidationError("actuator_groups must be a disjoint cover of 1..N")
        object.__setattr__(
            self, "tension_controlled_groups", tuple(int(g) for g in self.tension_controlled_groups)
        )
        for g in self.tension_controlled_groups:
            if g not in groups:
                raise ValidationError(f"tension_controlled_groups: unknown group {g}")
        a = np.array([an.a for an in self.anchors]).reshape(n, 3)
        r = np.array([an.r for an in self.anchors]).reshape(n, 3)
        a.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "a_world", a)
        object.__setattr__(self, "r_body", r)

    @property
    def n_cables(self) -> int:
        return len(self.anchors)

    def group_indices(self, group: int) -> np.ndarray:
        """0-based cable indices of one actuator group."""
        return np.array(self.actuator_groups[group], dtype=int) - 1


@dataclass(frozen=True)
class ArmLink:
    """One serial-arm link: inertial parameters plus its parent joint.

    ``joint_offset`` locates the next joint in this link's frame;
    ``com_offset`` locates the link COM in this link's frame.  For a
    prismatic joint the declared axis offset grows with the joint variable
    and the link frame does not rotate.
    """

    mass: float
    inertia: np.ndarray
    joint_kind: str                   # "revolute" | "prismatic"
    joint_axis: str                   # "X" | "Y" | "Z"
    joint_offset: np.ndarray
    com_offset: np.ndarray

    def __post_init__(self):
        if self.mass <= 0:
            raise ValidationError("arm link mass must be positive")
        object.__setattr__(self, "inertia", _arr(self.inertia, (3, 3), "link inertia"))
        _check_inertia(self.inertia, "arm link", positive_definite=False)
        if self.joint_kind not in _JOINT_KINDS:
            raise ValidationError(f"joint kind must be one of {_JOINT_KINDS}")
        if self.joint_axis not in _AXES:
            raise ValidationError(f"joint axis must be one of {_AXES}")
        object.__setattr__(self, "joint_offset", _arr(self.joint_offset, (3,), "joint_offset"))
        object.__setattr__(self, "com_offset", _arr(self.com_offset, (3,), "com_offset"))

    @property
    def axis_index(self) -> int:
        return _AXES.index(self.joint_axis)


@dataclass(frozen=True)
class RobotModel:
    """Immutable description of the coupled platform + arm system."""

    platform: PlatformParams
    arm: tuple[ArmLink, ...]
    mount_offset: np.ndarray          # platform frame -> arm base [m]
    mount_rotation: np.ndarray        # platform frame -> arm base frame
    gravity: float = 9.81
    euler_convention: str = "XYZ"

    def __post_init__(self):
        object.__setattr__(self, "arm", tuple(self.arm))
        object.__setattr__(self, "mount_offset", _arr(self.mount_offset, (3,), "mount offset"))
        R = _arr(self.mount_rotation, (3, 3), "mount rotation")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-10):
            raise ValidationError("mount rotation must be orthonormal")
        if not np.isclose(np.linalg.det(R), 1.0, atol=1e-10):
            raise ValidationError("mount rotation must have determinant +1")
        object.__setattr__(self, "mount_rotation", R)
        if self.euler_convention not in _PROPER_EULER_ORDERS:
            raise ValidationError(
                f"euler convention must be one of {_PROPER_EULER_ORDERS}"
            )
        if not np.isfinite(self.gravity):
            raise ValidationError("gravity must be finite")

    @property
    def n_cables(self) -> int:
        return self.platform.n_cables

    @property
    def n_arm(self) -> int:
        return len(self.arm)

    @property
    def nq(self) -> int:
        """Generalized-coordinate count: platform pose (6) + joint angles."""
        return 6 + len(self.arm)

    def platform_only(self) -> "RobotModel":
        """Copy of this model with the arm removed (decoupled CDPR)."""
        return replace(self, arm=())


@dataclass(frozen=True)
class QuadrotorParams:
    """Four-rotor platform: thrusts along body +Z at the four rotor arms."""

    mass: float
    inertia: np.ndarray
    arm_length: float                 # d [m]
    moment_ratio: float               # k_M / k_F [m]
    rotor_positions: np.ndarray = field(default=None)  # (4,3) body frame

    def __post_init__(self):
        if self.arm_length <= 0:
            raise ValidationError("quadrotor arm length d must be positive")
        object.__setattr__(self, "inertia", _arr(self.inertia, (3, 3), "quadrotor inertia"))
        _check_inertia(self.inertia, "quadrotor", positive_definite=True)
        d = self.arm_length
        expected = np.array([[d, 0, 0], [0, d, 0], [-d, 0, 0], [0, -d, 0]])
        pos = expected if self.rotor_positions is None else np.asarray(self.rotor_positions, float)
        if not np.allclose(pos, expected):
            raise ValidationError("rotor positions must be [d,0,0],[0,d,0],[-d,0,0],[0,-d,0]")
        object.__setattr__(self, "rotor_positions", _arr(pos, (4, 3), "rotor positions"))


# ---------------------------------------------------------------------------
# JSON schema <-> model


def _inertia_from_doc(val, where: str) -> np.ndarray:
    arr = np.asarray(val, dtype=float)
    if arr.shape == (3,):
        return np.diag(arr)          # diagonal shorthand, expanded on load
    if arr.shape == (3, 3):
        return arr
    raise ModelParseError(f"{where}: inertia_kgm2 must be a 3-vector diagonal or 3x3 matrix")


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ModelParseError(f"{where}: missing required field '{key}'")
    return doc[key]


def model_from_dict(doc: dict) -> RobotModel:
    """Build and validate a RobotModel from a schema-conforming dictionary."""
    if not isinstance(doc, dict):
        raise ModelParseError("model document root must be an object")
    pdoc = _require(doc, "platform", "$")
    cables = _require(pdoc, "cables", "$.platform")
    anchors, ea, tmin, tmax = [], [], [], []
    for i, c in enumerate(cables, start=1):
        where = f"$.platform.cables[{i}]"
        anchors.append(Anchor(_require(c, "a_m", where), _require(c, "r_m", where)))
        ea.append(float(_require(c, "EA_N", where)))
        tmin.append(float(_require(c, "Tmin_N", where)))
        tmax.append(float(_require(c, "Tmax_N", where)))
    groups_doc = pdoc.get("actuator_groups", {})
    try:
        groups = {int(k): tuple(int(i) for i in v) for k, v in groups_doc.items()}
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"$.platform.actuator_groups: {exc}") from None
    platform = PlatformParams(
        mass=float(_require(pdoc, "mass_kg", "$.platform")),
        inertia=_inertia_from_doc(_require(pdoc, "inertia_kgm2", "$.platform"), "$.platform"),
        anchors=tuple(anchors),
        axial_stiffness=np.array(ea),
        tension_min=np.array(tmin),
        tension_max=np.array(tmax),
        actuator_groups=groups,
        tension_controlled_groups=tuple(pdoc.get("tension_controlled_groups", ())),
    )
    links = []
    for j, ldoc in enumerate(doc.get("arm", []), start=1):
        where = f"$.arm[{j}]"
        joint = _require(ldoc, "joint", where)
        links.append(
            ArmLink(
                mass=float(_require(ldoc, "mass_kg", where)),
                inertia=_inertia_from_doc(_require(ldoc, "inertia_kgm2", where), where),
                joint_kind=str(_require(joint, "kind", where + ".joint")),
                joint_axis=str(_require(joint, "axis", where + ".joint")),
                joint_offset=_require(ldoc, "joint_offset_m", where),
                com_offset=_require(ldoc, "com_offset_m", where),
            )
        )
    mount = doc.get("mount", {})
    return RobotModel(
        platform=platform,
        arm=tuple(links),
        mount_offset=np.asarray(mount.get("l_m_m", [0.0, 0.0, 0.0]), float),
        mount_rotation=np.asarray(mount.get("R_m_a0", np.eye(3)), float),
        gravity=float(doc.get("gravity_mps2", 9.81)),
        euler_convention=str(doc.get("euler_order", "XYZ")),
    )


def load_model(text: str) -> RobotModel:
    """Parse a JSON robot description and return a validated model.

    Raises ModelParseError naming the offending field (and line for syntax
    errors); raises ValidationError naming the violated invariant.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return model_from_dict(doc)


def load_model_file(path) -> RobotModel:
    with open(path, "r", encoding="utf-8") as fh:
        return load_model(fh.read())


def model_to_dict(model: RobotModel) -> dict:
    """Inverse of :func:`model_from_dict` (field-for-field round trip)."""
    p = model.platform
    doc: dict[str, Any] = {
        "platform": {
            "mass_kg": p.mass,
            "inertia_kgm2": p.inertia.tolist(),
            "cables": [
                {
                    "a_m": an.a.tolist(),
                    "r_m": an.r.tolist(),
                    "EA_N": float(p.axial_stiffness[i]),
                    "Tmin_N": float(p.tension_min[i]),
                    "Tmax_N": float(p.tension_max[i]),
                }
                for i, an in enumerate(p.anchors)
            ],
            "actuator_groups": {str(k): list(v) for k, v in p.actuator_groups.items()},
        },
        "arm": [
            {
                "mass_kg": link.mass,
                "inertia_kgm2": link.inertia.tolist(),
                "joint": {"kind": link.joint_kind, "axis": link.joint_axis},
                "joint_offset_m": link.joint_offset.tolist(),
                "com_offset_m": link.com_offset.tolist(),
            }
            for link in model.arm
        ],
        "mount": {
            "l_m_m": model.mount_offset.tolist(),
            "R_m_a0": model.mount_rotation.tolist(),
        },
        "gravity_mps2": model.gravity,
        "euler_order": model.euler_convention,
    }
    if p.tension_controlled_groups:
        doc["platform"]["tension_controlled_groups"] = list(p.tension_controlled_groups)
    return doc


def serialize_model(model: RobotModel) -> str:
    return json.dumps(model_to_dict(model), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Builtin instances

_CABLE_TABLE = [
    # a_x, a_y, a_z, r_x, r_y, r_z  (cables 1..12)
    (1.500, 0.000, 0.500, 0.153, -0.065, 0.048),
    (1.580, -0.065, 0.404, 0.233, 0.000, -0.048),
    (1.500, 0.000, -0.500, 0.223, -0.088, -0.017),
    (-1.500, 0.000, -0.500, -0.223, -0.088, -0.017),
    (-1.580, -0.065, 0.404, -0.233, 0.000, -0.048),
    (-1.500, 0.000, 0.500, -0.153, -0.065, 0.048),
    (1.500, 0.000, 0.500, 0.153, 0.065, 0.048),
    (1.580, 0.065, 0.404, 0.233, 0.000, -0.048),
    (1.500, 0.000, -0.500, 0.223, 0.088, -0.017),
    (-1.500, 0.000, -0.500, -0.223, 0.088, -0.017),
    (-1.580, 0.065, 0.404, -0.233, 0.000, -0.048),
    (-1.500, 0.000, 0.500, -0.153, 0.065, 0.048),
]


def builtin_hcdr9dof() -> RobotModel:
    """The bundled 9-DOF instance: 12-cable platform carrying a 3-link arm.

    Upper cable groups 1 (cables 5,6,11,12) and 2 (cables 1,2,7,8) are
    length-commanded; lower groups 3 (cables 4,10) and 4 (cables 3,9) are
    tension-commanded.
    """
    anchors = tuple(Anchor(row[0:3], row[3:6]) for row in _CABLE_TABLE)
    platform = PlatformParams(
        mass=10.0,
        inertia=np.diag([0.0218, 0.1187, 0.1251]),
        anchors=anchors,
        axial_stiffness=np.full(12, 100.0),
        tension_min=np.full(12, 5.0),
        tension_max=np.full(12, 80.0),
        actuator_groups={
            1: (5, 6, 11, 12),
            2: (1, 2, 7, 8),
            3: (4, 10),
            4: (3, 9),
        },
        tension_controlled_groups=(3, 4),
    )
    link = dict(
        mass=0.4,
        inertia=np.diag([0.1, 0.1, 0.1]),
        joint_kind="revolute",
        joint_offset=np.array([0.0, 0.0, 0.1]),
        com_offset=np.array([0.0, 0.0, 0.05]),
    )
    arm = (
        ArmLink(joint_axis="Z", **link),
        ArmLink(joint_axis="Y", **link),
        ArmLink(joint_axis="Y", **link),
    )
    return RobotModel(
        platform=platform,
        arm=arm,
        mount_offset=np.array([0.0, 0.0, 0.048]),
        mount_rotation=np.eye(3),
        gravity=9.81,
        euler_convention="XYZ",
    )


def builtin_quadrotor_arm(
    mass: float = 0.5,
    inertia=None,
    arm_length: float = 0.17,
    moment_ratio: float = 0.016,
    link_mass: float = 0.05,
    link_inertia=None,
    link_length: float = 0.06,
) -> tuple[QuadrotorParams, RobotModel]:
    """Quadrotor with a 2-link (revolute Z then Y) arm mounted upside down.

    All numeric values here are package defaults chosen for a small
    hover-capable vehicle; they are configurable and are not measured
    parameters of any particular aircraft.
    """
    inertia = np.diag([2.3e-3, 2.3e-3, 4.0e-3]) if inertia is None else np.asarray(inertia, float)
    link_inertia = (
        np.diag([1e-4, 1e-4, 1e-4]) if link_inertia is None else np.asarray(link_inertia, float)
    )
    quad = QuadrotorParams(
        mass=mass,
        inertia=inertia,
        arm_length=arm_length,
        moment_ratio=moment_ratio,
    )
    link = dict(
        mass=link_mass,
        inertia=link_inertia,
        joint_kind="revolute",
        joint_offset=np.array([0.0, 0.0, link_length]),
        com_offset=np.array([0.0, 0.0, link_length / 2]),
    )
    arm = (ArmLink(joint_axis="Z", **link), ArmLink(joint_axis="Y", **link))
    # Upside-down mount: arm base frame rotated pi about X so its +Z points
    # down in the platform frame, links extend below the vehicle.
    R_flip = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    body = RobotModel(
        platform=PlatformParams(
            mass=mass,
            inertia=inertia,
            anchors=(),
            axial_stiffness=np.zeros(0),
            tension_min=np.zeros(0),
            tension_max=np.zeros(0),
        ),
        arm=arm,
        mount_offset=np.array([0.0, 0.0, -0.02]),
        mount_rotation=R_flip,
        gravity=9.81,
        euler_convention="ZXY",
    )
    return quad, body


def builtin_model(name: str) -> RobotModel:
    """Resolve a builtin model by name (currently only ``hcdr9dof``)."""
    if name == "hcdr9dof":
        return builtin_hcdr9dof()
    raise ModelParseError(f"unknown builtin model '{name}'")


def bundled_model_text(name: str = "hcdr9dof") -> str:
    """Raw JSON text of a bundled model description file."""
    ref = resources.files("cablearm").joinpath(f"data/{name}.json")
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ModelParseError(f"no bundled model file '{name}'") from None
