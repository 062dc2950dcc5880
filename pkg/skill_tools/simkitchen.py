"""
🍳 Sim Kitchen
Deterministic kinematic kitchen: drawers (prismatic), hinged doors
(revolute), free bodies, containers and tools, with per-skill success
predicates, scripted demonstrations and synthetic detection rendering.

World frame: z up, the robot base sits at the origin and the cabinet front
faces -y. The world frame IS the robot frame.

Model rules (quasi-static, no dynamics):
  * the gripper teleports to its target every step;
  * `close` attaches the nearest graspable point within attach_tolerance;
  * while holding a handle, gripper motion is projected onto the joint
    (prismatic: displacement along the axis; revolute: angle about the hinge);
  * held free bodies follow the gripper rigidly;
  * a held container tilted past pour_angle moves pour_rate of fill per step
    into a receiver under its rim; with no receiver nothing flows.

Scene feature vector (`scene_features`, camera-frame quantities use the
given camera):
   0      normalised joint value of the target (0 for free bodies)
   1      joint type: +1 prismatic, -1 revolute, 0 none
   2      hinge direction: z component of the revolute axis, else 0
   3-5    target grasp point in camera frame
   6-8    joint axis in camera frame
   9-11   hinge pivot in camera frame (revolute only)
   12     1 when the gripper holds something
   13     fill of the target container
   14     fill of the pour receiver
   15     accumulated stir angle / 2pi
   16     1 when the target has been cut
   17-19  secondary point in camera frame (receiver, place target, cut object or stir pot)
   20-28  one-hot skill
   29-31  zero
Vectors are truncated or zero-padded to the requested dimension.
"""

import copy
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from . import records
from .egolift import HandDetection, camera_record
from .errors import InfeasibleTask, LengthMismatch, NonPositiveDepth, RecordFormatError
from .grasp_select import AffordancePoint, GraspCandidate, make_affordance_point, plan_linear_approach
from .se3_core import (CameraFrame, Pose6D, RigidTransform, axis_rotation, compose, frame_from_z,
                       invert, look_at, project_point, relative_pose, wrap_angle)
from .settings import FEATURE_DIM, SKILLS

INTRINSICS = (600.0, 600.0, 320.0, 240.0)
COUNTER_HEIGHT = 0.90
SCENE_FORMAT = 'sim-scenes'
ROLLOUT_FORMAT = 'rollout-log'
FILE_VERSION = 1

OPEN, CLOSE, HOLD = 'open', 'close', 'hold'
DOWN = (0.0, 0.0, -1.0)


@dataclass
class SimParams:
    attach_tolerance: float = 0.005
    pour_angle: float = math.radians(60.0)
    pour_rate: float = 0.05
    cut_tolerance: float = math.radians(15.0)
    open_fraction: float = 0.9
    close_fraction: float = 0.1
    lift_height: float = 0.05
    place_tolerance: float = 0.05
    stir_excursion: float = 0.05


@dataclass
class Joint:
    kind: str                      # 'prismatic' | 'revolute'
    axis: Tuple[float, float, float]
    q_min: float
    q_max: float
    q: float
    pivot: Tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class SceneObject:
    """Free body, container, tool or articulated part

    For articulated parts `pose` is the handle pose at q = 0. For containers
    the origin is the body centre and the rim sits height/2 up the local z.
    Tools (knife, spoon) carry their working point tip_offset along local z.
    """
    object_id: str
    kind: str
    pose: Pose6D
    joint: Optional[Joint] = None
    graspable: bool = True
    radius: float = 0.05
    height: float = 0.10
    tip_offset: float = 0.0
    fill_fraction: Optional[float] = None
    initial_fill: Optional[float] = None
    rest_z: Optional[float] = None
    cut_normal: Optional[Tuple[float, float, float]] = None
    cut_done: bool = False
    stir_angle: float = 0.0
    stir_excursion: float = 0.0
    stir_phi: Optional[float] = None


@dataclass
class Gripper:
    pose: Pose6D
    closed: bool = False
    attached_id: Optional[str] = None
    grasp_offset: Optional[Pose6D] = None   # held object's grasp point in gripper frame


@dataclass
class SimScene:
    objects: Dict[str, SceneObject]
    gripper: Gripper
    camera: CameraFrame
    rng_seed: int = 0
    params: SimParams = field(default_factory=SimParams)
    step_count: int = 0


@dataclass(frozen=True)
class TaskSpec:
    skill: str
    target_id: str
    params: Dict = field(default_factory=dict)

    @property
    def grasp_id(self) -> str:
        """Object the gripper has to hold: the tool if there is one"""
        return self.params.get('tool_id', self.target_id)


@dataclass(frozen=True)
class DetectionNoise:
    translation_std: float = 0.0
    rotation_std: float = 0.0
    dropout: float = 0.0


@dataclass
class ScriptedDemo:
    """Gripper targets with commands, the egocentric camera path, and the grasp frame index"""
    skill: str
    gripper_poses: List[Pose6D]
    commands: List[str]
    camera_frames: List[CameraFrame]
    grasp_frame: int

    def __iter__(self):
        return iter((self.gripper_poses, self.camera_frames))


# ---------------------------------------------------------------------------
# Geometry

def _transform(pose: Pose6D) -> RigidTransform:
    return pose.to_transform()


def object_pose(obj: SceneObject) -> Pose6D:
    """Current pose of a free body, or the current handle pose of an articulated part"""
    if obj.joint is None:
        return obj.pose
    joint = obj.joint
    rest = _transform(obj.pose)
    if joint.kind == 'prismatic':
        t = rest.translation + joint.q * np.asarray(joint.axis)
        return Pose6D.from_transform(RigidTransform(rest.rotation, t))
    rot = axis_rotation(joint.axis, joint.q)
    pivot = np.asarray(joint.pivot)
    t = pivot + rot @ (rest.translation - pivot)
    return Pose6D.from_transform(RigidTransform(rot @ rest.rotation, t))


def handle_pose_at(obj: SceneObject, q: float) -> Pose6D:
    moved = copy.deepcopy(obj)
    moved.joint.q = q
    return object_pose(moved)


def tip_point(obj: SceneObject, pose: Optional[Pose6D] = None) -> np.ndarray:
    pose = pose or object_pose(obj)
    return _transform(pose).apply([0.0, 0.0, obj.tip_offset])


def tilt_angle(pose: Pose6D) -> float:
    return math.acos(max(-1.0, min(1.0, pose.rotation_matrix()[2, 2])))


def rim_point(obj: SceneObject) -> np.ndarray:
    return _transform(obj.pose).apply([0.0, 0.0, obj.height / 2.0])


# ---------------------------------------------------------------------------
# Stepping

def _drive_joint(obj: SceneObject, handle_target: np.ndarray) -> None:
    joint = obj.joint
    current = np.asarray(object_pose(obj).translation)
    axis = np.asarray(joint.axis, dtype=float)
    if joint.kind == 'prismatic':
        dq = float(np.dot(handle_target - current, axis))
    else:
        pivot = np.asarray(joint.pivot)
        r = current - pivot
        v = handle_target - pivot
        r = r - np.dot(r, axis) * axis
        v = v - np.dot(v, axis) * axis
        if np.linalg.norm(v) < 1e-9 or np.linalg.norm(r) < 1e-9:
            return
        dq = math.atan2(float(np.dot(axis, np.cross(r, v))), float(np.dot(r, v)))
    joint.q = min(joint.q_max, max(joint.q_min, joint.q + dq))


def _try_attach(scene: SimScene) -> None:
    grip = scene.gripper
    position = np.asarray(grip.pose.translation)
    best = None
    for object_id in sorted(scene.objects):
        obj = scene.objects[object_id]
        if not obj.graspable:
            continue
        distance = float(np.linalg.norm(np.asarray(object_pose(obj).translation) - position))
        if distance <= scene.params.attach_tolerance and (best is None or distance < best[0]):
            best = (distance, object_id)
    if best is not None:
        grip.attached_id = best[1]
        held = object_pose(scene.objects[best[1]])
        grip.grasp_offset = Pose6D.from_transform(relative_pose(_transform(grip.pose), _transform(held)))


def _update_pour(scene: SimScene) -> None:
    held = scene.objects.get(scene.gripper.attached_id or '')
    if held is None or held.fill_fraction is None or held.fill_fraction <= 0.0:
        return
    if tilt_angle(held.pose) <= scene.params.pour_angle:
        return
    rim = rim_point(held)
    receivers = []
    for object_id in sorted(scene.objects):
        other = scene.objects[object_id]
        if other is held or other.fill_fraction is None:
            continue
        horizontal = math.hypot(rim[0] - other.pose.translation[0], rim[1] - other.pose.translation[1])
        if horizontal <= other.radius and rim[2] > other.pose.translation[2]:
            receivers.append((horizontal, object_id))
    if not receivers:
        return
    receiver = scene.objects[min(receivers)[1]]
    amount = min(scene.params.pour_rate, held.fill_fraction, 1.0 - receiver.fill_fraction)
    if amount > 0.0:
        held.fill_fraction -= amount
        receiver.fill_fraction += amount


def _update_stir(scene: SimScene) -> None:
    held = scene.objects.get(scene.gripper.attached_id or '')
    tip = tip_point(held) if held is not None and held.kind == 'spoon' else None
    for object_id in sorted(scene.objects):
        pot = scene.objects[object_id]
        if pot.fill_fraction is None or pot is held:
            continue
        inside = False
        if tip is not None:
            dx, dy = tip[0] - pot.pose.translation[0], tip[1] - pot.pose.translation[1]
            radial = math.hypot(dx, dy)
            inside = radial <= pot.radius and abs(tip[2] - pot.pose.translation[2]) <= pot.height / 2.0
        if not inside:
            pot.stir_phi = None
            continue
        phi = math.atan2(dy, dx)
        if pot.stir_phi is not None:
            pot.stir_angle += abs(wrap_angle(phi - pot.stir_phi))
        pot.stir_phi = phi
        pot.stir_excursion = max(pot.stir_excursion, radial)


def _update_cut(scene: SimScene, edge_before: Optional[np.ndarray]) -> None:
    held = scene.objects.get(scene.gripper.attached_id or '')
    if held is None or held.kind != 'knife' or edge_before is None:
        return
    edge_after = tip_point(held)
    blade_normal = held.pose.rotation_matrix()[:, 1]
    for object_id in sorted(scene.objects):
        food = scene.objects[object_id]
        if food.cut_normal is None or food.cut_done:
            continue
        mid = food.pose.translation[2]
        if not edge_before[2] > mid >= edge_after[2]:
            continue
        s = (edge_before[2] - mid) / (edge_before[2] - edge_after[2])
        crossing = edge_before + s * (edge_after - edge_before)
        horizontal = math.hypot(crossing[0] - food.pose.translation[0], crossing[1] - food.pose.translation[1])
        aligned = abs(float(np.dot(blade_normal, food.cut_normal))) >= math.cos(scene.params.cut_tolerance)
        if horizontal <= food.radius and aligned:
            food.cut_done = True


def step(scene: SimScene, gripper_target: Pose6D, gripper_command: str = HOLD) -> SimScene:
    """Advance one kinematic step; returns a new scene and leaves the input untouched"""
    if gripper_command not in (OPEN, CLOSE, HOLD):
        raise ValueError(f"unknown gripper command {gripper_command!r}")
    nxt = copy.deepcopy(scene)
    grip = nxt.gripper

    if gripper_command == OPEN:
        grip.closed = False
        grip.attached_id = None
        grip.grasp_offset = None

    held = nxt.objects.get(grip.attached_id or '')
    edge_before = tip_point(held) if held is not None and held.kind == 'knife' else None

    if held is not None and held.joint is not None:
        offset = _transform(grip.grasp_offset)
        handle_target = compose(_transform(gripper_target), offset).translation
        _drive_joint(held, handle_target)
        grip.pose = Pose6D.from_transform(compose(_transform(object_pose(held)), invert(offset)))
    else:
        grip.pose = gripper_target
        if held is not None:
            held.pose = Pose6D.from_transform(compose(_transform(grip.pose), _transform(grip.grasp_offset)))

    if gripper_command == CLOSE:
        grip.closed = True
        if grip.attached_id is None:
            _try_attach(nxt)

    _update_pour(nxt)
    _update_stir(nxt)
    _update_cut(nxt, edge_before)
    nxt.step_count += 1
    return nxt


# ---------------------------------------------------------------------------
# Success predicates

def success(scene: SimScene, task: TaskSpec) -> bool:
    """Per-skill proxies for "matches the goal image" """
    p = scene.params
    target = scene.objects[task.target_id]
    skill = task.skill
    if skill in ('slide-open', 'hinge-open'):
        return target.joint.q >= task.params.get('open_fraction', p.open_fraction) * target.joint.q_max
    if skill in ('slide-close', 'hinge-close'):
        return target.joint.q <= task.params.get('close_fraction', p.close_fraction) * target.joint.q_max
    if skill == 'pick':
        lifted = target.pose.translation[2] - target.rest_z
        return scene.gripper.attached_id == target.object_id and lifted >= task.params.get('lift_height', p.lift_height)
    if skill == 'place':
        goal = np.asarray(task.params['target_position'])
        return float(np.linalg.norm(np.asarray(target.pose.translation) - goal)) <= p.place_tolerance
    if skill == 'pour':
        receiver = scene.objects[task.params['receiver_id']]
        return receiver.fill_fraction - receiver.initial_fill >= task.params.get('pour_fraction', 0.3) - 1e-12
    if skill == 'stir':
        return (target.stir_angle >= task.params.get('stir_angle', 2.0 * math.pi)
                and target.stir_excursion <= p.stir_excursion)
    if skill == 'cut':
        return target.cut_done
    raise ValueError(f"unknown skill {skill!r}")


# ---------------------------------------------------------------------------
# Randomised scenes

def _down_pose(position, yaw: float = 0.0) -> Pose6D:
    rot = axis_rotation((0.0, 0.0, 1.0), yaw) @ frame_from_z(DOWN, hint=(0.0, 1.0, 0.0))
    return Pose6D.from_transform(RigidTransform(rot, position))


def _static_camera(rng: np.random.Generator, focus: np.ndarray) -> CameraFrame:
    eye = focus + np.array([rng.uniform(-0.05, 0.05), -0.65 + rng.uniform(-0.05, 0.05), 0.45 + rng.uniform(-0.05, 0.05)])
    look = focus + rng.uniform(-0.03, 0.03, size=3)
    return CameraFrame(INTRINSICS, invert(look_at(eye, look)), 0)


def _articulated(rng: np.random.Generator, skill: str) -> Tuple[SceneObject, np.ndarray]:
    x_c = rng.uniform(-0.2, 0.2)
    y_front = rng.uniform(0.55, 0.70)
    opening = skill.endswith('open')
    if skill.startswith('slide'):
        yaw = rng.uniform(-0.15, 0.15)
        axis = (math.sin(yaw), -math.cos(yaw), 0.0)
        z_h = rng.uniform(0.60, 0.85)
        q_max = rng.uniform(0.25, 0.35)
        handle = np.array([x_c, y_front, z_h])
        rot = frame_from_z(-np.asarray(axis))
        joint = Joint('prismatic', axis, 0.0, q_max, 0.0)
        kind = 'drawer'
    else:
        side = 'left' if rng.random() < 0.5 else 'right'
        width = rng.uniform(0.35, 0.50)
        z_h = rng.uniform(0.95, 1.25)
        q_max = rng.uniform(1.35, 1.65)
        sign = 1.0 if side == 'left' else -1.0
        pivot = np.array([x_c - sign * width / 2.0, y_front, z_h])
        handle = pivot + np.array([sign * (width - 0.05), -0.03, 0.0])
        axis = (0.0, 0.0, -sign)
        rot = frame_from_z((0.0, 1.0, 0.0))
        joint = Joint('revolute', axis, 0.0, q_max, 0.0, tuple(pivot.tolist()))
        kind = f'door-{side}'
    if not opening:
        joint.q = rng.uniform(0.85, 1.0) * q_max
    obj = SceneObject('target', kind, Pose6D.from_transform(RigidTransform(rot, handle)), joint=joint)
    return obj, handle


def _counter_point(rng, x_range=(-0.25, 0.25), y_range=(0.40, 0.55), z_offset=0.05) -> np.ndarray:
    return np.array([rng.uniform(*x_range), rng.uniform(*y_range), COUNTER_HEIGHT + z_offset])


def random_scene(skill: str, seed: int, params: Optional[SimParams] = None) -> Tuple[SimScene, TaskSpec]:
    """Seeded scene and task for one skill: jittered geometry, camera and hinge side"""
    if skill not in SKILLS:
        raise ValueError(f"unknown skill {skill!r}; expected one of {SKILLS}")
    rng = np.random.default_rng(seed)
    objects: Dict[str, SceneObject] = {}
    task_params: Dict = {}

    if skill in ('slide-open', 'slide-close', 'hinge-open', 'hinge-close'):
        target, focus = _articulated(rng, skill)
        objects['target'] = target
    elif skill in ('pick', 'place'):
        position = _counter_point(rng)
        objects['target'] = SceneObject('target', 'mug', _down_pose(position, rng.uniform(-math.pi, math.pi)),
                                        radius=0.04, height=0.10, rest_z=float(position[2]))
        focus = position
        if skill == 'place':
            direction = rng.uniform(-math.pi, math.pi)
            distance = rng.uniform(0.20, 0.30)
            goal = position + distance * np.array([math.cos(direction), math.sin(direction), 0.0])
            task_params['target_position'] = tuple(goal.tolist())
            focus = (position + goal) / 2.0
    elif skill == 'pour':
        cup = _counter_point(rng, x_range=(-0.25, -0.05))
        bowl = _counter_point(rng, x_range=(0.10, 0.25), z_offset=0.04)
        cup_rot = np.eye(3)
        objects['target'] = SceneObject('target', 'cup', Pose6D.from_transform(RigidTransform(cup_rot, cup)),
                                        radius=0.04, height=0.10, fill_fraction=0.8, initial_fill=0.8,
                                        rest_z=float(cup[2]))
        fill = rng.uniform(0.0, 0.1)
        objects['receiver'] = SceneObject('receiver', 'bowl', Pose6D(tuple(bowl.tolist()), (0.0, 0.0, 0.0)),
                                          graspable=False, radius=0.08, height=0.08,
                                          fill_fraction=fill, initial_fill=fill, rest_z=float(bowl[2]))
        task_params.update(receiver_id='receiver', pour_fraction=0.3)
        focus = (cup + bowl) / 2.0
    elif skill == 'stir':
        pot = _counter_point(rng, x_range=(0.0, 0.2), z_offset=0.06)
        spoon = _counter_point(rng, x_range=(-0.25, -0.10), z_offset=0.20)
        objects['target'] = SceneObject('target', 'pot', Pose6D(tuple(pot.tolist()), (0.0, 0.0, 0.0)),
                                        graspable=False, radius=0.10, height=0.12,
                                        fill_fraction=0.5, initial_fill=0.5, rest_z=float(pot[2]))
        objects['tool'] = SceneObject('tool', 'spoon', _down_pose(spoon, rng.uniform(-math.pi, math.pi)),
                                      tip_offset=0.15, rest_z=float(spoon[2]))
        task_params.update(tool_id='tool', stir_angle=2.0 * math.pi)
        focus = (pot + spoon) / 2.0
    else:  # cut
        food = _counter_point(rng, x_range=(0.0, 0.2), z_offset=0.04)
        knife = _counter_point(rng, x_range=(-0.25, -0.10), z_offset=0.15)
        heading = rng.uniform(-math.pi, math.pi)
        objects['target'] = SceneObject('target', 'bread', Pose6D(tuple(food.tolist()), (0.0, 0.0, 0.0)),
                                        graspable=False, radius=0.06, height=0.08,
                                        cut_normal=(math.cos(heading), math.sin(heading), 0.0),
                                        rest_z=float(food[2]))
        objects['tool'] = SceneObject('tool', 'knife', _down_pose(knife, rng.uniform(-math.pi, math.pi)),
                                      tip_offset=0.10, rest_z=float(knife[2]))
        task_params['tool_id'] = 'tool'
        focus = (food + knife) / 2.0

    camera = _static_camera(rng, np.asarray(focus))
    start = np.asarray(focus) + np.array([0.0, -0.35, 0.20])
    gripper = Gripper(Pose6D.from_transform(RigidTransform(frame_from_z((0.0, 1.0, 0.0)), start)))
    scene = SimScene(objects, gripper, camera, rng_seed=int(seed), params=params or SimParams())
    return scene, TaskSpec(skill, 'target', task_params)


# ---------------------------------------------------------------------------
# Scripted demonstrations

def canonical_grasp_pose(scene: SimScene, task: TaskSpec) -> Pose6D:
    """Gripper pose that grasps the task's object (handle frame or tool/body frame)"""
    obj = scene.objects.get(task.grasp_id)
    if obj is None:
        raise InfeasibleTask(f"task references missing object {task.grasp_id!r}")
    if not obj.graspable:
        raise InfeasibleTask(f"object {obj.object_id!r} is not graspable")
    pose = object_pose(obj)
    if obj.kind == 'cup':
        # side grasp, approaching away from the robot
        return Pose6D.from_transform(RigidTransform(frame_from_z((0.0, 1.0, 0.0)), pose.translation))
    return pose


def _lerp(a, b, s: float) -> np.ndarray:
    return (1.0 - s) * np.asarray(a, dtype=float) + s * np.asarray(b, dtype=float)


def _linear_path(start, end, max_step: float, minimum: int = 1) -> List[np.ndarray]:
    """Points after start up to end, spaced at most max_step apart"""
    distance = float(np.linalg.norm(np.asarray(end) - np.asarray(start)))
    count = max(minimum, math.ceil(distance / max_step - 1e-9))
    return [_lerp(start, end, k / count) for k in range(1, count + 1)]


def _articulated_path(obj: SceneObject, q_goal: float) -> List[Pose6D]:
    joint = obj.joint
    q0 = joint.q
    if joint.kind == 'prismatic':
        travel = abs(q_goal - q0)
        per_frame = 0.01
    else:
        radius = float(np.linalg.norm(np.asarray(obj.pose.translation) - np.asarray(joint.pivot)))
        travel = abs(q_goal - q0) * radius
        per_frame = 0.015
    frames = max(12, math.ceil(travel / per_frame))
    return [handle_pose_at(obj, q0 + (q_goal - q0) * k / frames) for k in range(1, frames + 1)]


def _held_path(obj_poses: Sequence[Pose6D], obj_rest: Pose6D, grasp: Pose6D) -> List[Pose6D]:
    """Gripper poses that carry a rigidly held body through obj_poses"""
    grip_from_obj = relative_pose(_transform(obj_rest), _transform(grasp))
    return [Pose6D.from_transform(compose(_transform(p), grip_from_obj)) for p in obj_poses]


def _pour_object_path(cup: SceneObject, receiver: SceneObject) -> List[Pose6D]:
    start = np.asarray(cup.pose.translation)
    rest_rot = cup.pose.rotation_matrix()
    lifted = start + np.array([0.0, 0.0, 0.15])
    towards = np.asarray(receiver.pose.translation) - lifted
    towards[2] = 0.0
    d = towards / np.linalg.norm(towards)
    tilt_axis = np.cross([0.0, 0.0, 1.0], d)
    max_tilt = math.radians(100.0)
    rim_goal = np.asarray(receiver.pose.translation) + np.array([0.0, 0.0, 0.12])
    half = cup.height / 2.0
    pour_at = rim_goal - half * (d * math.sin(max_tilt) + np.array([0.0, 0.0, 1.0]) * math.cos(max_tilt))

    poses = [Pose6D.from_transform(RigidTransform(rest_rot, p)) for p in _linear_path(start, lifted, 0.015, 10)]
    poses += [Pose6D.from_transform(RigidTransform(rest_rot, p)) for p in _linear_path(lifted, pour_at, 0.015)]
    angles = [max_tilt * k / 12 for k in range(1, 13)] + [max_tilt] * 8 + [max_tilt * (1.0 - k / 8) for k in range(1, 9)]
    poses += [Pose6D.from_transform(RigidTransform(axis_rotation(tilt_axis, a) @ rest_rot, pour_at)) for a in angles]
    return poses


def _stir_object_path(spoon: SceneObject, pot: SceneObject) -> List[Pose6D]:
    rot = spoon.pose.rotation_matrix()
    tip_vec = rot @ np.array([0.0, 0.0, spoon.tip_offset])
    start = np.asarray(spoon.pose.translation)
    lifted = start + np.array([0.0, 0.0, 0.15])
    centre = np.asarray(pot.pose.translation)
    ring = 0.03
    above_tip = centre + np.array([ring, 0.0, pot.height / 2.0 + 0.05])
    low_tip = centre + np.array([ring, 0.0, -0.02])

    tips = [p + tip_vec for p in _linear_path(start, lifted, 0.015, 10)]
    tips += _linear_path(tips[-1], above_tip, 0.015)
    tips += _linear_path(above_tip, low_tip, 0.015, 6)
    tips += [centre + np.array([ring * math.cos(a), ring * math.sin(a), -0.02])
             for a in (math.radians(10.0) * k for k in range(1, 55))]
    tips += _linear_path(tips[-1], tips[-1] + np.array([0.0, 0.0, 0.12]), 0.015, 6)
    return [Pose6D.from_transform(RigidTransform(rot, tip - tip_vec)) for tip in tips]


def _cut_object_path(knife: SceneObject, food: SceneObject) -> List[Pose6D]:
    rest = knife.pose.rotation_matrix()
    normal = np.asarray(food.cut_normal)
    blade = rest[:, 1]
    yaw_start = 0.0
    yaw_goal = wrap_angle(math.atan2(normal[1], normal[0]) - math.atan2(blade[1], blade[0]))

    def rot_at(yaw):
        return axis_rotation((0.0, 0.0, 1.0), yaw) @ rest

    def origin_for_edge(edge, yaw):
        return edge - rot_at(yaw) @ np.array([0.0, 0.0, knife.tip_offset])

    start = np.asarray(knife.pose.translation)
    lifted = start + np.array([0.0, 0.0, 0.15])
    centre = np.asarray(food.pose.translation)
    above = centre + np.array([0.0, 0.0, food.height / 2.0 + 0.04])
    below = centre + np.array([0.0, 0.0, -food.height / 2.0 + 0.005])

    poses = [Pose6D.from_transform(RigidTransform(rest, p)) for p in _linear_path(start, lifted, 0.015, 10)]
    travel = _linear_path(lifted, origin_for_edge(above, yaw_goal), 0.015, 10)
    for k, p in enumerate(travel, 1):
        yaw = yaw_start + (yaw_goal - yaw_start) * k / len(travel)
        poses.append(Pose6D.from_transform(RigidTransform(rot_at(yaw), p)))
    for edge in _linear_path(above, below, 0.01, 10):
        poses.append(Pose6D.from_transform(RigidTransform(rot_at(yaw_goal), origin_for_edge(edge, yaw_goal))))
    last = np.asarray(poses[-1].translation)
    for p in _linear_path(last, last + np.array([0.0, 0.0, 0.10]), 0.015, 6):
        poses.append(Pose6D.from_transform(RigidTransform(rot_at(yaw_goal), p)))
    return poses


def _egocentric_cameras(scene: SimScene, gripper_poses: Sequence[Pose6D], focus: np.ndarray) -> List[CameraFrame]:
    """Head-mounted camera path: slow bob around the scene camera, gaze drifting toward the hand"""
    eye0 = scene.camera.camera_to_world().translation
    rng = np.random.default_rng(scene.rng_seed + 7919)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=3)
    frames = []
    for k, pose in enumerate(gripper_poses):
        bob = 0.02 * np.array([math.sin(2 * math.pi * k / 40 + phases[0]),
                               0.5 * math.sin(2 * math.pi * k / 53 + phases[1]),
                               0.5 * math.sin(2 * math.pi * k / 31 + phases[2])])
        gaze = 0.85 * focus + 0.15 * np.asarray(pose.translation)
        frames.append(CameraFrame(scene.camera.intrinsics, invert(look_at(eye0 + bob, gaze)), k))
    return frames


def scripted_demo(task: TaskSpec, scene: SimScene, standoff: float = 0.10, approach_step: float = 0.02) -> ScriptedDemo:
    """Approach, grasp and post-grasp motion that reaches success when replayed through step()"""
    if task.skill not in SKILLS:
        raise InfeasibleTask(f"unknown skill {task.skill!r}")
    target = scene.objects.get(task.target_id)
    if target is None:
        raise InfeasibleTask(f"task references missing object {task.target_id!r}")
    articulated = task.skill in ('slide-open', 'slide-close', 'hinge-open', 'hinge-close')
    wanted_joint = 'prismatic' if task.skill.startswith('slide') else 'revolute'
    if articulated and (target.joint is None or target.joint.kind != wanted_joint):
        raise InfeasibleTask(f"{task.skill} needs a {wanted_joint} joint on {target.object_id!r}")

    grasp = canonical_grasp_pose(scene, task)
    approach = plan_linear_approach(grasp, standoff, approach_step)
    poses = list(approach)
    commands = [OPEN] * (len(approach) - 1) + [CLOSE]
    grasp_frame = len(poses) - 1
    held = scene.objects[task.grasp_id]

    if articulated:
        joint = target.joint
        fraction = 0.97 if task.skill.endswith('open') else 0.03
        post = _articulated_path(target, fraction * joint.q_max)
        # handle frame is the grasp frame, so gripper poses equal handle poses
        post = _held_path(post, object_pose(target), grasp)
    elif task.skill == 'pick':
        start = np.asarray(target.pose.translation)
        path = [Pose6D.from_transform(RigidTransform(target.pose.rotation_matrix(), p))
                for p in _linear_path(start, start + np.array([0.0, 0.0, 0.12]), 0.01, 12)]
        post = _held_path(path, target.pose, grasp)
    elif task.skill == 'place':
        start = np.asarray(target.pose.translation)
        goal = np.asarray(task.params['target_position'])
        rot = target.pose.rotation_matrix()
        points = _linear_path(start, start + [0.0, 0.0, 0.10], 0.015, 8)
        points += _linear_path(points[-1], goal + [0.0, 0.0, 0.10], 0.015)
        points += _linear_path(points[-1], goal, 0.015, 8)
        post = _held_path([Pose6D.from_transform(RigidTransform(rot, p)) for p in points], target.pose, grasp)
    elif task.skill == 'pour':
        receiver = scene.objects.get(task.params.get('receiver_id', ''))
        if receiver is None or target.fill_fraction is None:
            raise InfeasibleTask("pour needs a filled source container and a receiver")
        post = _held_path(_pour_object_path(target, receiver), target.pose, grasp)
    elif task.skill == 'stir':
        post = _held_path(_stir_object_path(held, target), held.pose, grasp)
    else:
        if target.cut_normal is None or held.kind != 'knife':
            raise InfeasibleTask("cut needs a knife and a cuttable object")
        post = _held_path(_cut_object_path(held, target), held.pose, grasp)

    poses += post
    commands += [HOLD] * len(post)
    focus = np.asarray(object_pose(target).translation)
    cameras = _egocentric_cameras(scene, poses, focus)
    return ScriptedDemo(task.skill, poses, commands, cameras, grasp_frame)


def replay_demo(scene: SimScene, demo: ScriptedDemo) -> List[SimScene]:
    """Scene snapshot after each demo step"""
    snapshots = []
    for pose, command in zip(demo.gripper_poses, demo.commands):
        scene = step(scene, pose, command)
        snapshots.append(scene)
    return snapshots


# ---------------------------------------------------------------------------
# Observations and synthetic perception outputs

def scene_features(scene: SimScene, task: TaskSpec, camera: Optional[CameraFrame] = None,
                   dim: int = FEATURE_DIM) -> Tuple[float, ...]:
    camera = camera or scene.camera
    world_to_cam = camera.extrinsic_world_to_cam
    full = np.zeros(32)
    target = scene.objects[task.target_id]
    joint = target.joint
    if joint is not None:
        span = joint.q_max - joint.q_min
        full[0] = (joint.q - joint.q_min) / span if span > 0 else 0.0
        full[1] = 1.0 if joint.kind == 'prismatic' else -1.0
        full[6:9] = world_to_cam.rotation @ np.asarray(joint.axis)
        if joint.kind == 'revolute':
            full[2] = joint.axis[2]
            full[9:12] = world_to_cam.apply(joint.pivot)
    full[3:6] = world_to_cam.apply(object_pose(scene.objects[task.grasp_id]).translation)
    full[12] = 1.0 if scene.gripper.attached_id is not None else 0.0
    if target.fill_fraction is not None:
        full[13] = target.fill_fraction
    secondary = None
    if task.skill == 'pour':
        receiver = scene.objects[task.params['receiver_id']]
        full[14] = receiver.fill_fraction
        secondary = receiver.pose.translation
    elif task.skill == 'place':
        secondary = task.params['target_position']
    elif task.skill in ('stir', 'cut'):
        secondary = target.pose.translation
    if secondary is not None:
        full[17:20] = world_to_cam.apply(secondary)
    full[15] = target.stir_angle / (2.0 * math.pi)
    full[16] = 1.0 if target.cut_done else 0.0
    full[20 + SKILLS.index(task.skill)] = 1.0
    out = np.zeros(dim)
    out[:min(dim, 32)] = full[:min(dim, 32)]
    return tuple(float(v) for v in out)


def render_detections(gripper_traj: Sequence[Pose6D], camera_traj: Sequence[CameraFrame],
                      noise: DetectionNoise = DetectionNoise(), seed: int = 0,
                      scene_states: Optional[Sequence[SimScene]] = None, task: Optional[TaskSpec] = None,
                      clip_id: str = '', feature_dim: int = FEATURE_DIM
                      ) -> Tuple[List[HandDetection], List[CameraFrame], List[Tuple[float, ...]]]:
    """Camera-frame wrist detections with gaussian pose noise and i.i.d. dropout

    Every frame draws the same random numbers whether or not it is dropped,
    so the output depends only on the seed. Features are scene_features of
    the matching snapshot seen from that frame's camera (zeros without
    snapshots).
    """
    if len(gripper_traj) != len(camera_traj):
        raise LengthMismatch(f"{len(gripper_traj)} gripper poses but {len(camera_traj)} cameras")
    if scene_states is not None and len(scene_states) != len(gripper_traj):
        raise LengthMismatch(f"{len(scene_states)} scene snapshots for {len(gripper_traj)} frames")
    rng = np.random.default_rng(seed)
    detections, features = [], []
    for k, (pose, cam) in enumerate(zip(gripper_traj, camera_traj)):
        in_cam = compose(cam.extrinsic_world_to_cam, pose.to_transform())
        t_noise = rng.normal(0.0, 1.0, size=3) * noise.translation_std
        r_noise = rng.normal(0.0, 1.0, size=3) * noise.rotation_std
        confidence = float(rng.uniform(0.6, 1.0))
        dropped = rng.random() < noise.dropout
        if noise.translation_std > 0 or noise.rotation_std > 0:
            in_cam = RigidTransform(Rotation.from_rotvec(r_noise).as_matrix() @ in_cam.rotation,
                                    in_cam.translation + t_noise)
        if not dropped:
            detections.append(HandDetection(cam.frame_id, Pose6D.from_transform(in_cam), confidence, clip_id))
        if scene_states is not None and task is not None:
            features.append(scene_features(scene_states[k], task, cam, feature_dim))
        else:
            features.append(tuple(0.0 for _ in range(feature_dim)))
    return detections, list(camera_traj), features


def propose_affordance(scene: SimScene, task: TaskSpec, rng: np.random.Generator,
                       pixel_noise: float = 6.0, depth_noise: float = 0.005) -> AffordancePoint:
    """Noisy contact pixel + depth on the grasp point, as an affordance model would give"""
    world_to_cam = scene.camera.extrinsic_world_to_cam
    point = world_to_cam.apply(object_pose(scene.objects[task.grasp_id]).translation)
    u, v = project_point(point, scene.camera.intrinsics)
    u += rng.normal(0.0, pixel_noise)
    v += rng.normal(0.0, pixel_noise)
    depth = float(point[2] + rng.normal(0.0, depth_noise))
    if depth <= 0:
        raise NonPositiveDepth(f"grasp point behind the camera (depth {depth})")
    text = {'slide-open': 'open drawer', 'slide-close': 'close drawer', 'hinge-open': 'open cupboard',
            'hinge-close': 'close cupboard'}.get(task.skill, task.skill)
    return make_affordance_point((u, v), depth, scene.camera.intrinsics, text)


def propose_grasps(scene: SimScene, task: TaskSpec, rng: np.random.Generator, distractors: int = 5,
                   position_noise: float = 0.001) -> List[GraspCandidate]:
    """Camera-frame candidates: the true grasp (slightly perturbed) among scored distractors"""
    world_to_cam = scene.camera.extrinsic_world_to_cam
    grasp = canonical_grasp_pose(scene, task).to_transform()
    lateral = grasp.rotation[:, :2]
    candidates = []
    true_pose = RigidTransform(grasp.rotation, grasp.translation + rng.normal(0.0, position_noise, size=3))
    candidates.append(GraspCandidate(Pose6D.from_transform(compose(world_to_cam, true_pose)),
                                     float(rng.uniform(0.4, 0.8))))
    for _ in range(distractors):
        offset = lateral @ rng.uniform(-1.0, 1.0, size=2)
        offset *= rng.uniform(0.08, 0.30) / max(np.linalg.norm(offset), 1e-9)
        fake = RigidTransform(grasp.rotation, grasp.translation + offset)
        candidates.append(GraspCandidate(Pose6D.from_transform(compose(world_to_cam, fake)),
                                         float(rng.uniform(0.2, 1.0))))
    order = rng.permutation(len(candidates))
    return [candidates[i] for i in order]


# ---------------------------------------------------------------------------
# Scene and rollout files

def _pose_list(pose: Optional[Pose6D]):
    return list(pose.as_vector()) if pose is not None else None


def scene_record(scene: SimScene, task: Optional[TaskSpec] = None) -> Dict:
    objects = []
    for object_id in sorted(scene.objects):
        obj = scene.objects[object_id]
        rec = {
            'object_id': obj.object_id, 'kind': obj.kind, 'pose': _pose_list(obj.pose),
            'graspable': obj.graspable, 'radius': obj.radius, 'height': obj.height,
            'tip_offset': obj.tip_offset, 'fill_fraction': obj.fill_fraction,
            'initial_fill': obj.initial_fill, 'rest_z': obj.rest_z,
            'cut_normal': list(obj.cut_normal) if obj.cut_normal is not None else None,
            'cut_done': obj.cut_done, 'stir_angle': obj.stir_angle,
            'stir_excursion': obj.stir_excursion, 'stir_phi': obj.stir_phi,
            'joint': None,
        }
        if obj.joint is not None:
            j = obj.joint
            rec['joint'] = {'kind': j.kind, 'axis': list(j.axis), 'q_min': j.q_min, 'q_max': j.q_max,
                            'q': j.q, 'pivot': list(j.pivot)}
        objects.append(rec)
    g = scene.gripper
    return {
        'seed': scene.rng_seed,
        'step_count': scene.step_count,
        'params': dict(vars(scene.params)),
        'camera': camera_record('', scene.camera),
        'gripper': {'pose': _pose_list(g.pose), 'closed': g.closed, 'attached_id': g.attached_id,
                    'grasp_offset': _pose_list(g.grasp_offset)},
        'objects': objects,
        'task': None if task is None else {'skill': task.skill, 'target_id': task.target_id,
                                           'params': dict(task.params)},
    }


def scene_from_record(rec: Dict, path='<scene>', line_no: Optional[int] = None) -> Tuple[SimScene, Optional[TaskSpec]]:
    try:
        objects = {}
        for o in rec['objects']:
            joint = None
            if o.get('joint'):
                j = o['joint']
                joint = Joint(j['kind'], tuple(j['axis']), j['q_min'], j['q_max'], j['q'], tuple(j['pivot']))
            objects[o['object_id']] = SceneObject(
                o['object_id'], o['kind'], Pose6D.from_vector(o['pose']), joint=joint,
                graspable=o['graspable'], radius=o['radius'], height=o['height'], tip_offset=o['tip_offset'],
                fill_fraction=o['fill_fraction'], initial_fill=o['initial_fill'], rest_z=o['rest_z'],
                cut_normal=tuple(o['cut_normal']) if o['cut_normal'] is not None else None,
                cut_done=o['cut_done'], stir_angle=o['stir_angle'], stir_excursion=o['stir_excursion'],
                stir_phi=o['stir_phi'],
            )
        g = rec['gripper']
        gripper = Gripper(Pose6D.from_vector(g['pose']), g['closed'], g['attached_id'],
                          Pose6D.from_vector(g['grasp_offset']) if g['grasp_offset'] is not None else None)
        cam = rec['camera']
        w, x, y, z = cam['quaternion']
        camera = CameraFrame((cam['fx'], cam['fy'], cam['cx'], cam['cy']),
                             RigidTransform(Rotation.from_quat([x, y, z, w]).as_matrix(), cam['translation']),
                             cam['frame_id'])
        scene = SimScene(objects, gripper, camera, rng_seed=rec['seed'], params=SimParams(**rec['params']),
                         step_count=rec['step_count'])
        task = None
        if rec.get('task'):
            t = rec['task']
            params = dict(t['params'])
            if 'target_position' in params:
                params['target_position'] = tuple(params['target_position'])
            task = TaskSpec(t['skill'], t['target_id'], params)
    except (KeyError, TypeError, ValueError) as e:
        raise RecordFormatError(path, line_no, f"bad scene record ({e})")
    return scene, task


def write_scenes(path, scenes: Sequence[Tuple[SimScene, TaskSpec]]) -> int:
    head = records.header(SCENE_FORMAT, FILE_VERSION)
    return records.write_records(path, [head] + [scene_record(s, t) for s, t in scenes]) - 1


def read_scenes(path) -> List[Tuple[SimScene, Optional[TaskSpec]]]:
    rows = records.read_records(path)
    if not rows:
        raise RecordFormatError(path, None, "empty scene file")
    records.check_header(rows[0][1], SCENE_FORMAT, FILE_VERSION, path, rows[0][0])
    return [scene_from_record(rec, path, line_no) for line_no, rec in rows[1:]]


def snapshot_record(scene: SimScene) -> Dict:
    """Compact per-step state for offline visualisation"""
    return {
        'step': scene.step_count,
        'gripper': list(scene.gripper.pose.as_vector()),
        'closed': scene.gripper.closed,
        'attached_id': scene.gripper.attached_id,
        'joints': {k: o.joint.q for k, o in sorted(scene.objects.items()) if o.joint is not None},
        'fills': {k: o.fill_fraction for k, o in sorted(scene.objects.items()) if o.fill_fraction is not None},
        'objects': {k: list(object_pose(o).as_vector()) for k, o in sorted(scene.objects.items())},
    }


def write_rollout_log(path, snapshots: Sequence[SimScene], task: Optional[TaskSpec] = None) -> int:
    head = records.header(ROLLOUT_FORMAT, FILE_VERSION,
                          skill=task.skill if task else None, target_id=task.target_id if task else None)
    return records.write_records(path, [head] + [snapshot_record(s) for s in snapshots]) - 1
