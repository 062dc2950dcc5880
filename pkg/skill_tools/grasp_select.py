"""
🤏 Grasp Selection
Fuses an affordance contact point with grasp candidates, plans the linear
approach, and provides the two ablation selection modes.

Grasp pose translations are gripper-center positions; the approach axis is
the gripper's local +z.

Files (JSON Lines):
    candidates:  {pose: [6], score, width}
    affordance:  {u, v, depth, task_text}
    depth map:   header {format: "depth-map", version: 1, width, height}, then one {row: [width floats]} per image row
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import records
from .errors import NoViableGrasp, NonPositiveDepth, RecordFormatError
from .se3_core import Pose6D, lift_pixel
from .settings import APPROACH_STEP, DEPTH_PATCH, SCORE_THRESHOLD, STANDOFF

DEPTH_FORMAT = 'depth-map'
DEPTH_VERSION = 1


@dataclass(frozen=True)
class AffordancePoint:
    pixel: Tuple[float, float]
    depth: float
    point3d_cam: Tuple[float, float, float]
    task_text: str = ''


@dataclass(frozen=True)
class GraspCandidate:
    pose_cam: Pose6D
    score: float
    width: float = 0.08

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"grasp score must be in [0, 1], got {self.score}")
        if self.width < 0:
            raise ValueError(f"grasp width must be >= 0, got {self.width}")


class SelectionMode(str, Enum):
    AFFORDANCE_FUSED = 'affordance_fused'
    BEST_SCORE_ONLY = 'best_score_only'
    CONTACT_POINT_DIRECT = 'contact_point_direct'


def make_affordance_point(pixel: Sequence[float], depth: float, intrinsics: Sequence[float],
                          task_text: str = '') -> AffordancePoint:
    point = lift_pixel(pixel, depth, intrinsics)
    return AffordancePoint((float(pixel[0]), float(pixel[1])), float(depth), tuple(point.tolist()), task_text)


def depth_patch_median(depth_map: np.ndarray, pixel: Sequence[float], patch: int = DEPTH_PATCH) -> float:
    """Median of the valid depths in a patch x patch window around the pixel"""
    depth_map = np.asarray(depth_map, dtype=float)
    height, width = depth_map.shape
    u, v = int(round(float(pixel[0]))), int(round(float(pixel[1])))
    half = patch // 2
    window = depth_map[max(0, v - half):min(height, v + half + 1), max(0, u - half):min(width, u + half + 1)]
    valid = window[np.isfinite(window) & (window > 0)]
    if valid.size == 0:
        raise NonPositiveDepth(f"no valid depth in the {patch}x{patch} patch around pixel ({u}, {v})")
    return float(np.median(valid))


def select_grasp(aff: Optional[AffordancePoint], candidates: Sequence[GraspCandidate], mode: SelectionMode,
                 score_threshold: float = SCORE_THRESHOLD,
                 initial_gripper_orientation: Sequence[float] = (0.0, 0.0, 0.0)) -> Pose6D:
    mode = SelectionMode(mode)
    if mode is SelectionMode.CONTACT_POINT_DIRECT:
        if aff is None:
            raise NoViableGrasp("contact-point grasping needs an affordance point")
        return Pose6D(aff.point3d_cam, tuple(initial_gripper_orientation))

    feasible = [(i, c) for i, c in enumerate(candidates) if c.score >= score_threshold]
    if not feasible:
        raise NoViableGrasp(f"no grasp candidate scores >= {score_threshold} ({len(candidates)} candidates)")

    if mode is SelectionMode.BEST_SCORE_ONLY:
        _, best = min(feasible, key=lambda ic: (-ic[1].score, ic[0]))
        return best.pose_cam

    if aff is None:
        raise NoViableGrasp("affordance-fused grasping needs an affordance point")
    _, best = min(feasible, key=lambda ic: (math.dist(ic[1].pose_cam.translation, aff.point3d_cam), -ic[1].score, ic[0]))
    return best.pose_cam


def plan_linear_approach(grasp_pose: Pose6D, standoff: float = STANDOFF, step: float = APPROACH_STEP) -> List[Pose6D]:
    """Waypoints from the standoff pose down the approach axis to the grasp pose"""
    if not standoff > 0 or not step > 0:
        raise ValueError(f"standoff and step must be positive, got {standoff} and {step}")
    approach = grasp_pose.rotation_matrix()[:, 2]
    target = np.asarray(grasp_pose.translation)
    segments = max(1, math.ceil(standoff / step - 1e-9))
    waypoints = []
    for k in range(segments):
        retreat = standoff * (segments - k) / segments
        waypoints.append(Pose6D(tuple((target - retreat * approach).tolist()), grasp_pose.orientation))
    waypoints.append(grasp_pose)
    return waypoints


# ---------------------------------------------------------------------------
# File codecs

def candidate_record(c: GraspCandidate) -> dict:
    return {'pose': list(c.pose_cam.as_vector()), 'score': c.score, 'width': c.width}


def read_candidates(path) -> List[GraspCandidate]:
    out = []
    for line_no, rec in records.iter_records(path):
        pose = Pose6D.from_vector(records.floats(records.field(rec, 'pose', path, line_no), 6, path, line_no, 'pose'))
        try:
            out.append(GraspCandidate(pose, float(records.field(rec, 'score', path, line_no)),
                                      float(rec.get('width', 0.08))))
        except (TypeError, ValueError) as e:
            raise RecordFormatError(path, line_no, str(e))
    return out


def affordance_record(aff: AffordancePoint) -> dict:
    return {'u': aff.pixel[0], 'v': aff.pixel[1], 'depth': aff.depth, 'task_text': aff.task_text}


def read_affordance(path, intrinsics: Sequence[float], depth_map: Optional[np.ndarray] = None,
                    patch: int = DEPTH_PATCH) -> AffordancePoint:
    """First record of an affordance file; a depth map overrides the stored depth"""
    rows = records.read_records(path)
    if not rows:
        raise RecordFormatError(path, None, "empty affordance file")
    line_no, rec = rows[0]
    try:
        pixel = (float(records.field(rec, 'u', path, line_no)), float(records.field(rec, 'v', path, line_no)))
        depth = float(records.field(rec, 'depth', path, line_no))
    except (TypeError, ValueError) as e:
        raise RecordFormatError(path, line_no, str(e))
    if depth_map is not None:
        depth = depth_patch_median(depth_map, pixel, patch)
    return make_affordance_point(pixel, depth, intrinsics, str(rec.get('task_text', '')))


def write_depth_map(path, depth_map: np.ndarray) -> None:
    depth_map = np.asarray(depth_map, dtype=float)
    height, width = depth_map.shape
    head = records.header(DEPTH_FORMAT, DEPTH_VERSION, width=width, height=height)
    records.write_records(path, [head] + [{'row': row.tolist()} for row in depth_map])


def read_depth_map(path) -> np.ndarray:
    rows = records.read_records(path)
    if not rows:
        raise RecordFormatError(path, None, "empty depth map")
    line_no, head = rows[0]
    records.check_header(head, DEPTH_FORMAT, DEPTH_VERSION, path, line_no)
    width, height = int(head.get('width', -1)), int(head.get('height', -1))
    if len(rows) - 1 != height:
        raise RecordFormatError(path, line_no, f"header says {height} rows, file has {len(rows) - 1}")
    grid = [records.floats(records.field(rec, 'row', path, ln), width, path, ln, 'row') for ln, rec in rows[1:]]
    return np.array(grid, dtype=float).reshape(height, width)
