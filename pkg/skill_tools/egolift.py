"""
🖐️ Egocentric Wrist Lifting
Turns per-frame wrist detections (camera coordinates) plus per-frame camera
extrinsics into world-frame 6D wrist trajectories, and re-expresses
trajectory windows in the camera frame of their first frame.

File formats (JSON Lines, one record per line, keys in this order):

    detections:   {clip_id, frame_id, wrist_pose_cam: [x, y, z, alpha, beta, gamma], confidence}
    cameras:      {clip_id, frame_id, fx, fy, cx, cy,
                   quaternion: [w, x, y, z], translation: [x, y, z]}   # world -> camera
    trajectories: header {format: "wrist-trajectories", version: 1}, then
                  {clip_id, frame_ids: [...], poses: [[6 floats], ...], source_gaps: [[first, last], ...]}
"""

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from . import records
from .errors import (DuplicateFrame, EmptyClip, FrameMismatch, MissingCamera,
                     RecordFormatError, WindowOutOfRange)
from .se3_core import CameraFrame, Pose6D, RigidTransform, compose, invert
from .settings import MAX_GAP, MIN_CONFIDENCE

TRAJECTORY_FORMAT = 'wrist-trajectories'
TRAJECTORY_VERSION = 1


@dataclass(frozen=True)
class HandDetection:
    frame_id: int
    wrist_pose_cam: Pose6D
    confidence: float
    clip_id: str = ''

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class WristTrajectory:
    """World-frame wrist poses with strictly increasing frame ids"""
    clip_id: str
    poses: Tuple[Tuple[int, Pose6D], ...]
    source_gaps: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'poses', tuple((int(f), p) for f, p in self.poses))
        object.__setattr__(self, 'source_gaps', tuple((int(a), int(b)) for a, b in self.source_gaps))
        ids = self.frame_ids
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError(f"trajectory {self.clip_id}: frame ids must be strictly increasing")

    @property
    def frame_ids(self) -> List[int]:
        return [f for f, _ in self.poses]

    def __len__(self):
        return len(self.poses)

    def pose_at(self, frame_id: int) -> Optional[Pose6D]:
        for f, p in self.poses:
            if f == frame_id:
                return p
        return None

    def slice_frames(self, first: int, last: int) -> 'WristTrajectory':
        """Sub-trajectory with frame ids in [first, last]"""
        poses = [(f, p) for f, p in self.poses if first <= f <= last]
        gaps = [(max(a, first), min(b, last)) for a, b in self.source_gaps if b >= first and a <= last]
        return WristTrajectory(self.clip_id, tuple(poses), tuple(gaps))


def lift_frame(det: HandDetection, cam: CameraFrame, ignore_extrinsics: bool = False) -> Pose6D:
    """World-frame wrist pose: invert(extrinsic) ∘ wrist_pose_cam

    ignore_extrinsics treats every frame's camera as the world frame, which
    is the lifting used by the no-structure-from-motion ablation.
    """
    if det.frame_id != cam.frame_id:
        raise FrameMismatch(f"detection frame {det.frame_id} does not match camera frame {cam.frame_id}")
    if ignore_extrinsics:
        return det.wrist_pose_cam
    world = compose(invert(cam.extrinsic_world_to_cam), det.wrist_pose_cam.to_transform())
    return Pose6D.from_transform(world)


def _blend(a: Pose6D, b: Pose6D, fractions: Sequence[float]) -> List[Pose6D]:
    """Linear translation and constant-angular-velocity rotation blend"""
    slerp = Slerp([0.0, 1.0], Rotation.from_matrix(np.stack([a.rotation_matrix(), b.rotation_matrix()])))
    rotations = slerp(np.asarray(fractions, dtype=float)).as_matrix()
    ta, tb = np.asarray(a.translation), np.asarray(b.translation)
    out = []
    for s, rot in zip(fractions, rotations):
        out.append(Pose6D.from_transform(RigidTransform(rot, (1.0 - s) * ta + s * tb)))
    return out


def lift_clip(dets: Sequence[HandDetection], cams: Sequence[CameraFrame],
              min_confidence: float = MIN_CONFIDENCE, max_gap: int = MAX_GAP,
              clip_id: Optional[str] = None, ignore_extrinsics: bool = False) -> List[WristTrajectory]:
    """Lift one clip, filling gaps of at most max_gap frames and splitting at longer ones"""
    cam_by_frame = {c.frame_id: c for c in cams}
    if clip_id is None:
        clip_id = dets[0].clip_id if dets else ''
    seen = set()
    for det in dets:
        if det.frame_id not in cam_by_frame:
            raise MissingCamera(det.frame_id)
        if det.frame_id in seen:
            raise DuplicateFrame(f"clip {clip_id!r}: two detections for frame {det.frame_id}")
        seen.add(det.frame_id)

    kept = sorted((d for d in dets if d.confidence >= min_confidence), key=lambda d: d.frame_id)
    if not kept:
        raise EmptyClip(f"clip {clip_id!r}: no detection with confidence >= {min_confidence}")

    lifted = [(d.frame_id, lift_frame(d, cam_by_frame[d.frame_id], ignore_extrinsics)) for d in kept]

    pieces: List[Tuple[List[Tuple[int, Pose6D]], List[Tuple[int, int]]]] = [([lifted[0]], [])]
    for (prev_id, prev_pose), (frame_id, pose) in zip(lifted, lifted[1:]):
        poses, gaps = pieces[-1]
        missing = frame_id - prev_id - 1
        if missing > max_gap:
            pieces.append(([(frame_id, pose)], []))
            continue
        if missing > 0:
            span = frame_id - prev_id
            fill_ids = list(range(prev_id + 1, frame_id))
            filled = _blend(prev_pose, pose, [(f - prev_id) / span for f in fill_ids])
            poses.extend(zip(fill_ids, filled))
            gaps.append((fill_ids[0], fill_ids[-1]))
        poses.append((frame_id, pose))

    if len(pieces) == 1:
        poses, gaps = pieces[0]
        return [WristTrajectory(clip_id, tuple(poses), tuple(gaps))]
    return [WristTrajectory(f"{clip_id}#{k}", tuple(poses), tuple(gaps))
            for k, (poses, gaps) in enumerate(pieces)]


def lift_clips(dets: Iterable[HandDetection], cams_by_clip: Dict[str, List[CameraFrame]],
               min_confidence: float = MIN_CONFIDENCE, max_gap: int = MAX_GAP,
               ignore_extrinsics: bool = False) -> Tuple[List[WristTrajectory], Dict[str, str]]:
    """Lift every clip of a detection file; returns (trajectories, per-clip failures)"""
    by_clip: Dict[str, List[HandDetection]] = defaultdict(list)
    for det in dets:
        by_clip[det.clip_id].append(det)
    trajectories: List[WristTrajectory] = []
    failures: Dict[str, str] = {}
    for clip_id in sorted(by_clip):
        try:
            trajectories.extend(lift_clip(by_clip[clip_id], cams_by_clip.get(clip_id, []),
                                          min_confidence, max_gap, clip_id, ignore_extrinsics))
        except (EmptyClip, MissingCamera, DuplicateFrame) as e:
            failures[clip_id] = str(e)
    return trajectories, failures


def cameras_by_frame(cams: Union[Sequence[CameraFrame], Mapping[int, CameraFrame]]) -> Mapping[int, CameraFrame]:
    """frame_id -> camera lookup; mappings pass through unchanged"""
    if isinstance(cams, Mapping):
        return cams
    return {c.frame_id: c for c in cams}


def reexpress_window(traj: WristTrajectory, cams: Union[Sequence[CameraFrame], Mapping[int, CameraFrame]],
                     t: int, n: int, poses_by_frame: Optional[Mapping[int, Pose6D]] = None) -> List[Pose6D]:
    """Poses of frames t..t+n expressed in the camera frame of frame t

    Pass a frame_id -> camera mapping and `poses_by_frame` built once when
    cutting many windows from the same clip.
    """
    cam = cameras_by_frame(cams).get(t)
    if cam is None:
        raise WindowOutOfRange(f"no camera for window start frame {t}")
    by_frame = poses_by_frame if poses_by_frame is not None else dict(traj.poses)
    window = []
    for frame_id in range(t, t + n + 1):
        pose = by_frame.get(frame_id)
        if pose is None:
            raise WindowOutOfRange(f"trajectory {traj.clip_id} has no frame {frame_id} (window {t}..{t + n})")
        window.append(Pose6D.from_transform(compose(cam.extrinsic_world_to_cam, pose.to_transform())))
    return window


def translation_rmse(recovered: Sequence[Pose6D], truth: Sequence[Pose6D]) -> float:
    """Per-axis root mean square translation error"""
    diff = np.asarray([p.translation for p in recovered]) - np.asarray([q.translation for q in truth])
    return float(np.sqrt(np.mean(diff ** 2)))


# ---------------------------------------------------------------------------
# File codecs

def detection_record(det: HandDetection) -> Dict:
    return {
        'clip_id': det.clip_id,
        'frame_id': det.frame_id,
        'wrist_pose_cam': list(det.wrist_pose_cam.as_vector()),
        'confidence': det.confidence,
    }


def camera_record(clip_id: str, cam: CameraFrame) -> Dict:
    # scipy quaternions are (x, y, z, w); the file stores (w, x, y, z)
    x, y, z, w = Rotation.from_matrix(cam.extrinsic_world_to_cam.rotation).as_quat()
    fx, fy, cx, cy = cam.intrinsics
    return {
        'clip_id': clip_id,
        'frame_id': cam.frame_id,
        'fx': fx, 'fy': fy, 'cx': cx, 'cy': cy,
        'quaternion': [float(w), float(x), float(y), float(z)],
        'translation': cam.extrinsic_world_to_cam.translation.tolist(),
    }


def read_detections(path) -> List[HandDetection]:
    out = []
    for line_no, rec in records.iter_records(path):
        try:
            pose = Pose6D.from_vector(records.floats(records.field(rec, 'wrist_pose_cam', path, line_no), 6, path, line_no, 'wrist_pose_cam'))
            out.append(HandDetection(
                frame_id=int(records.field(rec, 'frame_id', path, line_no)),
                wrist_pose_cam=pose,
                confidence=float(records.field(rec, 'confidence', path, line_no)),
                clip_id=str(records.field(rec, 'clip_id', path, line_no)),
            ))
        except (TypeError, ValueError) as e:
            if isinstance(e, RecordFormatError):
                raise
            raise RecordFormatError(path, line_no, str(e))
    return out


def read_cameras(path) -> Dict[str, List[CameraFrame]]:
    out: Dict[str, List[CameraFrame]] = defaultdict(list)
    for line_no, rec in records.iter_records(path):
        try:
            w, x, y, z = records.floats(records.field(rec, 'quaternion', path, line_no), 4, path, line_no, 'quaternion')
            translation = records.floats(records.field(rec, 'translation', path, line_no), 3, path, line_no, 'translation')
            rotation = Rotation.from_quat([x, y, z, w]).as_matrix()
            intrinsics = tuple(float(records.field(rec, k, path, line_no)) for k in ('fx', 'fy', 'cx', 'cy'))
            cam = CameraFrame(intrinsics, RigidTransform(rotation, translation), int(records.field(rec, 'frame_id', path, line_no)))
        except (TypeError, ValueError) as e:
            if isinstance(e, RecordFormatError):
                raise
            raise RecordFormatError(path, line_no, str(e))
        out[str(records.field(rec, 'clip_id', path, line_no))].append(cam)
    return dict(out)


def trajectory_record(traj: WristTrajectory) -> Dict:
    return {
        'clip_id': traj.clip_id,
        'frame_ids': traj.frame_ids,
        'poses': [list(p.as_vector()) for _, p in traj.poses],
        'source_gaps': [list(g) for g in traj.source_gaps],
    }


def write_trajectories(path, trajectories: Sequence[WristTrajectory]) -> int:
    head = records.header(TRAJECTORY_FORMAT, TRAJECTORY_VERSION)
    return records.write_records(path, [head] + [trajectory_record(t) for t in trajectories]) - 1


def read_trajectories(path) -> List[WristTrajectory]:
    rows = records.read_records(path)
    if not rows:
        raise RecordFormatError(path, None, "empty trajectory file")
    line_no, head = rows[0]
    records.check_header(head, TRAJECTORY_FORMAT, TRAJECTORY_VERSION, path, line_no)
    out = []
    for line_no, rec in rows[1:]:
        frame_ids = records.field(rec, 'frame_ids', path, line_no)
        poses = records.field(rec, 'poses', path, line_no)
        if not isinstance(frame_ids, list) or not isinstance(poses, list) or len(frame_ids) != len(poses):
            raise RecordFormatError(path, line_no, "frame_ids and poses must be lists of equal length")
        try:
            out.append(WristTrajectory(
                clip_id=str(records.field(rec, 'clip_id', path, line_no)),
                poses=tuple((int(f), Pose6D.from_vector(records.floats(p, 6, path, line_no, 'poses')))
                            for f, p in zip(frame_ids, poses)),
                source_gaps=tuple(tuple(g) for g in rec.get('source_gaps', [])),
            ))
        except (TypeError, ValueError) as e:
            if isinstance(e, RecordFormatError):
                raise
            raise RecordFormatError(path, line_no, str(e))
    return out
