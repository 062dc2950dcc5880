"""
📚 Skill Dataset Builder
Assigns annotated clips to skills by keyword, cuts goal-conditioned training
samples out of lifted trajectories and reads/writes skill dataset files.

Dataset file (JSON Lines):
    header  {format: "skill-dataset", version: 1, d, n, mode: "relT+relO"}
    sample  {obs: [d], goal: [d], pose: [6],
             chunk: {translation: "relative", orientation: "relative",
                     base: [6], actions: [[6], ...n]}}

Feature file:     {clip_id, frame_id, feature: [d]}
Annotation file:  {clip_id, text, start_frame, end_frame}
"""

import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

from . import records
from .action_codec import ActionChunk, ActionMode, Representation, encode_chunk
from .egolift import WristTrajectory, cameras_by_frame, reexpress_window
from .errors import (ClipTooShort, ConfigError, MissingFeature, MixedDimensions,
                     RecordFormatError)
from .se3_core import CameraFrame, Pose6D
from .settings import SKILLS, STRIDE

DATASET_FORMAT = 'skill-dataset'
DATASET_VERSION = 1

# Verb-object phrases in the style of kitchen narrations; override per run
DEFAULT_SKILL_KEYWORDS: Dict[str, List[str]] = {
    'slide-open': ['open drawer', 'open the drawer', 'pull drawer', 'pull out drawer'],
    'slide-close': ['close drawer', 'close the drawer', 'push drawer', 'shut drawer'],
    'hinge-open': ['open cupboard', 'open the cupboard', 'open door', 'open the door',
                   'open fridge', 'open the fridge', 'open cabinet'],
    'hinge-close': ['close cupboard', 'close the cupboard', 'close door', 'close the door',
                    'close fridge', 'close the fridge', 'close cabinet', 'shut door'],
    'pick': ['pick up', 'pick', 'take', 'grab', 'lift'],
    'place': ['put down', 'place', 'put', 'put back', 'set down'],
    'pour': ['pour'],
    'cut': ['cut', 'slice', 'chop'],
    'stir': ['stir', 'mix'],
}

Feature = Tuple[float, ...]


@dataclass(frozen=True)
class Annotation:
    clip_id: str
    text: str
    start_frame: int
    end_frame: int


@dataclass(frozen=True)
class SkillClip:
    clip_id: str
    skill: str
    annotation_text: str
    trajectory: WristTrajectory
    frame_features: Mapping[int, Feature]
    goal_feature: Feature

    @property
    def feature_dim(self) -> int:
        return len(self.goal_feature)


@dataclass(frozen=True)
class TrainingSample:
    obs_feature: Feature
    goal_feature: Feature
    current_pose: Pose6D
    chunk: ActionChunk

    def __post_init__(self):
        object.__setattr__(self, 'obs_feature', tuple(float(v) for v in self.obs_feature))
        object.__setattr__(self, 'goal_feature', tuple(float(v) for v in self.goal_feature))
        if self.chunk.base_pose != self.current_pose:
            raise ValueError("chunk base pose must equal the sample's current pose")


def _keyword_pattern(keyword: str) -> 're.Pattern':
    words = [re.escape(w) for w in keyword.split()]
    return re.compile(r'(?<!\w)' + r'\s+'.join(words) + r'(?!\w)', re.IGNORECASE)


def segment_by_skill(annotations: Iterable[Annotation],
                     skill_keywords: Mapping[str, Sequence[str]] = None) -> List[Tuple[str, str, Tuple[int, int]]]:
    """(clip_id, skill, frame range) for every annotation matching exactly one skill"""
    if skill_keywords is None:
        skill_keywords = DEFAULT_SKILL_KEYWORDS
    missing = [s for s in SKILLS if s not in skill_keywords]
    if missing:
        raise ConfigError(f"skill keyword map has no entry for {', '.join(missing)}")
    patterns = {skill: [_keyword_pattern(k) for k in keywords] for skill, keywords in skill_keywords.items()}
    out = []
    for ann in annotations:
        matched = [skill for skill, pats in patterns.items() if any(p.search(ann.text) for p in pats)]
        if len(matched) == 1:
            out.append((ann.clip_id, matched[0], (ann.start_frame, ann.end_frame)))
    return out


def make_skill_clip(clip_id: str, skill: str, annotation_text: str, trajectory: WristTrajectory,
                    frame_features: Mapping[int, Sequence[float]]) -> SkillClip:
    """SkillClip whose goal feature is the feature of the last trajectory frame"""
    features = {}
    for frame_id in trajectory.frame_ids:
        if frame_id not in frame_features:
            raise MissingFeature(f"clip {clip_id}: no feature for frame {frame_id}")
        features[frame_id] = tuple(float(v) for v in frame_features[frame_id])
    dims = {len(f) for f in features.values()}
    if len(dims) > 1:
        raise MixedDimensions(f"clip {clip_id}: feature dimensions {sorted(dims)}")
    goal = features[trajectory.frame_ids[-1]] if trajectory.frame_ids else ()
    return SkillClip(clip_id, skill, annotation_text, trajectory, features, goal)


def build_samples(clip: SkillClip, cams: Sequence[CameraFrame], n: int, mode: ActionMode,
                  stride: int = STRIDE) -> List[TrainingSample]:
    """One sample per start index 0, stride, 2*stride, ... with t+n inside the clip"""
    length = len(clip.trajectory)
    if length < n + 1:
        raise ClipTooShort(f"clip {clip.clip_id}: {length} frames, need at least {n + 1}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    frame_ids = clip.trajectory.frame_ids
    cam_by_frame = cameras_by_frame(cams)
    pose_by_frame = dict(clip.trajectory.poses)
    samples = []
    for index in range(0, length - n, stride):
        frame_id = frame_ids[index]
        window = reexpress_window(clip.trajectory, cam_by_frame, frame_id, n, pose_by_frame)
        chunk = encode_chunk(window, mode, n)
        obs = clip.frame_features.get(frame_id)
        if obs is None:
            raise MissingFeature(f"clip {clip.clip_id}: no feature for frame {frame_id}")
        samples.append(TrainingSample(obs, clip.goal_feature, window[0], chunk))
    return samples


def clip_segments(trajectories: Sequence[WristTrajectory], clip_id: str,
                  frame_range: Tuple[int, int]) -> List[WristTrajectory]:
    """Pieces of a (possibly split) clip that overlap the annotated frame range"""
    first, last = frame_range
    pieces = []
    for traj in trajectories:
        source = traj.clip_id.split('#', 1)[0]
        if source != clip_id:
            continue
        piece = traj.slice_frames(first, last)
        if len(piece):
            pieces.append(piece)
    return pieces


# ---------------------------------------------------------------------------
# File codecs

def _chunk_record(chunk: ActionChunk) -> Dict:
    return {
        'translation': chunk.mode.translation.value,
        'orientation': chunk.mode.orientation.value,
        'base': list(chunk.base_pose.as_vector()),
        'actions': [list(a) for a in chunk.actions],
    }


def sample_record(sample: TrainingSample) -> Dict:
    return {
        'obs': list(sample.obs_feature),
        'goal': list(sample.goal_feature),
        'pose': list(sample.current_pose.as_vector()),
        'chunk': _chunk_record(sample.chunk),
    }


def write_dataset(samples: Sequence[TrainingSample], path) -> int:
    """Write a versioned dataset; all samples must share d, n and mode"""
    if not samples:
        raise ValueError("refusing to write an empty dataset")
    first = samples[0]
    d, n, mode = len(first.obs_feature), first.chunk.n, first.chunk.mode
    for i, s in enumerate(samples):
        if len(s.obs_feature) != d or len(s.goal_feature) != d or s.chunk.n != n or s.chunk.mode != mode:
            raise MixedDimensions(f"sample {i} differs from sample 0 in d, n or mode")
    head = records.header(DATASET_FORMAT, DATASET_VERSION, d=d, n=n, mode=mode.label)
    return records.write_records(path, [head] + [sample_record(s) for s in samples]) - 1


def _parse_sample(rec: Dict, d: int, n: int, path, line_no: int) -> TrainingSample:
    chunk_rec = records.field(rec, 'chunk', path, line_no)
    if not isinstance(chunk_rec, dict):
        raise RecordFormatError(path, line_no, "field 'chunk' must be an object")
    try:
        mode = ActionMode(Representation(chunk_rec.get('translation')), Representation(chunk_rec.get('orientation')))
    except ValueError:
        raise RecordFormatError(path, line_no, "chunk has an unknown representation")
    actions = records.field(chunk_rec, 'actions', path, line_no)
    if not isinstance(actions, list) or len(actions) != n:
        raise RecordFormatError(path, line_no, f"chunk must hold {n} actions")
    chunk = ActionChunk(
        mode,
        Pose6D.from_vector(records.floats(records.field(chunk_rec, 'base', path, line_no), 6, path, line_no, 'base')),
        tuple(records.floats(a, 6, path, line_no, 'actions') for a in actions),
    )
    pose = Pose6D.from_vector(records.floats(records.field(rec, 'pose', path, line_no), 6, path, line_no, 'pose'))
    try:
        return TrainingSample(
            records.floats(records.field(rec, 'obs', path, line_no), d, path, line_no, 'obs'),
            records.floats(records.field(rec, 'goal', path, line_no), d, path, line_no, 'goal'),
            pose,
            chunk,
        )
    except ValueError as e:
        if isinstance(e, RecordFormatError):
            raise
        raise RecordFormatError(path, line_no, str(e))


def read_dataset_with_header(path) -> Tuple[Dict, List[TrainingSample]]:
    rows = records.read_records(path)
    if not rows:
        raise RecordFormatError(path, None, "empty dataset file")
    line_no, head = rows[0]
    records.check_header(head, DATASET_FORMAT, DATASET_VERSION, path, line_no)
    try:
        d, n = int(head['d']), int(head['n'])
        ActionMode.parse(str(head['mode']))
    except (KeyError, TypeError, ValueError):
        raise RecordFormatError(path, line_no, "dataset header needs integer d, n and a valid mode")
    samples = [_parse_sample(rec, d, n, path, ln) for ln, rec in rows[1:]]
    return head, samples


def read_dataset(path) -> List[TrainingSample]:
    return read_dataset_with_header(path)[1]


def write_features(path, rows: Iterable[Tuple[str, int, Sequence[float]]]) -> int:
    return records.write_records(path, ({'clip_id': c, 'frame_id': int(f), 'feature': [float(v) for v in feat]}
                                        for c, f, feat in rows))


def read_features(path) -> Dict[str, Dict[int, Feature]]:
    out: Dict[str, Dict[int, Feature]] = defaultdict(dict)
    for line_no, rec in records.iter_records(path):
        clip_id = str(records.field(rec, 'clip_id', path, line_no))
        try:
            frame_id = int(records.field(rec, 'frame_id', path, line_no))
        except (TypeError, ValueError):
            raise RecordFormatError(path, line_no, "frame_id must be an integer")
        out[clip_id][frame_id] = records.floats(records.field(rec, 'feature', path, line_no), None, path, line_no, 'feature')
    return dict(out)


def write_annotations(path, annotations: Iterable[Annotation]) -> int:
    return records.write_records(path, ({'clip_id': a.clip_id, 'text': a.text,
                                         'start_frame': a.start_frame, 'end_frame': a.end_frame}
                                        for a in annotations))


def read_annotations(path) -> List[Annotation]:
    out = []
    for line_no, rec in records.iter_records(path):
        try:
            out.append(Annotation(
                str(records.field(rec, 'clip_id', path, line_no)),
                str(records.field(rec, 'text', path, line_no)),
                int(records.field(rec, 'start_frame', path, line_no)),
                int(records.field(rec, 'end_frame', path, line_no)),
            ))
        except RecordFormatError:
            raise
        except (TypeError, ValueError):
            raise RecordFormatError(path, line_no, "start_frame and end_frame must be integers")
    return out
