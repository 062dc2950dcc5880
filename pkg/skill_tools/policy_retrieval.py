"""
🔎 Retrieval Policy
Goal-conditioned post-grasp policy interface and a nearest-neighbour
retrieval baseline over stored training samples.

The cost of stored sample i for query q is

    w_obs * |obs - obs_i|^2 + w_goal * |goal - goal_i|^2 + w_pose * D^2
    D^2 = |t - t_i|^2 + (pose_scale * angle(R^T R_i))^2

and the lowest stored index wins ties. The chunk of the winner is rebased to
the query pose before it is returned.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .action_codec import ActionChunk, ActionMode, Representation, encode_chunk
from .dataset_builder import TrainingSample, read_dataset, write_dataset
from .errors import (ConfigError, DimensionMismatch, EmptyDataset, MixedDimensions,
                     RecordFormatError, RecordIOError)
from .se3_core import Pose6D, RigidTransform, compose, invert, rotation_angles
from .settings import POSE_SCALE, W_GOAL, W_OBS, W_POSE

INDEX_DATASET = 'index_dataset.jsonl'
INDEX_CONFIG = 'index_config.json'


@dataclass(frozen=True)
class PolicyQuery:
    obs_feature: Tuple[float, ...]
    goal_feature: Tuple[float, ...]
    current_pose: Pose6D

    def __post_init__(self):
        object.__setattr__(self, 'obs_feature', tuple(float(v) for v in self.obs_feature))
        object.__setattr__(self, 'goal_feature', tuple(float(v) for v in self.goal_feature))


class RetrievalIndex:
    """Immutable after construction; safe to share between threads"""

    def __init__(self, samples: Sequence[TrainingSample], weights: Tuple[float, float, float], pose_scale: float):
        self.samples = tuple(samples)
        self.weights = tuple(float(w) for w in weights)
        self.pose_scale = float(pose_scale)
        self._obs = np.array([s.obs_feature for s in self.samples], dtype=float)
        self._goal = np.array([s.goal_feature for s in self.samples], dtype=float)
        self._trans = np.array([s.current_pose.translation for s in self.samples], dtype=float)
        self._rot = np.stack([s.current_pose.rotation_matrix() for s in self.samples])
        for array in (self._obs, self._goal, self._trans, self._rot):
            array.setflags(write=False)

    def __len__(self):
        return len(self.samples)

    @property
    def feature_dim(self) -> int:
        return self._obs.shape[1]

    @property
    def chunk_size(self) -> int:
        return self.samples[0].chunk.n

    @property
    def mode(self) -> ActionMode:
        return self.samples[0].chunk.mode

    def costs(self, q: PolicyQuery) -> np.ndarray:
        obs = np.asarray(q.obs_feature, dtype=float)
        goal = np.asarray(q.goal_feature, dtype=float)
        if obs.shape != (self.feature_dim,) or goal.shape != (self.feature_dim,):
            raise DimensionMismatch(f"query features have dims {obs.shape[0]}/{goal.shape[0]}, index has {self.feature_dim}")
        w_obs, w_goal, w_pose = self.weights
        rotation = q.current_pose.rotation_matrix()
        angles = rotation_angles(np.einsum('ji,njk->nik', rotation, self._rot))
        trans_sq = np.sum((self._trans - np.asarray(q.current_pose.translation)) ** 2, axis=1)
        pose_sq = trans_sq + (self.pose_scale * angles) ** 2
        return (w_obs * np.sum((self._obs - obs) ** 2, axis=1)
                + w_goal * np.sum((self._goal - goal) ** 2, axis=1)
                + w_pose * pose_sq)


def fit(dataset: Sequence[TrainingSample], weights: Tuple[float, float, float] = (W_OBS, W_GOAL, W_POSE),
        pose_scale: float = POSE_SCALE) -> RetrievalIndex:
    if not dataset:
        raise EmptyDataset("cannot fit a retrieval index on zero samples")
    if len(weights) != 3 or any(w < 0 for w in weights) or all(w == 0 for w in weights):
        raise ConfigError(f"weights must be three non-negative numbers, not all zero: {weights}")
    if not pose_scale > 0:
        raise ConfigError(f"pose_scale must be positive, got {pose_scale}")
    first = dataset[0]
    d, n, mode = len(first.obs_feature), first.chunk.n, first.chunk.mode
    for i, s in enumerate(dataset):
        if len(s.obs_feature) != d or len(s.goal_feature) != d:
            raise MixedDimensions(f"sample {i} has feature dims {len(s.obs_feature)}/{len(s.goal_feature)}, expected {d}")
        if s.chunk.n != n or s.chunk.mode != mode:
            raise MixedDimensions(f"sample {i} has chunk ({s.chunk.n}, {s.chunk.mode}), expected ({n}, {mode})")
    return RetrievalIndex(dataset, weights, pose_scale)


def rebase_chunk(chunk: ActionChunk, new_base: Pose6D) -> ActionChunk:
    """Move a chunk to start from new_base

    Relative components are reused verbatim. Absolute components are mapped
    through new_base ∘ invert(old_base), which keeps every absolute target
    fixed relative to its base.
    """
    if chunk.base_pose == new_base:
        return chunk
    shift = compose(new_base.to_transform(), invert(chunk.base_pose.to_transform()))
    actions = []
    for action in chunk.actions:
        t = action[:3]
        o = action[3:]
        if chunk.mode.translation is Representation.ABSOLUTE:
            t = tuple(shift.apply(t).tolist())
        if chunk.mode.orientation is Representation.ABSOLUTE:
            o = Pose6D.from_transform(RigidTransform(shift.rotation @ Pose6D((0, 0, 0), o).rotation_matrix(),
                                                     np.zeros(3))).orientation
        actions.append(tuple(t) + tuple(o))
    return ActionChunk(chunk.mode, new_base, tuple(actions))


def nearest_index(index: RetrievalIndex, q: PolicyQuery) -> int:
    return int(np.argmin(index.costs(q)))


def predict(index: RetrievalIndex, q: PolicyQuery) -> ActionChunk:
    best = index.samples[nearest_index(index, q)]
    return rebase_chunk(best.chunk, q.current_pose)


class RetrievalPolicy:
    """Policy interface over a fitted index"""

    def __init__(self, index: RetrievalIndex):
        self.index = index

    @property
    def chunk_size(self) -> int:
        return self.index.chunk_size

    def predict(self, query: PolicyQuery) -> ActionChunk:
        return predict(self.index, query)


class StraightLinePolicy:
    """Baseline that ignores observations: a straight line to a fixed end point

    The end point is the query pose displaced by `displacement` (camera
    frame); the orientation is frozen at the pose seen on the first query.
    Used to reproduce the 2D-affordance trajectory ablation.
    """

    def __init__(self, displacement: Sequence[float], steps: int, chunk_size: int,
                 mode: ActionMode = ActionMode(Representation.RELATIVE, Representation.RELATIVE)):
        self.displacement = np.asarray(displacement, dtype=float)
        self.steps = int(steps)
        self.chunk_size = int(chunk_size)
        self.mode = mode
        self._start: Optional[Pose6D] = None

    def predict(self, query: PolicyQuery) -> ActionChunk:
        if self._start is None:
            self._start = query.current_pose
        start = np.asarray(self._start.translation)
        end = start + self.displacement
        current = np.asarray(query.current_pose.translation)
        progress = float(np.dot(current - start, self.displacement) / max(np.dot(self.displacement, self.displacement), 1e-12))
        window = [query.current_pose]
        step = 1.0 / max(self.steps, 1)
        for k in range(1, self.chunk_size + 1):
            s = min(1.0, max(0.0, progress) + k * step)
            window.append(Pose6D(tuple((1.0 - s) * start + s * end), self._start.orientation))
        return encode_chunk(window, self.mode, self.chunk_size)


def save_index(index: RetrievalIndex, directory) -> Path:
    directory = Path(directory)
    write_dataset(index.samples, directory / INDEX_DATASET)
    config = {'weights': list(index.weights), 'pose_scale': index.pose_scale, 'dataset': INDEX_DATASET}
    tmp = directory / (INDEX_CONFIG + '.tmp')
    with open(tmp, 'w', encoding='utf-8') as f:
        json.dump(config, f, indent=2)
    tmp.replace(directory / INDEX_CONFIG)
    return directory


def load_index(directory) -> RetrievalIndex:
    directory = Path(directory)
    config_path = directory / INDEX_CONFIG
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            config = json.load(f)
        weights = tuple(float(w) for w in config['weights'])
        pose_scale = float(config['pose_scale'])
        dataset_name = config.get('dataset', INDEX_DATASET)
    except OSError as e:
        raise RecordIOError(f"cannot read {config_path}: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise RecordFormatError(config_path, None, f"bad index config ({e})")
    return fit(read_dataset(directory / dataset_name), weights, pose_scale)
