"""
🎬 Action Codec
Encodes a window of n+1 camera-frame poses into an n-action chunk under one
of four representations and decodes chunks back into poses.

Absolute components store each future pose directly. Relative components
store the step from the PREDECESSOR frame: translations are subtracted in
the camera-at-t frame, rotations are relative_pose(R_{i-1}, R_i) written as
a wrapped Euler triple. Decoding chains relative steps from base_pose.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from .errors import BadWindowLength
from .se3_core import Pose6D, RigidTransform, euler_to_matrix, matrix_to_euler, wrap_angle

__all__ = [
    'Representation', 'ActionMode', 'ActionChunk',
    'encode_chunk', 'decode_chunk', 'wrap_angle', 'ALL_MODES',
]


class Representation(str, Enum):
    ABSOLUTE = 'absolute'
    RELATIVE = 'relative'


_SHORT = {Representation.ABSOLUTE: 'abs', Representation.RELATIVE: 'rel'}


@dataclass(frozen=True)
class ActionMode:
    translation: Representation
    orientation: Representation

    def __post_init__(self):
        object.__setattr__(self, 'translation', Representation(self.translation))
        object.__setattr__(self, 'orientation', Representation(self.orientation))

    @property
    def label(self) -> str:
        return f"{_SHORT[self.translation]}T+{_SHORT[self.orientation]}O"

    @classmethod
    def parse(cls, text: str) -> 'ActionMode':
        """Parse labels like 'relT+absO'"""
        parts = text.strip().split('+')
        if len(parts) != 2 or not parts[0].endswith('T') or not parts[1].endswith('O'):
            raise ValueError(f"unknown action mode {text!r}; expected one of {[m.label for m in ALL_MODES]}")
        lookup = {v: k for k, v in _SHORT.items()}
        try:
            return cls(lookup[parts[0][:-1]], lookup[parts[1][:-1]])
        except KeyError:
            raise ValueError(f"unknown action mode {text!r}; expected one of {[m.label for m in ALL_MODES]}")

    def __str__(self):
        return self.label


ALL_MODES = tuple(ActionMode(t, o) for t in Representation for o in Representation)
REL_REL = ActionMode(Representation.RELATIVE, Representation.RELATIVE)


@dataclass(frozen=True)
class ActionChunk:
    mode: ActionMode
    base_pose: Pose6D
    actions: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        actions = tuple(tuple(float(v) for v in a) for a in self.actions)
        if any(len(a) != 6 for a in actions):
            raise ValueError("every action must have 6 components")
        object.__setattr__(self, 'actions', actions)

    @property
    def n(self) -> int:
        return len(self.actions)


def encode_chunk(window: Sequence[Pose6D], mode: ActionMode, n: int = None) -> ActionChunk:
    """Encode poses t..t+n (camera-at-t frame) as n actions"""
    if n is None:
        n = len(window) - 1
    if len(window) != n + 1 or n < 1:
        raise BadWindowLength(f"window must hold n+1={n + 1} poses (n >= 1), got {len(window)}")
    rotations = [p.rotation_matrix() for p in window]
    actions = []
    for i in range(1, n + 1):
        prev, cur = window[i - 1], window[i]
        if mode.translation is Representation.RELATIVE:
            t = tuple(c - p for c, p in zip(cur.translation, prev.translation))
        else:
            t = cur.translation
        if mode.orientation is Representation.RELATIVE:
            o = matrix_to_euler(rotations[i - 1].T @ rotations[i])
        else:
            o = cur.orientation
        actions.append(t + tuple(o))
    return ActionChunk(mode, window[0], tuple(actions))


def decode_chunk(chunk: ActionChunk) -> List[Pose6D]:
    """Future poses 1..n; relative components are chained from base_pose"""
    translation = np.asarray(chunk.base_pose.translation, dtype=float)
    rotation = chunk.base_pose.rotation_matrix()
    out = []
    for action in chunk.actions:
        if chunk.mode.translation is Representation.RELATIVE:
            translation = translation + np.asarray(action[:3])
        else:
            translation = np.asarray(action[:3], dtype=float)
        if chunk.mode.orientation is Representation.RELATIVE:
            rotation = rotation @ euler_to_matrix(action[3:])
        else:
            rotation = euler_to_matrix(action[3:])
        out.append(Pose6D.from_transform(RigidTransform(rotation, translation)))
    return out
