"""
⚙️ Pipeline Settings
Defaults for every tunable, environment overrides (SKILL_<NAME>) and the
key=value files passed with --config.
"""

import os
from dataclasses import dataclass, fields, replace
from typing import Dict, Optional

from .errors import ConfigError

SKILLS = (
    'slide-open', 'slide-close', 'hinge-open', 'hinge-close',
    'pick', 'place', 'pour', 'cut', 'stir',
)
ARTICULATION_SKILLS = ('slide-open', 'slide-close', 'hinge-open', 'hinge-close')


def _env(name: str, default: str) -> str:
    return os.getenv(f'SKILL_{name.upper()}', default)


# Module-level defaults, overridable from the environment
CHUNK_SIZE = int(_env('chunk_size', '10'))
ACTION_MODE = _env('action_mode', 'relT+relO')
STRIDE = int(_env('stride', '1'))
FEATURE_DIM = int(_env('feature_dim', '32'))
MIN_CONFIDENCE = float(_env('min_confidence', '0.5'))
MAX_GAP = int(_env('max_gap', '5'))
W_OBS = float(_env('w_obs', '1.0'))
W_GOAL = float(_env('w_goal', '1.0'))
W_POSE = float(_env('w_pose', '1.0'))
POSE_SCALE = float(_env('pose_scale', '0.1'))
SCORE_THRESHOLD = float(_env('score_threshold', '0.2'))
STANDOFF = float(_env('standoff', '0.10'))
APPROACH_STEP = float(_env('approach_step', '0.01'))
DEPTH_PATCH = int(_env('depth_patch', '5'))
BUDGET = int(_env('budget', '200'))


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one CLI run"""
    seed: int = 0
    chunk_size: int = CHUNK_SIZE
    action_mode: str = ACTION_MODE
    stride: int = STRIDE
    feature_dim: int = FEATURE_DIM
    min_confidence: float = MIN_CONFIDENCE
    max_gap: int = MAX_GAP
    w_obs: float = W_OBS
    w_goal: float = W_GOAL
    w_pose: float = W_POSE
    pose_scale: float = POSE_SCALE
    score_threshold: float = SCORE_THRESHOLD
    standoff: float = STANDOFF
    approach_step: float = APPROACH_STEP
    depth_patch: int = DEPTH_PATCH
    budget: int = BUDGET
    trials: int = int(_env('trials', '20'))
    demos: int = int(_env('demos', '50'))
    workers: int = int(_env('workers', '4'))
    noise_translation: float = float(_env('noise_translation', '0.005'))
    noise_rotation: float = float(_env('noise_rotation', '0.01'))
    dropout: float = float(_env('dropout', '0.1'))

    def __post_init__(self):
        validate(self)

    def updated(self, **changes) -> 'RunConfig':
        """Copy with the non-None changes applied"""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


_AT_LEAST_ONE = ('chunk_size', 'stride', 'budget', 'trials', 'demos', 'workers', 'depth_patch')
_UNIT_INTERVAL = ('min_confidence', 'score_threshold', 'dropout')
_NON_NEGATIVE = ('w_obs', 'w_goal', 'w_pose', 'noise_translation', 'noise_rotation', 'max_gap', 'seed')
_POSITIVE = ('pose_scale', 'standoff', 'approach_step')


def validate(config: RunConfig) -> None:
    """Raise ConfigError for any value outside its documented range"""
    for name in _AT_LEAST_ONE:
        if getattr(config, name) < 1:
            raise ConfigError(f"{name} must be >= 1, got {getattr(config, name)}")
    for name in _UNIT_INTERVAL:
        if not 0.0 <= getattr(config, name) <= 1.0:
            raise ConfigError(f"{name} must be in [0, 1], got {getattr(config, name)}")
    for name in _NON_NEGATIVE:
        if getattr(config, name) < 0:
            raise ConfigError(f"{name} must be >= 0, got {getattr(config, name)}")
    for name in _POSITIVE:
        if getattr(config, name) <= 0:
            raise ConfigError(f"{name} must be > 0, got {getattr(config, name)}")
    if config.feature_dim < 8:
        raise ConfigError(f"feature_dim must be >= 8, got {config.feature_dim}")
    if config.w_obs == 0 and config.w_goal == 0 and config.w_pose == 0:
        raise ConfigError("retrieval weights must not all be zero")
    # Local import: action_codec imports nothing from here, no cycle
    from .action_codec import ActionMode
    try:
        ActionMode.parse(config.action_mode)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def parse_config_text(text: str, source: str = '<config>') -> Dict[str, object]:
    """Parse key=value lines into typed values keyed by RunConfig field"""
    types = {f.name: f.type for f in fields(RunConfig)}
    values: Dict[str, object] = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{source}:{line_no}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        key = key.replace('-', '_')
        if key not in types:
            raise ConfigError(f"{source}:{line_no}: unknown setting {key!r}")
        kind = types[key]
        try:
            if kind in (int, 'int'):
                values[key] = int(value)
            elif kind in (float, 'float'):
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            raise ConfigError(f"{source}:{line_no}: bad value for {key}: {value!r}")
    return values


def load_config(path: Optional[str] = None, **overrides) -> RunConfig:
    """Defaults and environment, then the config file, then explicit overrides"""
    values: Dict[str, object] = {}
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}")
        values.update(parse_config_text(text, source=str(path)))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)
