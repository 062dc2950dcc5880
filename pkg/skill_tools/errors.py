"""
Exception types raised across the skill pipeline.

Every error carries enough context to print a one-line diagnostic; the CLI
maps them onto exit codes.
"""
from typing import Optional


class SkillPipelineError(Exception):
    """Base class for all pipeline errors"""


# se3_core
class NonOrthonormalInput(SkillPipelineError, ValueError):
    pass


class NonPositiveDepth(SkillPipelineError, ValueError):
    pass


class NonFiniteInput(SkillPipelineError, ValueError):
    pass


# egolift
class FrameMismatch(SkillPipelineError, ValueError):
    pass


class MissingCamera(SkillPipelineError, KeyError):
    def __init__(self, frame_id: int):
        super().__init__(frame_id)
        self.frame_id = frame_id

    def __str__(self):
        return f"no camera for frame {self.frame_id}"


class DuplicateFrame(SkillPipelineError, ValueError):
    pass


class EmptyClip(SkillPipelineError, ValueError):
    pass


class WindowOutOfRange(SkillPipelineError, IndexError):
    pass


# action_codec
class BadWindowLength(SkillPipelineError, ValueError):
    pass


# dataset_builder
class ClipTooShort(SkillPipelineError, ValueError):
    pass


class MissingFeature(SkillPipelineError, KeyError):
    pass


class RecordIOError(SkillPipelineError, OSError):
    pass


class RecordFormatError(SkillPipelineError, ValueError):
    """A record file line that does not parse or lacks required fields"""

    def __init__(self, path: str, line_no: Optional[int], message: str):
        self.path = str(path)
        self.line_no = line_no
        self.message = message
        super().__init__(str(self))

    def __str__(self):
        where = f"{self.path}:{self.line_no}" if self.line_no is not None else self.path
        return f"{where}: {self.message}"


class FormatVersionMismatch(RecordFormatError):
    pass


# policy_retrieval
class EmptyDataset(SkillPipelineError, ValueError):
    pass


class MixedDimensions(SkillPipelineError, ValueError):
    pass


class DimensionMismatch(SkillPipelineError, ValueError):
    pass


# grasp_select
class NoViableGrasp(SkillPipelineError):
    pass


# simkitchen
class InfeasibleTask(SkillPipelineError):
    pass


class LengthMismatch(SkillPipelineError, ValueError):
    pass


# executor
class ChunkSizeMismatch(SkillPipelineError, ValueError):
    pass


# settings
class ConfigError(SkillPipelineError, ValueError):
    pass
