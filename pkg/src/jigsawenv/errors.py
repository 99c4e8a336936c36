"""Exception hierarchy shared by all jigsawenv modules.

Everything raised on purpose derives from JigsawError so callers can catch
the whole family in one clause; transport-level code maps these onto wire
error payloads.
"""


class JigsawError(Exception):
    """Base class for all errors raised by this package."""


# --- permutation / difficulty errors -----------------------------------

class InvalidLevel(JigsawError):
    """Requested fixed-point count is impossible (n-1) or out of range."""


class InvalidSize(JigsawError):
    """Derangement requested for fewer than 2 elements."""


class SizeMismatch(JigsawError):
    """Two arrangements of different length were compared."""


class IndexOutOfRange(JigsawError):
    """Slot index outside [0, n)."""


# --- image errors -------------------------------------------------------

class EmptyImage(JigsawError):
    pass


class NotDivisible(JigsawError):
    """Image dimensions not divisible by the grid order."""


class InvalidBox(JigsawError):
    """Normalized box coordinates violate 0 <= x1 < x2 <= 1 (same for y)."""


class DegenerateBox(JigsawError):
    """Crop rectangle collapsed below 1x1 after rounding."""


class NonPositiveFactor(JigsawError):
    pass


class EdgeLengthMismatch(JigsawError):
    pass


class UndecodableImage(JigsawError):
    pass


# --- action language errors ---------------------------------------------

class ActionParseError(JigsawError):
    """Base for action-program parse failures; carries a line number."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(message)
        self.line = line


class ActionSyntaxError(ActionParseError):
    """Statement does not match any production of the action grammar."""


class NameConstraintError(ActionParseError):
    """Result identifier does not match the required pattern for its kind."""


class MirrorError(ActionParseError):
    """Swap operands are not mirrored between the two assignment sides."""


class MultipleImageOps(ActionParseError):
    """More than one crop/zoom/observe in a single program."""


class MalformedAnswer(JigsawError):
    pass


class WrongLength(JigsawError):
    pass


class DuplicateLabel(JigsawError):
    pass


# --- episode errors ------------------------------------------------------

class EpisodeFinished(JigsawError):
    """step() called on an episode that already reached a terminal status."""


class EpisodeBusy(JigsawError):
    """Overlapping step() calls on one episode; retriable."""


class UnknownImageRef(JigsawError):
    pass


class UnknownBoxRef(JigsawError):
    pass


class DuplicateImageName(JigsawError):
    """A result identifier is already present in the episode registry."""


class SwapIndexOutOfRange(JigsawError):
    pass


class StepOverflow(JigsawError):
    """step_num exceeded step_max when computing the step reward."""


# --- grpo errors ----------------------------------------------------------

class EmptyMask(JigsawError):
    """A trajectory has no masked-in token."""


# --- dataset / config / server errors -------------------------------------

class EmptyCorpus(JigsawError):
    pass


class SchemaError(JigsawError):
    """Trajectory or manifest file violates the published schema."""


class ReplayDivergence(JigsawError):
    """Recorded trajectory does not reproduce under deterministic replay."""


class ConfigError(JigsawError):
    """Run config file contains unknown keys or invalid values."""


class BindError(JigsawError):
    pass
