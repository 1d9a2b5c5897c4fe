# -*- coding: utf-8 -*-
"""Exception and warning classes for deskgaze."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals


class DeskGazeError(Exception):
    """Base class for every error raised by deskgaze."""


class InvalidInputError(DeskGazeError, ValueError):
    """Raised when an input value is malformed or out of its domain."""


class DegenerateFaceError(DeskGazeError, ValueError):
    """Raised when the face reference landmarks coincide."""


class DegenerateIrisError(DeskGazeError, ValueError):
    """Raised when the measured iris diameter is not positive."""


class DegenerateEyeError(DeskGazeError, ValueError):
    """Raised when an eye ring has no horizontal extent."""


class DegenerateQuadError(DeskGazeError, ValueError):
    """Raised when the eye-strip quad cannot define a homography."""


class BehindCameraError(DeskGazeError, ValueError):
    """Raised when a transformed point does not lie in front of the camera."""


class ShapeError(DeskGazeError, ValueError):
    """Raised when tensor shapes are incompatible."""

    def __init__(self, content, expected=None, actual=None):
        """Initialize the ShapeError with both offending shapes."""
        if expected is not None or actual is not None:
            message = "%s (expected %s, got %s)" % (
                content, tuple(expected) if expected is not None else None,
                tuple(actual) if actual is not None else None)
        else:
            message = content

        super(ShapeError, self).__init__(message)
        self.content = content
        self.expected = expected
        self.actual = actual


class NonFiniteError(DeskGazeError, ArithmeticError):
    """Raised when a loss or gradient stops being finite."""

    def __init__(self, content, name=None):
        """Initialize the NonFiniteError with the offending tensor name."""
        if name is not None:
            message = "%s: %s" % (name, content)
        else:
            message = content

        super(NonFiniteError, self).__init__(message)
        self.content = content
        self.name = name


class TrainingDivergedError(DeskGazeError):
    """Raised when training aborts; carries the last good checkpoint."""

    def __init__(self, content, checkpoint=None, epoch=None):
        """Initialize the TrainingDivergedError."""
        if epoch is not None:
            message = "epoch %s: %s" % (epoch, content)
        else:
            message = content

        super(TrainingDivergedError, self).__init__(message)
        self.content = content
        self.checkpoint = checkpoint
        self.epoch = epoch


class ManifestError(DeskGazeError, ValueError):
    """Raised when a dataset manifest violates its schema."""

    def __init__(self, content, pointer=''):
        """Initialize the ManifestError with a JSON pointer path."""
        message = "%s: %s" % (pointer or '/', content)
        super(ManifestError, self).__init__(message)
        self.content = content
        self.pointer = pointer or '/'


class IntegrityError(DeskGazeError):
    """Raised when a referenced file does not match its recorded hash."""

    def __init__(self, content, path=None):
        """Initialize the IntegrityError."""
        if path is not None:
            message = "%s: %s" % (path, content)
        else:
            message = content

        super(IntegrityError, self).__init__(message)
        self.content = content
        self.path = path


class ContainerError(DeskGazeError, ValueError):
    """Raised when a binary tensor container is malformed."""


class ConfigError(DeskGazeError, ValueError):
    """Raised on unknown configuration keys or malformed overrides."""


class DiagnosticWarning(UserWarning):
    """Base category for recoverable diagnostics."""


class ClampedValueWarning(DiagnosticWarning):
    """A value outside its range was clamped to the nearest valid one."""


class SkippedSampleWarning(DiagnosticWarning):
    """A dataset sample failed validation and was skipped."""


class DefaultIntrinsicsWarning(DiagnosticWarning):
    """No camera intrinsics were supplied and the default was applied."""


class AdaptationWarning(DiagnosticWarning):
    """Inner-loop adaptation aborted or support samples were evicted."""
