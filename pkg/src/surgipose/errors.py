"""Exception types shared across the toolkit."""


class SurgiposeError(Exception):
    """Base class for all toolkit errors."""


class InvalidParam(SurgiposeError, ValueError):
    """A parameter violates its documented precondition."""


class OutOfRange(SurgiposeError, ValueError):
    """A scalar argument (interpolation factor, sample time) is outside its valid interval."""


class BehindCamera(SurgiposeError, ValueError):
    """A point lies closer than the camera near clip and cannot be projected."""


class ParseError(SurgiposeError, ValueError):
    """A file or document could not be parsed."""


class EmptyMesh(ParseError):
    """A mesh file contained no triangles."""


class SchemaError(ParseError):
    """A document parsed but violates the expected schema; message names the offending key path."""


class JointLimit(SurgiposeError, ValueError):
    """A joint value is outside its configured limits."""


class ResolutionMismatch(SurgiposeError, ValueError):
    """Two frame buffers that must share a resolution do not."""


class ConfigError(SurgiposeError, ValueError):
    """A job or scene configuration is inconsistent."""


class DepthOverflow(SurgiposeError, ValueError):
    """A depth value does not fit the 16-bit PNG encoding at the configured depth scale."""


class MissingGt(SurgiposeError, LookupError):
    """A pose estimate references a (scene_id, im_id, obj_id) absent from the ground truth."""


class DegenerateConfiguration(SurgiposeError, ValueError):
    """PnP input is rank deficient (coplanar or near-coplanar model points, or too few)."""


class Diverged(SurgiposeError, RuntimeError):
    """Iterative refinement hit its iteration cap without ever improving."""


class EmptyInput(SurgiposeError, ValueError):
    """An aggregate operation received no records."""
