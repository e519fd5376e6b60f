"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and an optional
``witness`` (sample index, offending value, ...) so the CLI can emit
``{code, message, witness}`` without parsing messages.
"""


class VKError(Exception):
    code = "error"

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness

    def to_dict(self):
        return {"code": self.code, "message": str(self), "witness": self.witness}


class InputError(VKError):
    code = "input_error"


class UncoveredPoint(VKError):
    code = "uncovered_point"


class UncoveredEdge(VKError):
    code = "uncovered_edge"


class NotScalar(VKError):
    code = "not_scalar"

    def __init__(self, message, residual, witness=None):
        super().__init__(message, witness)
        self.residual = residual


class NumericalFailure(VKError):
    code = "numerical_failure"


class IndexOutOfRange(VKError, IndexError):
    code = "index_out_of_range"


class GapViolation(VKError):
    code = "gap_violation"


class ContourHitsSpectrum(VKError):
    code = "contour_hits_spectrum"


class NoCommonGap(VKError):
    code = "no_common_gap"


class ProjectionSingular(VKError):
    code = "projection_singular"


class ShapeMismatch(VKError):
    code = "shape_mismatch"


class TwistMismatch(VKError):
    code = "twist_mismatch"


class NotIso(VKError):
    code = "not_iso"


class SupportTouchesBoundary(VKError):
    code = "support_touches_boundary"


class NoGlobalGap(VKError):
    code = "no_global_gap"


class BadParameters(VKError):
    code = "bad_parameters"


class SurjectivityFailure(VKError):
    code = "surjectivity_failure"


class PartitionMismatch(VKError):
    code = "partition_mismatch"


class IdentificationFailure(VKError):
    code = "identification_failure"


class NotEquivalence(VKError):
    code = "not_equivalence"


class NotLineReducible(VKError):
    code = "not_line_reducible"


class WindingAmbiguous(VKError):
    code = "winding_ambiguous"


class UnknownPreset(VKError):
    code = "unknown_preset"
