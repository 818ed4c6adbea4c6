"""Exception hierarchy.

``InputError`` subclasses signal bad user input (CLI exit code 1);
``InvariantViolation`` signals an internal contract breach (exit code 2).
"""


class OceanforgeError(Exception):
    pass


class InputError(OceanforgeError, ValueError):
    pass


class InvariantViolation(OceanforgeError, RuntimeError):
    pass


# ais
class EmptyPayload(InputError):
    pass


class InvalidArmorChar(InputError):
    def __init__(self, char: str, index: int):
        super().__init__(f"invalid AIS armoring character {char!r} at index {index}")
        self.char = char
        self.index = index


class UnsupportedMsgType(InputError):
    pass


class TruncatedBitstream(InputError):
    pass


class FieldOutOfRange(InputError):
    pass


class UnrepresentableValue(InputError):
    pass


class MmsiOutOfRange(InputError):
    pass


class MalformedTimestamp(InputError):
    pass


class MalformedSentence(InputError):
    pass


# corpus
class CodeOutOfRange(InputError):
    pass


class UnsortedInput(InputError):
    pass


class NegativeSkew(InputError):
    pass


class IndeterminateCategory(InputError):
    pass


# dsp
class EmptySignal(InputError):
    pass


class InvalidBandEdges(InputError):
    pass


class SampleRateMismatch(InputError):
    pass


class PatchLargerThanInput(InputError):
    pass


# model
class VocabTooSmall(InputError):
    pass


class DimMismatch(InputError):
    pass


class EmptyTokens(InputError):
    pass


class EmptyPatchSequence(InputError):
    pass


# trainer
class DegenerateBatch(InputError):
    pass


class ZeroNormRow(InputError):
    pass


class ZeroEpsilon(InputError):
    pass


class NonFiniteLoss(InvariantViolation):
    pass


# eval
class ZeroVector(InputError):
    pass


class MissingGroundTruth(InputError):
    pass


class EmptyPromptSet(InputError):
    pass


class CorpusOverlapInZeroShot(InputError):
    pass


class ConfigHashMismatch(InputError):
    pass


class MalformedArtifact(InputError):
    pass
