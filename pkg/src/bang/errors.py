"""Exception hierarchy shared by every module of the package."""


class BangError(Exception):
    """Base class for all package errors."""


class UnknownResidue(BangError, ValueError):
    def __init__(self, position, char):
        super().__init__(f"unknown residue {char!r} at position {position}")
        self.position = position
        self.char = char


class IndexOutOfRange(BangError, IndexError):
    pass


class MalformedHeader(BangError, ValueError):
    pass


class EmptySequence(BangError, ValueError):
    pass


class InvalidTokenId(BangError, ValueError):
    pass


class ShapeMismatch(BangError, ValueError):
    pass


class EmptyConditioning(BangError, ValueError):
    pass


class MissingConditioning(BangError, ValueError):
    pass


class DegenerateBackbone(BangError, ValueError):
    pass


class ChainNotFound(BangError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "chain not found"


class IncompleteResidue(BangError, ValueError):
    def __init__(self, resseq, missing=()):
        msg = f"residue {resseq} lacks backbone atoms {','.join(missing) or '?'}"
        super().__init__(msg)
        self.resseq = resseq
        self.missing = tuple(missing)


class MalformedAtomRecord(BangError, ValueError):
    def __init__(self, line_no, reason=""):
        super().__init__(f"malformed ATOM record on line {line_no}: {reason}".rstrip(": "))
        self.line_no = line_no


class NonStandardResidue(BangError, ValueError):
    def __init__(self, resname):
        super().__init__(f"non-standard residue {resname!r}")
        self.resname = resname


class MotifDoesNotFit(BangError, ValueError):
    pass


class NonFiniteGradient(BangError, FloatingPointError):
    pass


class DivergedLoss(BangError, FloatingPointError):
    pass


class LengthMismatch(BangError, ValueError):
    pass


class SequenceTooShort(BangError, ValueError):
    pass


class CheckpointError(BangError, ValueError):
    pass
