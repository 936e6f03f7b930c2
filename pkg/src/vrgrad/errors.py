"""Exception types raised across the package."""


class VRGradError(Exception):
    """Base class for all package errors."""


class ZeroRow(VRGradError, ValueError):
    def __init__(self, row):
        super().__init__(f"row {row} of the data matrix is identically zero")
        self.row = row


class NotStronglyConvex(VRGradError, ValueError):
    def __init__(self, mu, lbar):
        super().__init__(
            f"strong convexity constant {mu:.3e} is negligible against mean smoothness {lbar:.3e}"
        )
        self.mu = mu


class NonPositiveConstant(VRGradError, ValueError):
    pass


class IndexOutOfRange(VRGradError, IndexError):
    pass


class IncoherentUpdate(VRGradError, ValueError):
    """The anchor layout can only refresh none or all of the dual variables."""


class NonFinite(VRGradError, FloatingPointError):
    def __init__(self, iteration):
        super().__init__(f"non-finite iterate produced at iteration {iteration}")
        self.iteration = iteration


class RhoTooLarge(VRGradError, ValueError):
    pass


class NoConvergentRate(VRGradError, ValueError):
    def __init__(self, lam, lam_max):
        super().__init__(
            f"step-size {lam:.6g} admits no certified rate (lambda_max = {lam_max:.6g})"
        )
        self.lam = lam
        self.lam_max = lam_max


class TooManyOutcomes(VRGradError, ValueError):
    pass


class MalformedLine(VRGradError, ValueError):
    def __init__(self, line_no, reason):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class Unattainable(VRGradError, RuntimeError):
    pass


class MissingDataset(VRGradError, FileNotFoundError):
    pass
