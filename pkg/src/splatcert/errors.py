"""Exception types shared across the package."""


class CertificationError(RuntimeError):
    """A certified quantity is unavailable or an estimate failed certification.

    Raised when a bound cannot be evaluated soundly (e.g. curvature constant
    kappa <= 0, block sensitivity G = 0 in a denominator) rather than when a
    numerical check merely comes out negative; checks report their verdict.
    """
