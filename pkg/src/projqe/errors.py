"""Exception hierarchy shared by all modules."""


class ProjqeError(Exception):
    """Base class for every error raised by this package."""


class FormulaError(ProjqeError):
    """Malformed or inconsistent formula document / IR."""


class ValidationError(ProjqeError):
    """Multi-homogeneity or zero-block validation failure."""


class FragmentError(ProjqeError):
    """An operation restricted to the coordinate fragment met a
    polynomial atom (or some other out-of-fragment construct)."""


class SpaceMismatch(ProjqeError):
    """Set operation attempted across different pattern spaces."""


class TopologyError(ProjqeError):
    """A set did not have the topology (closed/open) an operation requires."""


class DegreeError(ProjqeError):
    """Polynomial degree precondition violated (e.g. Rec_n on deg > n)."""


class PipelineError(ProjqeError):
    """Malformed pipeline document."""


class OracleError(ProjqeError):
    """A Poincare oracle failed, disagreed with its certificates, or
    returned a nonsensical value."""


class OracleBudgetError(OracleError):
    """The homology oracle hit its face/term enumeration budget."""
