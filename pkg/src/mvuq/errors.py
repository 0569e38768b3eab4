"""Exception and warning taxonomy shared by all mvuq modules."""


class MvuqError(Exception):
    """Base class for all mvuq errors."""


# --- container / file format ---------------------------------------------

class FormatError(MvuqError):
    """Malformed container file. Carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class ChecksumMismatch(MvuqError):
    """Stored payload hash does not match the recomputed one."""


class NonFiniteValue(MvuqError):
    """A NaN or infinity where finite data is required."""

    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"non-finite value at row {row}, col {col}")


# --- raster ----------------------------------------------------------------

class MissingBand(MvuqError):
    def __init__(self, band_id: str):
        self.band_id = band_id
        super().__init__(f"band {band_id!r} not present in raster")


class ShapeMismatch(MvuqError):
    """Band grids (or arrays generally) disagree in shape."""


# --- featurize ---------------------------------------------------------------

class ImageTooSmall(MvuqError):
    """Image smaller than the featurizer patch in at least one dimension."""


class RowCountMismatch(MvuqError):
    """Feature matrices to fuse have different numbers of rows."""


class ManifestMismatch(MvuqError):
    """Feature matrices to fuse carry different location manifests."""


# --- regression ----------------------------------------------------------

class SingularSystem(MvuqError):
    """Unpenalized normal equations are rank-deficient."""


class DimensionMismatch(MvuqError):
    """Feature dimension of the input does not match the fitted model."""


class EmptyTraining(MvuqError):
    """No training targets supplied."""


class Diverged(MvuqError):
    """Iterative fit produced a non-finite or persistently increasing loss."""


class NonPositiveVariance(MvuqError):
    """A variance that must be > 0 is not."""


# --- bayes -------------------------------------------------------------------

class NumericalFailure(MvuqError):
    """Posterior precision not positive definite even after jitter."""


class DivergentChain(MvuqError):
    """An MCMC chain produced a non-finite draw."""


# --- metrics -----------------------------------------------------------------

class TooFewSamples(MvuqError):
    """Sample-based distribution has too few draws for the requested metric."""


class LengthMismatch(MvuqError):
    """Paired sequences (distributions vs. observations) differ in length."""


# --- geoviz ----------------------------------------------------------------

class TooFewPoints(MvuqError):
    """Not enough scattered points to fit a variogram."""


class SingularKrigingSystem(MvuqError):
    """Kriging system singular even after diagonal jitter."""


# --- pipeline -----------------------------------------------------------

class ConfigError(MvuqError):
    """Pipeline configuration invalid before any stage ran (exit code 2)."""


class StageError(MvuqError):
    """A pipeline stage failed; partial artifacts are retained (exit code 1)."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


# --- warnings ---------------------------------------------------------------

class VarianceCollapseWarning(UserWarning):
    """Predicted variance hit the floor during heteroscedastic fitting."""


class RHatWarning(UserWarning):
    """Split-R-hat exceeded 1.05 on at least one coefficient."""


class DegenerateFieldWarning(UserWarning):
    """Scatter field has (near-)zero variance; nugget-only variogram returned."""
