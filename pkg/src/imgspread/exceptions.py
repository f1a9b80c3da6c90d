"""Exception hierarchy shared by all pipeline modules."""


class ImgSpreadError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(ImgSpreadError, ValueError):
    """A parameter is out of its allowed range."""

    exit_code = 2


class DecodeError(ImgSpreadError, ValueError):
    """Image payload could not be decoded to a non-empty raster."""

    exit_code = 4


class EmptyClusterError(ImgSpreadError, ValueError):
    pass


class ProviderError(ImgSpreadError, RuntimeError):
    """Web-detection provider failed.

    ``retry_after`` is in seconds (None when the provider gave no hint),
    ``attempts`` is how many tries were made before giving up.
    """

    exit_code = 4

    def __init__(self, message, *, attempts=1, retry_after=None, status=None):
        super().__init__(message)
        self.attempts = attempts
        self.retry_after = retry_after
        self.status = status


class FixtureMissError(ImgSpreadError, KeyError):
    exit_code = 4

    def __str__(self):
        return str(self.args[0]) if self.args else "fixture miss"


class AnnotationGapError(ImgSpreadError, KeyError):
    """Some clusters have no detection; ``cluster_ids`` lists them."""

    exit_code = 4

    def __init__(self, cluster_ids):
        self.cluster_ids = sorted(cluster_ids)
        super().__init__(f"missing detections for clusters {self.cluster_ids}")

    def __str__(self):
        return self.args[0]


class StabilityError(ImgSpreadError, ValueError):
    exit_code = 2


class NumericalError(ImgSpreadError, ArithmeticError):
    """Non-finite quantity during inference; ``model_dump`` holds the state."""

    exit_code = 4

    def __init__(self, message, model_dump=None):
        super().__init__(message)
        self.model_dump = model_dump or {}


class StatError(ImgSpreadError, ValueError):
    pass


class DependencyError(ImgSpreadError):
    """An upstream pipeline stage has not produced its artifact."""

    exit_code = 3

    def __init__(self, stage, detail=""):
        self.stage = stage
        msg = f"missing upstream stage {stage!r}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class StaleArtifactError(ImgSpreadError):
    exit_code = 3


class DataError(ImgSpreadError, ValueError):
    exit_code = 4
