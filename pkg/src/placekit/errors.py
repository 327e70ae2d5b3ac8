"""Exception hierarchy. Each error class name doubles as its error code."""


class PlacekitError(Exception):
    """Base class for all placekit errors."""

    @property
    def code(self):
        return type(self).__name__


class EmptyCloud(PlacekitError, ValueError):
    pass


class CloudFormatError(PlacekitError, ValueError):
    pass


class DegenerateHull(PlacekitError, ValueError):
    pass


class DegenerateCovariance(PlacekitError, ValueError):
    pass


class DegenerateObject(PlacekitError, ValueError):
    pass


class TooSparse(PlacekitError, ValueError):
    pass


class VocabularyMissing(PlacekitError, RuntimeError):
    pass


class SingleClass(PlacekitError, ValueError):
    pass


class BadFeature(PlacekitError, ValueError):
    pass


class NeedMultipleTasks(PlacekitError, ValueError):
    pass


class FeatureMismatch(PlacekitError, ValueError):
    pass


class InfeasibleStrategy(PlacekitError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class NoCandidates(PlacekitError, ValueError):
    def __init__(self, object_id):
        self.object_id = object_id
        super().__init__(f"NoCandidates({object_id})")


class Infeasible(PlacekitError, RuntimeError):
    pass


class ProblemTooLarge(PlacekitError, ValueError):
    pass


class BadParams(PlacekitError, ValueError):
    pass


class CollidingPlacement(PlacekitError, ValueError):
    pass
