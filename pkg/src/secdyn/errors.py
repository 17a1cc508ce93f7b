"""Exception types shared across the toolkit."""


class SecdynError(Exception):
    """Base class for all domain errors."""


class EmptyMesh(SecdynError):
    pass


class NoneConstrained(SecdynError):
    pass


class AllConstrained(SecdynError):
    pass


class UnembeddableVertex(SecdynError):
    def __init__(self, index, distance=None):
        self.index = index
        self.distance = distance
        msg = f"surface vertex {index} is too far from every tetrahedron"
        if distance is not None:
            msg += f" (distance {distance:.3g})"
        super().__init__(msg)


class LengthMismatch(SecdynError):
    pass


class DegenerateTet(SecdynError):
    def __init__(self, index, volume=None):
        self.index = index
        self.volume = volume
        super().__init__(f"tet {index} has non-positive rest volume ({volume})")


class ShapeMismatch(SecdynError):
    pass


class SolveDiverged(SecdynError):
    def __init__(self, msg, frame_index=None, residual=None):
        self.frame_index = frame_index
        self.residual = residual
        super().__init__(msg)


class NonFiniteState(SecdynError):
    def __init__(self, msg, frame_index=None):
        self.frame_index = frame_index
        super().__init__(msg)


class GenerationFailed(SecdynError):
    pass


class CorruptCheckpoint(SecdynError):
    pass


class VersionMismatch(SecdynError):
    pass


class EmptyDataset(SecdynError):
    pass


class NonFiniteLoss(SecdynError):
    def __init__(self, msg, best_state=None, epoch=None):
        self.best_state = best_state
        self.epoch = epoch
        super().__init__(msg)


class ConstrainedCenter(SecdynError):
    pass


class NonFinitePrediction(SecdynError):
    def __init__(self, frame_index, partial=None):
        self.frame_index = frame_index
        self.partial = partial
        super().__init__(f"emulator produced non-finite positions at frame {frame_index}")


class ConfigError(SecdynError):
    pass
