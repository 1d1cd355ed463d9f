from enum import Enum

ENV_PREFIX = "CRGAUSSMAP_"


class MapModel(Enum):
    HEISENBERG = ("heisenberg", "Im w = |z|^2")
    BALL = ("ball", "|z|^2 + |w|^2 = 1")

    def __init__(self, model_name, defining_equation):
        self.model_name = model_name
        self.defining_equation = defining_equation

    @staticmethod
    def from_str(value: str) -> "MapModel":
        for model in MapModel:
            if model.model_name == value:
                return model
        raise MapValidationError(f"Unknown map model: '{value}'. Valid values: {[m.model_name for m in MapModel]}")


class ComponentRole(Enum):
    F = "f"
    PHI = "phi"
    G = "g"


class CayleyDirection(Enum):
    BALL_TO_HEIS = ("ball->heis", MapModel.BALL, MapModel.HEISENBERG)
    HEIS_TO_BALL = ("heis->ball", MapModel.HEISENBERG, MapModel.BALL)

    def __init__(self, label, source_model, target_model):
        self.label = label
        self.source_model = source_model
        self.target_model = target_model


class AutomorphismKind(Enum):
    TRANSLATION = ("translation", "source")
    TARGET_TRANSLATION = ("target-translation", "target")
    FRACTIONAL = ("fractional", "source")
    ROTATION = ("rotation", "source")
    DILATION = ("dilation", "source")

    def __init__(self, label, acts_on):
        self.label = label
        self.acts_on = acts_on


class CatalogName(Enum):
    LINEAR = "linear"
    WHITNEY = "whitney"
    DANGELO = "dangelo"


class ArithmeticLayer(Enum):
    EXACT = "exact"
    BIGCOMPLEX = "bigcomplex"


class CompletionOrder(Enum):
    INDEX = "index"
    REVERSED = "reversed"


class SIndexPart(Enum):
    S0 = "S0"
    S1 = "S1"


class ExitCode(Enum):
    OK = (0, "consistent / complete")
    INPUT_ERROR = (1, "input error")
    INCONSISTENT = (2, "theorem inconsistency detected")
    NUMERICAL_FAILURE = (3, "numerical failure")

    def __init__(self, code, description):
        self.code = code
        self.description = description


class IdentityName(Enum):
    CHERN_MOSER = "cm"
    EQ112 = "eq112"
    EQ92EQ3 = "eq92eq3"
    HH = "hh"
    EQ43 = "eq43"
    MU_LAW = "mu_law"
    RECENTRING = "recentring"
    PHI30 = "phi30"


class MapValidationError(ValueError):
    pass


class DenominatorVanishesError(MapValidationError):
    pass


class NumericalFailure(ArithmeticError):
    pass


class SamplingFailure(RuntimeError):
    pass


class PolyOp(Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
