"""Swarm-intelligence architecture search for small convolutional networks."""

__version__ = "0.1.0"

from .arch import Architecture, LayerKind, LayerSpec, deserialize, serialize, validate  # noqa: E402
from .aco import AcoConfig, search_aco  # noqa: E402
from .pso import PsoConfig, search_pso  # noqa: E402
from .surrogate import SurrogateEvaluator, SurrogateSpec  # noqa: E402

__all__ = [
    "AcoConfig", "Architecture", "LayerKind", "LayerSpec", "PsoConfig", "SurrogateEvaluator",
    "SurrogateSpec", "deserialize", "search_aco", "search_pso", "serialize", "validate",
]
