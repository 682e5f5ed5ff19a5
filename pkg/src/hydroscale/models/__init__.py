from .components import (
    ConstantNoise,
    CubicSaturatingReaction,
    DiagonalNoise,
    LinearReaction,
    MatrixReaction,
    NoReaction,
    make_reaction,
)
from .ns2d import SpectralNSParams, make_spectral_ns
from .ou import LinearOUParams, make_linear_ou
from .shell import ShellParams, make_shell_model

MODEL_REGISTRY = {
    "shell": (ShellParams, make_shell_model),
    "ns2d": (SpectralNSParams, make_spectral_ns),
    "ou": (LinearOUParams, make_linear_ou),
}


def build_model(name, **params):
    """Construct a registered model from keyword parameters."""
    from ..core import InvalidInput

    if name not in MODEL_REGISTRY:
        raise InvalidInput(f"unknown model {name!r}; choose from {sorted(MODEL_REGISTRY)}")
    cls, ctor = MODEL_REGISTRY[name]
    return ctor(cls(**params))
