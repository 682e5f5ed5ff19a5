"""Real GOY-type shell model with an antisymmetric bilinear term."""

from dataclasses import dataclass

import numpy as np

from ..core import Constants, InvalidInput, ModelSpec
from .components import DiagonalNoise, gains_vector, make_reaction


@dataclass(frozen=True)
class ShellParams:
    n_shells: int = 10
    k0: float = 1.0
    shell_ratio: float = 2.0
    viscosity: float = 0.01
    a: float = 1.0
    b: float = -0.5
    c: float = -0.5
    noise_gains: float | tuple = 1.0
    noise_gamma: float = 0.5
    time_modulated: bool = False
    reaction: str = "linear"
    rho: float = 0.05
    reaction_gamma: float = 0.5

    def wavenumbers(self):
        return self.k0 * self.shell_ratio ** np.arange(self.n_shells)


class ShellBilinear:
    """B(u, v) built from the triads (m, m+1, m+2) with coefficients k_m (a, b, c).

    For the triad (i, j, l) = (m, m+1, m+2) and alpha = k_m (a, b, c):

        B(u,v)_i += alpha_i u_j v_l
        B(u,v)_j += alpha_j u_i v_l
        B(u,v)_l += (alpha_i + alpha_l) u_i v_j - alpha_i u_j v_i

    so B(u,u) is the GOY nonlinearity, and (B(u,v), w) = -(B(u,w), v)
    holds exactly iff a + b + c = 0.
    """

    def __init__(self, k, a, b, c):
        k = np.asarray(k, dtype=float)
        self.alpha_i = a * k[:-2]
        self.alpha_j = b * k[:-2]
        self.alpha_l = c * k[:-2]
        self.n = k.shape[0]

    def __call__(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.zeros(np.broadcast_shapes(u.shape, v.shape))
        if self.n < 3:
            return out
        out[..., :-2] += self.alpha_i * u[..., 1:-1] * v[..., 2:]
        out[..., 1:-1] += self.alpha_j * u[..., :-2] * v[..., 2:]
        out[..., 2:] += (self.alpha_i + self.alpha_l) * u[..., :-2] * v[..., 1:-1]
        out[..., 2:] -= self.alpha_i * u[..., 1:-1] * v[..., :-2]
        return out


def make_shell_model(p: ShellParams, check_coefficients=True) -> ModelSpec:
    """Shell model with A = diag(nu k_m^2) and bounded multiplicative noise.

    ``check_coefficients=False`` admits a + b + c != 0; such models break
    antisymmetry and exist only to exercise the verifier.
    """
    if p.n_shells < 1 or p.k0 <= 0 or p.shell_ratio <= 1 or p.viscosity <= 0:
        raise InvalidInput("shell parameters need n_shells >= 1, k0 > 0, shell_ratio > 1, viscosity > 0")
    if check_coefficients and abs(p.a + p.b + p.c) > 1e-14 * max(abs(p.a), abs(p.b), abs(p.c), 1.0):
        raise InvalidInput(f"shell coefficients must satisfy a + b + c = 0, got {p.a + p.b + p.c}")
    n = p.n_shells
    k = p.wavenumbers()
    gains = gains_vector(p.noise_gains, n)
    noise = DiagonalNoise(gains, gamma=p.noise_gamma, modulated=p.time_modulated)
    reaction = make_reaction(p.reaction, n, rho=p.rho, gamma=p.reaction_gamma)
    return ModelSpec(
        name="shell",
        dimension=n,
        a_spectrum=p.viscosity * k**2,
        bilinear=ShellBilinear(k, p.a, p.b, p.c),
        reaction=reaction,
        reaction_derivative=reaction.derivative,
        noise_coefficient=noise,
        noise_constants=noise.constants,
        constants=Constants(a0=1.0, **reaction.constants()),
        noise_dim=gains.shape[0],
        notes={"interp_norm": "geometric mean (|v| ||v||)^(1/2), chosen for shell models"},
    )
