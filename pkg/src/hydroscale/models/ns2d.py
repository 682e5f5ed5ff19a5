"""Divergence-free Galerkin truncation of 2D Navier-Stokes on the torus [0, 2pi)^2.

Real coordinates: for every wavevector k in the half lattice
{0 < |k|_inf <= K, k1 > 0 or (k1 = 0, k2 > 0)} there are two coordinates
(c_k, s_k) for the orthonormal fields

    e_k^c = k_perp/|k| * cos(k.x) * sqrt(2)/(2 pi),
    e_k^s = k_perp/|k| * sin(k.x) * sqrt(2)/(2 pi),     k_perp = (-k2, k1).

Every state is divergence free and real by construction.  The bilinear term
is the Galerkin projection of (u . grad) v, evaluated pseudo-spectrally on an
N x N grid with N >= 3K + 1, which is exact (no aliasing reaches |k| <= K).
"""

from dataclasses import dataclass

import numpy as np

from ..core import CONST_FLOOR, Constants, InvalidInput, ModelSpec
from .components import DiagonalNoise, gains_vector, make_reaction

_NORM = np.sqrt(2.0) / (2.0 * np.pi)


@dataclass(frozen=True)
class SpectralNSParams:
    max_wavenumber: int = 8
    viscosity: float = 0.05
    noise_gains: float | tuple = 1.0
    noise_modes: int | None = None
    noise_gamma: float = 0.5
    time_modulated: bool = False
    reaction: str = "linear"
    rho: float = 0.05
    reaction_gamma: float = 0.5


def half_lattice(K):
    """Wavevectors of the half lattice sorted by (|k|^2, k1, k2)."""
    ks = [
        (k1, k2)
        for k1 in range(0, K + 1)
        for k2 in range(-K, K + 1)
        if (k1 > 0 or k2 > 0) and max(abs(k1), abs(k2)) <= K
    ]
    ks.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k[0], k[1]))
    return np.array(ks, dtype=int)


class SpectralGrid:
    """Index bookkeeping between real coordinates and an N x N FFT grid."""

    def __init__(self, K, N=None):
        self.K = int(K)
        self.N = int(N) if N is not None else 3 * self.K + 1
        if self.N < 3 * self.K + 1:
            raise InvalidInput("grid size must be >= 3K + 1 for an exact Galerkin product")
        self.modes = half_lattice(self.K)
        self.n = 2 * len(self.modes)
        k = self.modes.astype(float)
        self.kabs = np.sqrt((k**2).sum(axis=1))
        self.kperp = np.stack([-k[:, 1], k[:, 0]], axis=1) / self.kabs[:, None]
        N = self.N
        self.pos = (self.modes[:, 0] % N, self.modes[:, 1] % N)
        self.neg = ((-self.modes[:, 0]) % N, (-self.modes[:, 1]) % N)
        freq = np.fft.fftfreq(N, d=1.0 / N)
        self.kx, self.ky = np.meshgrid(freq, freq, indexing="ij")

    def amplitudes(self, v):
        """Complex scalar amplitude a(k) with u_hat(k) = k_perp/|k| a(k)."""
        c = v[..., 0::2]
        s = v[..., 1::2]
        return 0.5 * _NORM * (c - 1j * s)

    def to_fourier(self, v):
        """Vector Fourier coefficients u_hat of shape (..., 2, N, N)."""
        v = np.asarray(v, dtype=float)
        a = self.amplitudes(v)
        out = np.zeros(v.shape[:-1] + (2, self.N, self.N), dtype=complex)
        for comp in range(2):
            out[..., comp, self.pos[0], self.pos[1]] = self.kperp[:, comp] * a
            out[..., comp, self.neg[0], self.neg[1]] = self.kperp[:, comp] * np.conj(a)
        return out

    def from_fourier(self, w_hat):
        """Project vector Fourier coefficients onto the real coordinates."""
        wk = w_hat[..., :, self.pos[0], self.pos[1]]
        z = np.einsum("...cm,mc->...m", wk, self.kperp)
        scale = 2.0 * np.sqrt(2.0) * np.pi
        out = np.empty(z.shape[:-1] + (self.n,))
        out[..., 0::2] = scale * z.real
        out[..., 1::2] = -scale * z.imag
        return out

    def physical(self, u_hat):
        return (self.N**2 * np.fft.ifft2(u_hat, axes=(-2, -1))).real

    def spectral(self, f):
        return np.fft.fft2(f, axes=(-2, -1)) / self.N**2


class NSBilinear:
    """B(u, v) = Galerkin projection of (u . grad) v."""

    def __init__(self, grid: SpectralGrid):
        self.grid = grid

    def __call__(self, u, v):
        g = self.grid
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        shape = np.broadcast_shapes(u.shape, v.shape)
        u = np.broadcast_to(u, shape)
        v = np.broadcast_to(v, shape)
        uh = g.to_fourier(u)
        vh = g.to_fourier(v)
        up = g.physical(uh)
        ik = (1j * g.kx, 1j * g.ky)
        adv = np.zeros(shape[:-1] + (2, g.N, g.N))
        for comp in range(2):
            for d in range(2):
                adv[..., comp, :, :] += up[..., d, :, :] * g.physical(ik[d] * vh[..., comp, :, :])
        return g.from_fourier(g.spectral(adv))


class DiscreteL4Norm:
    """(sum_x (2 pi / N)^2 |v(x)|^4)^(1/4) over the collocation grid."""

    def __init__(self, grid: SpectralGrid):
        self.grid = grid
        # discrete L2 is exact on the truncation, then Cauchy-Schwarz over the grid
        self.lower_constant = (2 * np.pi) ** -0.5

    def __call__(self, v):
        g = self.grid
        up = g.physical(g.to_fourier(np.asarray(v, dtype=float)))
        mag2 = (up**2).sum(axis=-3)
        w = (2 * np.pi / g.N) ** 2
        return (w * (mag2**2).sum(axis=(-2, -1))) ** 0.25


def l4_interpolation_constant(grid: SpectralGrid, viscosity):
    """Rigorous a0 with ||v||_L4^2 <= a0 |v| ||v|| on the truncation.

    ||v||_L4^2 <= sup|v| |v|_L2 and sup|v| <= sqrt(2)/(2 pi) sum_k |(c_k, s_k)|
    <= sqrt(2)/(2 pi) (sum_k 1/(nu |k|^2))^(1/2) ||v|| by Cauchy-Schwarz.
    """
    return _NORM * np.sqrt(np.sum(1.0 / (viscosity * grid.kabs**2)))


def make_spectral_ns(p: SpectralNSParams) -> ModelSpec:
    if p.max_wavenumber < 1:
        raise InvalidInput("max_wavenumber must be >= 1")
    if p.viscosity <= 0:
        raise InvalidInput("viscosity must be > 0")
    grid = SpectralGrid(p.max_wavenumber)
    n = grid.n
    alpha = np.repeat(p.viscosity * grid.kabs**2, 2)
    m = n if p.noise_modes is None else int(p.noise_modes)
    if not 0 <= m <= n:
        raise InvalidInput(f"noise_modes must lie in [0, {n}]")
    gains = gains_vector(p.noise_gains, m)
    noise = DiagonalNoise(gains, gamma=p.noise_gamma, modulated=p.time_modulated)
    reaction = make_reaction(p.reaction, n, rho=p.rho, gamma=p.reaction_gamma)
    a0 = max(l4_interpolation_constant(grid, p.viscosity), CONST_FLOOR)
    return ModelSpec(
        name="ns2d",
        dimension=n,
        a_spectrum=alpha,
        bilinear=NSBilinear(grid),
        reaction=reaction,
        reaction_derivative=reaction.derivative,
        noise_coefficient=noise,
        noise_constants=noise.constants,
        constants=Constants(a0=a0, **reaction.constants()),
        interp_norm=DiscreteL4Norm(grid),
        noise_dim=m,
        notes={"interp_norm": "discrete L4 norm on the collocation grid"},
    )
