"""Truncated Fourier fields on the torus T^d = [0, 1)^d.

Basis functions are e_j(x) = exp(2*pi*i j.x) for integer j in the Euclidean
ball |j| <= n. A real field stores one complex coefficient per ball mode and
per component; conjugate symmetry c(-j) = conj(c(j)) is enforced on
construction. Sobolev norms use the weight (1 + |j|^2)^s without 2*pi
factors, while the Laplacian carries them: Delta e_j = -4 pi^2 |j|^2 e_j.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi
FFT_WORKERS = -1
FOUR_PI_SQ = 4.0 * np.pi**2


def fft_size(minimum: int) -> int:
    """Smallest 2^a 3^b 5^c integer that is >= ``minimum``."""
    best = None
    p2 = 1
    while p2 < 2 * minimum + 2:
        p3 = p2
        while p3 < 2 * minimum + 2:
            p5 = p3
            while p5 < 2 * minimum + 2:
                if p5 >= minimum and (best is None or p5 < best):
                    best = p5
                p5 *= 5
            p3 *= 3
        p2 *= 2
    return best


@dataclass(frozen=True)
class LatticeSpec:
    """Mode set {j in Z^d : |j| <= n} with index and transform helpers."""

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.n < 1:
            raise ValueError(f"truncation radius must be >= 1, got {self.n}")

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer modes, shape (M, d), lexicographic order."""
        axis = np.arange(-self.n, self.n + 1)
        grid = np.stack(np.meshgrid(*([axis] * self.d), indexing="ij"), axis=-1)
        grid = grid.reshape(-1, self.d)
        keep = np.sum(grid**2, axis=1) <= self.n**2
        out = grid[keep]
        out.flags.writeable = False
        return out

    @property
    def size(self) -> int:
        return len(self.modes)

    @cached_property
    def norm_sq(self) -> np.ndarray:
        """|j|^2 for every mode."""
        out = np.sum(self.modes**2, axis=1).astype(float)
        out.flags.writeable = False
        return out

    @cached_property
    def _index_cube(self) -> np.ndarray:
        cube = -np.ones((2 * self.n + 1,) * self.d, dtype=np.int64)
        cube[tuple((self.modes + self.n).T)] = np.arange(self.size)
        return cube

    def index_of(self, js) -> np.ndarray:
        """Indices of the given modes (shape (..., d)); -1 outside the ball."""
        js = np.asarray(js, dtype=np.int64)
        out = np.full(js.shape[:-1], -1, dtype=np.int64)
        inside = np.all(np.abs(js) <= self.n, axis=-1)
        out[inside] = self._index_cube[tuple((js[inside] + self.n).T)]
        return out

    @cached_property
    def neg_index(self) -> np.ndarray:
        """Index of -j for each mode j."""
        return self.index_of(-self.modes)

    @cached_property
    def zero_index(self) -> int:
        return int(self.index_of(np.zeros(self.d, dtype=np.int64)))

    def embed_index(self, coarse: "LatticeSpec") -> np.ndarray:
        """Indices (in this lattice) of the modes of a smaller lattice."""
        if coarse.d != self.d or coarse.n > self.n:
            raise ValueError("coarse lattice must have the same d and n <= self.n")
        return self.index_of(coarse.modes)

    def transform(self, grid_points: int) -> "GridTransform":
        return _grid_transform(self, int(grid_points))


class GridTransform:
    """Real FFT between ball coefficients and a uniform P^d grid.

    Coefficients are placed on the half spectrum (last coordinate >= 0) so
    ``irfftn`` produces real samples. Arrays carry arbitrary leading batch
    axes; the mode axis is last.
    """

    def __init__(self, lattice: LatticeSpec, points: int):
        if points < 2 * lattice.n + 1:
            raise ValueError(
                f"grid of {points} points per axis cannot hold modes up to {lattice.n}"
            )
        self.lattice = lattice
        self.points = points
        d = lattice.d
        self.shape = (points,) * d
        self.half_shape = (points,) * (d - 1) + (points // 2 + 1,)
        modes = lattice.modes
        half = modes[:, -1] >= 0
        self._half_modes = np.flatnonzero(half)
        wrapped = np.mod(modes[half], points)
        self._half_flat = np.ravel_multi_index(tuple(wrapped.T), self.half_shape)
        self._neg = lattice.neg_index
        self._lower_modes = np.flatnonzero(~half)
        self._lower_src = self._neg[self._lower_modes]
        self._scale = float(points) ** d

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs)
        lead = coeffs.shape[:-1]
        spec = np.zeros(lead + (int(np.prod(self.half_shape)),), dtype=complex)
        spec[..., self._half_flat] = coeffs[..., self._half_modes]
        spec = spec.reshape(lead + self.half_shape)
        axes = tuple(range(-self.lattice.d, 0))
        return sfft.irfftn(spec, s=self.shape, axes=axes, workers=FFT_WORKERS) * self._scale

    def from_grid(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        d = self.lattice.d
        lead = values.shape[:-d]
        axes = tuple(range(-d, 0))
        spec = sfft.rfftn(values, axes=axes, workers=FFT_WORKERS).reshape(lead + (-1,))
        out = np.empty(lead + (self.lattice.size,), dtype=complex)
        out[..., self._half_modes] = spec[..., self._half_flat] / self._scale
        out[..., self._lower_modes] = np.conj(out[..., self._lower_src])
        return out

    def points_grid(self) -> np.ndarray:
        axis = np.arange(self.points) / self.points
        return np.stack(np.meshgrid(*([axis] * self.lattice.d), indexing="ij"), axis=-1)


@lru_cache(maxsize=64)
def _grid_transform(lattice: LatticeSpec, points: int) -> GridTransform:
    return GridTransform(lattice, points)


def symmetrize(lattice: LatticeSpec, coeffs: np.ndarray) -> np.ndarray:
    """Project coefficients onto the conjugate-symmetric (real field) subspace."""
    coeffs = np.asarray(coeffs, dtype=complex)
    return 0.5 * (coeffs + np.conj(coeffs[..., lattice.neg_index]))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real scalar or vector field stored by its ball Fourier coefficients.

    ``coeffs`` has shape (components, M). The array is copied, symmetrised
    and made read-only on construction.
    """

    lattice: LatticeSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] != self.lattice.size:
            raise ValueError(
                f"coefficient array of shape {np.shape(self.coeffs)} does not match "
                f"lattice with {self.lattice.size} modes"
            )
        if c.shape[0] not in (1, self.lattice.d):
            raise ValueError(f"field must have 1 or d components, got {c.shape[0]}")
        c = symmetrize(self.lattice, c)
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.components == 1

    @classmethod
    def zeros(cls, lattice: LatticeSpec, components: int = 1) -> "SpectralField":
        return cls(lattice, np.zeros((components, lattice.size), dtype=complex))

    @classmethod
    def from_modes(cls, lattice: LatticeSpec, amplitudes: dict) -> "SpectralField":
        """Scalar field from ``{j: c}``; the conjugate at -j is filled in."""
        c = np.zeros(lattice.size, dtype=complex)
        for j, value in amplitudes.items():
            idx = int(lattice.index_of(np.array(j)))
            if idx < 0:
                raise ValueError(f"mode {j} lies outside the ball of radius {lattice.n}")
            c[idx] += value
            neg = lattice.neg_index[idx]
            if neg != idx:
                c[neg] += np.conj(value)
            else:
                c[idx] = c[idx].real
        return cls(lattice, c)

    @classmethod
    def cosine(cls, lattice: LatticeSpec, j, amplitude: float = 1.0) -> "SpectralField":
        """amplitude * cos(2 pi j.x)."""
        j = tuple(int(x) for x in j)
        if not any(j):
            return cls.from_modes(lattice, {j: amplitude})
        return cls.from_modes(lattice, {j: amplitude / 2})

    @classmethod
    def from_grid(cls, lattice: LatticeSpec, values: np.ndarray) -> "SpectralField":
        """Project physical samples (shape (P,)*d or (c,)+(P,)*d) onto the ball."""
        values = np.asarray(values, dtype=float)
        scalar = values.ndim == lattice.d
        if scalar:
            values = values[None]
        tr = lattice.transform(values.shape[-1])
        return cls(lattice, tr.from_grid(values))

    @classmethod
    def random(cls, lattice: LatticeSpec, rng: np.random.Generator, *,
               radius: float | None = None, decay: float = 0.0,
               components: int = 1) -> "SpectralField":
        """Random real field supported on |j| <= radius, with |j|^-decay falloff."""
        radius = lattice.n if radius is None else radius
        shape = (components, lattice.size)
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        c *= (1.0 + lattice.norm_sq) ** (-decay / 2)
        c[:, lattice.norm_sq > radius**2] = 0.0
        return cls(lattice, c)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.lattice, coeffs)

    def to_grid(self, points: int) -> np.ndarray:
        """Physical samples on the uniform P^d grid (leading component axis kept
        for vector fields)."""
        out = self.lattice.transform(points).to_grid(self.coeffs)
        return out[0] if self.is_scalar else out

    def evaluate(self, x) -> np.ndarray:
        """Direct (slow) evaluation at points x of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        phase = np.exp(1j * TWO_PI * (x @ self.lattice.modes.T))
        vals = np.real(phase @ self.coeffs.T)
        return vals[..., 0] if self.is_scalar else vals

    def pairing(self, other: "SpectralField") -> float:
        """L^2 inner product <self, other> over the unit torus."""
        _check_same(self, other)
        return float(np.real(np.sum(self.coeffs * np.conj(other.coeffs))))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return self.with_coeffs(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self.with_coeffs(-self.coeffs)

    def max_mode(self, tol: float = 0.0) -> float:
        """Largest |j| carrying a coefficient above ``tol``."""
        active = np.any(np.abs(self.coeffs) > tol, axis=0)
        if not active.any():
            return 0.0
        return float(np.sqrt(self.lattice.norm_sq[active].max()))

    def embed(self, lattice: LatticeSpec) -> "SpectralField":
        """Same field on a lattice of larger radius (zero-padded)."""
        idx = lattice.embed_index(self.lattice)
        c = np.zeros((self.components, lattice.size), dtype=complex)
        c[:, idx] = self.coeffs
        return SpectralField(lattice, c)

    def restrict(self, lattice: LatticeSpec) -> "SpectralField":
        """Projection onto a lattice of smaller radius."""
        idx = self.lattice.embed_index(lattice)
        return SpectralField(lattice, self.coeffs[:, idx])


def _check_same(a: SpectralField, b: SpectralField):
    if a.lattice != b.lattice or a.components != b.components:
        raise ValueError("fields live on different lattices or have different shapes")


def sobolev_weights(lattice: LatticeSpec, s: float) -> np.ndarray:
    return (1.0 + lattice.norm_sq) ** s


def sobolev_norm_sq(coeffs: np.ndarray, lattice: LatticeSpec, s: float) -> np.ndarray:
    """Squared H^s norm of raw coefficient arrays, reduced over the mode axis."""
    return np.sum(sobolev_weights(lattice, s) * np.abs(coeffs) ** 2, axis=-1)


def sobolev_norm(field: SpectralField, s: float) -> float:
    """(sum_j (1+|j|^2)^s |u(j)|^2)^(1/2), summed over components."""
    if not math.isfinite(s):
        raise ValueError(f"Sobolev index must be finite, got {s}")
    return float(np.sqrt(np.sum(sobolev_norm_sq(field.coeffs, field.lattice, s))))


def laplacian(field: SpectralField) -> SpectralField:
    return field.with_coeffs(-FOUR_PI_SQ * field.lattice.norm_sq * field.coeffs)


def project(field: SpectralField, m: float) -> SpectralField:
    """Zero all modes with |j| > m (the Galerkin projection Pi_m)."""
    if m < 0:
        raise ValueError(f"projection radius must be >= 0, got {m}")
    if m > field.lattice.n:
        raise ValueError(f"projection radius {m} exceeds lattice radius {field.lattice.n}")
    keep = field.lattice.norm_sq <= m * m
    return field.with_coeffs(np.where(keep, field.coeffs, 0.0))


def heat_factor(lattice: LatticeSpec, kappa: float, t: float) -> np.ndarray:
    return np.exp(-FOUR_PI_SQ * kappa * t * lattice.norm_sq)


def heat_multiply(field: SpectralField, kappa: float, t: float) -> SpectralField:
    """Apply the heat semigroup exp(kappa t Delta)."""
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    if kappa <= 0:
        raise ValueError(f"diffusivity must be positive, got {kappa}")
    return field.with_coeffs(heat_factor(field.lattice, kappa, t) * field.coeffs)


def gradient_coeffs(coeffs: np.ndarray, lattice: LatticeSpec) -> np.ndarray:
    """Gradient of scalar coefficient arrays (..., M) -> (..., d, M)."""
    mult = 1j * TWO_PI * lattice.modes.T
    return coeffs[..., None, :] * mult


def gradient(field: SpectralField) -> SpectralField:
    if not field.is_scalar:
        raise ValueError("gradient expects a scalar field")
    return SpectralField(field.lattice, gradient_coeffs(field.coeffs[0], field.lattice))


def sup_time_norm(series, s: float) -> float:
    """Largest H^s norm over a list of (time, field) snapshots."""
    series = list(series)
    if not series:
        raise ValueError("sup_time_norm needs at least one snapshot")
    return max(sobolev_norm(f, s) for _, f in series)


def field_to_json(field: SpectralField) -> dict:
    return {
        "d": field.lattice.d,
        "n": field.lattice.n,
        "components": field.components,
        "modes": [
            {
                "j": [int(x) for x in j],
                "re": [float(v) for v in field.coeffs[:, i].real],
                "im": [float(v) for v in field.coeffs[:, i].imag],
            }
            for i, j in enumerate(field.lattice.modes)
            if np.any(field.coeffs[:, i] != 0)
        ],
    }


def field_from_json(data: dict) -> SpectralField:
    lattice = LatticeSpec(int(data["d"]), int(data["n"]))
    comps = int(data.get("components", 1))
    c = np.zeros((comps, lattice.size), dtype=complex)
    for entry in data["modes"]:
        idx = int(lattice.index_of(np.array(entry["j"])))
        if idx < 0:
            raise ValueError(f"mode {entry['j']} outside the ball of radius {lattice.n}")
        c[:, idx] = np.asarray(entry["re"]) + 1j * np.asarray(entry["im"])
    return SpectralField(lattice, c)


def save_field(field: SpectralField, path) -> None:
    Path(path).write_text(json.dumps(field_to_json(field)))


def load_field(path) -> SpectralField:
    return field_from_json(json.loads(Path(path).read_text()))
