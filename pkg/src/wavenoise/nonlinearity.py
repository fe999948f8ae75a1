"""Globally Lipschitz forcing terms f(u) applied to truncated fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import LatticeSpec, SpectralField, fft_size

KINDS = ("zero", "linear", "sin", "smoothsat")


@dataclass(frozen=True)
class Nonlinearity:
    """One of ``zero``, ``linear:c``, ``sin:c``, ``smoothsat:c``.

    smoothsat is c u / (1 + u^2), whose derivative is bounded by |c|.
    """

    kind: str = "zero"
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown nonlinearity {self.kind!r}; choose from {KINDS}")

    @classmethod
    def parse(cls, text: str) -> "Nonlinearity":
        text = text.strip().lower()
        if text == "zero":
            return cls()
        name, _, value = text.partition(":")
        if not value:
            raise ValueError(f"nonlinearity {text!r} needs a coefficient, e.g. '{name}:1.0'")
        return cls(name, float(value))

    def __str__(self) -> str:
        return "zero" if self.kind == "zero" else f"{self.kind}:{self.c:g}"

    @property
    def lipschitz_const(self) -> float:
        return 0.0 if self.kind == "zero" else abs(self.c)

    @property
    def cb2(self) -> bool:
        return self.kind in ("zero", "sin", "smoothsat")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.c == 0.0

    @property
    def is_linear(self) -> bool:
        return self.kind in ("zero", "linear")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return self.c * u
        if self.kind == "sin":
            return self.c * np.sin(u)
        return self.c * u / (1.0 + u * u)


def dealias_points(lattice: LatticeSpec, dealias_level: float) -> int:
    if dealias_level < 1:
        raise ValueError(f"dealias level must be >= 1, got {dealias_level}")
    return fft_size(int(np.ceil(dealias_level * (2 * lattice.n + 1))))


def apply_f_coeffs(f: Nonlinearity, coeffs: np.ndarray, lattice: LatticeSpec,
                   dealias_level: float = 2.0) -> np.ndarray:
    """Pi_n f(u) for raw coefficient arrays (..., M)."""
    if f.is_zero:
        return np.zeros_like(coeffs, dtype=complex)
    if f.is_linear:
        return f.c * np.asarray(coeffs, dtype=complex)
    tr = lattice.transform(dealias_points(lattice, dealias_level))
    return tr.from_grid(f(tr.to_grid(coeffs)))


def apply_f(f: Nonlinearity, field: SpectralField, dealias_level: float = 2.0) -> SpectralField:
    """Evaluate f pointwise on an oversampled grid and project back onto the ball."""
    if not field.is_scalar:
        raise ValueError("nonlinearity acts on scalar fields")
    return field.with_coeffs(apply_f_coeffs(f, field.coeffs, field.lattice, dealias_level))


def lipschitz_check(f: Nonlinearity, samples: int = 1000, *, scale: float = 10.0,
                    rng: np.random.Generator | None = None) -> float:
    """Largest |f(a) - f(b)| / |a - b| over random pairs."""
    if samples < 1000:
        raise ValueError(f"need at least 1000 sample pairs, got {samples}")
    rng = np.random.default_rng(0) if rng is None else rng
    a = rng.uniform(-scale, scale, samples)
    # half the pairs are close together so local slopes near the maximum are seen
    gap = np.where(np.arange(samples) % 2 == 0, rng.uniform(-scale, scale, samples),
                   rng.uniform(-1e-3, 1e-3, samples))
    b = a + gap
    keep = a != b
    return float(np.max(np.abs(f(a[keep]) - f(b[keep])) / np.abs(a[keep] - b[keep]), initial=0.0))
