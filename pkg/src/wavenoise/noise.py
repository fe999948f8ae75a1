"""Divergence-free transport noise on the torus.

The noise is built from real channels: for each wave vector k in a half
lattice K+ and each unit vector a in an orthonormal frame of k^perp,

    sqrt(2) theta_k a cos(2 pi k.x)   and   sqrt(2) theta_k a sin(2 pi k.x).

Summed over channels, these give the covariance

    Q(x) = sum_{k in K} theta_k^2 (I - k k^T / |k|^2) cos(2 pi k.x).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import spectral as _spectral
from .spectral import TWO_PI, LatticeSpec, SpectralField, fft_size, gradient_coeffs

COS, SIN = 0, 1
_CODE_OFFSET = 128


def _lattice_images(k) -> set:
    """All images of k under coordinate permutations and sign flips."""
    out = set()
    for perm in itertools.permutations(k):
        for signs in itertools.product((1, -1), repeat=len(k)):
            out.add(tuple(s * c for s, c in zip(signs, perm)))
    return out


def in_upper_half(k) -> bool:
    """True when the first nonzero coordinate of k is positive."""
    for c in k:
        if c:
            return c > 0
    return False


@dataclass(frozen=True)
class NoiseSpec:
    """Amplitudes theta_k on a finite symmetric support K in Z^d minus {0}.

    ``theta`` maps integer tuples to nonnegative amplitudes. ``kappa`` is the
    normalisation target, sum_k theta_k^2 = d/(d-1) kappa.
    """

    d: int
    theta: dict
    kappa: float

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        theta = {tuple(int(c) for c in k): float(v) for k, v in self.theta.items()}
        object.__setattr__(self, "theta", theta)
        if not theta:
            raise ValueError("noise support is empty")
        for k, v in theta.items():
            if len(k) != self.d:
                raise ValueError(f"wave vector {k} does not have dimension {self.d}")
            if not any(k):
                raise ValueError("zero wave vector in noise support")
            if max(abs(c) for c in k) >= _CODE_OFFSET:
                raise ValueError(f"wave vector {k} too large (|k_i| must be < 128)")
            if v < 0 or not math.isfinite(v):
                raise ValueError(f"theta at {k} must be finite and >= 0, got {v}")
            for img in _lattice_images(k):
                if img not in theta:
                    raise ValueError(f"support is not symmetric: {img} missing (image of {k})")
                if not math.isclose(theta[img], v, rel_tol=1e-12, abs_tol=1e-15):
                    raise ValueError(f"theta is not lattice-symmetric at {k} and {img}")
        if self.kappa < 0 or (self.kappa == 0 and any(theta.values())):
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        target = self.d / (self.d - 1) * self.kappa
        total = math.fsum(v * v for v in theta.values())
        if not math.isclose(total, target, rel_tol=1e-9):
            raise ValueError(
                f"sum of theta^2 is {total}, expected d/(d-1)*kappa = {target}"
            )

    @property
    def support(self) -> np.ndarray:
        return np.array(sorted(self.theta), dtype=np.int64)

    @property
    def max_k(self) -> float:
        return max(math.sqrt(sum(c * c for c in k)) for k in self.theta)

    @property
    def max_k_inf(self) -> int:
        return max(max(abs(c) for c in k) for k in self.theta)

    @classmethod
    def explicit(cls, d: int, theta: dict, kappa: float | None = None) -> "NoiseSpec":
        """Spec from a theta map; the normalisation fixes kappa when omitted."""
        if kappa is None:
            kappa = (d - 1) / d * math.fsum(float(v) ** 2 for v in theta.values())
        return cls(d, dict(theta), kappa)

    def scaled(self, factor: float) -> "NoiseSpec":
        """Same shape, theta multiplied by ``factor`` (kappa rescaled by factor^2)."""
        return NoiseSpec(self.d, {k: v * factor for k, v in self.theta.items()},
                         self.kappa * factor**2)


def shell_modes(d: int, radius: float) -> list:
    """Nonzero integer vectors with |k| <= radius, lexicographic."""
    r = int(math.floor(radius))
    out = []
    for k in itertools.product(range(-r, r + 1), repeat=d):
        if any(k) and sum(c * c for c in k) <= radius * radius:
            out.append(k)
    return out


def uniform_shell(d: int, kappa: float, N: float) -> NoiseSpec:
    """theta uniform over {0 < |k| <= N}, normalised to kappa."""
    modes = shell_modes(d, N)
    if not modes:
        raise ValueError(f"shell radius {N} contains no nonzero lattice vectors")
    theta2 = d / (d - 1) * kappa / len(modes)
    return NoiseSpec(d, {k: math.sqrt(theta2) for k in modes}, kappa)


def make_scaling_family(d: int, kappa: float, shells) -> list:
    shells = list(shells)
    if any(b <= a for a, b in zip(shells, shells[1:])):
        raise ValueError(f"shells must be strictly increasing, got {shells}")
    return [uniform_shell(d, kappa, N) for N in shells]


def frame_for(k) -> np.ndarray:
    """Orthonormal basis of k^perp, shape (d-1, d).

    d=2 uses k^perp / |k| with k^perp = (k2, -k1). d=3 starts from the
    coordinate axis least aligned with k (lowest index on ties).
    """
    k = np.asarray(k, dtype=float)
    norm = np.linalg.norm(k)
    if k.size == 2:
        return (np.array([k[1], -k[0]]) / norm)[None, :]
    khat = k / norm
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(k)))] = 1.0
    a1 = axis - (axis @ khat) * khat
    a1 /= np.linalg.norm(a1)
    a2 = np.cross(khat, a1)
    return np.stack([a1, a2])


def channel_code(k, i: int, trig: int) -> int:
    packed = 0
    for c in k:
        packed = (packed << 8) | (int(c) + _CODE_OFFSET)
    return ((trig << 1 | i) << 24) | packed


@dataclass(frozen=True, eq=False)
class NoiseBasis:
    """Real channels for a :class:`NoiseSpec`.

    Channel ``c`` is the vector field amplitude[c] * frame[c] * trig(2 pi k[c].x)
    with trig = cos or sin.
    """

    spec: NoiseSpec
    half_modes: np.ndarray = field(repr=False)
    frames: np.ndarray = field(repr=False)
    channel_k: np.ndarray = field(repr=False)
    channel_i: np.ndarray = field(repr=False)
    channel_trig: np.ndarray = field(repr=False)
    amplitude: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def n_channels(self) -> int:
        return len(self.channel_k)

    @cached_property
    def channel_codes(self) -> np.ndarray:
        return np.array(
            [
                channel_code(self.half_modes[q], int(i), int(t))
                for q, i, t in zip(self.channel_k, self.channel_i, self.channel_trig)
            ],
            dtype=np.uint64,
        )

    def channel_wavevector(self, c: int) -> np.ndarray:
        return self.half_modes[self.channel_k[c]]

    def channel_vector(self, c: int) -> np.ndarray:
        return self.frames[self.channel_k[c], self.channel_i[c]]

    def channel_field(self, c: int, x) -> np.ndarray:
        """Evaluate channel ``c`` at points x of shape (..., d) -> (..., d)."""
        x = np.asarray(x, dtype=float)
        phase = TWO_PI * (x @ self.channel_wavevector(c))
        trig = np.cos(phase) if self.channel_trig[c] == COS else np.sin(phase)
        return self.amplitude[c] * trig[..., None] * self.channel_vector(c)

    @cached_property
    def _fourier_map(self) -> np.ndarray:
        # increments (C,) -> W_hat at half modes, flattened (|K+| * d,)
        nk = len(self.half_modes)
        out = np.zeros((self.n_channels, nk, self.d), dtype=complex)
        for c in range(self.n_channels):
            q = self.channel_k[c]
            a = self.frames[q, self.channel_i[c]]
            w = 0.5 * self.amplitude[c] * (1.0 if self.channel_trig[c] == COS else -1j)
            out[c, q] = w * a
        return out.reshape(self.n_channels, nk * self.d)

    def velocity_coeffs(self, weights: np.ndarray) -> np.ndarray:
        """Fourier coefficients at K+ of sum_c weights[c] * channel_c.

        ``weights`` has shape (..., C); result (..., |K+|, d). The value at -k
        is the complex conjugate.
        """
        w = np.asarray(weights, dtype=float)
        out = w @ self._fourier_map
        return out.reshape(w.shape[:-1] + (len(self.half_modes), self.d))


def build_basis(spec: NoiseSpec) -> NoiseBasis:
    half = np.array([k for k in sorted(spec.theta) if in_upper_half(k)], dtype=np.int64)
    frames = np.stack([frame_for(k) for k in half])
    ck, ci, ct, amp = [], [], [], []
    for q, k in enumerate(half):
        a = math.sqrt(2.0) * spec.theta[tuple(int(c) for c in k)]
        for i in range(spec.d - 1):
            for trig in (COS, SIN):
                ck.append(q)
                ci.append(i)
                ct.append(trig)
                amp.append(a)
    return NoiseBasis(
        spec=spec,
        half_modes=half,
        frames=frames,
        channel_k=np.array(ck, dtype=np.int64),
        channel_i=np.array(ci, dtype=np.int64),
        channel_trig=np.array(ct, dtype=np.int64),
        amplitude=np.array(amp),
    )


# -- covariance ---------------------------------------------------------------


def covariance_at(basis: NoiseBasis, x) -> np.ndarray:
    """Q(x) = sum_{k in K} theta_k^2 (I - k k^T/|k|^2) cos(2 pi k.x)."""
    x = np.asarray(x, dtype=float)
    d = basis.d
    q = np.zeros(x.shape[:-1] + (d, d))
    for k, th in basis.spec.theta.items():
        k = np.asarray(k, dtype=float)
        proj = np.eye(d) - np.outer(k, k) / (k @ k)
        q = q + th**2 * np.cos(TWO_PI * (x @ k))[..., None, None] * proj
    return q


def covariance_from_channels(basis: NoiseBasis, x, y) -> np.ndarray:
    """sum_c sigma_c(x) (x) sigma_c(y), evaluated channel by channel."""
    out = np.zeros((basis.d, basis.d))
    for c in range(basis.n_channels):
        out += np.outer(basis.channel_field(c, x), basis.channel_field(c, y))
    return out


def covariance_grid(basis: NoiseBasis, points: int) -> np.ndarray:
    """Q sampled on the uniform P^d grid, shape (d, d) + (P,)*d."""
    d = basis.d
    spec = np.zeros((d, d) + (points,) * d, dtype=complex)
    for k, th in basis.spec.theta.items():
        kv = np.asarray(k, dtype=float)
        proj = np.eye(d) - np.outer(kv, kv) / (kv @ kv)
        idx = tuple(c % points for c in k)
        spec[(slice(None), slice(None)) + idx] += th**2 * proj
    axes = tuple(range(2, 2 + d))
    return np.real(sfft.ifftn(spec, axes=axes, workers=_spectral.FFT_WORKERS)) * float(points) ** d


@dataclass(frozen=True)
class CovarianceReport:
    Q0: np.ndarray
    kappa_eff: float
    l1_norm: float
    l2_norm: float
    fourier_sup: float

    def to_json(self) -> dict:
        return {
            "Q0": self.Q0.tolist(),
            "kappa_eff": self.kappa_eff,
            "l1_norm": self.l1_norm,
            "l2_norm": self.l2_norm,
            "fourier_sup": self.fourier_sup,
        }


def default_quadrature_level(basis: NoiseBasis) -> int:
    return fft_size(max(64, 8 * basis.spec.max_k_inf + 1))


def kappa_eff(basis: NoiseBasis) -> float:
    return float(covariance_at(basis, np.zeros(basis.d))[0, 0] / 2.0)


def covariance_norms(basis: NoiseBasis, quadrature_level: int | None = None) -> CovarianceReport:
    """Norms of Q with the Frobenius matrix norm; integrals by the periodic
    rectangle rule on a uniform grid of ``quadrature_level`` points per axis."""
    if quadrature_level is None:
        quadrature_level = default_quadrature_level(basis)
    need = 2 * basis.spec.max_k_inf + 1
    if quadrature_level < need:
        raise ValueError(
            f"quadrature level {quadrature_level} too low; need >= {need} points per axis"
        )
    q = covariance_grid(basis, quadrature_level)
    frob = np.sqrt(np.sum(q**2, axis=(0, 1)))
    q0 = covariance_at(basis, np.zeros(basis.d))
    return CovarianceReport(
        Q0=q0,
        kappa_eff=float(q0[0, 0] / 2.0),
        l1_norm=float(np.mean(frob)),
        l2_norm=float(np.sqrt(np.mean(frob**2))),
        fourier_sup=float(max(v * v for v in basis.spec.theta.values())),
    )


def l2_norm_closed_form(spec: NoiseSpec) -> float:
    return math.sqrt((spec.d - 1) * math.fsum(v**4 for v in spec.theta.values()))


# -- transport operators --------------------------------------------------------


def _require_scalar(field: SpectralField):
    if not field.is_scalar:
        raise ValueError("transport acts on scalar fields only")


def transport_apply(basis: NoiseBasis, channel: int, field: SpectralField) -> SpectralField:
    """Pi_n (sigma_c . grad u) by shifting coefficients by +-k.

    Modes shifted outside the ball of ``field`` are dropped.
    """
    _require_scalar(field)
    if basis.d != field.lattice.d:
        raise ValueError("noise basis and field have different dimensions")
    lat = field.lattice
    k = basis.channel_wavevector(channel)
    a = basis.channel_vector(channel)
    amp = basis.amplitude[channel]
    g = 1j * TWO_PI * (lat.modes @ a) * field.coeffs[0]
    if basis.channel_trig[channel] == COS:
        w_plus, w_minus = amp / 2, amp / 2
    else:
        w_plus, w_minus = amp / 2j, -amp / 2j
    out = np.zeros(lat.size, dtype=complex)
    for shift, w in ((k, w_plus), (-k, w_minus)):
        target = lat.index_of(lat.modes + shift)
        ok = target >= 0
        np.add.at(out, target[ok], w * g[ok])
    return SpectralField(lat, out)


def ito_correction(basis: NoiseBasis, field: SpectralField, tol: float = 0.0) -> SpectralField:
    """(1/2) sum_c sigma_c . grad (sigma_c . grad u) for interior-supported u."""
    _require_scalar(field)
    reach = 2 * basis.spec.max_k
    if field.max_mode(tol) > field.lattice.n - reach + 1e-12:
        raise ValueError(
            f"field reaches |j| = {field.max_mode(tol):.3g}; the double transport needs "
            f"support within n - 2 max|k| = {field.lattice.n - reach:.3g}"
        )
    acc = np.zeros(field.lattice.size, dtype=complex)
    for c in range(basis.n_channels):
        acc += transport_apply(basis, c, transport_apply(basis, c, field)).coeffs[0]
    return SpectralField(field.lattice, 0.5 * acc)


class TransportSum:
    """Pi_n(W . grad u) for W = sum_c w_c sigma_c, batched, via FFT products.

    The product grid has P > 2n + max|k|_inf points per axis, so the modes
    kept after projection are alias-free.
    """

    def __init__(self, basis: NoiseBasis, lattice: LatticeSpec):
        if basis.d != lattice.d:
            raise ValueError("noise basis and lattice have different dimensions")
        self.basis = basis
        self.lattice = lattice
        self.points = fft_size(2 * lattice.n + basis.spec.max_k_inf + 1)
        self.transform = lattice.transform(self.points)
        d = lattice.d
        half = basis.half_modes
        full = np.concatenate([half, -half])
        self._conj = np.r_[np.zeros(len(half), bool), np.ones(len(half), bool)]
        self._src = np.r_[np.arange(len(half)), np.arange(len(half))]
        keep = full[:, -1] >= 0
        self._keep_src = self._src[keep]
        self._keep_conj = self._conj[keep]
        shape = self.transform.half_shape
        self._flat = np.ravel_multi_index(tuple(np.mod(full[keep], self.points).T), shape)
        self._axes = tuple(range(-d, 0))

    def velocity_grid(self, weights: np.ndarray) -> np.ndarray:
        """Physical samples of W, shape (B, d) + (P,)*d."""
        wk = self.basis.velocity_coeffs(weights)  # (B, K+, d)
        vals = wk[:, self._keep_src, :]
        vals = np.where(self._keep_conj[None, :, None], np.conj(vals), vals)
        b, d = wk.shape[0], self.lattice.d
        spec = np.zeros((b, d, int(np.prod(self.transform.half_shape))), dtype=complex)
        spec[:, :, self._flat] = np.swapaxes(vals, 1, 2)
        spec = spec.reshape((b, d) + self.transform.half_shape)
        return sfft.irfftn(spec, s=self.transform.shape, axes=self._axes,
                           workers=_spectral.FFT_WORKERS) * float(self.points) ** d

    def apply(self, weights: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """weights (B, C), coeffs (B, M) -> Pi_n(W . grad u) coefficients (B, M)."""
        w_grid = self.velocity_grid(np.atleast_2d(weights))
        grad = self.transform.to_grid(gradient_coeffs(np.atleast_2d(coeffs), self.lattice))
        prod = np.sum(w_grid * grad, axis=1)
        return self.transform.from_grid(prod)


# -- file formats ------------------------------------------------------------------


def spec_from_json(data: dict) -> NoiseSpec:
    d = int(data["d"])
    mode = data.get("mode", "uniform-shell")
    if mode == "uniform-shell":
        return uniform_shell(d, float(data["kappa"]), float(data["N"]))
    if mode == "explicit":
        theta = {}
        for entry in data["theta"]:
            k = tuple(int(c) for c in entry["k"])
            theta[k] = float(entry["theta"])
            theta.setdefault(tuple(-c for c in k), float(entry["theta"]))
        kappa = data.get("kappa")
        return NoiseSpec.explicit(d, theta, None if kappa is None else float(kappa))
    raise ValueError(f"unknown noise mode {mode!r}")


def spec_to_json(spec: NoiseSpec) -> dict:
    return {
        "d": spec.d,
        "kappa": spec.kappa,
        "mode": "explicit",
        "theta": [{"k": list(k), "theta": v} for k, v in sorted(spec.theta.items())],
    }


def load_spec(path) -> NoiseSpec:
    return spec_from_json(json.loads(Path(path).read_text()))
