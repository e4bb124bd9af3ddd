"""Regularized propagators on a periodic lattice and their scale-band decomposition.

The field lives on a periodic lattice of spacing a = (m gamma^N)^-1 inside a
box of physical side L (with L*m a positive integer).  Momenta are the finite
Fourier modes p in (2 pi / L) Z^d with components in (-pi/a, pi/a].  All
covariances keep the continuum symbol p^2 on the retained modes, so the
identity

    chi_N(|p|) / (p^2 + m^2)
        = 1/(p^2 + m^2) - 1/(p^2 + gamma^(2N) m^2)
        = sum_{h=1..N} [ 1/(p^2 + gamma^(2(h-1)) m^2)
                         - 1/(p^2 + gamma^(2h) m^2) ]

holds to rounding, band by band.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LatticeSpec",
    "PropagatorKernel",
    "BoundReport",
    "regulator_chi",
    "covariance_cumulative",
    "covariance_band",
    "bound_report",
    "export_csv",
    "cache_store",
    "cache_load",
]


@dataclass(frozen=True)
class LatticeSpec:
    """Discretization of the box: dimension, side, mass, scale ratio, cutoff.

    L is the physical box side; L*m must be a positive integer (the side is an
    integer multiple of the correlation length 1/m).  The lattice spacing is
    a = 1/(m gamma^N) and there are (L m gamma^N)^d sites.
    """

    d: int
    L: float
    m: float = 1.0
    gamma: float = 2.0
    N: int = 1

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.m <= 0:
            raise ValueError("mass must be positive")
        if self.gamma <= 1:
            raise ValueError("scale ratio gamma must exceed 1")
        if self.N < 1:
            raise ValueError("cutoff index N must be >= 1")
        lm = self.L * self.m
        if self.L <= 0 or abs(lm - round(lm)) > 1e-9 or round(lm) < 1:
            raise ValueError("box side L must be a positive integer multiple of 1/m")
        side = self.L * self.m * self.gamma ** self.N
        if abs(side - round(side)) > 1e-6 or round(side) < 1:
            raise ValueError("L*m*gamma^N sites per side must be a positive integer")

    @property
    def a(self) -> float:
        """Lattice spacing, a * gamma^N * m = 1."""
        return 1.0 / (self.m * self.gamma ** self.N)

    @property
    def n_side(self) -> int:
        return int(round(self.L * self.m * self.gamma ** self.N))

    @property
    def shape(self) -> tuple:
        return (self.n_side,) * self.d

    @property
    def n_sites(self) -> int:
        return self.n_side ** self.d

    @property
    def volume(self) -> float:
        return self.L ** self.d

    def momentum_sq(self) -> np.ndarray:
        """Grid of p^2 over the mode set, in fftfreq layout."""
        p1 = 2.0 * np.pi * np.fft.fftfreq(self.n_side, d=self.a)
        grids = np.meshgrid(*([p1] * self.d), indexing="ij")
        return sum(g * g for g in grids)

    def canonical_hash(self) -> str:
        """Stable hash of the defining fields, used for caches and manifests."""
        payload = json.dumps(
            {"d": self.d, "L": self.L, "m": self.m, "gamma": self.gamma, "N": self.N},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def regulator_chi(p_sq, spec: LatticeSpec):
    """Momentum-space regulator chi_N(|p|) = m^2 (gamma^2N - 1)/(p^2 + gamma^2N m^2)."""
    g2n = spec.gamma ** (2 * spec.N) * spec.m ** 2
    return spec.m ** 2 * (spec.gamma ** (2 * spec.N) - 1.0) / (np.asarray(p_sq) + g2n)


def _weights_cumulative(spec: LatticeSpec, h: int) -> np.ndarray:
    p2 = spec.momentum_sq()
    m2 = spec.m ** 2
    return 1.0 / (p2 + m2) - 1.0 / (p2 + spec.gamma ** (2 * h) * m2)


def _weights_band(spec: LatticeSpec, h: int) -> np.ndarray:
    p2 = spec.momentum_sq()
    m2 = spec.m ** 2
    lo = spec.gamma ** (2 * (h - 1)) * m2
    hi = spec.gamma ** (2 * h) * m2
    return 1.0 / (p2 + lo) - 1.0 / (p2 + hi)


@dataclass(frozen=True)
class PropagatorKernel:
    """Translation-invariant covariance table for one scale band or cumulative range.

    ``values`` is indexed by lattice displacement (periodic); ``mode_weights``
    are the nonnegative Fourier coefficients on the mode set.
    """

    spec: LatticeSpec
    band: tuple  # ("cumulative", h) or ("band", h) or ("custom", tag)
    mode_weights: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @staticmethod
    def from_weights(spec: LatticeSpec, band: tuple, weights: np.ndarray) -> "PropagatorKernel":
        values = np.fft.ifftn(weights).real / spec.a ** spec.d
        return PropagatorKernel(spec=spec, band=band, mode_weights=weights, values=values)

    @property
    def at_zero(self) -> float:
        return float(self.values[(0,) * self.spec.d])

    def matrix(self) -> np.ndarray:
        """Dense site-by-site covariance matrix C[x, y] = values[x - y]."""
        n = self.spec.n_side
        idx = np.indices(self.spec.shape).reshape(self.spec.d, -1)
        diff = (idx[:, :, None] - idx[:, None, :]) % n
        return self.values[tuple(diff)]

    def displacement_distances(self) -> np.ndarray:
        """Euclidean torus distance (in physical units) for every displacement."""
        n = self.spec.n_side
        coords = np.arange(n)
        coords = np.minimum(coords, n - coords) * self.spec.a
        grids = np.meshgrid(*([coords] * self.spec.d), indexing="ij")
        return np.sqrt(sum(g * g for g in grids))


def covariance_cumulative(spec: LatticeSpec, h: int) -> PropagatorKernel:
    """Kernel of C^(<=h): mode weight chi_h/(p^2+m^2) on the retained modes."""
    if not 1 <= h <= spec.N:
        raise ValueError(f"scale h={h} outside 1..{spec.N}")
    return PropagatorKernel.from_weights(spec, ("cumulative", h), _weights_cumulative(spec, h))


def covariance_band(spec: LatticeSpec, h: int) -> PropagatorKernel:
    """Single-scale kernel C^(h); summing bands 1..N telescopes to cumulative(N)."""
    if not 1 <= h <= spec.N:
        raise ValueError(f"scale h={h} outside 1..{spec.N}")
    return PropagatorKernel.from_weights(spec, ("band", h), _weights_band(spec, h))


def difference_kernel(spec: LatticeSpec, h: int) -> PropagatorKernel:
    """Kernel of C^(<=N) - C^(<=h); for h=0 this is the full cumulative kernel."""
    if not 0 <= h <= spec.N:
        raise ValueError(f"scale h={h} outside 0..{spec.N}")
    w = _weights_cumulative(spec, spec.N)
    if h > 0:
        w = w - _weights_cumulative(spec, h)
    return PropagatorKernel.from_weights(spec, ("difference", h), w)


@dataclass
class BoundReport:
    """Fitted decay/amplitude/regularity constants of a kernel, with residuals."""

    decay_rate: float
    amplitude: float
    hoelder_c: float
    hoelder_eps: float
    residuals: dict

    def as_dict(self) -> dict:
        return {
            "decay_rate": self.decay_rate,
            "amplitude": self.amplitude,
            "hoelder_c": self.hoelder_c,
            "hoelder_eps": self.hoelder_eps,
            "residuals": self.residuals,
        }


def bound_report(kernel: PropagatorKernel, eps: float = 0.5) -> BoundReport:
    """Fit |C(x)| <= amplitude * exp(-rate |x|) and the small-distance increment bound.

    The exponential fit uses displacement classes with 0 < |x| <= half the box,
    the Hoelder fit uses increments between displacements below 1/m.  Constants
    are reported as fitted; nothing is asserted about their values here.
    """
    if not 0 < eps < 1:
        raise ValueError("Hoelder exponent must lie in (0,1)")
    spec = kernel.spec
    dist = kernel.displacement_distances().ravel()
    vals = kernel.values.ravel()
    cutoff = spec.L / 2.0
    keep = (dist > 0) & (dist <= cutoff) & (np.abs(vals) > 1e-300)
    if keep.sum() < 3:
        raise ValueError("too few displacement classes to fit a decay law")
    x = dist[keep]
    y = np.log(np.abs(vals[keep]))
    slope, intercept = np.polyfit(x, y, 1)
    resid_decay = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))

    # Increment bound |C(x) - C(x+delta)| <= c (m |delta|)^eps from pairs below 1/m.
    near = (dist > 0) & (dist < 1.0 / spec.m)
    if near.sum() < 2:
        raise ValueError("too few displacement classes below 1/m for the increment fit")
    c0 = kernel.at_zero
    incr = np.abs(c0 - vals[near])
    dd = (spec.m * dist[near]) ** eps
    good = incr > 1e-300
    if good.sum() < 1:
        hoelder_c, resid_h = 0.0, 0.0
    else:
        ratios = incr[good] / dd[good]
        hoelder_c = float(ratios.max())
        resid_h = float(np.std(ratios))
    return BoundReport(
        decay_rate=float(-slope),
        amplitude=float(np.exp(intercept)),
        hoelder_c=hoelder_c,
        hoelder_eps=eps,
        residuals={"decay_rms": resid_decay, "hoelder_spread": resid_h},
    )


def export_csv(kernel: PropagatorKernel, path: str) -> None:
    """Write the kernel table as CSV rows (displacement components, value)."""
    spec = kernel.spec
    with open(path, "w") as fh:
        header = ",".join(f"dx{i}" for i in range(spec.d))
        fh.write(header + ",value\n")
        for idx in np.ndindex(spec.shape):
            fh.write(",".join(str(i) for i in idx) + f",{kernel.values[idx]!r}\n")


def _cache_name(spec: LatticeSpec, band: tuple) -> str:
    return f"kernel_{spec.canonical_hash()}_{band[0]}_{band[1]}.npy"


def cache_store(kernel: PropagatorKernel, directory: str) -> str:
    """Store the kernel values in a binary cache keyed by the spec hash."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, _cache_name(kernel.spec, kernel.band))
    np.save(path, kernel.values)
    return path

def cache_load(spec: LatticeSpec, band: tuple, directory: str) -> PropagatorKernel | None:
    """Load a cached kernel if present; mode weights are recomputed exactly."""
    path = os.path.join(directory, _cache_name(spec, band))
    if not os.path.exists(path):
        return None
    values = np.load(path)
    if band[0] == "cumulative":
        weights = _weights_cumulative(spec, band[1])
    elif band[0] == "band":
        weights = _weights_band(spec, band[1])
    else:
        raise ValueError(f"unknown band kind {band[0]!r}")
    return PropagatorKernel(spec=spec, band=band, mode_weights=weights, values=values)
