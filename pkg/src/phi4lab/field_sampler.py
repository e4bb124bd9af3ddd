"""Gaussian layer sampling, multiscale assembly, norms, tails and field regions.

Each scale band h contributes an independent Gaussian layer whose covariance
is exactly the band kernel; summing the layers over h = 1..N reproduces a
sample of the full regularized field.  Layers are sampled spectrally: white
noise is filtered by the square root of the band's mode weights, which is an
exact (not approximate) Gaussian sampler and is deterministic given
(spec, h, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice_propagator import (
    LatticeSpec,
    covariance_band,
    _weights_band,
)

__all__ = [
    "FieldLayer",
    "MultiscaleField",
    "RegionClassification",
    "sample_layer",
    "assemble",
    "hoelder_norm",
    "tail_stats",
    "classify_regions",
    "field_threshold",
    "pavement_cubes",
]


def field_threshold(lam: float, scale: float = 1.0) -> float:
    """Large-field threshold base B, proportional to log(e + 1/lambda)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return scale * math.log(math.e + 1.0 / lam)


@dataclass(frozen=True)
class FieldLayer:
    """One single-scale Gaussian layer, stored on the finest lattice.

    ``values`` carries the band field (covariance equal to the band kernel
    C^(h)); the normalized layer variable z^(h) differs from it by the
    deterministic factor gamma^((d-2)h/2).
    """

    spec: LatticeSpec
    h: int
    seed: int
    values: np.ndarray = field(repr=False)

    @property
    def z(self) -> np.ndarray:
        """The unit-size layer variable z^(h) (same as values when d=2)."""
        return self.values * self.spec.gamma ** (-(self.spec.d - 2) * self.h / 2.0)


def sample_layer(spec: LatticeSpec, h: int, seed: int) -> FieldLayer:
    """Exact spectral Gaussian sample of the scale-h band field."""
    if not 1 <= h <= spec.N:
        raise ValueError(f"scale h={h} outside 1..{spec.N}")
    entropy = int(seed) & ((1 << 64) - 1)
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=(h,))
    rng = np.random.default_rng(ss)
    noise = rng.standard_normal(spec.shape)
    w = _weights_band(spec, h)
    filtered = np.fft.ifftn(np.sqrt(w) * np.fft.fftn(noise)).real
    return FieldLayer(spec=spec, h=h, seed=int(seed), values=filtered * spec.a ** (-spec.d / 2.0))


@dataclass
class MultiscaleField:
    """Layers 1..N plus the assembled cumulative and normalized fields."""

    spec: LatticeSpec
    layers: dict

    def phi(self, h: int | None = None) -> np.ndarray:
        """Assembled field phi^(<=h), the sum of layer band fields up to h."""
        h = self.spec.N if h is None else h
        out = np.zeros(self.spec.shape)
        for k in range(1, h + 1):
            out = out + self.layers[k].values
        return out

    def X(self, h: int | None = None) -> np.ndarray:
        """Normalized field X^(h); the d=2 normalization is 1/sqrt(h)."""
        h = self.spec.N if h is None else h
        p = self.phi(h)
        if self.spec.d == 2:
            return p / math.sqrt(h)
        return p * self.spec.gamma ** (-(self.spec.d - 2) * h / 2.0)

    def Y(self, h: int | None = None, eps: float = 0.25):
        """Pair field Y^(h) on displacements shorter than 1/m.

        Returns (displacements, array) where array[k] has, for every site x,
        the value (phi_x - phi_{x+delta_k}) / (gamma^h |delta_k|)^eps.
        """
        h = self.spec.N if h is None else h
        p = self.phi(h)
        disps, dists = _short_displacements(self.spec)
        out = np.empty((len(disps),) + self.spec.shape)
        for k, (delta, r) in enumerate(zip(disps, dists)):
            shifted = np.roll(p, shift=[-int(c) for c in delta], axis=tuple(range(self.spec.d)))
            out[k] = (p - shifted) / (self.spec.gamma ** h * r) ** eps
        return disps, out


def _short_displacements(spec: LatticeSpec):
    """Nonzero lattice displacements with torus distance < 1/m."""
    n = spec.n_side
    coords = np.arange(n)
    torus = np.minimum(coords, n - coords) * spec.a
    grids = np.meshgrid(*([torus] * spec.d), indexing="ij")
    dist = np.sqrt(sum(g * g for g in grids))
    mask = (dist > 0) & (dist < 1.0 / spec.m)
    disps = np.argwhere(mask)
    return [tuple(dv) for dv in disps], dist[mask]


def assemble(layers) -> MultiscaleField:
    """Combine layers covering scales 1..N of a single spec."""
    layers = list(layers)
    if not layers:
        raise ValueError("no layers given")
    spec = layers[0].spec
    table = {}
    for layer in layers:
        if layer.spec != spec:
            raise ValueError("layers come from different specs")
        table[layer.h] = layer
    missing = [h for h in range(1, spec.N + 1) if h not in table]
    if missing:
        raise ValueError(f"missing scales {missing}")
    return MultiscaleField(spec=spec, layers=table)


def pavement_cubes(spec: LatticeSpec, level: int):
    """Origins and side (in sites) of the boxes of the scale-``level`` pavement.

    Boxes of the pavement Q_level have physical side 1/(m gamma^level), which
    is gamma^(N-level) lattice spacings; the side is clamped to at least one
    site when that is not an integer.
    """
    side = max(1, int(round(spec.gamma ** (spec.N - level))))
    n = spec.n_side
    origins = []
    steps = range(0, n, side)
    for origin in np.array(np.meshgrid(*([list(steps)] * spec.d), indexing="ij")).reshape(spec.d, -1).T:
        origins.append(tuple(int(c) for c in origin))
    return origins, side


def hoelder_norm(values: np.ndarray, spec: LatticeSpec, origin, side: int,
                 tau: int | None = None, eps: float = 0.25) -> float:
    """Sup-plus-increment norm of a field over one pavement cube.

    max over x in the cube and eta in the box with |x - eta| <= 1/m of
    |z_x| + tau |z_x - z_eta| / |x - eta|^eps, all maxima over lattice sites.
    tau defaults to 0 in d=2 and 1 in d=3.
    """
    if tau is None:
        tau = 0 if spec.d == 2 else 1
    n = spec.n_side
    cube_slices = tuple(
        np.arange(o, o + side) % n for o in origin
    )
    cube_idx = np.array(np.meshgrid(*cube_slices, indexing="ij")).reshape(spec.d, -1).T
    cube_vals = values[tuple(cube_idx.T)]
    best = float(np.max(np.abs(cube_vals)))
    if tau == 0:
        return best
    disps, dists = _short_displacements(spec)
    for delta, r in zip(disps, dists):
        shifted = values[tuple(((cube_idx + np.array(delta)) % n).T)]
        cand = np.abs(cube_vals) + tau * np.abs(cube_vals - shifted) / r ** eps
        best = max(best, float(np.max(cand)))
    return best


def layer_norm_profile(layer: FieldLayer, level: int | None = None,
                       tau: int | None = None, eps: float = 0.25):
    """Hoelder norms of a layer over every cube of the pavement Q_level."""
    spec = layer.spec
    level = layer.h if level is None else level
    origins, side = pavement_cubes(spec, level)
    return origins, [hoelder_norm(layer.z, spec, o, side, tau=tau, eps=eps) for o in origins]


def tail_stats(spec: LatticeSpec, h: int, B_grid, n_samples: int = 1000,
               seed: int = 0, tau: int | None = None, eps: float = 0.25) -> dict:
    """Monte Carlo tail statistics of the layer norm over the Q_h pavement.

    Estimates P(max over cubes of ||z||_Delta <= B) for each B in B_grid with
    Wilson intervals, and fits log-exceedance against B^2 (a negative slope is
    the expected Gaussian-tail signature).
    """
    if n_samples < 1000:
        raise ValueError("need at least 10^3 samples for tail estimates")
    B_grid = np.asarray(B_grid, dtype=float)
    maxima = np.empty(n_samples)
    for i in range(n_samples):
        layer = sample_layer(spec, h, seed + i)
        _, norms = layer_norm_profile(layer, level=h, tau=tau, eps=eps)
        maxima[i] = max(norms)
    rows = []
    z95 = 1.959963984540054
    for B in B_grid:
        k = int(np.sum(maxima > B))
        p = k / n_samples
        # Wilson score interval for the exceedance probability.
        denom = 1 + z95 ** 2 / n_samples
        center = (p + z95 ** 2 / (2 * n_samples)) / denom
        half = z95 * math.sqrt(p * (1 - p) / n_samples + z95 ** 2 / (4 * n_samples ** 2)) / denom
        rows.append({"B": float(B), "count": k, "exceedance": p,
                     "ci_low": max(0.0, center - half), "ci_high": min(1.0, center + half)})
    usable = [r for r in rows if 0 < r["exceedance"] < 1]
    if len(usable) < 3:
        raise ValueError("degenerate tail fit: fewer than 3 usable grid points")
    xs = np.array([r["B"] ** 2 for r in usable])
    ys = np.log([r["exceedance"] for r in usable])
    slope, intercept = np.polyfit(xs, ys, 1)
    return {"rows": rows, "slope": float(slope), "intercept": float(intercept),
            "n_samples": n_samples, "maxima": maxima}


@dataclass
class RegionClassification:
    """Large-field regions at one scale: site set D1, pair set D2, bad cubes R."""

    B: float
    h: int
    D1: list
    D2: list
    R: list
    chi_B: int

    def __post_init__(self):
        assert self.chi_B == (1 if not self.R else 0)


def classify_regions(fld: MultiscaleField, h: int, B: float,
                     tau: int | None = None, eps: float = 0.25) -> RegionClassification:
    """Classify large-field sites, pairs and cubes at scale h with base B.

    D1 collects sites where |X^(h)| > B h^4; D2 (d=3 only) pairs closer than
    1/m where |Y^(h)| > B h^4; R the Q_h cubes where the layer norm exceeds
    B h^2.  chi_B is 1 exactly when R is empty.
    """
    spec = fld.spec
    if not 1 <= h <= spec.N:
        raise ValueError(f"scale h={h} outside 1..{spec.N}")
    if B <= 0:
        raise ValueError("threshold base B must be positive")
    X = fld.X(h)
    d1 = [tuple(int(c) for c in ix) for ix in np.argwhere(np.abs(X) > B * h ** 4)]
    d2 = []
    if spec.d == 3:
        disps, Y = fld.Y(h, eps=eps)
        for k, delta in enumerate(disps):
            for ix in np.argwhere(np.abs(Y[k]) > B * h ** 4):
                eta = tuple(int(c) for c in ix)
                etap = tuple((int(c) + int(dd)) % spec.n_side for c, dd in zip(ix, delta))
                d2.append((eta, etap))
    origins, side = pavement_cubes(spec, h)
    bad = []
    layer = fld.layers[h]
    for origin in origins:
        if hoelder_norm(layer.z, spec, origin, side, tau=tau, eps=eps) > B * h ** 2:
            bad.append(origin)
    return RegionClassification(B=B, h=h, D1=d1, D2=d2, R=bad, chi_B=1 if not bad else 0)
