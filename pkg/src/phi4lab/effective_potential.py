"""Potential functionals, Wick monomials, the truncated cumulant recursion
and the per-scale remainder bound.

A potential is stored as a finite sum of monomial terms: for each pair
(order in lambda, degree in the field) a dense kernel on lattice tuples.
This is a desk-scale verification engine: kernels are exact, cumulants are
computed by explicit Gaussian contraction against a band covariance, and the
sizes are guarded so only tiny lattices are accepted.

One recursion step integrates one scale band:

    V_{j;h-1} = [ <V> + (<V^2> - <V>^2)/2! + third-cumulant/3! ]^(<= j)

where <.> is the exact Gaussian expectation over the scale-h layer and the
truncation keeps lambda-orders up to j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice_propagator import (
    LatticeSpec,
    covariance_band,
    covariance_cumulative,
    difference_kernel,
)
from .feynman_graphs import Counterterms, counterterms, logZ_series

__all__ = [
    "PotentialFunctional",
    "WickMonomial",
    "RemainderBound",
    "wick_power",
    "wick_quartic_potential",
    "bare_potential",
    "truncated_integrate",
    "relevant_split",
    "field_independent_part",
    "remainder_bound",
    "flow_constant",
]

MAX_TENSOR_ENTRIES = 50_000_000


def _partial_pairings(k):
    """All sets of disjoint index pairs of range(k), including the empty set."""
    def rec(ix):
        if not ix:
            yield ()
            return
        first, rest = ix[0], ix[1:]
        # first stays unpaired
        for sub in rec(rest):
            yield sub
        # first pairs with a later index
        for i in range(len(rest)):
            for sub in rec(rest[:i] + rest[i + 1:]):
                yield ((first, rest[i]),) + sub
    yield from rec(list(range(k)))


@dataclass
class PotentialFunctional:
    """Finite sum of monomial terms with dense lattice kernels, graded by
    lambda-order.  ``terms[(order, degree)]`` holds the kernel tensor of shape
    (n_sites,) * degree; degree 0 entries are plain floats."""

    spec: LatticeSpec
    h: int
    terms: dict = field(default_factory=dict)

    def copy(self) -> "PotentialFunctional":
        return PotentialFunctional(self.spec, self.h,
                                   {k: (v if np.isscalar(v) else v.copy())
                                    for k, v in self.terms.items()})

    def add_term(self, order: int, degree: int, kernel):
        if degree > 0:
            size = self.spec.n_sites ** degree
            if size > MAX_TENSOR_ENTRIES:
                raise ValueError("kernel tensor too large for the desk-scale engine")
        if (order, degree) in self.terms:
            self.terms[(order, degree)] = self.terms[(order, degree)] + kernel
        else:
            self.terms[(order, degree)] = kernel

    def scaled(self, factor: float) -> "PotentialFunctional":
        out = PotentialFunctional(self.spec, self.h)
        for (o, k), ker in self.terms.items():
            out.add_term(o, k, ker * factor)
        return out

    def plus(self, other: "PotentialFunctional") -> "PotentialFunctional":
        out = self.copy()
        for (o, k), ker in other.terms.items():
            out.add_term(o, k, ker)
        return out

    def times(self, other: "PotentialFunctional", jmax: int) -> "PotentialFunctional":
        """Functional product, truncated to lambda-order jmax."""
        out = PotentialFunctional(self.spec, self.h)
        for (o1, k1), ker1 in self.terms.items():
            for (o2, k2), ker2 in other.terms.items():
                if o1 + o2 > jmax:
                    continue
                if k1 == 0:
                    prod = ker1 * ker2
                elif k2 == 0:
                    prod = np.asarray(ker1) * ker2
                else:
                    prod = np.tensordot(np.asarray(ker1), np.asarray(ker2), axes=0)
                out.add_term(o1 + o2, k1 + k2, prod)
        return out

    def truncate(self, jmax: int) -> "PotentialFunctional":
        out = PotentialFunctional(self.spec, self.h)
        for (o, k), ker in self.terms.items():
            if o <= jmax:
                out.add_term(o, k, ker)
        return out

    def gauss_expect(self, cov: np.ndarray, new_h: int) -> "PotentialFunctional":
        """Expectation over a Gaussian layer with covariance matrix ``cov``.

        Substitutes field -> lower field + layer and integrates the layer
        exactly: every partial pairing of each kernel's indices is contracted
        with the layer covariance, the unpaired indices remain as field slots.
        """
        letters = "abcdefghijklmnopqrst"
        out = PotentialFunctional(self.spec, new_h)
        for (o, k), ker in self.terms.items():
            if k == 0:
                out.add_term(o, 0, ker)
                continue
            ker = np.asarray(ker)
            for pairing in _partial_pairings(k):
                if not pairing:
                    out.add_term(o, k, ker)
                    continue
                paired = {i for pr in pairing for i in pr}
                keep = [i for i in range(k) if i not in paired]
                subs = [letters[:k]]
                operands = [ker]
                for i1, i2 in pairing:
                    subs.append(letters[i1] + letters[i2])
                    operands.append(cov)
                expr = ",".join(subs) + "->" + "".join(letters[i] for i in keep)
                contracted = np.einsum(expr, *operands, optimize=True)
                if not keep:
                    contracted = float(contracted)
                out.add_term(o, k - len(paired), contracted)
        return out

    def evaluate(self, phi, lam: float) -> float:
        """Numeric value on a concrete field configuration."""
        phi = np.asarray(phi, dtype=float).ravel()
        total = 0.0
        for (o, k), ker in self.terms.items():
            if k == 0:
                total += lam ** o * float(ker)
                continue
            value = np.asarray(ker)
            for _ in range(k):
                value = value @ phi
            total += lam ** o * float(value)
        return total

    def constant_coefficients(self, jmax: int) -> np.ndarray:
        """Degree-0 part per lambda-order."""
        out = np.zeros(jmax + 1)
        for (o, k), ker in self.terms.items():
            if k == 0 and o <= jmax:
                out[o] += float(ker)
        return out

    def kernel_norms(self) -> dict:
        return {key: float(np.max(np.abs(np.asarray(ker))))
                for key, ker in self.terms.items()}


@dataclass
class WickMonomial:
    """Normal-ordered field power: degree and the variance used for ordering."""

    degree: int
    variance: float

    def coefficients(self) -> dict:
        return wick_power(self.degree, self.variance)


def wick_power(k: int, c: float) -> dict:
    """Expansion of the Wick power :phi^k:_c into ordinary powers.

    Returns {degree: coefficient}; for k=4 this is {4: 1, 2: -6c, 0: 3c^2}.
    """
    if k > 8:
        raise ValueError("Wick powers capped at degree 8")
    out = {}
    for q in range(k // 2 + 1):
        coeff = math.factorial(k) / (math.factorial(q) * 2 ** q * math.factorial(k - 2 * q))
        out[k - 2 * q] = coeff * (-c) ** q
    return out


def _diag_tensor(n: int, degree: int, per_site) -> np.ndarray:
    t = np.zeros((n,) * degree)
    idx = (np.arange(n),) * degree
    t[idx] = per_site
    return t


def wick_quartic_potential(spec: LatticeSpec, h: int, variance: float,
                           prefactor: float = 1.0) -> PotentialFunctional:
    """The order-1 potential  prefactor * a^d sum_x :phi_x^4:_variance."""
    V = PotentialFunctional(spec, h)
    w = spec.a ** spec.d * prefactor
    for degree, coeff in wick_power(4, variance).items():
        if degree == 0:
            V.add_term(1, 0, coeff * w * spec.n_sites)
        else:
            V.add_term(1, degree, _diag_tensor(spec.n_sites, degree, coeff * w))
    return V


def bare_potential(spec: LatticeSpec, f=None, cts: Counterterms | None = None,
                   lam: float = 1e-2, jmax: int = 2) -> PotentialFunctional:
    """The bare interaction V_N = -a^d sum_x (lambda phi^4 + mu phi^2 + nu + f phi).

    Counterterm polynomials grade mu and nu over lambda-orders; the returned
    functional is expressed in the cutoff field phi^(<=N).
    """
    if cts is None:
        cts = counterterms(spec, lam, nu_order=jmax)
    n = spec.n_sites
    w = spec.a ** spec.d
    V = PotentialFunctional(spec, spec.N)
    V.add_term(1, 4, _diag_tensor(n, 4, -w))
    for order in (1, 2):
        if order < len(cts.mu_poly) and cts.mu_poly[order] != 0.0 and order <= jmax:
            V.add_term(order, 2, _diag_tensor(n, 2, -w * cts.mu_poly[order]))
    if cts.nu_poly is not None:
        for order, c in enumerate(cts.nu_poly):
            if c != 0.0 and order <= jmax:
                V.add_term(order, 0, -w * n * c)
    if f is not None:
        f_arr = np.asarray(f, dtype=float).ravel()
        if np.any(np.abs(f_arr) > 1 + 1e-12):
            raise ValueError("external field must satisfy |f| <= 1")
        V.add_term(0, 1, -w * f_arr)
    return V


def truncated_integrate(V: PotentialFunctional, j: int,
                        band_cov: np.ndarray | None = None) -> PotentialFunctional:
    """One recursion step: integrate the scale-h layer to order j in lambda."""
    if j > 3:
        raise ValueError("recursion order capped at 3")
    spec = V.spec
    h = V.h
    if h < 1:
        raise ValueError("no layer left to integrate")
    if band_cov is None:
        band_cov = covariance_band(spec, h)
    if hasattr(band_cov, "matrix"):
        band_cov = band_cov.matrix()
    m1 = V.gauss_expect(band_cov, h - 1)
    out = m1.truncate(j)
    if j >= 2:
        V2 = V.times(V, j)
        m2 = V2.gauss_expect(band_cov, h - 1)
        out = out.plus(m2.plus(m1.times(m1, j).scaled(-1.0)).scaled(0.5))
    if j >= 3:
        V3 = V.times(V, j).times(V, j)
        m3 = V3.gauss_expect(band_cov, h - 1)
        cross = m1.times(m2, j).scaled(-3.0)
        cube = m1.times(m1, j).times(m1, j).scaled(2.0)
        out = out.plus(m3.plus(cross).plus(cube).scaled(1.0 / 6.0))
    return out.truncate(j)


def flow_constant(spec: LatticeSpec, lam: float, f, j: int,
                  cts: Counterterms | None = None) -> np.ndarray:
    """Iterate the recursion from scale N down to 0, return the constant
    density per lambda-order (the field-independent part of V_{j;0})."""
    if cts is None:
        cts = counterterms(spec, lam, nu_order=j)
    V = bare_potential(spec, f=f, cts=cts, lam=lam, jmax=j)
    for h in range(spec.N, 0, -1):
        V = truncated_integrate(V, j)
    vol = spec.n_sites * spec.a ** spec.d
    return V.constant_coefficients(j) / vol


@dataclass
class RelevantSplit:
    """Local relevant block, d=3 nonlocal pair block, remainder and constant."""

    rel1: PotentialFunctional
    rel2: PotentialFunctional
    irr: PotentialFunctional
    E_density: np.ndarray
    coefficients: dict


def relevant_split(V: PotentialFunctional, lam: float,
                   kernel_cum_N=None) -> RelevantSplit:
    """Split a potential into relevant local block, d=3 pair block and remainder.

    The local block collects the exactly diagonal quartic/quadratic parts, the
    field-linear part and the constant; its coefficients are reported in the
    normalized X-variables at the potential's scale (the d=2 normalization of
    X is 1/sqrt(h)).  In d=3 with h < N the canonical pair kernel
    24 lambda^2 (C^(<=h)3 - C^(<=N)3) on (phi_eta - phi_eta')^2 is split off;
    in d=2 that block is identically empty.
    """
    spec = V.spec
    h = V.h
    n = spec.n_sites
    rel1 = PotentialFunctional(spec, h)
    irr = V.copy()
    for (o, k), ker in list(V.terms.items()):
        if k in (2, 4):
            diag_vals = np.asarray(ker)[(np.arange(n),) * k]
            diag = _diag_tensor(n, k, diag_vals)
            rel1.add_term(o, k, diag)
            irr.terms[(o, k)] = irr.terms[(o, k)] - diag
        elif k in (0, 1):
            rel1.add_term(o, k, ker)
            irr.terms[(o, k)] = (ker - ker) if k == 0 else np.zeros_like(ker)
    rel2 = PotentialFunctional(spec, h)
    if spec.d == 3 and h < spec.N:
        ch = covariance_cumulative(spec, h) if h >= 1 else None
        cn = kernel_cum_N if kernel_cum_N is not None else covariance_cumulative(spec, spec.N)
        if ch is not None:
            W = 24.0 * (ch.matrix() ** 3 - cn.matrix() ** 3) * spec.a ** (2 * spec.d)
            T = -2.0 * W
            row = W.sum(axis=1) + W.sum(axis=0)
            T[np.arange(n), np.arange(n)] += row
            rel2.add_term(2, 2, T)
            if (2, 2) in irr.terms:
                irr.terms[(2, 2)] = irr.terms[(2, 2)] - T
            else:
                irr.add_term(2, 2, -T)
    # coefficients in the rescaled variables
    sig = math.sqrt(h) if spec.d == 2 else spec.gamma ** ((spec.d - 2) * h / 2.0)
    w = spec.a ** spec.d
    quartic = quad = lin = 0.0
    const = 0.0
    for (o, k), ker in rel1.terms.items():
        if k == 4:
            quartic += lam ** o * float(np.asarray(ker)[(0,) * 4]) / (-w)
        elif k == 2:
            quad += lam ** o * float(np.asarray(ker)[(0, 0)]) / (-w)
        elif k == 1:
            lin += lam ** o * float(np.asarray(ker)[0]) / (-w)
        elif k == 0:
            const += lam ** o * float(ker) / (-w * n)
    coefficients = {
        "lambda_eff": quartic,
        "mu_bar": quad / sig ** 2 if sig else quad,
        "nu_bar": const / sig ** 4,
        "f_bar": lin / sig ** 3,
        "sigma": sig,
    }
    vol = n * spec.a ** spec.d
    E = V.constant_coefficients(max(o for o, _ in V.terms) if V.terms else 0) / vol
    return RelevantSplit(rel1=rel1, rel2=rel2, irr=irr, E_density=E,
                         coefficients=coefficients)


def field_independent_part(spec: LatticeSpec, j: int, h: int, lam: float,
                           f=None, cts: Counterterms | None = None,
                           per_order: bool = False):
    """E(j,h): the order-j log Z density with the difference propagator
    C^(<=N) - C^(<=h).  At h=0 this is the full order-j series; at h=N only
    the propagator-free constant counterterm survives."""
    if j > 3:
        raise ValueError("order capped at 3")
    if cts is None:
        cts = counterterms(spec, lam, nu_order=j)
    kernel = difference_kernel(spec, h)
    sr = logZ_series(spec, lam, f, j, kernel=kernel, cts=cts)
    if per_order:
        return sr.coefficients
    return sr.total(lam)


@dataclass
class RemainderBound:
    """The per-scale remainder estimate R(j,h) and its summability verdict."""

    j: int
    h: int
    lam: float
    B: float
    d: int
    C_j: float
    gamma: float
    value: float

    @property
    def summable(self) -> bool:
        return (4 - self.d) * (self.j + 1) > self.d


def remainder_bound(j: int, h: int, lam: float, B: float, d: int,
                    C_j: float = 1.0, gamma: float = 2.0) -> RemainderBound:
    """R(j,h) = C_j B^(4j) (lambda h^2 gamma^(-(4-d)h))^(j+1) gamma^(dh)."""
    if j < 0 or h < 1 or lam < 0 or B < 0 or C_j < 0 or gamma <= 1:
        raise ValueError("remainder bound needs nonnegative inputs and gamma > 1")
    value = C_j * B ** (4 * j) * (lam * h ** 2 * gamma ** (-(4 - d) * h)) ** (j + 1) * gamma ** (d * h)
    return RemainderBound(j=j, h=h, lam=lam, B=B, d=d, C_j=C_j, gamma=gamma,
                          value=float(value))


def remainder_partial_sums(j: int, lam: float, B: float, d: int,
                           C_j: float = 1.0, gamma: float = 2.0,
                           N_max: int = 64) -> np.ndarray:
    """Partial sums sum_{h<=N} R(j,h) for N = 1..N_max."""
    vals = [remainder_bound(j, h, lam, B, d, C_j, gamma).value
            for h in range(1, N_max + 1)]
    return np.cumsum(vals)
