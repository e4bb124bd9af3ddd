"""Connected graph enumeration, graph values, counterterms and the log Z series.

The primitive object is a perfect matching of labeled half-lines (a Wick
contraction).  Quartic vertices carry 4 half-lines, quadratic (mass) vertices
2, external-field vertices 1 and the trivial vacuum vertex none.  Symmetry
factors are never hand-counted: topologies and their multiplicities are
obtained by aggregating labeled matchings, which keeps every value directly
comparable with a brute-force moment oracle.

The interaction convention is

    Z(f) = E[ exp(V) ],
    V = -a^d sum_x ( lambda phi_x^4 + mu phi_x^2 + nu + f_x phi_x )

so a graph with n quartic, p mass and r external vertices carries the sign
(-1)^(n+p+r) of the value formula.  The quadratic counterterm is kept as a
polynomial in lambda (first order -6 lambda C_00, second order the d=3 local
chain part), which makes order bookkeeping in the series exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice_propagator import (
    LatticeSpec,
    PropagatorKernel,
    covariance_cumulative,
)

__all__ = [
    "GraphElement",
    "FeynmanGraph",
    "Counterterms",
    "SchwingerKernelTable",
    "enumerate_connected",
    "enumerate_matchings",
    "graph_value",
    "integrated_value",
    "counterterms",
    "renormalized_chain_value",
    "wick_oracle",
    "logZ_series",
    "trivial_vacuum_graph",
]

HALF_LINES = {"coupling": 4, "mass": 2, "vacuum": 0, "external": 1}

MAX_INTERNAL_VERTICES = 4


@dataclass(frozen=True)
class GraphElement:
    """A graph element: quartic coupling, mass insertion, vacuum dot or external leg."""

    kind: str
    label: int

    def __post_init__(self):
        if self.kind not in HALF_LINES:
            raise ValueError(f"unknown element kind {self.kind!r}")

    @property
    def half_lines(self) -> int:
        return HALF_LINES[self.kind]


@dataclass(frozen=True)
class FeynmanGraph:
    """Labeled graph elements plus a perfect matching of their half-lines."""

    elements: tuple
    pairing: tuple  # pairs of (vertex_index, slot)

    @property
    def n(self) -> int:
        return sum(1 for e in self.elements if e.kind == "coupling")

    @property
    def p(self) -> int:
        return sum(1 for e in self.elements if e.kind == "mass")

    @property
    def r(self) -> int:
        return sum(1 for e in self.elements if e.kind == "external")

    def lines(self):
        """Vertex-index pairs, one per matched line."""
        return [(a[0], b[0]) for a, b in self.pairing]

    @property
    def connected(self) -> bool:
        k = len(self.elements)
        if k == 1:
            return True
        parent = list(range(k))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for u, v in self.lines():
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
        return len({find(i) for i in range(k)}) == 1


def trivial_vacuum_graph() -> FeynmanGraph:
    """The single line-free graph: one vacuum element, empty pairing."""
    return FeynmanGraph(elements=(GraphElement("vacuum", 0),), pairing=())


def _elements(n: int, p: int, r: int) -> tuple:
    out = []
    for i in range(n):
        out.append(GraphElement("coupling", i))
    for i in range(p):
        out.append(GraphElement("mass", i))
    for i in range(r):
        out.append(GraphElement("external", i))
    return tuple(out)


def enumerate_matchings(half_lines):
    """All perfect matchings of a list of distinct labeled half-lines."""
    half_lines = list(half_lines)
    if len(half_lines) % 2:
        raise ValueError("odd number of half-lines cannot be matched")
    if not half_lines:
        yield ()
        return
    first, rest = half_lines[0], half_lines[1:]
    for i in range(len(rest)):
        partner = rest[i]
        remaining = rest[:i] + rest[i + 1:]
        for sub in enumerate_matchings(remaining):
            yield ((first, partner),) + sub


def enumerate_connected(n: int, p: int, r: int):
    """All connected labeled matchings over n coupling, p mass, r external elements.

    For (n, p, r) = (0, 0, 0) the result is the single trivial vacuum graph.
    """
    if n < 0 or p < 0 or r < 0:
        raise ValueError("element counts must be nonnegative")
    if (n, p, r) == (0, 0, 0):
        return [trivial_vacuum_graph()]
    total = 4 * n + 2 * p + r
    if total % 2:
        raise ValueError(f"odd half-line total {total} for (n,p,r)=({n},{p},{r})")
    elements = _elements(n, p, r)
    half_lines = [(v, s) for v, e in enumerate(elements) for s in range(e.half_lines)]
    graphs = []
    for pairing in enumerate_matchings(half_lines):
        g = FeynmanGraph(elements=elements, pairing=pairing)
        if g.connected:
            graphs.append(g)
    return graphs


def aggregate_topologies(graphs):
    """Group labeled matchings by their line multiset.

    Returns a list of (representative graph, line multiset, multiplicity)
    where the line multiset is canonical up to relabeling of same-kind
    vertices.
    """
    buckets = {}
    for g in graphs:
        kinds = tuple(e.kind for e in g.elements)
        raw = tuple(sorted(tuple(sorted(l)) for l in g.lines()))
        sig = _canonical_lines(raw, kinds)
        if sig not in buckets:
            buckets[sig] = [g, raw, 0]
        buckets[sig][2] += 1
    return [(g, raw, count) for g, raw, count in buckets.values()]


def _canonical_lines(lines, kinds):
    """Minimal line multiset over permutations of same-kind vertex labels."""
    groups = {}
    for i, k in enumerate(kinds):
        groups.setdefault(k, []).append(i)
    best = None
    perms_per_group = [itertools.permutations(ix) for ix in groups.values()]
    for combo in itertools.product(*[list(p) for p in perms_per_group]):
        mapping = {}
        for orig_ix, perm in zip(groups.values(), combo):
            for a, b in zip(orig_ix, perm):
                mapping[a] = b
        relabeled = tuple(sorted(tuple(sorted((mapping[u], mapping[v]))) for u, v in lines))
        if best is None or relabeled < best:
            best = relabeled
    return best


def graph_value(G: FeynmanGraph, kernel: PropagatorKernel, f, positions,
                lam: float, mu: float = 0.0, nu: float = 0.0) -> float:
    """Value of one labeled graph at fixed vertex positions.

    (-1)^(n+p+r) lambda^n mu^p (prod of f at external positions) / (n! p! r!)
    times the product of kernel values over the matched lines.  The trivial
    vacuum graph returns nu.
    """
    if len(G.elements) == 1 and G.elements[0].kind == "vacuum":
        return nu
    if len(positions) != len(G.elements):
        raise ValueError("one position per vertex is required")
    spec = kernel.spec
    f = np.zeros(spec.n_sites) if f is None else np.asarray(f).ravel()
    if np.any(np.abs(f) > 1.0 + 1e-12):
        raise ValueError("external field must satisfy |f| <= 1")
    n, p, r = G.n, G.p, G.r
    value = (-1.0) ** (n + p + r) * lam ** n * mu ** p
    value /= math.factorial(n) * math.factorial(p) * math.factorial(r)
    flat = [int(np.ravel_multi_index(pos, spec.shape)) if not np.isscalar(pos) else int(pos)
            for pos in positions]
    M = kernel.matrix()
    for u, v in G.lines():
        value *= M[flat[u], flat[v]]
    for v, e in enumerate(G.elements):
        if e.kind == "external":
            value *= f[flat[v]]
    return float(value)


def _einsum_sum(lines, element_kinds, M, f, n_sites):
    """Sum of prod-of-lines (and f factors) over all vertex position assignments."""
    letters = "abcdefghijklmnopqrstuvwxyz"
    k = len(element_kinds)
    if k > len(letters):
        raise ValueError("too many vertices")
    operands, subs = [], []
    used = set()
    c0 = None
    for u, v in lines:
        used.update((u, v))
        if u == v:
            if c0 is None:
                c0 = np.full(n_sites, M[0, 0])
            operands.append(c0)
            subs.append(letters[u])
        else:
            operands.append(M)
            subs.append(letters[u] + letters[v])
    for v, kind in enumerate(element_kinds):
        if kind == "external":
            operands.append(f)
            subs.append(letters[v])
            used.add(v)
    free = sum(1 for v in range(k) if v not in used)
    if not operands:
        return float(n_sites ** free)
    total = np.einsum(",".join(subs) + "->", *operands, optimize=True)
    return float(total) * n_sites ** free


def integrated_value(G: FeynmanGraph, kernel: PropagatorKernel, f,
                     lam: float, mu: float = 0.0, nu: float = 0.0,
                     override_guard: bool = False) -> float:
    """Graph value summed over all vertex positions with weight a^d per vertex."""
    if len(G.elements) == 1 and G.elements[0].kind == "vacuum":
        spec = kernel.spec
        return nu * spec.n_sites * spec.a ** spec.d
    spec = kernel.spec
    internal = G.n + G.p
    if internal > MAX_INTERNAL_VERTICES and not override_guard:
        raise ValueError(f"refusing {internal} internal vertices without override")
    f_arr = np.zeros(spec.n_sites) if f is None else np.asarray(f, dtype=float).ravel()
    if np.any(np.abs(f_arr) > 1.0 + 1e-12):
        raise ValueError("external field must satisfy |f| <= 1")
    n, p, r = G.n, G.p, G.r
    pref = (-1.0) ** (n + p + r) * lam ** n * mu ** p
    pref /= math.factorial(n) * math.factorial(p) * math.factorial(r)
    kinds = tuple(e.kind for e in G.elements)
    S = _einsum_sum(G.lines(), kinds, kernel.matrix(), f_arr, spec.n_sites)
    return pref * S * spec.a ** (spec.d * len(G.elements))


# --- polynomial-in-lambda helpers -------------------------------------------

def _poly_mul(a, b, jmax):
    out = np.zeros(jmax + 1)
    for i, ai in enumerate(a):
        if ai == 0.0 or i > jmax:
            continue
        top = min(len(b), jmax + 1 - i)
        out[i:i + top] += ai * b[:top]
    return out


def _poly_shift(a, k, jmax):
    out = np.zeros(jmax + 1)
    if k <= jmax:
        out[k:] = a[: jmax + 1 - k]
    return out


def _family_poly(n, p, r, kernel, f_arr, mu_poly, jmax, keep_external=False):
    """Sum over connected (n,p,r) matchings of integrated values, as lambda polys.

    With keep_external=True the external positions are left free and the
    result is a polynomial of kernels on r-tuples instead of scalars.
    """
    spec = kernel.spec
    graphs = enumerate_connected(n, p, r)
    if not graphs:
        return None
    M = kernel.matrix()
    sign = (-1.0) ** (n + p + r)
    norm = math.factorial(n) * math.factorial(p) * math.factorial(r)
    base = np.zeros(jmax + 1)
    base[0] = sign / norm
    base = _poly_shift(base, n, jmax)
    for _ in range(p):
        base = _poly_mul(base, mu_poly, jmax)
    if not base.any():
        return None
    weight = spec.a ** (spec.d * (n + p + r))
    if keep_external:
        total = None
        for g, raw_lines, count in aggregate_topologies(graphs):
            part = _einsum_external(raw_lines, tuple(e.kind for e in g.elements),
                                    M, spec.n_sites, r) * count
            total = part if total is None else total + part
        weight = spec.a ** (spec.d * (n + p))  # no measure weight on the open legs
        return [c * weight * total for c in base]
    S = 0.0
    for g, raw_lines, count in aggregate_topologies(graphs):
        S += count * _einsum_sum(raw_lines, tuple(e.kind for e in g.elements),
                                 M, f_arr, spec.n_sites)
    return base * (S * weight)


def _einsum_external(lines, kinds, M, n_sites, r):
    """Position sum with the external vertex indices left free."""
    letters = "abcdefghijklmnopqrstuvwxyz"
    operands, subs = [], []
    c0 = None
    for u, v in lines:
        if u == v:
            if c0 is None:
                c0 = np.full(n_sites, M[0, 0])
            operands.append(c0)
            subs.append(letters[u])
        else:
            operands.append(M)
            subs.append(letters[u] + letters[v])
    ext = [v for v, kind in enumerate(kinds) if kind == "external"]
    out = "".join(letters[v] for v in ext)
    expr = ",".join(subs) + "->" + out
    return np.einsum(expr, *operands, optimize=True)


# --- counterterms ------------------------------------------------------------

@dataclass
class Counterterms:
    """Quadratic and constant counterterms at the cutoff, for one coupling."""

    lam: float
    mu: float
    nu: float
    delta_mu: float
    mu_poly: np.ndarray = field(repr=False, default=None)
    nu_poly: np.ndarray = field(repr=False, default=None)


def mu_polynomial(spec: LatticeSpec, kernel: PropagatorKernel | None = None) -> np.ndarray:
    """Coefficients [0, mu1, mu2] of the quadratic counterterm as a lambda series.

    mu1 = -6 C_00 in both dimensions; mu2 = 48 sum_eta C_0eta^3 a^d only in d=3
    (the local part of the divergent chain, coefficient 4^2 * 3!/2 = 48).
    """
    kernel = covariance_cumulative(spec, spec.N) if kernel is None else kernel
    mu1 = -6.0 * kernel.at_zero
    mu2 = 0.0
    if spec.d == 3:
        mu2 = 48.0 * float(np.sum(kernel.values ** 3)) * spec.a ** spec.d
    return np.array([0.0, mu1, mu2])


def vacuum_density_poly(spec: LatticeSpec, kernel: PropagatorKernel,
                        mu_poly: np.ndarray, order: int) -> np.ndarray:
    """Connected vacuum-graph density as a lambda polynomial through ``order``.

    This is the full sum over connected matchings with no external legs, the
    quadratic counterterm installed as a polynomial insertion, divided by the
    volume.  The constant counterterm is fixed as nu = (this polynomial), so
    that the vacuum part of the log Z series cancels identically through the
    same order.
    """
    total = np.zeros(order + 1)
    vol = spec.n_sites * spec.a ** spec.d
    for n in range(0, order + 1):
        for p in range(0, order + 1 - n):
            if n == 0 and p == 0:
                continue
            if (4 * n + 2 * p) % 2:
                continue
            part = _family_poly(n, p, 0, kernel, np.zeros(spec.n_sites),
                                mu_poly, order)
            if part is not None:
                total += part
    return total / vol


def counterterms(spec: LatticeSpec, lam: float, nu_order: int | None = None,
                 kernel: PropagatorKernel | None = None) -> Counterterms:
    """Counterterms mu_N, nu_N for coupling lam on the given lattice.

    nu is computed by the executable cancellation criterion (vacuum graphs
    cancel in the log Z series) through ``nu_order`` in lambda; pass
    nu_order=0 to skip the (enumeration-heavy) nu computation on large
    lattices where only mu is needed.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    kernel = covariance_cumulative(spec, spec.N) if kernel is None else kernel
    mp = mu_polynomial(spec, kernel)
    mu = float(np.polyval(mp[::-1], lam))
    delta_mu = float(mp[2] * lam ** 2)
    if nu_order is None:
        nu_order = 3 if spec.d == 3 else 2
    if nu_order == 0:
        npoly = np.zeros(1)
    else:
        npoly = vacuum_density_poly(spec, kernel, mp, nu_order)
    nu = float(np.polyval(npoly[::-1], lam))
    return Counterterms(lam=lam, mu=mu, nu=nu, delta_mu=delta_mu,
                        mu_poly=mp, nu_poly=npoly)


# --- renormalized chain ------------------------------------------------------

def _convolve(spec: LatticeSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Periodic convolution (A * B)(t) = sum_x A(x) B(t - x) a^d."""
    return np.fft.ifftn(np.fft.fftn(A) * np.fft.fftn(B)).real * spec.a ** spec.d


def renormalized_chain_value(kernel_cum_N: PropagatorKernel, alpha, beta,
                             outer_kernel: PropagatorKernel | None = None,
                             subtract: bool = True) -> float:
    """Subtracted second-order chain sum_{x,eta} C_ax C_xeta^3 (C_eta b - C_x b).

    Only meaningful in d=3 where the unsubtracted chain diverges with the
    cutoff; d=2 input is rejected because no subtraction is needed there.
    """
    spec = kernel_cum_N.spec
    if spec.d != 3:
        raise ValueError("renormalized chain subtraction applies only in d=3")
    Co = (outer_kernel or kernel_cum_N).values
    C3 = kernel_cum_N.values ** 3
    chain = _convolve(spec, Co, _convolve(spec, C3, Co))
    t = tuple((b - a_) % spec.n_side for a_, b in zip(alpha, beta))
    if not subtract:
        return float(chain[t])
    S3 = float(np.sum(C3)) * spec.a ** spec.d
    local = _convolve(spec, Co, Co)
    return float(chain[t] - S3 * local[t])


# --- Isserlis oracle ---------------------------------------------------------

def wick_oracle(sites, cov) -> float:
    """Gaussian expectation of prod_i phi_{sites[i]} by exhaustive pairing.

    ``sites`` is a flat list of site indices (repetitions allowed), ``cov``
    either a PropagatorKernel or a dense covariance matrix.  Odd degree gives
    zero; the degree is capped at 12.
    """
    sites = list(sites)
    if len(sites) > 12:
        raise ValueError("oracle degree capped at 12")
    if len(sites) % 2:
        return 0.0
    M = cov.matrix() if isinstance(cov, PropagatorKernel) else np.asarray(cov)

    def rec(ix):
        if not ix:
            return 1.0
        first, rest = ix[0], ix[1:]
        total = 0.0
        for i in range(len(rest)):
            pair = M[sites[first], sites[rest[i]]]
            total += pair * rec(rest[:i] + rest[i + 1:])
        return total

    return float(rec(list(range(len(sites)))))


def monomial_sites(monomials) -> list:
    """Expand [(site, power), ...] into the flat site list the oracle consumes."""
    out = []
    for site, power in monomials:
        out.extend([site] * power)
    return out


# --- series ------------------------------------------------------------------

@dataclass
class SchwingerKernelTable:
    """Kernel of the 2n-point Schwinger function at a fixed order in lambda."""

    order: int
    legs: int
    values: np.ndarray = field(repr=False)


@dataclass
class SeriesResult:
    """Coefficient table of (1/|Lambda|) log Z through a fixed order."""

    spec: LatticeSpec
    j: int
    coefficients: np.ndarray
    schwinger: list

    def total(self, lam: float) -> float:
        return float(sum(c * lam ** k for k, c in enumerate(self.coefficients)))


def logZ_series(spec: LatticeSpec, lam: float, f, j: int,
                kernel: PropagatorKernel | None = None,
                cts: Counterterms | None = None,
                r_max: int = 4, with_schwinger: bool = False,
                override_guard: bool = False) -> SeriesResult:
    """Renormalized series for (1/|Lambda|) log Z_N(f) through order j in lambda.

    All connected graphs over coupling, mass and external elements are summed
    with the counterterm polynomial installed; the constant counterterm enters
    as the order-matched negative of the connected vacuum density, so vacuum
    contributions cancel identically.  An alternative kernel (for instance a
    difference propagator) may be supplied; the counterterms always refer to
    the full cutoff-N propagator of the spec.
    """
    if j > 3:
        raise ValueError("series order capped at 3")
    kernel = covariance_cumulative(spec, spec.N) if kernel is None else kernel
    if cts is None:
        cts = counterterms(spec, lam, nu_order=j if j > 0 else 0)
    f_arr = np.zeros(spec.n_sites) if f is None else np.asarray(f, dtype=float).ravel()
    if np.any(np.abs(f_arr) > 1.0 + 1e-12):
        raise ValueError("external field must satisfy |f| <= 1")
    vol = spec.n_sites * spec.a ** spec.d
    coeffs = np.zeros(j + 1)
    have_f = bool(np.any(f_arr))
    for n in range(0, j + 1):
        for p in range(0, j + 1 - n):
            if n + p > MAX_INTERNAL_VERTICES and not override_guard:
                raise ValueError("cost guard: too many internal vertices; pass override_guard=True")
            r_top = r_max if (have_f or n + p == 0) else 0
            for r in range(0, r_top + 1):
                if n + p + r == 0 or (4 * n + 2 * p + r) % 2:
                    continue
                part = _family_poly(n, p, r, kernel, f_arr, cts.mu_poly, j)
                if part is not None:
                    coeffs += part / vol
    # constant counterterm: V carries -nu per unit volume
    npoly = cts.nu_poly if cts.nu_poly is not None else np.zeros(1)
    for k in range(min(len(npoly), j + 1)):
        coeffs[k] -= npoly[k]
    tables = []
    if with_schwinger:
        for legs in (2, 4):
            if legs > r_max:
                continue
            acc = None
            for n in range(0, j + 1):
                for p in range(0, j + 1 - n):
                    if (4 * n + 2 * p + legs) % 2 or (n + p + legs) == 0:
                        continue
                    part = _family_poly(n, p, legs, kernel, f_arr, cts.mu_poly,
                                        j, keep_external=True)
                    if part is None:
                        continue
                    acc = part if acc is None else [a + b for a, b in zip(acc, part)]
            if acc is not None:
                for order, arr in enumerate(acc):
                    if np.any(arr):
                        shaped = np.asarray(arr).reshape((spec.n_sites,) * legs)
                        tables.append(SchwingerKernelTable(order=order, legs=legs,
                                                           values=shaped))
    return SeriesResult(spec=spec, j=j, coefficients=coeffs, schwinger=tables)
