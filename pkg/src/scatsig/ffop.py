"""Unit-sphere quadrature, tangential fields, and dense far field operators.

The discretization convention: a tangential field g is stored by its two
components in per-node orthonormal tangent frames, and an operator F
becomes the 2N x 2N matrix

    A[(i,s),(j,t)] = w_j * e^s_i . FF(xh_i; d = xh_j, p = e^t_j),

so that A applied to coefficient vectors approximates (F g)(xh_i) in the
frame components. Quadrature weights are folded into the matrix, which
makes matrix eigenvalues direct approximations of operator eigenvalues;
the price is that the L2 adjoint is the weight-conjugated transpose
rather than the plain conjugate transpose (see ``adjoint``).

Assembly never loops over matrix entries: every operator kind is a sum
of rank-one mode products over the harmonics, evaluated as dense matrix
products against tabulated mode matrices.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import forward
from .forward import ImpedanceBall, MediumSpec, impedance_coefficients, mie_coefficients
from .sphfun import mode_list, vsh_tables

KINDS = ("ELECTRIC", "MAGNETIC", "IMPEDANCE", "MODIFIED")
_KIND_CODE = {name: i for i, name in enumerate(KINDS)}

_FFOP_MAGIC = b"FFOP"
_FFOP_VERSION = 1


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Nodes, weights and tangent frames of a quadrature rule on S^2.

    ``t`` is the polynomial exactness degree: spherical harmonics with
    l <= t integrate to their exact values. Frames (e1, e2) are the unit
    theta / phi directions; product rules place no node at the poles, so
    the frames are well defined everywhere.
    """

    kind: str
    order: int
    nodes: np.ndarray
    weights: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    t: int

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    def frame_components(self, vectors):
        """Project ambient 3-vectors at the nodes onto (e1, e2)."""
        vectors = np.asarray(vectors)
        return np.stack([np.einsum("jc,jc->j", vectors, self.e1),
                         np.einsum("jc,jc->j", vectors, self.e2)], axis=1)


def build_quadrature(kind, order):
    """Construct a sphere rule: PRODUCT_GAUSS or EQUAL_AREA.

    PRODUCT_GAUSS uses ``order`` Gauss-Legendre points in cos(theta) and
    2*order uniform azimuth points; exactness degree t = 2*order - 1.
    EQUAL_AREA uses ``order`` bands of equal height, each carrying
    2*order equally weighted nodes at the band midline; t = 1 (midpoint
    exactness on linear functions of cos(theta)).
    """
    if order < 4:
        raise ValueError("quadrature order must be >= 4")
    if kind == "PRODUCT_GAUSS":
        mu, wmu = np.polynomial.legendre.leggauss(order)
        n_phi = 2 * order
        phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        w_phi = 2.0 * np.pi / n_phi
        MU, PHI = np.meshgrid(mu, phi, indexing="ij")
        W = np.repeat(wmu, n_phi) * w_phi
        t = 2 * order - 1
    elif kind == "EQUAL_AREA":
        n_bands = order
        edges = np.linspace(1.0, -1.0, n_bands + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        band_area = 2.0 * np.pi * (edges[:-1] - edges[1:])
        n_phi = 2 * order
        phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
        MU, PHI = np.meshgrid(mids, phi, indexing="ij")
        W = np.repeat(band_area / n_phi, n_phi)
        t = 1
    else:
        raise ValueError(f"unknown quadrature kind {kind!r}")
    mu_f = MU.ravel()
    phi_f = PHI.ravel()
    s = np.sqrt(1.0 - mu_f**2)
    nodes = np.stack([s * np.cos(phi_f), s * np.sin(phi_f), mu_f], axis=1)
    e1 = np.stack([mu_f * np.cos(phi_f), mu_f * np.sin(phi_f), -s], axis=1)
    e2 = np.stack([-np.sin(phi_f), np.cos(phi_f), np.zeros_like(phi_f)], axis=1)
    return SphereQuadrature(kind=kind, order=order, nodes=nodes, weights=W, e1=e1, e2=e2, t=t)


@dataclass(eq=False)
class TangentVectorField:
    """Tangential field sampled on a quadrature: coefficients (N, 2)."""

    quad: SphereQuadrature
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.quad.n_nodes, 2):
            raise ValueError(f"coefficients must have shape (N, 2), got {c.shape}")
        self.coeffs = c

    @staticmethod
    def from_vectors(quad, vectors):
        """Project ambient vectors at the nodes onto the tangent frames."""
        return TangentVectorField(quad, quad.frame_components(np.asarray(vectors, complex)))

    def vectors(self):
        """Ambient 3-vector values at the nodes."""
        return self.coeffs[:, 0, None] * self.quad.e1 + self.coeffs[:, 1, None] * self.quad.e2

    def flat(self):
        """Stacked coefficient vector of length 2N, row index 2j + s."""
        return self.coeffs.reshape(-1)

    @staticmethod
    def from_flat(quad, vec):
        return TangentVectorField(quad, np.asarray(vec, complex).reshape(-1, 2))

    def norm(self):
        """Discrete L2 norm sqrt(sum_j w_j |g_j|^2)."""
        return float(np.sqrt(np.sum(self.quad.weights[:, None] * np.abs(self.coeffs) ** 2)))


@dataclass(eq=False)
class FarFieldMatrix:
    """Dense discretized far field operator with its provenance."""

    matrix: np.ndarray
    kind: str
    k: float
    quad: SphereQuadrature
    medium: MediumSpec | None = None
    ball: ImpedanceBall | None = None
    noise_eps: float = 0.0
    seed: int = 0
    _norm_cache: float | None = field(default=None, repr=False)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def weight_vector(self):
        """Per-row quadrature weights (length 2N)."""
        return np.repeat(self.quad.weights, 2)

    def apply(self, g):
        """Operator action on a TangentVectorField."""
        return TangentVectorField.from_flat(self.quad, self.matrix @ g.flat())

    def operator_norm(self):
        """Discrete L2(S^2) operator norm (weighted), by power iteration.

        Equals the largest singular value of W^(1/2) A W^(-1/2); cached.
        """
        if self._norm_cache is None:
            w = self.weight_vector()
            sq = np.sqrt(w)
            B = (sq[:, None] * self.matrix) / sq[None, :]
            v = np.ones(B.shape[0], dtype=complex) / np.sqrt(B.shape[0])
            s = 0.0
            for _ in range(200):
                y = B.conj().T @ (B @ v)
                ny = np.linalg.norm(y)
                if ny == 0.0:
                    s = 0.0
                    break
                s_new = np.sqrt(ny)
                v = y / ny
                if abs(s_new - s) <= 1e-12 * max(s_new, 1.0):
                    s = s_new
                    break
                s = s_new
            self._norm_cache = float(s)
        return self._norm_cache


@lru_cache(maxsize=32)
def _mode_matrices(quad, L):
    """Frame-projected harmonic tables Phi_U, Phi_V of shape (2N, M).

    Cached per (quadrature object, degree): wavenumber sweeps reuse the
    same tables for every k that truncates at the same L. Callers must
    not write into the returned arrays.
    """
    _, _, U, V = vsh_tables(L, quad.nodes)
    frames = np.stack([quad.e1, quad.e2], axis=1)  # (N, 2, 3)
    phi_u = np.einsum("jsc,mjc->jsm", frames, U).reshape(2 * quad.n_nodes, -1)
    phi_v = np.einsum("jsc,mjc->jsm", frames, V).reshape(2 * quad.n_nodes, -1)
    phi_u.setflags(write=False)
    phi_v.setflags(write=False)
    return phi_u, phi_v


def _mode_product(phi_a, phi_b, diag_a, diag_b, weights):
    m = (phi_a * diag_a) @ phi_a.conj().T + (phi_b * diag_b) @ phi_b.conj().T
    return m * np.repeat(weights, 2)[None, :]


def _electric_matrix(medium, k, quad):
    coefs = mie_coefficients(medium, k)
    phi_u, phi_v = _mode_matrices(quad, coefs.L)
    ells = np.array([m.l for m in mode_list(coefs.L)])
    return 4.0 * np.pi * _mode_product(
        phi_v, phi_u, coefs.alpha[ells], coefs.beta[ells], quad.weights
    )


def _dual_matrix(coefs, k, quad):
    """Shared form of the magnetic and impedance operator matrices."""
    phi_u, phi_v = _mode_matrices(quad, coefs.L)
    ells = np.array([m.l for m in mode_list(coefs.L)])
    return (-4.0j * np.pi / k) * _mode_product(
        phi_u, phi_v, coefs.alpha[ells], coefs.beta[ells], quad.weights
    )


def assemble(kind, scene, k, quad):
    """Assemble the discretized far field operator of the given kind.

    ``scene`` is a MediumSpec for ELECTRIC and MAGNETIC, an ImpedanceBall
    for IMPEDANCE, and a (MediumSpec, ImpedanceBall) pair for MODIFIED,
    whose matrix is the magnetic matrix minus the impedance matrix.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    if kind == "ELECTRIC":
        if not isinstance(scene, MediumSpec):
            raise TypeError("ELECTRIC assembly needs a MediumSpec scene")
        mat = _electric_matrix(scene, k, quad)
        return FarFieldMatrix(mat, kind, float(k), quad, medium=scene)
    if kind == "MAGNETIC":
        if not isinstance(scene, MediumSpec):
            raise TypeError("MAGNETIC assembly needs a MediumSpec scene")
        mat = _dual_matrix(mie_coefficients(scene, k), k, quad)
        return FarFieldMatrix(mat, kind, float(k), quad, medium=scene)
    if kind == "IMPEDANCE":
        if not isinstance(scene, ImpedanceBall):
            raise TypeError("IMPEDANCE assembly needs an ImpedanceBall scene")
        mat = _dual_matrix(impedance_coefficients(scene, k), k, quad)
        return FarFieldMatrix(mat, kind, float(k), quad, ball=scene)
    medium, ball = scene
    if not isinstance(medium, MediumSpec) or not isinstance(ball, ImpedanceBall):
        raise TypeError("MODIFIED assembly needs a (MediumSpec, ImpedanceBall) pair")
    mat = _dual_matrix(mie_coefficients(medium, k), k, quad) - _dual_matrix(
        impedance_coefficients(ball, k), k, quad
    )
    return FarFieldMatrix(mat, kind, float(k), quad, medium=medium, ball=ball)


def add_noise(A, eps, seed):
    """Multiplicative noise: every entry times 1 + eps (zeta + i mu)/sqrt(2).

    zeta, mu are independent uniform on [-1, 1] drawn from a counter-based
    Philox generator keyed by ``seed``, so the perturbation is a pure
    function of (seed, shape).
    """
    if eps < 0:
        raise ValueError("noise level must be >= 0")
    if eps == 0:
        return FarFieldMatrix(
            A.matrix.copy(), A.kind, A.k, A.quad, medium=A.medium, ball=A.ball,
            noise_eps=0.0, seed=int(seed),
        )
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    zeta = gen.uniform(-1.0, 1.0, size=A.matrix.shape)
    mu = gen.uniform(-1.0, 1.0, size=A.matrix.shape)
    factor = 1.0 + eps * (zeta + 1j * mu) / np.sqrt(2.0)
    return FarFieldMatrix(
        A.matrix * factor, A.kind, A.k, A.quad, medium=A.medium, ball=A.ball,
        noise_eps=float(eps), seed=int(seed),
    )


def inner_product(u, v, quad=None):
    """Discrete L2 inner product sum_j w_j u_j . conj(v_j)."""
    quad = quad or u.quad
    if u.quad.n_nodes != v.quad.n_nodes:
        raise ValueError("fields live on different quadratures")
    return complex(np.sum(quad.weights[:, None] * u.coeffs * v.coeffs.conj()))


def adjoint(A, quad=None):
    """L2 adjoint of the operator matrix: A* = W^(-1) A^H W.

    Satisfies (A u, v) = (u, A* v) exactly in the discrete inner product.
    """
    quad = quad or A.quad
    w = np.repeat(quad.weights, 2)
    mat = (A.matrix.conj().T * w[None, :]) / w[:, None]
    return FarFieldMatrix(
        mat, A.kind, A.k, quad, medium=A.medium, ball=A.ball,
        noise_eps=A.noise_eps, seed=A.seed,
    )


def save_ffop(A, path):
    """Write the binary far field operator file (little-endian).

    Layout: magic "FFOP", version u32, kind u8, k f64, eps f64, seed u64,
    N_q u32, t u32, then nodes, weights, e1, e2 as f64 arrays, then the
    matrix entries row-major with interleaved (re, im) f64 pairs.
    """
    header = struct.pack(
        "<4sIBddQII",
        _FFOP_MAGIC,
        _FFOP_VERSION,
        _KIND_CODE[A.kind],
        float(A.k),
        float(A.noise_eps),
        int(A.seed),
        A.quad.n_nodes,
        int(A.quad.t),
    )
    mat = np.empty(A.matrix.shape + (2,), dtype="<f8")
    mat[..., 0] = A.matrix.real
    mat[..., 1] = A.matrix.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(A.quad.nodes.astype("<f8").tobytes())
        fh.write(A.quad.weights.astype("<f8").tobytes())
        fh.write(A.quad.e1.astype("<f8").tobytes())
        fh.write(A.quad.e2.astype("<f8").tobytes())
        fh.write(mat.tobytes())


def load_ffop(path):
    """Read a far field operator file written by save_ffop.

    Scene metadata is not part of the format, so medium/ball come back
    as None; the quadrature is reconstructed from the stored geometry.
    """
    hdr_size = struct.calcsize("<4sIBddQII")
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, kind_code, k, eps, seed, n_q, t = struct.unpack("<4sIBddQII", raw[:hdr_size])
    if magic != _FFOP_MAGIC:
        raise ValueError(f"not a far field operator file: bad magic {magic!r}")
    if version != _FFOP_VERSION:
        raise ValueError(f"unsupported file version {version}")
    off = hdr_size
    def take(count):
        nonlocal off
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
        off += count * 8
        return arr
    nodes = take(3 * n_q).reshape(n_q, 3).copy()
    weights = take(n_q).copy()
    e1 = take(3 * n_q).reshape(n_q, 3).copy()
    e2 = take(3 * n_q).reshape(n_q, 3).copy()
    flat = take(2 * (2 * n_q) ** 2)
    mat = (flat[0::2] + 1j * flat[1::2]).reshape(2 * n_q, 2 * n_q)
    quad = SphereQuadrature(kind="CUSTOM", order=0, nodes=nodes, weights=weights, e1=e1, e2=e2, t=t)
    return FarFieldMatrix(mat, KINDS[kind_code], k, quad, noise_eps=eps, seed=seed)
