"""Eigenvalue diagnostics for discretized far field operators.

Covers the dense eigendecomposition, the circle laws for the electric
and magnetic operators, the absorption energy identity, positivity of
Im((-ik F_e) g, g), and phase tracking of the magnetic spectrum across
a wavenumber sweep. The phase indicators min_j |phase_j + 1| and
min_j |phase_j - 1| dip near interior transmission eigenvalues, which
is the operator-side detector the oracle roots are checked against.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import ffop, forward
from .ffop import FarFieldMatrix, TangentVectorField, inner_product
from .sphfun import mode_list, riccati_all, vsh_tables

@dataclass(eq=False)
class EigenSet:
    """Eigenvalues sorted by decreasing magnitude, with residuals."""

    values: np.ndarray
    vectors: np.ndarray | None
    residuals: np.ndarray
    kind: str
    k: float

    @property
    def count(self):
        return self.values.size

    def top(self, n):
        return self.values[:n]


@dataclass(eq=False)
class PhaseTrack:
    """Unit-circle phases of retained magnetic eigenvalues along a k sweep."""

    ks: np.ndarray
    phases: list
    dip_minus: np.ndarray
    dip_plus: np.ndarray
    floor: float


def _matrix_2norm(mat):
    """Largest singular value by power iteration (deterministic start)."""
    v = np.ones(mat.shape[1], dtype=complex) / np.sqrt(mat.shape[1])
    s = 0.0
    for _ in range(200):
        y = mat.conj().T @ (mat @ v)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        s_new = np.sqrt(ny)
        v = y / ny
        if abs(s_new - s) <= 1e-13 * max(s_new, 1.0):
            return float(s_new)
        s = s_new
    return float(s)


def _sort_order(vals):
    # primary key decreasing |lambda|, ties broken by (re, im) for determinism
    return np.lexsort((vals.imag, vals.real, -np.abs(vals)))


def eig(A, compute_vectors=True):
    """Dense eigendecomposition of the operator matrix.

    Residuals are ||A v - lambda v|| / ||A|| with unit eigenvectors and
    the spectral matrix norm; LAPACK failure surfaces as LinAlgError.
    """
    mat = A.matrix if isinstance(A, FarFieldMatrix) else np.asarray(A, complex)
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix has non-finite entries")
    norm_a = _matrix_2norm(mat)
    if compute_vectors:
        vals, vecs = scipy.linalg.eig(mat)
        order = _sort_order(vals)
        vals = vals[order]
        vecs = vecs[:, order]
        if norm_a == 0.0:
            res = np.zeros(vals.size)
        else:
            res = np.linalg.norm(mat @ vecs - vecs * vals[None, :], axis=0)
            res /= norm_a * np.linalg.norm(vecs, axis=0)
    else:
        vals = scipy.linalg.eigvals(mat)
        order = _sort_order(vals)
        vals = vals[order]
        vecs = None
        res = np.zeros(vals.size)
    kind = A.kind if isinstance(A, FarFieldMatrix) else "GENERIC"
    k = A.k if isinstance(A, FarFieldMatrix) else 0.0
    return EigenSet(values=vals, vectors=vecs, residuals=res, kind=kind, k=k)


def circle_center_radius(kind, k):
    if kind == "ELECTRIC":
        return -2.0 * np.pi + 0.0j, 2.0 * np.pi
    if kind == "MAGNETIC":
        return 2.0j * np.pi / k, 2.0 * np.pi / k
    raise ValueError(f"no circle law for operator kind {kind!r}")


def circle_residual(eigset, kind=None, k=None):
    """Per-eigenvalue distance from the kind's eigenvalue circle.

    Electric eigenvalues lie on |lambda + 2 pi| = 2 pi for real index;
    magnetic ones on |lambda - 2 pi i/k| = 2 pi/k. Returns the array of
    | |lambda - center| - radius | values.
    """
    kind = kind if kind is not None else eigset.kind
    k = k if k is not None else eigset.k
    c, r = circle_center_radius(kind, k)
    vals = eigset.values if isinstance(eigset, EigenSet) else np.asarray(eigset, complex)
    return np.abs(np.abs(vals - c) - r)


def _modal_projections(g, quad, L):
    """Herglotz-kernel modal weights: ahat on V modes, bhat on U modes."""
    _, _, U, V = vsh_tables(L, quad.nodes)
    gv = g.vectors()
    wgt = quad.weights[:, None] * gv
    inner_v = np.einsum("jc,mjc->m", wgt, V.conj())
    inner_u = np.einsum("jc,mjc->m", wgt, U.conj())
    ells = np.array([m.l for m in mode_list(L)])
    return ells, inner_v, inner_u


def _layer_energy_integrals(layers, L, n_radial=48):
    """Radial factors of the volume term, per layer and degree.

    For each layer j with local wavenumber kappa and profile
    zeta = A psi + B chi the integrals are

        I_TE(l)  = (1/|kappa|^2) int |zeta_te|^2 dr
        I_TM(l)  = (1/|kappa|^2) int |zeta_tm'|^2 dr
                 + l(l+1)/|kappa|^4 int |zeta_tm|^2 / r^2 dr

    over (r_lo, r_hi), evaluated with Gauss-Legendre nodes.
    """
    x_gl, w_gl = np.polynomial.legendre.leggauss(n_radial)
    ints = []
    for lay in layers:
        r_lo, r_hi = lay["r_lo"], lay["r_hi"]
        kap = lay["kappa"]
        r = 0.5 * (r_hi - r_lo) * x_gl + 0.5 * (r_hi + r_lo)
        w = 0.5 * (r_hi - r_lo) * w_gl
        psi, dpsi, xi, dxi = riccati_all(L, kap * r)
        chi = (xi - psi) / 1j
        dchi = (dxi - dpsi) / 1j
        z_te = lay["A_te"][:, None] * psi + lay["B_te"][:, None] * chi
        z_tm = lay["A_tm"][:, None] * psi + lay["B_tm"][:, None] * chi
        dz_tm = lay["A_tm"][:, None] * dpsi + lay["B_tm"][:, None] * dchi
        ak2 = abs(kap) ** 2
        ell = np.arange(L + 1, dtype=float)
        i_te = (np.abs(z_te) ** 2 @ w) / ak2
        i_tm = (np.abs(dz_tm) ** 2 @ w) / ak2
        i_tm += ell * (ell + 1.0) * ((np.abs(z_tm) ** 2 / r[None, :] ** 2) @ w) / ak2**2
        ints.append((i_te, i_tm))
    return ints


def energy_identity_residual(A, g, h, quad=None, medium=None, k=None, n_radial=48):
    """LHS minus RHS of the absorption energy identity.

    RHS = -2 pi (Ag, h) - 2 pi (g, Ah) - (Ag, Ah) in the discrete inner
    product. LHS = k * sum_layers Im(n) int |interior field cross term|,
    evaluated mode by mode with the exact radial profiles; it vanishes
    when the index is real. Returns the complex difference.
    """
    quad = quad or A.quad
    medium = medium if medium is not None else A.medium
    k = k if k is not None else A.k
    ag = A.apply(g)
    ah = A.apply(h)
    rhs = (
        -2.0 * np.pi * inner_product(ag, h, quad)
        - 2.0 * np.pi * inner_product(g, ah, quad)
        - inner_product(ag, ah, quad)
    )
    if all(abs(n.imag) == 0.0 for _, n in medium.layers):
        lhs = 0.0 + 0.0j
    else:
        coefs, layers = forward.interior_solutions(medium, k)
        L = coefs.L
        ells, gv, gu = _modal_projections(g, quad, L)
        _, hv, hu = _modal_projections(h, quad, L)
        # incident modal weights 4 pi i^(l+1) k <g, V> and 4 pi i^(l+2) k <g, U>
        pref = 4.0 * np.pi * k
        a_g = pref * 1j ** (ells + 1) * gv
        b_g = pref * 1j ** (ells + 2) * gu
        a_h = pref * 1j ** (ells + 1) * hv
        b_h = pref * 1j ** (ells + 2) * hu
        ints = _layer_energy_integrals(layers, L, n_radial=n_radial)
        lhs = 0.0 + 0.0j
        for (i_te, i_tm), (_, n_layer) in zip(ints, medium.layers):
            im_n = n_layer.imag
            if im_n == 0.0:
                continue
            lhs += k * im_n * np.sum(
                a_g * a_h.conj() * i_te[ells] + b_g * b_h.conj() * i_tm[ells]
            )
    return complex(lhs - rhs)


def lidski_positivity(A, k=None, samples=32, seed=0):
    """Minimum of Im((-ik A) g, g) over random unit kernels g.

    The scaled electric operator -ik F_e has nonnegative imaginary part
    whenever Im n >= 0, which is what puts its eigenvalues in the closed
    upper half plane (trace-class positivity argument). Sampling uses a
    seeded Philox stream, so the same call returns the same minimum.
    """
    k = k if k is not None else A.k
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    quad = A.quad
    worst = np.inf
    for _ in range(samples):
        c = gen.standard_normal((quad.n_nodes, 2)) + 1j * gen.standard_normal((quad.n_nodes, 2))
        g = TangentVectorField(quad, c)
        nrm = g.norm()
        if nrm == 0.0:
            continue
        g = TangentVectorField(quad, c / nrm)
        val = (-1j * k) * inner_product(A.apply(g), g, quad)
        worst = min(worst, val.imag)
    return float(worst)


def _k_grid(k_range):
    k_lo, k_hi, step = k_range
    if not (0.0 < k_lo < k_hi):
        raise ValueError("need 0 < k_lo < k_hi")
    if step <= 0:
        raise ValueError("step must be positive")
    count = int(round((k_hi - k_lo) / step)) + 1
    ks = k_lo + step * np.arange(count)
    return ks[ks <= k_hi + 1e-12 * max(1.0, k_hi)]


def worker_count():
    env = os.environ.get("SCATSIG_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def phase_track(medium, k_range, quad, floor=1e-6):
    """Magnetic-operator phases lambda/|lambda| along a wavenumber sweep.

    At each k the magnetic operator is assembled and eigenvalues with
    |lambda| >= floor * ||A|| are kept. Reported per k: the retained
    phases and the dip indicators min_j |phase_j + 1|, min_j |phase_j - 1|.
    Grid points are processed on a thread pool (SCATSIG_THREADS caps the
    width); results are merged in grid order, so output is deterministic.
    """
    ks = _k_grid(k_range)

    def one(k):
        A = ffop.assemble("MAGNETIC", medium, float(k), quad)
        vals = scipy.linalg.eigvals(A.matrix)
        vals = vals[_sort_order(vals)]
        cut = floor * np.abs(vals[0]) if vals.size else 0.0
        kept = vals[np.abs(vals) >= cut]
        phases = kept / np.abs(kept)
        return phases

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        phase_lists = list(pool.map(one, ks))
    dip_minus = np.array([np.min(np.abs(p + 1.0)) if p.size else np.inf for p in phase_lists])
    dip_plus = np.array([np.min(np.abs(p - 1.0)) if p.size else np.inf for p in phase_lists])
    return PhaseTrack(ks=ks, phases=phase_lists, dip_minus=dip_minus,
                      dip_plus=dip_plus, floor=float(floor))


def eigenset_to_csv(eigset, kind=None, k=None):
    """CSV text with columns re, im, abs, circle_residual.

    Kinds without a circle law get NaN in the residual column.
    """
    try:
        res = circle_residual(eigset, kind, k)
    except ValueError:
        res = np.full(eigset.values.size, np.nan)
    lines = ["re,im,abs,circle_residual"]
    for v, r in zip(eigset.values, res):
        lines.append(
            f"{v.real:.16e},{v.imag:.16e},{abs(v):.16e},{r:.16e}"
        )
    return "\n".join(lines) + "\n"


def phase_track_to_csv(track):
    """CSV text with columns k, dip_minus, dip_plus, n_kept."""
    lines = ["k,dip_minus,dip_plus,n_kept"]
    for k, dm, dp, ph in zip(track.ks, track.dip_minus, track.dip_plus, track.phases):
        lines.append(f"{k:.16e},{dm:.16e},{dp:.16e},{ph.size}")
    return "\n".join(lines) + "\n"
