"""Indicator-function scans built on the regularized far field equation.

Both detectors share one mechanism: a dense far field operator A and a
family of dipole right-hand sides b_z for sample points z inside the
scatterer, solved in Tikhonov-regularized least squares. Away from an
eigenvalue the solutions stay moderate; at a transmission eigenvalue
(k-scan of the magnetic operator) or a generalized Stekloff eigenvalue
(lambda-scan of the modified operator) the averaged solution norm spikes.

Grid points are independent work items on a thread pool; results merge
in grid order, so repeated runs with the same seeds are bit-identical.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import ffop, forward
from .ffop import FarFieldMatrix, TangentVectorField
from .forward import DipoleSource, ImpedanceBall, ResonantParameterError
from .spectra import worker_count

_ALPHA_FLOOR = 1e-10
_NORMAL_EQ_TOL = 1e-10


@dataclass(frozen=True)
class TikhonovConfig:
    """Regularization choice: a positive alpha, or the "auto" rule.

    AUTO ties alpha to the data noise: alpha = eps^2 ||A||^2, floored at
    1e-10 ||A||^2 so noiseless scans stay regularized.
    """

    alpha: float | str = "auto"

    def __post_init__(self):
        if isinstance(self.alpha, str):
            if self.alpha != "auto":
                raise ValueError(f"alpha must be positive or 'auto', got {self.alpha!r}")
        elif not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def resolve(self, A):
        """Concrete alpha for a given operator matrix."""
        if self.alpha == "auto":
            norm = A.operator_norm()
            return max(A.noise_eps**2 * norm**2, _ALPHA_FLOOR * norm**2)
        return float(self.alpha)


@dataclass(frozen=True)
class ZSampling:
    """Sample points z for the right-hand sides, uniform in a ball."""

    count: int = 10
    r_z: float = 0.5
    center: tuple = (0.0, 0.0, 0.0)
    seed: int = 7

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("need at least one sample point")
        if self.r_z <= 0:
            raise ValueError("sample ball radius must be positive")

    def validate_inside(self, a):
        if self.r_z + float(np.linalg.norm(self.center)) >= a:
            raise ValueError("sample ball must lie strictly inside the scatterer")

    def points(self):
        gen = np.random.Generator(np.random.Philox(key=int(self.seed)))
        v = gen.standard_normal((self.count, 3))
        v /= np.linalg.norm(v, axis=1)[:, None]
        r = self.r_z * gen.uniform(0.0, 1.0, self.count) ** (1.0 / 3.0)
        return np.asarray(self.center, dtype=float)[None, :] + v * r[:, None]


@dataclass(eq=False)
class ScanResult:
    """Indicator values over a parameter grid.

    ``param`` is a real 1-D grid (k or lambda) or a complex 2-D
    rectangle; ``indicator`` is the z-averaged solution norm on the same
    shape, ``per_z`` carries the per-sample norms with a trailing z
    axis. Resonant grid points hold NaN (recorded gaps, not failures).
    """

    kind: str
    param: np.ndarray
    indicator: np.ndarray
    per_z: np.ndarray
    metadata: dict = field(default_factory=dict)


class _NormalSolver:
    """Factorized weighted normal equations (alpha W + A^H W A) g = A^H W b."""

    def __init__(self, A, alpha):
        self.alpha = float(alpha)
        self.w = A.weight_vector()
        wa = self.w[:, None] * A.matrix
        gram = A.matrix.conj().T @ wa
        gram[np.diag_indices_from(gram)] += self.alpha * self.w
        self.gram = gram
        self.ah_w = A.matrix.conj().T * self.w[None, :]
        self.factor = cho_factor(gram, lower=False)

    def solve(self, b_flat):
        rhs = self.ah_w @ b_flat
        g = cho_solve(self.factor, rhs)
        # normal-equation residual in the weighted norm, with one round of
        # refinement if the first solve is not tight enough
        scale = np.sqrt(np.sum(np.abs(rhs) ** 2 / self.w))
        for _ in range(3):
            res = self.gram @ g - rhs
            err = np.sqrt(np.sum(np.abs(res) ** 2 / self.w))
            if err <= _NORMAL_EQ_TOL * max(scale, 1e-300):
                return g
            g = g - cho_solve(self.factor, res)
        raise RuntimeError("normal equations did not reach the residual tolerance")


def tikhonov_solve(A, rhs, cfg=TikhonovConfig()):
    """Regularized solution of A g = rhs: (alpha I + A*A) g = A* rhs.

    The adjoint is the weighted one, so the normal equations live in the
    same discrete L2 geometry as the operator.
    """
    solver = _NormalSolver(A, cfg.resolve(A))
    g = solver.solve(rhs.flat())
    return TangentVectorField.from_flat(A.quad, g)


def _field_norm(quad, flat):
    return float(np.sqrt(np.sum(np.repeat(quad.weights, 2) * np.abs(flat) ** 2)))


def _k_values(k_grid):
    if isinstance(k_grid, tuple) and len(k_grid) == 3:
        lo, hi, step = k_grid
        count = int(round((hi - lo) / step)) + 1
        ks = lo + step * np.arange(count)
        ks = ks[ks <= hi + 1e-12 * max(1.0, hi)]
    else:
        ks = np.asarray(k_grid, dtype=float)
    if ks.size == 0 or np.any(ks <= 0):
        raise ValueError("k grid must be positive and nonempty")
    return ks


def tev_scan(medium, k_grid, quad, zs=ZSampling(), cfg=TikhonovConfig(),
             noise_eps=0.0, noise_seed=1, herglotz=False):
    """Transmission-eigenvalue scan of the magnetic far field equation.

    For each k the magnetic operator is assembled (optionally with
    multiplicative noise, seeded per grid index) and the equation
    F_m g = H_{e,inf}(.; z, p) is solved for each sample z with fixed
    polarization p = (1,0,0). The indicator is the z-averaged norm of g;
    with ``herglotz=True`` it is the averaged L2 norm of the magnetic
    Herglotz field of g over the scatterer ball (the theorem-side
    quantity; slower).
    """
    if any(n.imag != 0 for _, n in medium.layers):
        raise ValueError("transmission-eigenvalue scans require a real index")
    zs.validate_inside(medium.radius)
    ks = _k_values(k_grid)
    z_pts = zs.points()
    pol = np.array([1.0, 0.0, 0.0])

    def one(item):
        i, k = item
        A = ffop.assemble("MAGNETIC", medium, float(k), quad)
        if noise_eps > 0:
            A = ffop.add_noise(A, noise_eps, noise_seed + i)
        solver = _NormalSolver(A, cfg.resolve(A))
        out = np.empty(z_pts.shape[0])
        for j, z in enumerate(z_pts):
            _, h_inf = forward.dipole_far_fields(DipoleSource(z=z, q=pol, k=float(k)), quad.nodes)
            g_flat = solver.solve(quad.frame_components(h_inf).reshape(-1))
            if herglotz:
                g = TangentVectorField.from_flat(quad, g_flat)
                out[j] = forward.herglotz_ball_norm(g, float(k), medium.radius, magnetic=True)
            else:
                out[j] = _field_norm(quad, g_flat)
        return out

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        rows = list(pool.map(one, enumerate(ks)))
    per_z = np.vstack(rows)
    meta = {
        "kind": "tev",
        "medium": medium.to_json(),
        "quad": f"{quad.kind}:{quad.order}",
        "alpha": cfg.alpha if isinstance(cfg.alpha, str) else float(cfg.alpha),
        "noise_eps": float(noise_eps),
        "noise_seed": int(noise_seed),
        "z_count": zs.count,
        "z_radius": zs.r_z,
        "z_center": list(zs.center),
        "z_seed": zs.seed,
        "herglotz": bool(herglotz),
    }
    return ScanResult("tev", ks, per_z.mean(axis=1), per_z, meta)


def stekloff_scan(scene, R, k, lam_grid, quad, zs=ZSampling(), cfg=TikhonovConfig(),
                  s_kind="CURL_CURL", noise_eps=0.0, noise_seed=1):
    """Stekloff-eigenvalue scan of the modified far field equation.

    The magnetic operator of the scene is assembled once (it does not
    depend on lambda); per grid value the impedance-ball operator for
    (R, lambda) is subtracted and F_M g = E_{e,inf}(.; z, q) is solved.
    lam_grid may be a real 1-D grid or a complex 2-D rectangle; resonant
    lambda values (impedance ball has no unique solution) are recorded
    as NaN gaps.
    """
    if R < scene.radius:
        raise ValueError("reference ball must contain the scatterer")
    zs.validate_inside(scene.radius)
    lam = np.asarray(lam_grid)
    if lam.ndim not in (1, 2):
        raise ValueError("lambda grid must be a 1-D list or 2-D rectangle")
    k = float(k)
    F_m = ffop.assemble("MAGNETIC", scene, k, quad)
    if noise_eps > 0:
        F_m = ffop.add_noise(F_m, noise_eps, noise_seed)
    z_pts = zs.points()
    pol = np.array([1.0, 0.0, 0.0])
    rhs_flat = []
    for z in z_pts:
        e_inf, _ = forward.dipole_far_fields(DipoleSource(z=z, q=pol, k=k), quad.nodes)
        rhs_flat.append(quad.frame_components(e_inf).reshape(-1))

    flat = lam.reshape(-1)

    def one(lam_val):
        try:
            F_s = ffop.assemble("IMPEDANCE", ImpedanceBall(R=R, lam=complex(lam_val), s_kind=s_kind), k, quad)
        except ResonantParameterError:
            return np.full(len(rhs_flat), np.nan)
        A = FarFieldMatrix(F_m.matrix - F_s.matrix, "MODIFIED", k, quad,
                           medium=scene, ball=F_s.ball, noise_eps=F_m.noise_eps,
                           seed=F_m.seed)
        solver = _NormalSolver(A, cfg.resolve(A))
        return np.array([_field_norm(quad, solver.solve(b)) for b in rhs_flat])

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        rows = list(pool.map(one, flat))
    per_z = np.stack(rows).reshape(lam.shape + (len(rhs_flat),))
    meta = {
        "kind": "stekloff",
        "medium": scene.to_json(),
        "B": float(R),
        "k": k,
        "s_kind": s_kind,
        "quad": f"{quad.kind}:{quad.order}",
        "alpha": cfg.alpha if isinstance(cfg.alpha, str) else float(cfg.alpha),
        "noise_eps": float(noise_eps),
        "noise_seed": int(noise_seed),
        "z_count": zs.count,
        "z_radius": zs.r_z,
        "z_center": list(zs.center),
        "z_seed": zs.seed,
    }
    return ScanResult("stekloff", lam, per_z.mean(axis=-1), per_z, meta)


def find_peaks(result, min_prominence=2.0):
    """Local indicator maxima exceeding min_prominence times the median.

    Real grids use strict two-sided dominance, complex rectangles strict
    8-neighborhood dominance; NaN gaps never produce peaks. Returns the
    parameter values of the peaks. The default threshold is calibrated
    so the reference scans detect their oracle eigenvalues without
    flagging background wiggles; pass a higher value for noisy data.
    """
    ind = result.indicator
    finite = np.isfinite(ind)
    if not np.any(finite):
        return []
    thresh = min_prominence * float(np.median(ind[finite]))
    peaks = []
    if ind.ndim == 1:
        for i in range(1, ind.size - 1):
            trio = ind[i - 1 : i + 2]
            if np.all(np.isfinite(trio)) and ind[i] > trio[0] and ind[i] > trio[2] \
                    and ind[i] >= thresh:
                peaks.append(result.param[i])
    else:
        ny, nx = ind.shape
        for i in range(1, ny - 1):
            for j in range(1, nx - 1):
                block = ind[i - 1 : i + 2, j - 1 : j + 2]
                if not np.all(np.isfinite(block)):
                    continue
                c = ind[i, j]
                if c >= thresh and np.sum(block >= c) == 1:
                    peaks.append(result.param[i, j])
    return peaks


def result_to_csv(result):
    """CSV text for real grids: metadata comment, then one row per point."""
    if result.param.ndim != 1:
        raise ValueError("CSV export is for real (1-D) grids; use JSON for rectangles")
    nz = result.per_z.shape[-1]
    name = "k" if result.kind == "tev" else "lambda"
    lines = ["# " + json.dumps(result.metadata, sort_keys=True)]
    lines.append(",".join([name, "indicator_mean"] + [f"indicator_z{j+1}" for j in range(nz)]))
    for i, p in enumerate(result.param):
        row = [f"{p:.16e}", f"{result.indicator[i]:.16e}"]
        row += [f"{v:.16e}" for v in result.per_z[i]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def result_to_json(result):
    """JSON text for complex rectangles: axes plus row-major log10 indicator."""
    if result.param.ndim != 2:
        raise ValueError("JSON export is for complex rectangles; use CSV for real grids")
    re_axis = result.param.real[0, :].tolist()
    im_axis = result.param.imag[:, 0].tolist()
    with np.errstate(divide="ignore", invalid="ignore"):
        log10 = np.log10(result.indicator)
    rows = [[None if not np.isfinite(v) else v for v in row] for row in log10.tolist()]
    doc = {
        "metadata": result.metadata,
        "re_axis": re_axis,
        "im_axis": im_axis,
        "log10_indicator": rows,
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"
