"""Deterministic desk-scale synthetic datasets with independent oracles.

Three generators, all pure functions of their spec (seed included):

* sine-sum Poisson pairs on [-1, 1]^2 with the forcing computed
  analytically (the pair satisfies -lap(u) = a exactly);
* Gaussian-source Poisson solved by a 5-point finite-difference
  conjugate-gradient solver;
* a 1-D constant-velocity periodic advection trajectory for temporal
  tests (exact analytic snapshots).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergenceError, TooManyRequestedError
from .kernels import PointCloud
from .rng import Rng64
from .serialize import load_arrays, save_arrays

__all__ = [
    "SampleRecord",
    "Dataset",
    "CSinesSpec",
    "PoissonGaussSpec",
    "ToyTrajectorySpec",
    "gen_csines",
    "solve_poisson_fd",
    "gen_poisson_gauss",
    "subsample_cloud",
    "gen_toy_trajectory",
    "TrajectoryRecord",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class SampleRecord:
    input_cloud: PointCloud  # coords + condition channels a(x)
    queries: PointCloud
    targets: np.ndarray  # (N_q, C)


@dataclass(frozen=True)
class TrajectoryRecord:
    coords: np.ndarray  # (N, d)
    times: np.ndarray  # (T,)
    snapshots: np.ndarray  # (T, N)


@dataclass(frozen=True)
class Dataset:
    kind: str
    dim: int
    samples: tuple
    meta: dict


# -- sine-sum Poisson --------------------------------------------------------


@dataclass(frozen=True)
class CSinesSpec:
    num_samples: int = 256
    max_mode: int = 3
    amp_lo: float = -1.0
    amp_hi: float = 1.0
    num_points: int = 64
    num_queries: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.max_mode < 1:
            raise ValueError("max_mode must be >= 1")


def _sine_basis(coords: np.ndarray, k1: int, k2: int) -> np.ndarray:
    s1 = np.sin(np.pi * k1 * (coords[:, 0] + 1.0) / 2.0)
    s2 = np.sin(np.pi * k2 * (coords[:, 1] + 1.0) / 2.0)
    return s1 * s2


def _csines_fields(amps: np.ndarray, coords: np.ndarray, kmax: int) -> tuple[np.ndarray, np.ndarray]:
    """(u, forcing) at coords; forcing = -lap(u) computed analytically."""
    u = np.zeros(coords.shape[0])
    f = np.zeros(coords.shape[0])
    idx = 0
    for k1 in range(1, kmax + 1):
        for k2 in range(1, kmax + 1):
            basis = _sine_basis(coords, k1, k2)
            u += amps[idx] * basis
            f += amps[idx] * (np.pi**2) * (k1**2 + k2**2) / 4.0 * basis
            idx += 1
    return u, f


def gen_csines(spec: CSinesSpec) -> Dataset:
    root = Rng64(spec.seed)
    samples = []
    n_modes = spec.max_mode**2
    for s in range(spec.num_samples):
        rng = root.child(s)
        amps = rng.uniform_array((n_modes,), spec.amp_lo, spec.amp_hi)
        in_pts = rng.uniform_array((spec.num_points, 2), -1.0, 1.0)
        q_pts = rng.uniform_array((spec.num_queries, 2), -1.0, 1.0)
        _, f_in = _csines_fields(amps, in_pts, spec.max_mode)
        u_q, _ = _csines_fields(amps, q_pts, spec.max_mode)
        samples.append(
            SampleRecord(
                input_cloud=PointCloud(in_pts, channels=f_in[:, None]),
                queries=PointCloud(q_pts),
                targets=u_q[:, None],
            )
        )
    return Dataset(
        kind="csines",
        dim=2,
        samples=tuple(samples),
        meta={
            "seed": spec.seed,
            "max_mode": spec.max_mode,
            "amp_range": [spec.amp_lo, spec.amp_hi],
            "num_points": spec.num_points,
            "num_queries": spec.num_queries,
        },
    )


# -- finite-difference Poisson solver ----------------------------------------


def solve_poisson_fd(f_grid: np.ndarray, max_iter: int | None = None, tol: float = 1e-10) -> np.ndarray:
    """Solve -lap_h(u) = f on [-1, 1]^2 with zero Dirichlet boundary.

    ``f_grid`` is (H, H) including boundary rows/columns; the returned u is
    (H, H) with zero boundary. Conjugate gradient on the SPD 5-point
    system, run to relative residual <= tol.
    """
    f_grid = np.asarray(f_grid, dtype=np.float64)
    h_pts = f_grid.shape[0]
    if f_grid.shape != (h_pts, h_pts) or h_pts < 3:
        raise ValueError("f_grid must be square with at least 3 points per side")
    dx = 2.0 / (h_pts - 1)
    f = f_grid[1:-1, 1:-1]
    n = h_pts - 2

    def apply_a(u_int: np.ndarray) -> np.ndarray:
        u = np.zeros((h_pts, h_pts))
        u[1:-1, 1:-1] = u_int
        return (
            4.0 * u[1:-1, 1:-1] - u[:-2, 1:-1] - u[2:, 1:-1] - u[1:-1, :-2] - u[1:-1, 2:]
        ) / dx**2

    b = f
    bnorm = np.linalg.norm(b)
    u = np.zeros((n, n))
    if bnorm == 0.0:
        return np.zeros((h_pts, h_pts))
    r = b - apply_a(u)
    p = r.copy()
    rs = float((r * r).sum())
    cap = max_iter if max_iter is not None else 20 * n * n
    for _ in range(cap):
        if np.sqrt(rs) <= tol * bnorm:
            break
        ap = apply_a(p)
        alpha = rs / float((p * ap).sum())
        u += alpha * p
        r -= alpha * ap
        rs_new = float((r * r).sum())
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) > tol * bnorm:
        raise NoConvergenceError(f"CG did not reach tol={tol} in {cap} iterations")
    out = np.zeros((h_pts, h_pts))
    out[1:-1, 1:-1] = u
    return out


def bilinear_interp(grid_vals: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Interpolate an (H, H) field on [-1, 1]^2 at (n, 2) points."""
    h_pts = grid_vals.shape[0]
    dx = 2.0 / (h_pts - 1)
    x = (np.clip(pts[:, 0], -1.0, 1.0) + 1.0) / dx
    y = (np.clip(pts[:, 1], -1.0, 1.0) + 1.0) / dx
    i0 = np.clip(np.floor(x).astype(int), 0, h_pts - 2)
    j0 = np.clip(np.floor(y).astype(int), 0, h_pts - 2)
    tx = x - i0
    ty = y - j0
    v00 = grid_vals[i0, j0]
    v10 = grid_vals[i0 + 1, j0]
    v01 = grid_vals[i0, j0 + 1]
    v11 = grid_vals[i0 + 1, j0 + 1]
    return (
        v00 * (1 - tx) * (1 - ty)
        + v10 * tx * (1 - ty)
        + v01 * (1 - tx) * ty
        + v11 * tx * ty
    )


# -- Gaussian-source Poisson -------------------------------------------------


@dataclass(frozen=True)
class PoissonGaussSpec:
    num_samples: int = 256
    sources_lo: int = 1
    sources_hi: int = 4
    amp_lo: float = -2.0
    amp_hi: float = 2.0
    width_lo: float = 0.1
    width_hi: float = 0.4
    solver_res: int = 65
    num_points: int = 64
    num_queries: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.solver_res < 17:
            raise ValueError("solver_res must be >= 17")
        if not (0 < self.width_lo <= self.width_hi):
            raise ValueError("widths must be positive")


def _gauss_sources(rng: Rng64, spec: PoissonGaussSpec):
    n_src = spec.sources_lo + rng.integer(spec.sources_hi - spec.sources_lo + 1)
    sources = []
    for _ in range(n_src):
        cx = rng.uniform(-0.8, 0.8)
        cy = rng.uniform(-0.8, 0.8)
        amp = rng.uniform(spec.amp_lo, spec.amp_hi)
        width = rng.uniform(spec.width_lo, spec.width_hi)
        sources.append((cx, cy, amp, width))
    return sources


def _gauss_eval(sources, pts: np.ndarray) -> np.ndarray:
    out = np.zeros(pts.shape[0])
    for cx, cy, amp, width in sources:
        r2 = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2
        out += amp * np.exp(-r2 / (2.0 * width**2))
    return out


def gen_poisson_gauss(spec: PoissonGaussSpec) -> Dataset:
    root = Rng64(spec.seed)
    h_pts = spec.solver_res
    axis = np.linspace(-1.0, 1.0, h_pts)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    grid_pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    samples = []
    for s in range(spec.num_samples):
        rng = root.child(s)
        sources = _gauss_sources(rng, spec)
        f_grid = _gauss_eval(sources, grid_pts).reshape(h_pts, h_pts)
        u_grid = solve_poisson_fd(f_grid)
        in_pts = subsample_cloud((2, -1.0, 1.0), spec.num_points, rng).coords
        q_pts = subsample_cloud((2, -1.0, 1.0), spec.num_queries, rng).coords
        f_in = _gauss_eval(sources, in_pts)
        u_q = bilinear_interp(u_grid, q_pts)
        samples.append(
            SampleRecord(
                input_cloud=PointCloud(in_pts, channels=f_in[:, None]),
                queries=PointCloud(q_pts),
                targets=u_q[:, None],
            )
        )
    return Dataset(
        kind="poisson-gauss",
        dim=2,
        samples=tuple(samples),
        meta={
            "seed": spec.seed,
            "solver_res": spec.solver_res,
            "num_points": spec.num_points,
            "num_queries": spec.num_queries,
        },
    )


# -- point-cloud subsampling -------------------------------------------------


def subsample_cloud(source, n: int, rng: Rng64) -> PointCloud:
    """Deterministic cloud draw.

    Grid mode (source is an (N, d) array): seeded shuffle then first n,
    no duplicates. Continuous mode (source is (d, lo, hi)): n uniform
    points in the box.
    """
    if isinstance(source, tuple) and len(source) == 3:
        d, lo, hi = source
        if n < 1:
            raise TooManyRequestedError("need at least one point")
        return PointCloud(rng.uniform_array((n, d), lo, hi))
    pts = np.asarray(source, dtype=np.float64)
    if n > pts.shape[0]:
        raise TooManyRequestedError(f"requested {n} of {pts.shape[0]} available points")
    order = list(range(pts.shape[0]))
    rng.shuffle(order)
    return PointCloud(pts[order[:n]])


# -- toy advection trajectories ----------------------------------------------


@dataclass(frozen=True)
class ToyTrajectorySpec:
    num_trajectories: int = 16
    num_modes: int = 2
    vel_lo: float = -1.0
    vel_hi: float = 1.0
    num_stamps: int = 5
    t_final: float = 1.0
    num_points: int = 48
    seed: int = 0


def gen_toy_trajectory(spec: ToyTrajectorySpec) -> Dataset:
    """Exact 1-D periodic advection: u(x, t) = u0(wrap(x - v t))."""
    root = Rng64(spec.seed)
    times = np.linspace(0.0, spec.t_final, spec.num_stamps)
    records = []
    for s in range(spec.num_trajectories):
        rng = root.child(s)
        amps = rng.uniform_array((spec.num_modes,), -1.0, 1.0)
        v = rng.uniform(spec.vel_lo, spec.vel_hi)
        coords = rng.uniform_array((spec.num_points, 1), -1.0, 1.0)

        def u0(x):
            out = np.zeros_like(x)
            for k in range(spec.num_modes):
                out += amps[k] * np.sin(np.pi * (k + 1) * x)
            return out

        snaps = np.stack(
            [u0(((coords[:, 0] - v * t + 1.0) % 2.0) - 1.0) for t in times]
        )
        records.append(TrajectoryRecord(coords=coords, times=times.copy(), snapshots=snaps))
    return Dataset(
        kind="toy-advection",
        dim=1,
        samples=tuple(records),
        meta={
            "seed": spec.seed,
            "num_stamps": spec.num_stamps,
            "t_final": spec.t_final,
            "num_points": spec.num_points,
        },
    )


# -- dataset files -----------------------------------------------------------


def save_dataset(ds: Dataset, out_dir) -> dict:
    arrays: dict[str, np.ndarray] = {}
    if ds.kind == "toy-advection":
        arrays["coords"] = np.stack([r.coords for r in ds.samples])
        arrays["times"] = np.stack([r.times for r in ds.samples])
        arrays["snapshots"] = np.stack([r.snapshots for r in ds.samples])
        channel_names = ["u"]
    else:
        arrays["input_coords"] = np.stack([r.input_cloud.coords for r in ds.samples])
        arrays["input_values"] = np.stack([r.input_cloud.channels for r in ds.samples])
        arrays["query_coords"] = np.stack([r.queries.coords for r in ds.samples])
        arrays["target_values"] = np.stack([r.targets for r in ds.samples])
        channel_names = ["a"]
    meta = dict(ds.meta)
    meta.update(
        {
            "kind": ds.kind,
            "dim": ds.dim,
            "num_samples": len(ds.samples),
            "channel_names": channel_names,
        }
    )
    return save_arrays(out_dir, arrays, meta)


def load_dataset(in_dir) -> Dataset:
    arrays, meta = load_arrays(in_dir)
    kind = meta["kind"]
    if kind == "toy-advection":
        samples = tuple(
            TrajectoryRecord(coords=c, times=t, snapshots=s)
            for c, t, s in zip(arrays["coords"], arrays["times"], arrays["snapshots"])
        )
    else:
        samples = tuple(
            SampleRecord(
                input_cloud=PointCloud(ic, channels=iv),
                queries=PointCloud(qc),
                targets=tv,
            )
            for ic, iv, qc, tv in zip(
                arrays["input_coords"],
                arrays["input_values"],
                arrays["query_coords"],
                arrays["target_values"],
            )
        )
    return Dataset(kind=kind, dim=int(meta["dim"]), samples=samples, meta=meta)
