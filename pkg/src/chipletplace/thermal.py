"""Steady-state heat conduction on a voxelized package stack.

Finite-volume, 7-point stencil with series (harmonic) face conductances.
Convective top and bottom faces enter as Robin conductances to ambient;
the four side walls are adiabatic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .model import BUMP_ROLES, ArchitectureSpec, ConfigError, Placement

AIR_CONDUCTIVITY = 0.026  # W/(m K)

# z cells per layer role; everything not listed gets one
CELLS_PER_LAYER = {"chiplet": 2, "heatsink": 2}


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class CellMaterials:
    """Per-material property table indexed by the grid's material ids.

    Index 0 is always air (zero stiffness and density).
    """

    names: tuple[str, ...]
    k: np.ndarray  # W/(m K)
    cte: np.ndarray  # ppm/C
    E: np.ndarray  # GPa
    nu: np.ndarray
    rho: np.ndarray  # kg/m^3, nan when unknown

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class VoxelGrid:
    nx: int
    ny: int
    dx: float  # mm
    dy: float  # mm
    dz: np.ndarray  # (nz,) mm
    roles: tuple[str, ...]  # layer role of each z index
    material: np.ndarray  # (nz, ny, nx) material ids
    source: np.ndarray  # (nz, ny, nx) W/m^3
    props: CellMaterials
    footprint: np.ndarray  # (ny, nx) chiplet index or -1
    chiplet_names: tuple[str, ...] = ()
    heatsink_area_factor: float = 1.0

    @property
    def nz(self) -> int:
        return len(self.dz)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nz, self.ny, self.nx)

    @property
    def n_cells(self) -> int:
        return self.nz * self.ny * self.nx

    def cell_volume(self) -> np.ndarray:
        """(nz, 1, 1) cell volumes in m^3."""
        return (self.dx * self.dy * self.dz * 1e-9)[:, None, None]

    def cell_power(self) -> np.ndarray:
        return self.source * self.cell_volume()

    def z_indices(self, role: str) -> np.ndarray:
        idx = np.flatnonzero(np.array(self.roles) == role)
        if idx.size == 0:
            raise KeyError(f"no layer with role {role!r}")
        return idx

    def plane_index(self, plane: int | str) -> int:
        """Resolve a plane selector: a z index, or a layer role meaning its top cell."""
        if isinstance(plane, str):
            return int(self.z_indices(plane)[-1])
        if not -self.nz <= plane < self.nz:
            raise KeyError(f"plane {plane} out of range for {self.nz} z cells")
        return int(plane) % self.nz

    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    def y_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.dy


@dataclass
class ScalarField:
    """Cell-centered values on a (nz, ny, nx) grid; plane fields have nz == 1."""

    values: np.ndarray
    dx: float
    dy: float
    dz: np.ndarray
    roles: tuple[str, ...]
    name: str = "temperature"
    unit: str = "C"
    meta: dict = field(default_factory=dict)

    @classmethod
    def on(cls, g: VoxelGrid, values: np.ndarray, **kw) -> "ScalarField":
        return cls(values=values, dx=g.dx, dy=g.dy, dz=g.dz, roles=g.roles, **kw)

    @property
    def shape(self):
        return self.values.shape

    def plane_index(self, plane: int | str) -> int:
        if isinstance(plane, str):
            idx = [i for i, r in enumerate(self.roles) if r == plane]
            if not idx:
                raise KeyError(f"no layer with role {plane!r}")
            return idx[-1]
        nz = self.values.shape[0]
        if not -nz <= plane < nz:
            raise KeyError(f"plane {plane} out of range for {nz} z cells")
        return int(plane) % nz

    def plane(self, plane: int | str) -> np.ndarray:
        return self.values[self.plane_index(plane)]


# ---------------------------------------------------------------------------
# grid construction


def _cell_materials(spec: ArchitectureSpec) -> CellMaterials:
    names, k, cte, E, nu, rho = ["air"], [AIR_CONDUCTIVITY], [0.0], [0.0], [0.0], [0.0]
    for m in spec.materials.values():
        names.append(m.name)
        k.append(m.thermal_conductivity)
        cte.append(m.cte)
        E.append(m.youngs_modulus)
        nu.append(m.poisson_ratio)
        rho.append(np.nan if m.density is None else m.density)
    # bump layers: rule-of-mixtures blend of bump alloy and underfill
    f = spec.package.bump_fraction
    fill = spec.materials.get(spec.package.underfill) if spec.package.underfill else None
    for role in BUMP_ROLES:
        bump = spec.materials[spec.package.layer(role).material]
        other = fill if fill is not None else bump
        names.append(f"{role}_mix")
        k.append(f * bump.thermal_conductivity + (1 - f) * other.thermal_conductivity)
        cte.append(f * bump.cte + (1 - f) * other.cte)
        E.append(f * bump.youngs_modulus + (1 - f) * other.youngs_modulus)
        nu.append(f * bump.poisson_ratio + (1 - f) * other.poisson_ratio)
        if bump.density is None or other.density is None:
            rho.append(np.nan)
        else:
            rho.append(f * bump.density + (1 - f) * other.density)
    arr = lambda v: np.asarray(v, dtype=float)
    return CellMaterials(tuple(names), arr(k), arr(cte), arr(E), arr(nu), arr(rho))


def _distribute_power(chiplet, pose, xc, yc, cells) -> np.ndarray:
    """Per-cell power (W) for one chiplet; ``cells`` are (j, i) index arrays."""
    grid = chiplet.power_grid()
    R, C = grid.shape
    w, h = chiplet.width, chiplet.height
    # global -> chiplet-local frame (undo the rotation)
    gx = xc[cells[1]] - pose.x
    gy = yc[cells[0]] - pose.y
    t = np.deg2rad(pose.rotation)
    u = np.cos(t) * gx + np.sin(t) * gy
    v = -np.sin(t) * gx + np.cos(t) * gy
    col = np.clip(((u + w / 2) / w * C).astype(int), 0, C - 1)
    row = np.clip(((v + h / 2) / h * R).astype(int), 0, R - 1)
    bin_id = row * C + col
    counts = np.bincount(bin_id, minlength=R * C)
    power = np.zeros(len(bin_id))
    flat = grid.ravel()
    for b in range(R * C):
        if flat[b] == 0:
            continue
        if counts[b]:
            power[bin_id == b] += flat[b] / counts[b]
        else:
            # bin finer than the mesh: hand it to the nearest covered cell
            bu = ((b % C) + 0.5) / C * w - w / 2
            bv = ((b // C) + 0.5) / R * h - h / 2
            power[np.argmin((u - bu) ** 2 + (v - bv) ** 2)] += flat[b]
    return power


def build_grid(spec: ArchitectureSpec, p: Placement, resolution: float = 1.0) -> VoxelGrid:
    """Voxelize the stack for placement ``p`` at ``resolution`` cells per mm."""
    if not resolution > 0:
        raise ValueError("resolution must be > 0")
    pkg = spec.package
    nx = max(1, int(round(pkg.interposer_width * resolution)))
    ny = max(1, int(round(pkg.interposer_height * resolution)))
    dx, dy = pkg.interposer_width / nx, pkg.interposer_height / ny
    xc = (np.arange(nx) + 0.5) * dx
    yc = (np.arange(ny) + 0.5) * dy

    props = _cell_materials(spec)
    footprint = np.full((ny, nx), -1, dtype=int)
    for ci, c in enumerate(spec.chiplets):
        x0, y0, x1, y1 = p.rect(c)
        inx = (xc >= x0) & (xc < x1)
        iny = (yc >= y0) & (yc < y1)
        mask = iny[:, None] & inx[None, :]
        if not mask.any():
            raise ConfigError(f"chiplet {c.name} covers no grid cell at {resolution:g} cells/mm; resolution too coarse")
        if (footprint[mask] >= 0).any():
            raise ConfigError(f"chiplet {c.name} overlaps another chiplet on the grid")
        footprint[mask] = ci
    under = footprint >= 0

    dz, roles, mats = [], [], []
    for layer in pkg.layers:
        n = CELLS_PER_LAYER.get(layer.role, 1)
        if layer.role in BUMP_ROLES:
            mid = props.index(f"{layer.role}_mix")
        else:
            mid = props.index(layer.material)
        if layer.role in ("microbump", "chiplet", "tim"):
            plane = np.where(under, mid, 0)
        else:
            plane = np.full((ny, nx), mid)
        for _ in range(n):
            dz.append(layer.thickness * 1e-3 / n)
            roles.append(layer.role)
            mats.append(plane)
    dz = np.asarray(dz)
    material = np.stack(mats).astype(int)

    chip_z = np.flatnonzero(np.array(roles) == "chiplet")
    column_power = np.zeros((ny, nx))
    for ci, c in enumerate(spec.chiplets):
        cells = np.nonzero(footprint == ci)
        column_power[cells] += _distribute_power(c, p[c.name], xc, yc, cells)
    power = np.zeros((len(dz), ny, nx))
    t_chip = dz[chip_z].sum()
    for z in chip_z:
        power[z] = column_power * (dz[z] / t_chip)
    vol = (dx * dy * dz * 1e-9)[:, None, None]
    return VoxelGrid(
        nx=nx, ny=ny, dx=dx, dy=dy, dz=dz, roles=tuple(roles), material=material,
        source=power / vol, props=props, footprint=footprint,
        chiplet_names=spec.chiplet_names, heatsink_area_factor=pkg.heatsink_area_factor,
    )


# ---------------------------------------------------------------------------
# solve


def _series(a1, k1, a2, k2):
    # conductance through two half-cells of lengths a1, a2 (m)
    return 1.0 / (a1 / (2 * k1) + a2 / (2 * k2))


def assemble(g: VoxelGrid, h_top: float, h_bottom: float):
    """Conductance matrix (W/K) on T - ambient, plus the Robin conductances.

    Returns ``(A, g_top, g_bottom)`` with ``g_top``/``g_bottom`` the (ny, nx)
    conductances from the top/bottom cell centers to ambient.
    """
    nz, ny, nx = g.shape
    k = g.props.k[g.material]
    dx, dy = g.dx * 1e-3, g.dy * 1e-3
    dz = (g.dz * 1e-3)[:, None, None]
    idx = np.arange(g.n_cells).reshape(nz, ny, nx)
    rows, cols, vals = [], [], []
    diag = np.zeros((nz, ny, nx))

    def link(a, b, cond):
        rows.extend((a.ravel(), b.ravel()))
        cols.extend((b.ravel(), a.ravel()))
        vals.extend((-cond.ravel(), -cond.ravel()))

    # x faces
    area = dy * np.broadcast_to(dz, (nz, ny, nx - 1))
    gx = area * _series(dx, k[:, :, :-1], dx, k[:, :, 1:])
    link(idx[:, :, :-1], idx[:, :, 1:], gx)
    diag[:, :, :-1] += gx
    diag[:, :, 1:] += gx
    # y faces
    area = dx * np.broadcast_to(dz, (nz, ny - 1, nx))
    gy = area * _series(dy, k[:, :-1, :], dy, k[:, 1:, :])
    link(idx[:, :-1, :], idx[:, 1:, :], gy)
    diag[:, :-1, :] += gy
    diag[:, 1:, :] += gy
    # z faces
    gz = dx * dy * _series(dz[:-1], k[:-1], dz[1:], k[1:])
    link(idx[:-1], idx[1:], gz)
    diag[:-1] += gz
    diag[1:] += gz
    # Robin faces
    h_eff = h_top * g.heatsink_area_factor
    g_top = dx * dy / (dz[-1, 0, 0] / (2 * k[-1]) + 1.0 / h_eff)
    g_bot = dx * dy / (dz[0, 0, 0] / (2 * k[0]) + 1.0 / h_bottom)
    diag[-1] += g_top
    diag[0] += g_bot

    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(g.n_cells, g.n_cells)
    )
    return A, g_top, g_bot


def solve_steady_state(
    g: VoxelGrid,
    h_top: float,
    h_bottom: float = 10.0,
    ambient: float = 23.0,
    rtol: float = 1e-10,
    maxiter: int | None = None,
    x0: np.ndarray | None = None,
) -> ScalarField:
    """Temperature field (C) for the grid's sources.

    Jacobi-preconditioned conjugate gradients on the SPD conductance system.
    ``meta`` of the returned field carries iterations, relative residual and
    the convective heat balance.
    """
    if not (h_top > 0 and h_bottom > 0):
        raise ValueError("h_top and h_bottom must be > 0")
    if rtol > 1e-8:
        raise ValueError("rtol must be <= 1e-8")
    A, g_top, g_bot = assemble(g, h_top, h_bottom)
    b = g.cell_power().ravel()
    n = g.n_cells
    if maxiter is None:
        maxiter = int(50 * n ** (1 / 3) * 100)
    injected = float(b.sum())
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        theta = np.zeros(n)
        iters, resid = 0, 0.0
    else:
        inv_diag = 1.0 / A.diagonal()
        M = LinearOperator((n, n), matvec=lambda r: inv_diag * r, dtype=float)
        count = [0]

        def _tick(_):
            count[0] += 1

        start = None if x0 is None else (np.asarray(x0, dtype=float).ravel() - ambient)
        theta, info = cg(A, b, x0=start, rtol=rtol, atol=0.0, maxiter=maxiter, M=M, callback=_tick)
        resid = float(np.linalg.norm(b - A @ theta) / bnorm)
        iters = count[0]
        if info != 0 or resid > 1e-8:
            raise SolverError(f"CG did not converge in {iters} iterations (relative residual {resid:.3e})")
    theta = theta.reshape(g.shape)
    out_top = float((g_top * theta[-1]).sum())
    out_bot = float((g_bot * theta[0]).sum())
    meta = {
        "iterations": iters,
        "residual": resid,
        "injected_w": injected,
        "outflow_top_w": out_top,
        "outflow_bottom_w": out_bot,
        "energy_error": abs(out_top + out_bot - injected) / injected if injected > 0 else abs(out_top + out_bot),
        "ambient": ambient,
    }
    return ScalarField.on(g, theta + ambient, name="temperature", unit="C", meta=meta)


def peak_temperature(t: ScalarField) -> float:
    return float(np.max(t.values))


# ---------------------------------------------------------------------------
# gradients


@dataclass
class GradientStats:
    mean: float
    std: float
    max: float
    field: ScalarField

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "max": self.max}


def plane_gradient(values: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """|grad| on a 2D (ny, nx) array: central differences inside, one-sided at the edges."""
    f = np.asarray(values, dtype=float)
    gx = np.empty_like(f)
    gy = np.empty_like(f)
    gx[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2 * dx)
    gx[:, 0] = (f[:, 1] - f[:, 0]) / dx
    gx[:, -1] = (f[:, -1] - f[:, -2]) / dx
    gy[1:-1, :] = (f[2:, :] - f[:-2, :]) / (2 * dy)
    gy[0, :] = (f[1, :] - f[0, :]) / dy
    gy[-1, :] = (f[-1, :] - f[-2, :]) / dy
    return np.sqrt(gx * gx + gy * gy)


def surface_gradient_stats(t: ScalarField, plane: int | str = "interposer") -> GradientStats:
    """Mean, population std and max of |grad T| (C/mm) on one horizontal plane."""
    z = t.plane_index(plane)
    values = t.values[z]
    if min(values.shape) < 3:
        raise ValueError(f"plane needs at least 3 cells per axis, got {values.shape}")
    mag = plane_gradient(values, t.dx, t.dy)
    field_ = ScalarField(
        values=mag[None], dx=t.dx, dy=t.dy, dz=t.dz[z:z + 1], roles=(t.roles[z],),
        name="temperature_gradient", unit="C/mm", meta={"z": z},
    )
    return GradientStats(float(mag.mean()), float(mag.std()), float(mag.max()), field_)
