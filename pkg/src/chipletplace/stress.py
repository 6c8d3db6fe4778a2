"""Surrogate thermo-mechanical stress.

Two load cases are superposed per cell:

* CTE mismatch against the interposer under the local temperature rise,
  as equibiaxial plane stress ``E/(1-nu) * |a - a_ref| * dT``;
* self-weight of everything stacked on the interposer, carried by the
  interposer as a simply supported plate. Each row (column) of cells is
  treated as a beam along x (y) and the transverse shear at the neutral
  axis is ``3V / 2A``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ArchitectureSpec
from .thermal import ScalarField, VoxelGrid

COMPONENTS = ("sigma_x", "sigma_y", "sigma_z", "tau_xy", "tau_yz", "tau_zx")


class StressError(RuntimeError):
    pass


@dataclass(frozen=True)
class StressTensor:
    sigma_x: float = 0.0
    sigma_y: float = 0.0
    sigma_z: float = 0.0
    tau_xy: float = 0.0
    tau_yz: float = 0.0
    tau_zx: float = 0.0

    def __neg__(self):
        return StressTensor(*(-getattr(self, c) for c in COMPONENTS))


@dataclass
class TensorField:
    """Six (nz, ny, nx) component arrays in MPa."""

    sigma_x: np.ndarray
    sigma_y: np.ndarray
    sigma_z: np.ndarray
    tau_xy: np.ndarray
    tau_yz: np.ndarray
    tau_zx: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "TensorField":
        return cls(*(np.zeros(shape) for _ in COMPONENTS))

    def __add__(self, other: "TensorField") -> "TensorField":
        return TensorField(*(getattr(self, c) + getattr(other, c) for c in COMPONENTS))

    def at(self, z: int, j: int, i: int) -> StressTensor:
        return StressTensor(*(float(getattr(self, c)[z, j, i]) for c in COMPONENTS))

    @property
    def shape(self):
        return self.sigma_x.shape


def von_mises(s) -> float | np.ndarray:
    """Equivalent stress from a StressTensor or a TensorField (elementwise)."""
    sx, sy, sz = s.sigma_x, s.sigma_y, s.sigma_z
    txy, tyz, tzx = s.tau_xy, s.tau_yz, s.tau_zx
    normal = 0.5 * ((sx - sy) ** 2 + (sy - sz) ** 2 + (sz - sx) ** 2)
    shear = 3.0 * (txy**2 + tyz**2 + tzx**2)
    return np.sqrt(normal + shear)


def thermo_elastic_stress(t: ScalarField, g: VoxelGrid) -> TensorField:
    """In-plane CTE-mismatch stress; sigma_z and shears are zero."""
    if t.values.shape != g.shape:
        raise ValueError(f"temperature field shape {t.values.shape} does not match grid {g.shape}")
    ambient = t.meta.get("ambient", 23.0)
    z_int = g.z_indices("interposer")[0]
    ref_cte = g.props.cte[g.material[z_int]]  # (ny, nx)
    E = g.props.E[g.material] * 1e3  # MPa
    nu = g.props.nu[g.material]
    d_alpha = np.abs(g.props.cte[g.material] - ref_cte[None]) * 1e-6
    sigma = E / (1.0 - nu) * d_alpha * (t.values - ambient)
    out = TensorField.zeros(g.shape)
    out.sigma_x = sigma.copy()
    out.sigma_y = sigma.copy()
    return out


def overburden(g: VoxelGrid, gravity: float) -> np.ndarray:
    """Weight per unit area (Pa) resting on the interposer, per (ny, nx) column."""
    z_top = g.z_indices("interposer")[-1]
    above = g.material[z_top + 1:]
    rho = g.props.rho[above]
    if np.isnan(rho).any():
        missing = sorted({g.props.names[m] for m in np.unique(above[np.isnan(rho)])})
        raise StressError(f"missing density for material(s): {', '.join(missing)}")
    dz = (g.dz[z_top + 1:] * 1e-3)[:, None, None]
    return gravity * (rho * dz).sum(axis=0)


def beam_shear(q: np.ndarray, dx: float, axis: int) -> np.ndarray:
    """Shear force at cell centers of simply supported beams along ``axis``.

    ``q`` is a line load per cell (N/m per unit width), ``dx`` the cell
    length in m. Returns N per unit width.
    """
    q = np.moveaxis(q, axis, -1)
    n = q.shape[-1]
    L = n * dx
    x = (np.arange(n) + 0.5) * dx
    r_left = (q * dx * (L - x)).sum(axis=-1, keepdims=True) / L
    before = np.cumsum(q * dx, axis=-1) - q * dx  # load strictly left of each cell
    V = r_left - before - 0.5 * q * dx
    return np.moveaxis(V, -1, axis)


def self_weight_shear(g: VoxelGrid, spec: ArchitectureSpec) -> TensorField:
    """Transverse shear in the interposer from the stacked self-weight."""
    out = TensorField.zeros(g.shape)
    gravity = spec.package.gravity
    if gravity == 0:
        return out
    w = overburden(g, gravity)
    t_int = spec.package.layer("interposer").thickness * 1e-6  # m
    Vx = beam_shear(w, g.dx * 1e-3, axis=1)
    Vy = beam_shear(w, g.dy * 1e-3, axis=0)
    tau_zx = 1.5 * Vx / t_int * 1e-6
    tau_yz = 1.5 * Vy / t_int * 1e-6
    for z in g.z_indices("interposer"):
        out.tau_zx[z] = tau_zx
        out.tau_yz[z] = tau_yz
    return out


@dataclass
class StressResult:
    field: ScalarField
    peak: float
    tensors: TensorField


def reduce_stress(values: np.ndarray, mode: str = "peak", mask: np.ndarray | None = None) -> float:
    v = values if mask is None else values[mask]
    if v.size == 0:
        return 0.0
    if mode == "peak":
        return float(v.max())
    if mode == "p99":
        return float(np.percentile(v, 99))
    raise ValueError(f"unknown stress reduction {mode!r}")


def evaluate_stress(
    t: ScalarField,
    g: VoxelGrid,
    spec: ArchitectureSpec,
    thermal: bool = True,
    gravity: bool = True,
) -> StressResult:
    """von Mises field of the superposed load cases and its scalar reduction."""
    tensors = TensorField.zeros(g.shape)
    if thermal:
        tensors = tensors + thermo_elastic_stress(t, g)
    if gravity:
        tensors = tensors + self_weight_shear(g, spec)
    svm = von_mises(tensors)
    solid = g.material != 0
    peak = reduce_stress(svm, spec.package.stress_reduction, solid)
    field = ScalarField.on(g, svm, name="von_mises", unit="MPa")
    return StressResult(field=field, peak=peak, tensors=tensors)
