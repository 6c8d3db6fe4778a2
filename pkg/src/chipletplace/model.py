"""Domain model for 2.5D chiplet placement.

Architecture configs are TOML files with four top-level sections:
``package``, ``materials``, ``chiplets`` and ``nets``. Lengths on the
interposer plane are in mm, layer and die thicknesses in um.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import tomli_w

LAYER_ORDER = ("substrate", "c4", "interposer", "microbump", "chiplet", "tim", "heatsink")
ROLES = LAYER_ORDER + ("underfill",)
BUMP_ROLES = ("c4", "microbump")
ROTATIONS = (0, 90, 180, 270)

# kg/m^3, used when a material entry gives a kind but no density
DEFAULT_DENSITY = {
    "silicon": 2330.0,
    "copper": 8900.0,
    "fr4": 1850.0,
    "solder": 8400.0,
    "indium": 7310.0,
    "sio2": 2200.0,
}

CONFIG_DIR = Path(__file__).parent / "configs"

_TOL = 1e-9


class ConfigError(ValueError):
    """Malformed config file or violated invariant."""


class PackingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Material:
    name: str
    thermal_conductivity: float  # W/(m K)
    cte: float  # ppm/C
    youngs_modulus: float  # GPa
    poisson_ratio: float = 0.25
    density: float | None = None  # kg/m^3
    kind: str | None = None

    def __post_init__(self):
        if not self.thermal_conductivity > 0:
            raise ConfigError(f"material {self.name}: thermal_conductivity must be > 0")
        if not self.youngs_modulus > 0:
            raise ConfigError(f"material {self.name}: youngs_modulus must be > 0")
        if not 0 <= self.poisson_ratio < 0.5:
            raise ConfigError(f"material {self.name}: poisson_ratio must be in [0, 0.5)")
        if self.cte < 0:
            raise ConfigError(f"material {self.name}: cte must be >= 0")
        if self.density is not None and self.density < 0:
            raise ConfigError(f"material {self.name}: density must be >= 0")
        if self.kind is not None and self.kind not in DEFAULT_DENSITY:
            raise ConfigError(f"material {self.name}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class LayerSpec:
    role: str
    material: str
    thickness: float  # um

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"unknown layer role {self.role!r}")
        if not self.thickness > 0:
            raise ConfigError(f"layer {self.role}: thickness must be > 0")


@dataclass(frozen=True)
class ChipletSpec:
    name: str
    width: float  # mm
    height: float  # mm
    power: float  # W
    power_map: tuple[tuple[float, ...], ...] | None = None  # rows run along +y
    thickness: float = 150.0  # um
    approximate: bool = False

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ConfigError(f"chiplet {self.name}: width and height must be > 0")
        if self.power < 0:
            raise ConfigError(f"chiplet {self.name}: power must be >= 0")
        if not self.thickness > 0:
            raise ConfigError(f"chiplet {self.name}: thickness must be > 0")
        if self.power_map is not None:
            pm = np.asarray(self.power_map, dtype=float)
            if pm.ndim != 2 or pm.size == 0:
                raise ConfigError(f"chiplet {self.name}: power_map must be a non-empty 2D grid")
            if (pm < 0).any():
                raise ConfigError(f"chiplet {self.name}: power_map cells must be >= 0")
            total = pm.sum()
            if abs(total - self.power) > 1e-6 * max(abs(self.power), 1e-12):
                raise ConfigError(
                    f"chiplet {self.name}: power_map sums to {total:g} W, declared power {self.power:g} W"
                )

    def power_grid(self) -> np.ndarray:
        """Power per map bin (W); a uniform die is a single bin."""
        if self.power_map is None:
            return np.array([[self.power]], dtype=float)
        return np.asarray(self.power_map, dtype=float)

    def size(self, rotation: int = 0) -> tuple[float, float]:
        if rotation % 180 == 90:
            return self.height, self.width
        return self.width, self.height


@dataclass(frozen=True)
class Net:
    src: str
    dst: str
    wires: int
    bandwidth: float = 0.0  # GB/s
    approximate: bool = False

    def __post_init__(self):
        if self.wires < 1:
            raise ConfigError(f"net {self.src}->{self.dst}: wires must be >= 1")
        if self.src == self.dst:
            raise ConfigError(f"net {self.src}->{self.dst}: src and dst must differ")

    @property
    def name(self) -> str:
        return f"{self.src}->{self.dst}"


def wires_for_bandwidth(bandwidth: float, gbps_per_wire: float) -> int:
    """Number of wires needed to carry ``bandwidth`` GB/s."""
    if gbps_per_wire <= 0:
        raise ValueError("gbps_per_wire must be > 0")
    return max(1, math.ceil(bandwidth / gbps_per_wire - 1e-12))


@dataclass(frozen=True)
class PackageConfig:
    interposer_width: float  # mm
    interposer_height: float  # mm
    layers: tuple[LayerSpec, ...]
    h_top: float  # W/(m^2 K)
    sigma_max: float  # MPa
    h_bottom: float = 10.0
    ambient: float = 23.0
    gravity: float = 9.81
    min_spacing: float = 0.1  # mm
    bump_fraction: float = 0.2
    underfill: str | None = None
    heatsink_area_factor: float = 1.0
    stress_reduction: str = "peak"

    def __post_init__(self):
        if not (self.interposer_width > 0 and self.interposer_height > 0):
            raise ConfigError("interposer dimensions must be > 0")
        if not (self.h_top > 0 and self.h_bottom > 0):
            raise ConfigError("h_top and h_bottom must be > 0")
        if not self.sigma_max > 0:
            raise ConfigError("sigma_max must be > 0")
        if self.gravity < 0:
            raise ConfigError("gravity must be >= 0")
        if self.min_spacing < 0:
            raise ConfigError("min_spacing must be >= 0")
        if not 0 < self.bump_fraction <= 1:
            raise ConfigError("bump_fraction must be in (0, 1]")
        if not self.heatsink_area_factor > 0:
            raise ConfigError("heatsink_area_factor must be > 0")
        if self.stress_reduction not in ("peak", "p99"):
            raise ConfigError("stress_reduction must be 'peak' or 'p99'")
        roles = tuple(layer.role for layer in self.layers)
        if roles.count("interposer") != 1:
            raise ConfigError("package must have exactly one interposer layer")
        if roles != LAYER_ORDER:
            raise ConfigError(f"layers must be ordered bottom-to-top as {', '.join(LAYER_ORDER)}; got {', '.join(roles)}")

    def layer(self, role: str) -> LayerSpec:
        for layer in self.layers:
            if layer.role == role:
                return layer
        raise KeyError(role)


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    package: PackageConfig
    materials: Mapping[str, Material]
    chiplets: tuple[ChipletSpec, ...]
    nets: tuple[Net, ...] = ()
    notes: str = ""
    iters_per_level: int = 50  # default annealing effort for this architecture

    def __post_init__(self):
        if self.iters_per_level < 0:
            raise ConfigError("iters_per_level must be >= 0")
        names = [c.name for c in self.chiplets]
        if not names:
            raise ConfigError("architecture has no chiplets")
        if len(set(names)) != len(names):
            raise ConfigError("duplicate chiplet names")
        for layer in self.package.layers:
            if layer.material not in self.materials:
                raise ConfigError(f"layer {layer.role}: unknown material {layer.material!r}")
        if self.package.underfill is not None and self.package.underfill not in self.materials:
            raise ConfigError(f"unknown underfill material {self.package.underfill!r}")
        known = set(names)
        for net in self.nets:
            for end in (net.src, net.dst):
                if end not in known:
                    raise ConfigError(f"net {net.name}: unknown chiplet {end!r}")
        standoff = self.package.layer("chiplet").thickness
        for c in self.chiplets:
            if c.thickness > standoff + _TOL:
                raise ConfigError(f"chiplet {c.name}: thickness {c.thickness} um exceeds chiplet layer {standoff} um")

    def chiplet(self, name: str) -> ChipletSpec:
        for c in self.chiplets:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def chiplet_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.chiplets)

    @property
    def total_power(self) -> float:
        return float(sum(c.power for c in self.chiplets))

    def with_package(self, **changes) -> "ArchitectureSpec":
        return replace(self, package=replace(self.package, **changes))


@dataclass(frozen=True)
class CandidateEvaluation:
    peak_temp: float  # C
    peak_stress: float  # MPa
    wirelength: float  # mm

    def as_dict(self) -> dict:
        return {"peak_temp": self.peak_temp, "peak_stress": self.peak_stress, "wirelength": self.wirelength}


# ---------------------------------------------------------------------------
# config parsing

_PACKAGE_KEYS = {f.name for f in fields(PackageConfig)}
_MATERIAL_KEYS = {f.name for f in fields(Material)} - {"name"}
_CHIPLET_KEYS = {f.name for f in fields(ChipletSpec)}
_NET_KEYS = {f.name for f in fields(Net)}
_LAYER_KEYS = {f.name for f in fields(LayerSpec)}


def _reject_unknown(section: str, data: Mapping, allowed: Iterable[str]) -> None:
    extra = sorted(set(data) - set(allowed))
    if extra:
        raise ConfigError(f"{section}: unknown key(s) {', '.join(extra)}")


def _require(section: str, data: Mapping, keys: Iterable[str]) -> None:
    missing = [k for k in keys if k not in data]
    if missing:
        raise ConfigError(f"{section}: missing key(s) {', '.join(missing)}")


def spec_from_dict(data: Mapping) -> ArchitectureSpec:
    """Build and validate an ArchitectureSpec from a parsed config tree."""
    _reject_unknown("config", data, {"name", "notes", "iters_per_level", "package", "materials", "chiplets", "nets"})
    _require("config", data, ["name", "package", "materials", "chiplets"])
    try:
        materials = {}
        for name, m in data["materials"].items():
            _reject_unknown(f"materials.{name}", m, _MATERIAL_KEYS)
            _require(f"materials.{name}", m, ["thermal_conductivity", "cte", "youngs_modulus"])
            m = dict(m)
            if m.get("density") is None and m.get("kind") in DEFAULT_DENSITY:
                m["density"] = DEFAULT_DENSITY[m["kind"]]
            materials[name] = Material(name=name, **m)

        pkg = dict(data["package"])
        _reject_unknown("package", pkg, _PACKAGE_KEYS)
        _require("package", pkg, ["interposer_width", "interposer_height", "layers", "h_top", "sigma_max"])
        layers = []
        for i, layer in enumerate(pkg["layers"]):
            _reject_unknown(f"package.layers[{i}]", layer, _LAYER_KEYS)
            _require(f"package.layers[{i}]", layer, ["role", "material", "thickness"])
            layers.append(LayerSpec(**layer))
        pkg["layers"] = tuple(layers)
        package = PackageConfig(**pkg)

        chiplets = []
        for i, c in enumerate(data["chiplets"]):
            _reject_unknown(f"chiplets[{i}]", c, _CHIPLET_KEYS)
            _require(f"chiplets[{i}]", c, ["name", "width", "height", "power"])
            c = dict(c)
            if c.get("power_map") is not None:
                c["power_map"] = tuple(tuple(float(v) for v in row) for row in c["power_map"])
            chiplets.append(ChipletSpec(**c))

        nets = []
        for i, n in enumerate(data.get("nets", [])):
            _reject_unknown(f"nets[{i}]", n, _NET_KEYS)
            _require(f"nets[{i}]", n, ["src", "dst", "wires"])
            nets.append(Net(**n))

        return ArchitectureSpec(
            name=data["name"],
            notes=data.get("notes", ""),
            package=package,
            materials=materials,
            chiplets=tuple(chiplets),
            nets=tuple(nets),
            iters_per_level=int(data.get("iters_per_level", 50)),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def spec_to_dict(spec: ArchitectureSpec) -> dict:
    """Inverse of :func:`spec_from_dict`; None-valued optionals are dropped."""

    def clean(d: dict) -> dict:
        return {k: v for k, v in d.items() if v is not None}

    pkg = {f.name: getattr(spec.package, f.name) for f in fields(PackageConfig)}
    pkg["layers"] = [{"role": l.role, "material": l.material, "thickness": l.thickness} for l in spec.package.layers]
    materials = {
        name: clean({k: getattr(m, k) for k in sorted(_MATERIAL_KEYS)}) for name, m in spec.materials.items()
    }
    chiplets = []
    for c in spec.chiplets:
        d = clean({f.name: getattr(c, f.name) for f in fields(ChipletSpec)})
        if c.power_map is not None:
            d["power_map"] = [list(row) for row in c.power_map]
        chiplets.append(d)
    nets = [{f.name: getattr(n, f.name) for f in fields(Net)} for n in spec.nets]
    out = {"name": spec.name}
    if spec.notes:
        out["notes"] = spec.notes
    out["iters_per_level"] = spec.iters_per_level
    out.update(package=clean(pkg), materials=materials, chiplets=chiplets, nets=nets)
    return out


def resolve_config_path(path: str | Path) -> Path:
    """Return ``path`` if it exists, else look it up among the bundled configs."""
    p = Path(path)
    if p.exists():
        return p
    for candidate in (CONFIG_DIR / p.name, CONFIG_DIR / f"{p.name}.toml"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"config not found: {path}")


def load_architecture(path: str | Path) -> ArchitectureSpec:
    p = resolve_config_path(path)
    try:
        data = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: parse error: {exc}") from exc
    return spec_from_dict(data)


def save_architecture(spec: ArchitectureSpec, path: str | Path) -> None:
    Path(path).write_text(tomli_w.dumps(spec_to_dict(spec)))


def bundled_configs() -> list[str]:
    return sorted(p.stem for p in CONFIG_DIR.glob("*.toml"))


# ---------------------------------------------------------------------------
# placement


@dataclass(frozen=True)
class Pose:
    x: float  # mm, center
    y: float
    rotation: int = 0

    def __post_init__(self):
        if self.rotation not in ROTATIONS:
            raise ValueError(f"rotation must be one of {ROTATIONS}, got {self.rotation}")


@dataclass(frozen=True)
class Placement:
    entries: Mapping[str, Pose] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Pose:
        return self.entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def moved(self, name: str, pose: Pose) -> "Placement":
        entries = dict(self.entries)
        entries[name] = pose
        return Placement(entries)

    def rect(self, chiplet: ChipletSpec) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) of the rotated chiplet footprint."""
        pose = self.entries[chiplet.name]
        w, h = chiplet.size(pose.rotation)
        return pose.x - w / 2, pose.y - h / 2, pose.x + w / 2, pose.y + h / 2

    def to_json_dict(self) -> dict:
        return {n: {"x_mm": p.x, "y_mm": p.y, "rot_deg": p.rotation} for n, p in sorted(self.entries.items())}

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "Placement":
        try:
            return cls({n: Pose(float(v["x_mm"]), float(v["y_mm"]), int(v.get("rot_deg", 0))) for n, v in data.items()})
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed placement entry: {exc}") from exc


def load_placement(path: str | Path) -> Placement:
    data = json.loads(Path(path).read_text())
    if "best" in data and "placement" in data["best"]:
        data = data["best"]["placement"]
    return Placement.from_json_dict(data)


def save_placement(p: Placement, path: str | Path) -> None:
    Path(path).write_text(json.dumps(p.to_json_dict(), indent=2) + "\n")


def _separation(a, b) -> tuple[float, float]:
    gx = max(b[0] - a[2], a[0] - b[2])
    gy = max(b[1] - a[3], a[1] - b[3])
    return gx, gy


def validate_placement(p: Placement, spec: ArchitectureSpec, min_spacing: float | None = None) -> list[str]:
    """Return the list of violations; an empty list means the placement is feasible.

    Raises KeyError naming the first chiplet without a placement entry.
    """
    for c in spec.chiplets:
        if c.name not in p:
            raise KeyError(f"placement has no entry for chiplet {c.name!r}")
    spacing = spec.package.min_spacing if min_spacing is None else min_spacing
    W, H = spec.package.interposer_width, spec.package.interposer_height
    rects = [(c.name, p.rect(c)) for c in spec.chiplets]
    out = []
    for name, (x0, y0, x1, y1) in rects:
        if x0 < -_TOL or y0 < -_TOL or x1 > W + _TOL or y1 > H + _TOL:
            out.append(f"boundary: {name} spans [{x0:.3f}, {x1:.3f}] x [{y0:.3f}, {y1:.3f}] outside {W:g} x {H:g} interposer")
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            (na, ra), (nb, rb) = rects[i], rects[j]
            gx, gy = _separation(ra, rb)
            if gx < -_TOL and gy < -_TOL:
                out.append(f"overlap: {na} / {nb}")
            elif max(gx, gy) < spacing - _TOL:
                out.append(f"spacing: {na} / {nb} clearance {max(gx, gy):.4f} < {spacing:g} mm")
    return out


def is_feasible(p: Placement, spec: ArchitectureSpec) -> bool:
    return not validate_placement(p, spec)


def _shelf_pack(items, W, H, gap):
    # items: (name, w, h, rot); rows fill left to right, block is then centered
    x = y = row_h = 0.0
    pos = {}
    for name, w, h, rot in items:
        if x > 0 and x + w > W + _TOL:
            y += row_h + gap
            x = row_h = 0.0
        if x + w > W + _TOL or y + h > H + _TOL:
            return None
        pos[name] = [x + w / 2, y + h / 2, rot, w, h]
        x += w + gap
        row_h = max(row_h, h)
    xmax = max(v[0] + v[3] / 2 for v in pos.values())
    ymax = max(v[1] + v[4] / 2 for v in pos.values())
    sx, sy = (W - xmax) / 2, (H - ymax) / 2
    return Placement({n: Pose(v[0] + sx, v[1] + sy, v[2]) for n, v in pos.items()})


def initial_placement(spec: ArchitectureSpec, seed: int = 0, attempts: int = 200) -> Placement:
    """Deterministic shelf packing, centered on the interposer.

    The first attempt orders dies by decreasing height; later attempts use
    seeded permutations and 90 degree rotations.
    """
    W, H = spec.package.interposer_width, spec.package.interposer_height
    area = sum(c.width * c.height for c in spec.chiplets)
    util = area / (W * H)
    if util > 1:
        raise PackingError(f"chiplet area {area:.1f} mm^2 exceeds interposer area ({util:.1%} utilization)")
    gap = spec.package.min_spacing
    rng = np.random.default_rng(seed)
    order = sorted(spec.chiplets, key=lambda c: (-c.height, -c.width, c.name))
    for attempt in range(attempts):
        if attempt == 0:
            items = [(c.name, c.width, c.height, 0) for c in order]
        else:
            perm = rng.permutation(len(order))
            items = []
            for k in perm:
                c = order[k]
                rot = int(rng.choice((0, 90)))
                w, h = c.size(rot)
                items.append((c.name, w, h, rot))
        p = _shelf_pack(items, W, H, gap)
        if p is not None and is_feasible(p, spec):
            return p
    raise PackingError(f"no feasible packing after {attempts} attempts ({util:.1%} area utilization)")


def random_placement(spec: ArchitectureSpec, rng: np.random.Generator, attempts: int = 500) -> Placement:
    """Uniformly scattered feasible placement by sequential rejection sampling."""
    W, H = spec.package.interposer_width, spec.package.interposer_height
    order = sorted(spec.chiplets, key=lambda c: (-c.width * c.height, c.name))
    for _ in range(20):
        entries = {}
        ok = True
        for c in order:
            for _ in range(attempts):
                rot = int(rng.choice(ROTATIONS))
                w, h = c.size(rot)
                if w > W or h > H:
                    continue
                pose = Pose(float(rng.uniform(w / 2, W - w / 2)), float(rng.uniform(h / 2, H - h / 2)), rot)
                trial = dict(entries)
                trial[c.name] = pose
                sub = replace(spec, chiplets=tuple(x for x in spec.chiplets if x.name in trial), nets=())
                if not validate_placement(Placement(trial), sub):
                    entries = trial
                    break
            else:
                ok = False
                break
        if ok:
            return Placement(entries)
    return initial_placement(spec, seed=int(rng.integers(2**31)))
