"""Adaptive-weight simulated annealing over chiplet placements."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from .model import (
    ArchitectureSpec,
    CandidateEvaluation,
    Placement,
    Pose,
    initial_placement,
    random_placement,
    validate_placement,
)
from .router import build_routing_graph, hpwl_estimate, route_nets
from .stress import evaluate_stress
from .thermal import build_grid, solve_steady_state, surface_gradient_stats
from . import metrics

OBJECTIVES = ("wt", "ws", "wst")
FIDELITIES = ("full-route", "hpwl-proxy")

T_GATE = 75.0  # C, temperature weight is off while both states are below this
T_AMBIENT_REF = 23.0
T_NORM_LO, T_NORM_HI = 60.0, 100.0
T_FALLBACK_SCALE = 100.0  # C, linear-cost fallback

MOVE_MIX = {"translate": 0.6, "rotate": 0.2, "swap": 0.2}


# ---------------------------------------------------------------------------
# weights and cost


def temperature_weight(t_old: float, t_new: float) -> float:
    t = max(t_old, t_new)
    if t < T_GATE:
        return 0.0
    base = min(0.1 + 0.01 * (t - T_AMBIENT_REF), 0.5)
    a = base * (t - T_NORM_LO) / (T_NORM_HI - T_NORM_LO)
    return min(max(a, 0.0), 0.5)


def stress_weight(s_old: float, s_new: float, s_max: float) -> float:
    if not s_max > 0:
        raise ValueError("s_max must be > 0")
    s = max(s_old, s_new)
    return min(0.1 + 0.5 * (s / s_max) ** 1.5, 0.5)


def length_weight(a: float, b: float) -> float:
    return abs(1.0 - a - b)


@dataclass(frozen=True)
class CostWeights:
    a: float  # temperature
    b: float  # stress
    c: float  # wirelength


def weights_for(objective: str, old: CandidateEvaluation, new: CandidateEvaluation, s_max: float) -> CostWeights:
    """Adaptive weights with the terms absent from ``objective`` masked to zero."""
    a = temperature_weight(old.peak_temp, new.peak_temp)
    b = stress_weight(old.peak_stress, new.peak_stress, s_max)
    if objective == "wt":
        b = 0.0
    elif objective == "ws":
        a = 0.0
    elif objective != "wst":
        raise ValueError(f"unknown objective {objective!r}")
    return CostWeights(a, b, length_weight(a, b))


@dataclass(frozen=True)
class Range:
    lo: float
    hi: float

    def normalize(self, x: float) -> float:
        if self.hi <= self.lo:
            return 0.0
        return (x - self.lo) / (self.hi - self.lo)


@dataclass(frozen=True)
class NormalizationRanges:
    temp: Range | None = None
    stress: Range | None = None
    length: Range | None = None
    # fallback scales
    sigma_max: float = 1.0
    length_ref: float = 1.0

    @property
    def available(self) -> bool:
        return self.temp is not None and self.stress is not None and self.length is not None

    @classmethod
    def from_samples(cls, samples: list[CandidateEvaluation], sigma_max: float, length_ref: float) -> "NormalizationRanges":
        def rng(vals):
            return Range(float(min(vals)), float(max(vals)))

        return cls(
            temp=rng([s.peak_temp for s in samples]),
            stress=rng([s.peak_stress for s in samples]),
            length=rng([s.wirelength for s in samples]),
            sigma_max=sigma_max,
            length_ref=length_ref,
        )

    def as_dict(self) -> dict:
        d = {"available": self.available, "sigma_max": self.sigma_max, "length_ref": self.length_ref}
        for k in ("temp", "stress", "length"):
            r = getattr(self, k)
            d[k] = None if r is None else [r.lo, r.hi]
        return d


def cost(e: CandidateEvaluation, w: CostWeights, r: NormalizationRanges) -> float:
    """Weighted normalized cost; falls back to fixed linear scales without ranges."""
    if r.available:
        tn = r.temp.normalize(e.peak_temp)
        sn = r.stress.normalize(e.peak_stress)
        ln = r.length.normalize(e.wirelength)
    else:
        tn = e.peak_temp / T_FALLBACK_SCALE
        sn = e.peak_stress / r.sigma_max
        ln = e.wirelength / r.length_ref if r.length_ref > 0 else 0.0
    return w.a * tn + w.b * sn + w.c * ln


def acceptance_probability(old_cost: float, new_cost: float, anneal_t: float) -> float:
    delta = -(new_cost - old_cost)
    if delta > 0:
        return 1.0
    return math.exp(delta / anneal_t)


def accept(old_cost: float, new_cost: float, anneal_t: float, u: float) -> bool:
    if not anneal_t > 0:
        raise ValueError("annealing temperature must be > 0")
    delta = -(new_cost - old_cost)
    if delta > 0:
        return True
    return u < math.exp(delta / anneal_t)


# ---------------------------------------------------------------------------
# moves


@dataclass(frozen=True)
class MoveConfig:
    translate: float = MOVE_MIX["translate"]
    rotate: float = MOVE_MIX["rotate"]
    swap: float = MOVE_MIX["swap"]
    step_fraction: float = 0.25  # of interposer width, times annealing temperature
    step_floor: float = 0.5  # mm
    retries: int = 50


@dataclass
class Move:
    placement: Placement
    kind: str
    ok: bool = True


def _propose(p: Placement, spec: ArchitectureSpec, rng: np.random.Generator, anneal_t: float, cfg: MoveConfig):
    names = list(spec.chiplet_names)
    kinds = ["translate", "rotate", "swap"]
    probs = np.array([cfg.translate, cfg.rotate, cfg.swap if len(names) > 1 else 0.0])
    kind = kinds[int(rng.choice(3, p=probs / probs.sum()))]
    if kind == "translate":
        name = names[int(rng.integers(len(names)))]
        pose = p[name]
        sigma = max(cfg.step_fraction * spec.package.interposer_width * anneal_t, cfg.step_floor)
        dx, dy = rng.normal(0.0, sigma, size=2)
        return kind, p.moved(name, Pose(pose.x + float(dx), pose.y + float(dy), pose.rotation))
    if kind == "rotate":
        name = names[int(rng.integers(len(names)))]
        pose = p[name]
        return kind, p.moved(name, Pose(pose.x, pose.y, (pose.rotation + 90) % 360))
    i, j = rng.choice(len(names), size=2, replace=False)
    a, b = p[names[i]], p[names[j]]
    q = p.moved(names[i], Pose(b.x, b.y, a.rotation))
    return kind, q.moved(names[j], Pose(a.x, a.y, b.rotation))


def perturb(p: Placement, spec: ArchitectureSpec, rng: np.random.Generator, anneal_t: float = 1.0, cfg: MoveConfig = MoveConfig()) -> Move:
    """One feasible random move; returns ``p`` unchanged with ok=False if none found."""
    for _ in range(cfg.retries):
        kind, q = _propose(p, spec, rng, anneal_t, cfg)
        if not validate_placement(q, spec):
            return Move(q, kind)
    return Move(p, "none", ok=False)


# ---------------------------------------------------------------------------
# evaluation pipeline


@dataclass
class Evaluator:
    """thermal -> stress -> wirelength for one placement."""

    spec: ArchitectureSpec
    resolution: float = 1.0
    fidelity: str = "full-route"
    pitch: float = 1.0
    capacity: int = 128
    plane: str = "interposer"
    unrouted_penalty: float = 3.0  # unrouted wires cost this many center-to-center detours

    def __post_init__(self):
        if self.fidelity not in FIDELITIES:
            raise ValueError(f"fidelity must be one of {FIDELITIES}")

    def fields(self, p: Placement):
        pkg = self.spec.package
        g = build_grid(self.spec, p, self.resolution)
        t = solve_steady_state(g, pkg.h_top, pkg.h_bottom, pkg.ambient)
        s = evaluate_stress(t, g, self.spec)
        return g, t, s

    def wirelength(self, p: Placement, full: bool | None = None) -> float:
        if full is None:
            full = self.fidelity == "full-route"
        if not full:
            return hpwl_estimate(p, self.spec.nets)
        g = build_routing_graph(self.spec, p, self.pitch, self.capacity)
        return self.charged_length(p, route_nets(g, self.spec.nets))

    def charged_length(self, p: Placement, routes) -> float:
        """Routed length plus a penalty for wires left over when capacity ran out."""
        extra = 0.0
        for r in routes.routes:
            missing = r.net.wires - r.routed
            if missing:
                a, b = p.entries[r.net.src], p.entries[r.net.dst]
                extra += missing * (abs(a.x - b.x) + abs(a.y - b.y))
        return routes.total_wirelength + self.unrouted_penalty * extra

    def evaluate(self, p: Placement, full: bool | None = None) -> CandidateEvaluation:
        _, t, s = self.fields(p)
        return CandidateEvaluation(float(t.values.max()), s.peak, self.wirelength(p, full))

    def detailed(self, p: Placement) -> dict:
        """Full-fidelity evaluation with fields, gradient statistics and correlations."""
        g, t, s = self.fields(p)
        rg = build_routing_graph(self.spec, p, self.pitch, self.capacity)
        routes = route_nets(rg, self.spec.nets)
        grad = surface_gradient_stats(t, self.plane)
        corr = metrics.field_correlations(t, s.field, grad.field, self.plane, strict=False)
        ev = CandidateEvaluation(float(t.values.max()), s.peak, self.charged_length(p, routes))
        return {
            "evaluation": ev, "grid": g, "temperature": t, "stress": s, "gradient": grad,
            "correlations": corr, "routes": routes, "routing_graph": rg,
        }


# ---------------------------------------------------------------------------
# annealing loop


@dataclass(frozen=True)
class AnnealSchedule:
    initial_temp: float = 1.0
    cooling_rate: float = 0.9
    iters_per_level: int = 50
    stop_temp: float = 0.01
    seed: int = 0
    warmup: int = 30

    def __post_init__(self):
        if not 0 < self.cooling_rate < 1:
            raise ValueError("cooling_rate must be in (0, 1)")
        if not self.stop_temp < self.initial_temp:
            raise ValueError("stop_temp must be below initial_temp")
        if self.iters_per_level < 0:
            raise ValueError("iters_per_level must be >= 0")

    def levels(self) -> list[float]:
        """Annealing temperatures visited, from initial_temp down to the last one above stop_temp."""
        out = []
        t = self.initial_temp
        while t > self.stop_temp:
            out.append(t)
            t *= self.cooling_rate
        return out


@dataclass
class OptimizationReport:
    architecture: str
    objective: str
    seed: int
    schedule: dict
    settings: dict
    ranges: dict
    trace: list[dict]
    levels: list[dict]
    initial: dict
    best: dict
    stats: dict
    wall_clock_s: float = 0.0
    aborted: str | None = None
    # not serialized
    artifacts: dict = field(default_factory=dict, repr=False)

    def to_json_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "artifacts"}


def _rngs(seed: int):
    ss = np.random.SeedSequence(seed)
    init, warm, chain = ss.spawn(3)
    return np.random.default_rng(init), np.random.default_rng(warm), np.random.default_rng(chain)


def anneal(
    spec: ArchitectureSpec,
    objective: str,
    schedule: AnnealSchedule,
    evaluator: Evaluator | None = None,
    moves: MoveConfig = MoveConfig(),
    evaluate: Callable[[Placement], CandidateEvaluation] | None = None,
    progress: Callable[[str], None] | None = None,
) -> OptimizationReport:
    """Run one annealing chain.

    ``evaluate`` overrides the evaluator's inner-loop metric function (used
    in tests to inject synthetic metrics).
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    evaluator = evaluator or Evaluator(spec)
    evaluate = evaluate or evaluator.evaluate
    s_max = spec.package.sigma_max
    rng_init, rng_warm, rng = _rngs(schedule.seed)
    start = time.perf_counter()

    current = init_p = initial_placement(spec, seed=int(rng_init.integers(2**31)))
    cur_eval = evaluate(current)
    samples = [cur_eval]
    for _ in range(schedule.warmup):
        samples.append(evaluate(random_placement(spec, rng_warm)))
    length_ref = cur_eval.wirelength if cur_eval.wirelength > 0 else 1.0
    if schedule.warmup > 0:
        ranges = NormalizationRanges.from_samples(samples, s_max, length_ref)
    else:
        ranges = NormalizationRanges(sigma_max=s_max, length_ref=length_ref)

    w0 = weights_for(objective, cur_eval, cur_eval, s_max)
    cur_cost = cost(cur_eval, w0, ranges)
    best_p, best_cost, best_eval = current, cur_cost, cur_eval
    trace = [_entry(0, schedule.initial_temp, 0, "init", cur_eval, w0, cur_cost, 1.0, best_cost)]
    levels = []
    aborted = None
    step = 0
    try:
        for level, T in enumerate(schedule.levels() if schedule.iters_per_level > 0 else []):
            accepted = 0
            for _ in range(schedule.iters_per_level):
                step += 1
                move = perturb(current, spec, rng, T, moves)
                u = float(rng.random())
                if not move.ok:
                    continue
                cand_eval = evaluate(move.placement)
                w = weights_for(objective, cur_eval, cand_eval, s_max)
                old_cost = cost(cur_eval, w, ranges)
                new_cost = cost(cand_eval, w, ranges)
                if accept(old_cost, new_cost, T, u):
                    accepted += 1
                    current, cur_eval, cur_cost = move.placement, cand_eval, new_cost
                    if new_cost < best_cost:
                        best_p, best_cost, best_eval = current, new_cost, cand_eval
                    prob = acceptance_probability(old_cost, new_cost, T)
                    trace.append(_entry(level, T, step, move.kind, cand_eval, w, new_cost, prob, best_cost))
            lvl = {"level": level, "anneal_temp": T, "accepted": accepted, "cost": cur_cost}
            if evaluator.fidelity == "hpwl-proxy" and spec.nets:
                lvl["routed_wirelength"] = evaluator.wirelength(current, full=True)
            levels.append(lvl)
            if progress:
                progress(f"level {level:2d} T={T:.4f} accepted={accepted} cost={cur_cost:.4f} best={best_cost:.4f}")
    except Exception as exc:  # keep the partial trace
        aborted = f"{type(exc).__name__}: {exc}"

    report = OptimizationReport(
        architecture=spec.name,
        objective=objective,
        seed=schedule.seed,
        schedule=asdict(schedule),
        settings={
            "fidelity": evaluator.fidelity, "resolution": evaluator.resolution,
            "pitch": evaluator.pitch, "capacity": evaluator.capacity, "plane": evaluator.plane,
            "moves": asdict(moves),
        },
        ranges=ranges.as_dict(),
        trace=trace,
        levels=levels,
        initial={"placement": init_p.to_json_dict(), "metrics": samples[0].as_dict()},
        best={"placement": best_p.to_json_dict(), "cost": best_cost, "search_metrics": best_eval.as_dict()},
        stats={},
        aborted=aborted,
    )
    return _finalize(report, evaluator, best_p, start)


def _entry(level, T, step, kind, ev, w, c, prob, best):
    return {
        "level": level, "anneal_temp": T, "step": step, "move": kind,
        "peak_temp": ev.peak_temp, "peak_stress": ev.peak_stress, "wirelength": ev.wirelength,
        "a": w.a, "b": w.b, "c": w.c, "cost": c, "acceptance_probability": prob, "best_cost": best,
    }


def _finalize(report, evaluator, best_p, start):
    detail = evaluator.detailed(best_p)
    ev = detail["evaluation"]
    report.best["metrics"] = ev.as_dict()
    report.stats = {
        "gradient": detail["gradient"].as_dict(),
        "correlations": detail["correlations"],
        "energy_error": detail["temperature"].meta["energy_error"],
        "route_feasible": detail["routes"].feasible,
    }
    report.artifacts = detail
    report.wall_clock_s = time.perf_counter() - start
    return report
