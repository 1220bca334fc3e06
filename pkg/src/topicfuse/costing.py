"""Closed-form attention cost, CO2 estimates, cost curves and Pareto frontiers."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

from .exceptions import ContractError

POWER_KW = 0.07  # NVIDIA Tesla T4
GRID_KG_PER_KWH = 0.61
LBS_PER_KG = 2.20462

# Seconds per attention op from the Reuters8 BERT-512 run: 0.208 h/epoch over
# 1225 batches (4.9k docs, b=4) of 4 * 512^2 * 768 * 12 ops.
REUTERS8_SECONDS_PER_OP = 0.208 * 3600 / (1225 * 4 * 512**2 * 768 * 12)


@dataclass(frozen=True)
class ComplexityInputs:
    b: int
    N: int
    p: int
    H_B: int
    n_l: int
    n_b: int
    K: int = 0
    Z: int = 0

    def __post_init__(self) -> None:
        for name in ("b", "N", "p", "H_B", "n_l", "n_b"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")
        if self.K < 0 or self.Z < 0:
            raise ContractError("K and Z must be non-negative")
        if self.N % self.p:
            raise ContractError(f"N={self.N} is not a multiple of p={self.p}")

    @property
    def x(self) -> int:
        return self.N // self.p


def attention_ops_batch(c: ComplexityInputs, partitioned: bool) -> int:
    """Attention term per batch: ``b N^2 H_B n_l``, divided by ``p^2`` when partitioned."""
    length = c.x if partitioned else c.N
    return c.b * length * length * c.H_B * c.n_l


def attention_ops_epoch(c: ComplexityInputs, partitioned: bool) -> int:
    """Attention term per epoch; partitioned runs have ``p * n_b`` batches."""
    batches = c.p * c.n_b if partitioned else c.n_b
    return attention_ops_batch(c, partitioned) * batches


def predict_ops_batch(c: ComplexityInputs, partitioned: bool) -> int:
    if not partitioned:
        return c.b * c.N**2 * c.H_B * c.n_l
    return c.b * c.K * c.Z + c.b * (c.N**2 * c.H_B // c.p**2) * c.n_l


def predict_ops_epoch(c: ComplexityInputs, partitioned: bool) -> int:
    if not partitioned:
        return c.b * c.N**2 * c.H_B * c.n_b * c.n_l
    return c.b * c.K * c.Z * c.n_b + c.b * (c.N**2 * c.H_B * c.n_b // c.p) * c.n_l


def estimate_co2(hours: float, power_kw: float = POWER_KW, grid: float = GRID_KG_PER_KWH) -> float:
    """Grams of CO2-equivalent for ``hours`` of compute."""
    if hours < 0:
        raise ContractError("hours must be non-negative")
    return power_kw * hours * grid * 1000.0


def finetuning_footprint_lbs(papers: int = 5532, submission_factor: int = 4, datasets: int = 5,
                             hours_per_run: float = 12.0) -> float:
    """Community-wide fine-tuning estimate: kg from the CO2 formula, converted to lbs."""
    kg = estimate_co2(papers * submission_factor * datasets * hours_per_run) / 1000.0
    return kg * LBS_PER_KG


@dataclass
class CostReport:
    inputs: ComplexityInputs
    predicted_batch_ref: int
    predicted_batch_part: int
    predicted_epoch_ref: int
    predicted_epoch_part: int
    measured_attn_ops: int = 0
    measured_dense_ops: int = 0
    measured_topic_ops: int = 0
    wall_hours: float = 0.0
    co2_g: float = 0.0

    @classmethod
    def build(cls, c: ComplexityInputs, measured_attn_ops: int = 0, wall_hours: float = 0.0,
              **extra) -> "CostReport":
        return cls(c, predict_ops_batch(c, False), predict_ops_batch(c, True),
                   predict_ops_epoch(c, False), predict_ops_epoch(c, True),
                   measured_attn_ops=measured_attn_ops, wall_hours=wall_hours,
                   co2_g=estimate_co2(wall_hours), **extra)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CurvePoint:
    length: int
    attn_ops: int
    hours: float
    co2_g: float
    mem_entries_estimate: int


def calibrate_seconds_per_op(measured_seconds: float, ops: int) -> float:
    if ops <= 0:
        raise ContractError("ops must be positive")
    return measured_seconds / ops


def cost_curve(lengths, base: ComplexityInputs, seconds_per_op: float, n_heads: int = 12) -> list[CurvePoint]:
    """Predicted epoch hours and CO2 per sequence length (reference model).

    The memory proxy counts attention-score entries, ``b * N^2 * n_h * n_l``.
    """
    out = []
    for n in lengths:
        n = int(n)
        if n <= 0:
            raise ContractError(f"sequence length must be positive, got {n}")
        c = ComplexityInputs(base.b, n, 1, base.H_B, base.n_l, base.n_b, base.K, base.Z)
        ops = predict_ops_batch(c, False) * base.n_b
        hours = ops * seconds_per_op / 3600.0
        out.append(CurvePoint(n, ops, hours, estimate_co2(hours), base.b * n * n * n_heads * base.n_l))
    return out


def curve_csv(points: list[CurvePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["length", "attn_ops", "hours", "co2_g", "mem_entries_estimate"])
    for pt in points:
        w.writerow([pt.length, pt.attn_ops, f"{pt.hours:.3f}", f"{pt.co2_g:.2f}", pt.mem_entries_estimate])
    return buf.getvalue()


# ---- Pareto analysis -------------------------------------------------------------


@dataclass(frozen=True)
class ParetoPoint:
    label: str
    f1: float
    cost: float
    co2_g: float = field(default=0.0, compare=False)


def dominates(a: ParetoPoint, b: ParetoPoint) -> bool:
    """``a`` is at least as good on both axes and strictly better on one."""
    return a.f1 >= b.f1 and a.cost <= b.cost and (a.f1 > b.f1 or a.cost < b.cost)


def pareto_frontier(points: list[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated points (max F1, min cost), ascending by cost.

    A sweep over points sorted by (cost, -F1) keeps a point exactly when its
    F1 beats every cheaper point's, or ties the best F1 at the same cost.
    """
    if not points:
        raise ContractError("pareto_frontier needs at least one point")
    order = sorted(range(len(points)), key=lambda i: (points[i].cost, -points[i].f1, i))
    frontier: list[ParetoPoint] = []
    best_f1 = float("-inf")
    best_cost = None
    for i in order:
        pt = points[i]
        if pt.f1 > best_f1:
            frontier.append(pt)
            best_f1, best_cost = pt.f1, pt.cost
        elif pt.f1 == best_f1 and pt.cost == best_cost:
            frontier.append(pt)
    return frontier


def frontier_csv(points: list[ParetoPoint]) -> str:
    on = {id(p) for p in pareto_frontier(points)} if points else set()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "f1", "cost_hours", "co2_g", "on_frontier"])
    for pt in points:
        w.writerow([pt.label, f"{pt.f1:.3f}", f"{pt.cost:.3f}", f"{pt.co2_g:.2f}", int(id(pt) in on)])
    return buf.getvalue()
