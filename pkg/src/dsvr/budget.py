"""Parameter-budget solver.

Splits a target parameter count across decoders in a fixed ratio, then
searches channel widths so each decoder lands within 10% of its share and
the total within 5%. Counts are closed-form (no module instantiation), and
both count functions are linear in a fine-adjustment knob: the last stage
width for conv decoders, the MLP hidden width for index-driven decoders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .models import (
    MIN_CHANNELS,
    ArchConfig,
    DualStreamModel,
    HNeRVModel,
    NeRVModel,
    conv_decoder_param_count,
    mlp_decoder_param_count,
    stage_widths,
)
from .posenc import PosEncConfig

COMPONENT_TOL = 0.10
TOTAL_TOL = 0.05


class InfeasibleBudgetError(ValueError):
    """Raised when no width assignment reaches the requested budget."""


@dataclass(frozen=True)
class DecoderPlan:
    name: str
    kind: str  # "conv" or "mlp"
    input_dim: int  # embedding channels (conv) or encoding length (mlp)
    widths: tuple
    mlp_hidden: int
    target: int
    realized: int


@dataclass(frozen=True)
class BudgetSolution:
    target_total: int
    ratio: tuple
    plans: tuple

    @property
    def realized_total(self) -> int:
        return sum(p.realized for p in self.plans)

    def plan(self, name: str) -> DecoderPlan:
        for p in self.plans:
            if p.name == name:
                return p
        raise KeyError(name)

    def summary(self) -> str:
        lines = [
            f"target_total={self.target_total} realized_total={self.realized_total}"
        ]
        for p in self.plans:
            lines.append(
                f"  {p.name}: target={p.target} realized={p.realized} "
                f"widths={list(p.widths)}"
                + (f" mlp_hidden={p.mlp_hidden}" if p.kind == "mlp" else "")
            )
        return "\n".join(lines)


def _count(kind, input_dim, widths, hidden, arch: ArchConfig) -> int:
    if kind == "conv":
        return conv_decoder_param_count(input_dim, widths, arch.strides)
    return mlp_decoder_param_count(
        input_dim, hidden, widths, arch.strides, arch.embed_shape[1:]
    )


def _config_for(kind, base_width, fine, arch: ArchConfig):
    """(widths, hidden) for a base width and a fine-knob value."""
    k = len(arch.strides)
    if kind == "conv":
        widths = stage_widths(base_width, k, arch.reduction)
        widths[-1] = fine
        return tuple(widths), 0
    widths = stage_widths(base_width, k + 1, arch.reduction)
    return tuple(widths), fine


def _default_fine(kind, base_width, arch: ArchConfig) -> int:
    if kind == "conv":
        return stage_widths(base_width, len(arch.strides), arch.reduction)[-1]
    return max(1, 2 * base_width)


def _fine_min(kind) -> int:
    return MIN_CHANNELS if kind == "conv" else 1


def _solve_decoder(name, kind, input_dim, target, arch: ArchConfig) -> DecoderPlan:
    def count_at(w, fine):
        widths, hidden = _config_for(kind, w, fine, arch)
        return _count(kind, input_dim, widths, hidden, arch)

    floor = count_at(MIN_CHANNELS, _fine_min(kind))
    if floor > target * (1 + COMPONENT_TOL):
        raise InfeasibleBudgetError(
            f"{name}: minimum configuration has {floor} parameters, above "
            f"target {target} (+{COMPONENT_TOL:.0%})"
        )

    lo, hi = MIN_CHANNELS, MIN_CHANNELS
    while count_at(hi, _default_fine(kind, hi, arch)) <= target:
        hi *= 2
        if hi > 1 << 20:
            raise InfeasibleBudgetError(f"{name}: width search diverged")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count_at(mid, _default_fine(kind, mid, arch)) <= target:
            lo = mid
        else:
            hi = mid

    best = None
    for w in (max(MIN_CHANNELS, lo - 1), lo, lo + 1):
        # count is linear in the fine knob: solve, then probe neighbors.
        f0 = _default_fine(kind, w, arch)
        c0 = count_at(w, f0)
        c1 = count_at(w, f0 + 1)
        slope = c1 - c0
        guess = f0 + round((target - c0) / slope)
        for fine in (guess - 1, guess, guess + 1):
            fine = max(_fine_min(kind), fine)
            realized = count_at(w, fine)
            key = (abs(realized - target), w, fine)
            if best is None or key < best[0]:
                best = (key, w, fine, realized)

    _, w, fine, realized = best
    widths, hidden = _config_for(kind, w, fine, arch)
    return DecoderPlan(
        name=name,
        kind=kind,
        input_dim=input_dim,
        widths=widths,
        mlp_hidden=hidden,
        target=target,
        realized=realized,
    )


def decoder_specs(method: str, arch: ArchConfig, posenc_cfg: PosEncConfig):
    """(name, kind, input_dim) per transmitted decoder, plus the size ratio."""
    c_embed = arch.embed_shape[0]
    if method == "dual":
        return [
            ("hfd", "conv", c_embed),
            ("lfd1", "mlp", posenc_cfg.low_length),
            ("lfd2", "mlp", posenc_cfg.high_length),
        ], (20, 1, 5)
    if method == "nerv":
        return [("decoder", "mlp", posenc_cfg.encoded_length)], (1,)
    if method == "hnerv":
        return [("decoder", "conv", c_embed)], (1,)
    raise ValueError(f"unknown method {method!r}")


def solve_budget(
    target_total: int,
    ratio: Sequence[int],
    specs: Sequence[tuple],
    arch: ArchConfig,
) -> BudgetSolution:
    """Deterministically assign widths meeting the ratio and total budget."""
    if target_total < 10**4:
        raise ValueError("target_total too small to budget")
    if len(ratio) != len(specs):
        raise ValueError("one ratio entry per decoder required")
    denom = sum(ratio)
    plans = []
    for (name, kind, input_dim), share in zip(specs, ratio):
        target = round(target_total * share / denom)
        plans.append(_solve_decoder(name, kind, input_dim, target, arch))

    errors = []
    for p in plans:
        if abs(p.realized - p.target) > COMPONENT_TOL * p.target:
            errors.append(
                f"{p.name}: realized {p.realized} misses target {p.target} "
                f"by more than {COMPONENT_TOL:.0%}"
            )
    total = sum(p.realized for p in plans)
    if abs(total - target_total) > TOTAL_TOL * target_total:
        errors.append(
            f"total: realized {total} misses target {target_total} "
            f"by more than {TOTAL_TOL:.0%}"
        )
    if errors:
        raise InfeasibleBudgetError("; ".join(errors))
    return BudgetSolution(
        target_total=target_total, ratio=tuple(ratio), plans=tuple(plans)
    )


def solve_budget_for_method(
    method: str,
    target_total: int,
    arch: ArchConfig,
    posenc_cfg: PosEncConfig,
) -> BudgetSolution:
    specs, ratio = decoder_specs(method, arch, posenc_cfg)
    return solve_budget(target_total, ratio, specs, arch)


def build_model(
    method: str,
    solution: BudgetSolution,
    arch: ArchConfig,
    posenc_cfg: PosEncConfig,
    keep_ratio: float = 0.2,
    seed: int = 0,
):
    """Instantiate the model family realizing a budget solution."""
    if method == "dual":
        hfd = solution.plan("hfd")
        lfd1 = solution.plan("lfd1")
        lfd2 = solution.plan("lfd2")
        return DualStreamModel(
            arch,
            posenc_cfg,
            keep_ratio,
            hfd_widths=hfd.widths,
            lfd1_widths=lfd1.widths,
            lfd1_hidden=lfd1.mlp_hidden,
            lfd2_widths=lfd2.widths,
            lfd2_hidden=lfd2.mlp_hidden,
            seed=seed,
        )
    if method == "nerv":
        plan = solution.plan("decoder")
        return NeRVModel(arch, posenc_cfg, plan.widths, plan.mlp_hidden, seed=seed)
    if method == "hnerv":
        plan = solution.plan("decoder")
        return HNeRVModel(arch, plan.widths, seed=seed)
    raise ValueError(f"unknown method {method!r}")
