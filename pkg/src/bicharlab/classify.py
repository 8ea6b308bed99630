"""Stratify boundary covectors by their contact with the ray flow.

A boundary point (x', xi') is transversal ("hyperbolic") when r0 > 0,
shadowed ("elliptic") when r0 < 0, and tangent ("glancing") in between.
Tangent points are graded by how many derivatives of the contact vanish:
order 2 splits by the sign of r1 (curving away from or into the domain),
order k >= 3 requires the first k-3 iterated brackets of r1 under the
boundary Hamilton field of r0 to vanish with the next one alive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .charts import CollarChart

ELLIPTIC = "elliptic"
HYPERBOLIC = "hyperbolic"
GLANCING = "glancing"


@dataclass(frozen=True)
class BoundaryClass:
    """Classification verdict with the numbers that produced it."""

    tag: str
    order: int | None = None
    sign: int | None = None
    unresolved: bool = False
    witness: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "tag": self.tag,
            "order": self.order,
            "sign": self.sign,
            "unresolved": self.unresolved,
            "witness": self.witness,
        }

    def label(self) -> str:
        if self.tag != GLANCING:
            return self.tag
        if self.unresolved:
            return f"glancing(order>{self.order})"
        if self.order == 2:
            return f"glancing(2,{'+' if self.sign > 0 else '-'})"
        return f"glancing({self.order})"


def classify(
    chart: CollarChart,
    xp: float,
    xip: float,
    tol_g: float = 1e-8,
    tol_bracket: float = 1e-6,
    k_max: int | None = None,
) -> BoundaryClass:
    """Classify the boundary covector (x', xi') of the chart.

    tol_g bounds |r0| for the tangency band, tol_bracket decides whether
    a bracket value counts as zero.  Contact orders are resolved up to
    k_max; deeper contact is reported explicitly as unresolved, never
    silently rounded down.
    """
    if tol_g <= 0 or tol_bracket <= 0:
        raise ValueError("tolerances must be positive")
    budget = chart.max_derivative_order
    if k_max is None:
        k_max = budget
    if k_max > budget:
        raise ValueError(f"k_max = {k_max} exceeds chart derivative budget {budget}")
    if k_max < 2:
        raise ValueError("k_max must be at least 2")

    r0 = chart.r0(xp, xip)
    if r0 > tol_g:
        return BoundaryClass(HYPERBOLIC, witness={"r0": r0})
    if r0 < -tol_g:
        return BoundaryClass(ELLIPTIC, witness={"r0": r0})

    brackets = [chart.iterated_bracket(0, xp, xip)]
    if abs(brackets[0]) > tol_bracket:
        sign = 1 if brackets[0] > 0 else -1
        return BoundaryClass(
            GLANCING, order=2, sign=sign, witness={"r0": r0, "r1": brackets[0]}
        )
    for j in range(1, k_max - 1):
        brackets.append(chart.iterated_bracket(j, xp, xip))
        if abs(brackets[-1]) > tol_bracket:
            return BoundaryClass(
                GLANCING,
                order=j + 2,
                witness={"r0": r0, "brackets": brackets},
            )
    return BoundaryClass(
        GLANCING,
        order=k_max,
        unresolved=True,
        witness={"r0": r0, "brackets": brackets},
    )
