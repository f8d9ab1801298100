"""Analytic one-step MSE comparison between the two perturbation laws.

For a single optimizer step from theta_0 the mean squared error
E||theta_1 - theta*||^2 has a closed form when the loss is quadratic, because
the centered difference of a quadratic is exactly linear in the perturbation.
Writing e = theta_0 - theta*, g = grad L(theta_0), S = sum(g_i^2),
rho = E[X_i^2 / X_j^2] and m = E[1/X^2] for the perturbation law:

    mse(a0, c0) = ||e||^2 - 2*a0*<e, g>
                  + a0^2 * S * (1 + rho*(p - 1))
                  + a0^2 * p * sigma2 * m / (2*c0^2)

The difference mse_su - mse_bernoulli of that expression, with each law's
moments and its own tuned gains, is the explicit comparison condition
evaluated by :func:`condition_lhs_explicit`: a negative value means the
segmented uniform yields the smaller one-step MSE. For non-quadratic losses
the same expression omits a Taylor-remainder contribution of order c0^2; when
a bound M on the third derivatives is available, :func:`u_bound` gives a
conservative envelope for that remainder and the condition
``lhs_explicit + U < 0`` is sufficient.

:func:`one_step_mse_quadratic` implements the closed form above directly from
the moment table. It is deliberately independent of the condition evaluators
so the identity between the two can serve as a cross-check, and it is itself
checked against exhaustive enumeration of Bernoulli outcomes in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GainSchedule, LossFunction, ProblemConfig, finite_difference_gradient
from .perturbations import PerturbationDistribution

__all__ = [
    "FORM_AUTO",
    "FORM_THEOREM1",
    "FORM_COROLLARY1",
    "FORM_COROLLARY2",
    "FORM_COROLLARY3",
    "SU_FAVORED",
    "BERNOULLI_FAVORED_OR_INCONCLUSIVE",
    "ConditionInput",
    "ConditionReport",
    "Remark2Checks",
    "condition_lhs_explicit",
    "corollary3_lhs",
    "u_bound",
    "check_remark2",
    "one_step_mse_quadratic",
    "mse_one_step_quadratic",
    "evaluate_condition",
    "gradient_at",
    "condition_input_from_problem",
]

FORM_AUTO = "auto"
FORM_THEOREM1 = "theorem1"
FORM_COROLLARY1 = "corollary1"
FORM_COROLLARY2 = "corollary2"
FORM_COROLLARY3 = "corollary3"

SU_FAVORED = "su_favored"
BERNOULLI_FAVORED_OR_INCONCLUSIVE = "bernoulli_favored_or_inconclusive"

_REMAINDER_NOTE = (
    "loss is not quadratic and no third-derivative bound was supplied; the "
    "order-c0^2 remainder is not included in the evaluated value"
)


@dataclass(frozen=True)
class ConditionInput:
    """Everything the one-step comparison depends on.

    ``a0_su``/``a0_bernoulli`` and ``c0_su``/``c0_bernoulli`` are the
    first-step gains under each law's tuned schedule. ``grad_at_start`` holds
    the first derivatives of the loss at theta_0 and ``start_offset`` is
    theta_0 - theta*. ``third_derivative_bound`` is an optional uniform bound
    M on all third derivatives, used only by the conservative condition.
    """

    p: int
    a0_su: float
    a0_bernoulli: float
    c0_su: float
    c0_bernoulli: float
    sigma2: float
    grad_at_start: tuple[float, ...]
    start_offset: tuple[float, ...]
    third_derivative_bound: float | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "grad_at_start", tuple(float(v) for v in self.grad_at_start)
        )
        object.__setattr__(
            self, "start_offset", tuple(float(v) for v in self.start_offset)
        )
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if len(self.grad_at_start) != self.p or len(self.start_offset) != self.p:
            raise ValueError("grad_at_start and start_offset must have length p")
        # a tuned step gain may legitimately be zero (no step); c gains cannot
        if self.a0_su < 0.0 or self.a0_bernoulli < 0.0:
            raise ValueError("step gains must be nonnegative")
        if not (self.c0_su > 0.0 and self.c0_bernoulli > 0.0):
            raise ValueError("perturbation gains must be positive")
        if self.sigma2 < 0.0:
            raise ValueError("sigma2 must be nonnegative")
        if self.third_derivative_bound is not None and self.third_derivative_bound < 0.0:
            raise ValueError("third_derivative_bound must be nonnegative")


@dataclass(frozen=True)
class Remark2Checks:
    """Sufficient sub-conditions for the explicit comparison to be negative."""

    ratio_a_ok: bool
    ratio_c_ok: bool
    flatness_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.ratio_a_ok and self.ratio_c_ok and self.flatness_ok


@dataclass(frozen=True)
class ConditionReport:
    """Evaluated comparison condition plus the verdict it supports."""

    which_condition: str
    lhs_explicit: float
    u_bound: float | None
    lhs_conservative: float | None
    verdict: str
    gradient_source: str = "supplied"
    note: str = ""

    def to_text(self) -> str:
        """Flat ``name = value`` rendering for CLI display."""
        lines = [
            f"condition = {self.which_condition}",
            f"lhs_explicit = {self.lhs_explicit!r}",
        ]
        if self.u_bound is not None:
            lines.append(f"u_bound = {self.u_bound!r}")
        if self.lhs_conservative is not None:
            lines.append(f"lhs_conservative = {self.lhs_conservative!r}")
        lines.append(f"verdict = {self.verdict}")
        lines.append(f"gradient_source = {self.gradient_source}")
        if self.note:
            lines.append(f"note = {self.note}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "condition": self.which_condition,
            "lhs_explicit": self.lhs_explicit,
            "u_bound": self.u_bound,
            "lhs_conservative": self.lhs_conservative,
            "verdict": self.verdict,
            "gradient_source": self.gradient_source,
            "note": self.note,
        }


def condition_lhs_explicit(inp: ConditionInput) -> float:
    """Explicit terms of mse_su - mse_bernoulli for one step.

    Exact for quadratic losses; for other losses an order-c0^2 remainder is
    omitted. Negative means the segmented uniform wins.
    """
    grad = np.asarray(inp.grad_at_start)
    offset = np.asarray(inp.start_offset)
    p = inp.p
    a0s, a0b = inp.a0_su, inp.a0_bernoulli
    c0s, c0b = inp.c0_su, inp.c0_bernoulli
    grad_sq = float(grad @ grad)
    drift = float(offset @ grad)
    term_grad = ((100.0 * p - 39.0) / 61.0 * a0s**2 - p * a0b**2) * grad_sq
    term_mixed = (a0s - a0b) * (
        p * inp.sigma2 * (a0s + a0b) / (2.0 * c0b**2) - 2.0 * drift
    )
    term_noise = -p * a0s**2 * inp.sigma2 * (1.0 / (2.0 * c0b**2) - 50.0 / (61.0 * c0s**2))
    return term_grad + term_mixed + term_noise


def corollary3_lhs(inp: ConditionInput) -> float:
    """The explicit comparison specialized to quadratic losses with p = 2."""
    if inp.p != 2:
        raise ValueError(f"this condition form requires p = 2, got p = {inp.p}")
    g1, g2 = inp.grad_at_start
    e1, e2 = inp.start_offset
    a0s, a0b = inp.a0_su, inp.a0_bernoulli
    c0s, c0b = inp.c0_su, inp.c0_bernoulli
    term_grad = (161.0 / 61.0 * a0s**2 - 2.0 * a0b**2) * (g1 * g1 + g2 * g2)
    term_mixed = (a0s - a0b) * (
        inp.sigma2 * (a0s + a0b) / c0b**2 - 2.0 * (g1 * e1 + g2 * e2)
    )
    term_noise = -(a0s**2) * inp.sigma2 * (1.0 / c0b**2 - 100.0 / (61.0 * c0s**2))
    return term_grad + term_mixed + term_noise


def u_bound(inp: ConditionInput, max_grad_component: float | None = None) -> float:
    """Conservative envelope U for the omitted order-c0^2 remainder.

    Requires the uniform third-derivative bound M on the input.
    ``max_grad_component`` defaults to max_i of ``grad_at_start``. Note the
    middle term is cubic in the segmented-uniform step gain (a0_su enters
    three times); that asymmetric power is intentional.
    """
    if inp.third_derivative_bound is None:
        raise ValueError("u_bound requires third_derivative_bound to be set")
    m_bound = inp.third_derivative_bound
    if max_grad_component is None:
        max_grad_component = float(max(inp.grad_at_start))
    p = inp.p
    a0s, a0b = inp.a0_su, inp.a0_bernoulli
    c0s, c0b = inp.c0_su, inp.c0_bernoulli
    abs_offset_sum = float(np.abs(np.asarray(inp.start_offset)).sum())
    term1 = (4.0 * a0s * c0s**2 + a0b * c0b**2) * m_bound * abs_offset_sum * (p - 1) ** 2
    term2 = (1.0 / 20.0) * a0s**2 * c0s**4 * m_bound**2 * p**7 * a0s
    term3 = (1.0 / 3.0) * (a0s**2 * c0s**3 + a0b**2 * c0b**3) * m_bound * p**5 * max_grad_component
    return term1 + term2 + term3


def check_remark2(inp: ConditionInput) -> Remark2Checks:
    """Check the gain-ratio and flatness sub-conditions.

    When all three hold (and the perturbation gains are small enough that the
    remainder is negligible), every explicit term is negative, so the
    segmented uniform is favored without evaluating the full expression.
    """
    p = inp.p
    a_threshold = math.sqrt(p / ((100.0 * p - 39.0) / 61.0))
    c_threshold = math.sqrt(61.0 / 100.0)
    ratio_a_ok = (
        inp.a0_bernoulli > 0.0 and inp.a0_su / inp.a0_bernoulli < a_threshold
    )
    ratio_c_ok = inp.c0_bernoulli / inp.c0_su < c_threshold
    drift = float(np.asarray(inp.start_offset) @ np.asarray(inp.grad_at_start))
    flatness_ok = 2.0 * drift < p * inp.sigma2 * (inp.a0_su + inp.a0_bernoulli) / (
        2.0 * inp.c0_bernoulli**2
    )
    return Remark2Checks(ratio_a_ok=ratio_a_ok, ratio_c_ok=ratio_c_ok, flatness_ok=flatness_ok)


def one_step_mse_quadratic(
    start_offset,
    grad_at_start,
    a0: float,
    c0: float,
    sigma2: float,
    dist: PerturbationDistribution,
) -> float:
    """Closed-form E||theta_1 - theta*||^2 for one step on a quadratic loss.

    Derived by expanding the update: with e = theta_0 - theta*, the i-th
    error component after one step is
    e_i - a0 * (sum_j g_j X_j + (eps+ - eps-)/(2 c0)) / X_i. Independence and
    symmetry of the components, plus independence of the noise, reduce the
    expectation to the moment table: cross ratios E[X_j / X_i] vanish, squared
    ratios contribute rho = E[X_j^2 / X_i^2], and the noise contributes
    sigma2 / (2 c0^2) * E[1/X^2] per coordinate.
    """
    offset = np.asarray(start_offset, dtype=float)
    grad = np.asarray(grad_at_start, dtype=float)
    if offset.shape != grad.shape or offset.ndim != 1:
        raise ValueError("start_offset and grad_at_start must be 1-D of equal length")
    if not (c0 > 0.0):
        raise ValueError("c0 must be positive")
    if sigma2 < 0.0:
        raise ValueError("sigma2 must be nonnegative")
    p = offset.size
    moments = dist.moments()
    grad_sq = float(grad @ grad)
    drift = float(offset @ grad)
    return (
        float(offset @ offset)
        - 2.0 * a0 * drift
        + a0**2 * grad_sq * (1.0 + moments.ratio_second * (p - 1))
        + a0**2 * p * sigma2 * moments.inv_second / (2.0 * c0**2)
    )


def mse_one_step_quadratic(
    problem: ProblemConfig,
    a0: float,
    c0: float,
    dist: PerturbationDistribution,
) -> float:
    """One-step MSE of :func:`one_step_mse_quadratic` for a registered problem."""
    if not problem.loss.is_quadratic:
        raise ValueError(
            f'loss "{problem.loss.name}" is not quadratic; the one-step MSE has no '
            "closed form"
        )
    theta0 = np.asarray(problem.theta0)
    grad, _ = gradient_at(problem.loss, theta0)
    offset = theta0 - np.asarray(problem.theta_star)
    return one_step_mse_quadratic(offset, grad, a0, c0, problem.sigma2, dist)


def gradient_at(loss: LossFunction, theta) -> tuple[np.ndarray, str]:
    """First derivatives at theta and where they came from.

    Uses the registered analytic gradient when available, otherwise central
    finite differences with step 1e-5.
    """
    theta = np.asarray(theta, dtype=float)
    if loss.gradient is not None:
        return np.asarray(loss.gradient(theta), dtype=float), "analytic"
    return finite_difference_gradient(loss.evaluator, theta), "finite_difference"


def condition_input_from_problem(
    problem: ProblemConfig,
    schedule_su: GainSchedule,
    schedule_bern: GainSchedule,
    third_derivative_bound: float | None = None,
) -> tuple[ConditionInput, str]:
    """Build a ConditionInput from a problem and the two tuned schedules."""
    theta0 = np.asarray(problem.theta0)
    grad, source = gradient_at(problem.loss, theta0)
    inp = ConditionInput(
        p=problem.p,
        a0_su=schedule_su.gain_a(0),
        a0_bernoulli=schedule_bern.gain_a(0),
        c0_su=schedule_su.gain_c(0),
        c0_bernoulli=schedule_bern.gain_c(0),
        sigma2=problem.sigma2,
        grad_at_start=tuple(grad),
        start_offset=tuple(theta0 - np.asarray(problem.theta_star)),
        third_derivative_bound=third_derivative_bound,
    )
    return inp, source


def evaluate_condition(
    inp: ConditionInput,
    *,
    quadratic: bool,
    form: str = FORM_AUTO,
    gradient_source: str = "supplied",
) -> ConditionReport:
    """Evaluate the comparison condition and report the verdict.

    With ``form="auto"`` the tightest applicable form is chosen: for quadratic
    losses the explicit value is exact (the p = 2 specialization when it
    applies); otherwise the conservative form is used when a third-derivative
    bound is available, and the bare explicit form, with a caveat, when not.
    """
    if form == FORM_AUTO:
        if quadratic:
            form = FORM_COROLLARY3 if inp.p == 2 else FORM_COROLLARY2
        elif inp.third_derivative_bound is not None:
            form = FORM_COROLLARY1
        else:
            form = FORM_THEOREM1
    if form == FORM_COROLLARY3:
        lhs_explicit = corollary3_lhs(inp)
    elif form in (FORM_THEOREM1, FORM_COROLLARY1, FORM_COROLLARY2):
        lhs_explicit = condition_lhs_explicit(inp)
    else:
        raise ValueError(f'unknown condition form "{form}"')

    bound = None
    lhs_conservative = None
    note = ""
    if form == FORM_COROLLARY1:
        bound = u_bound(inp)
        lhs_conservative = lhs_explicit + bound
    elif form == FORM_THEOREM1 and not quadratic:
        note = _REMAINDER_NOTE
    decided_value = lhs_conservative if lhs_conservative is not None else lhs_explicit
    verdict = SU_FAVORED if decided_value < 0.0 else BERNOULLI_FAVORED_OR_INCONCLUSIVE
    return ConditionReport(
        which_condition=form,
        lhs_explicit=lhs_explicit,
        u_bound=bound,
        lhs_conservative=lhs_conservative,
        verdict=verdict,
        gradient_source=gradient_source,
        note=note,
    )
