"""
Finite-difference suite for the training objectives.
"""

from typing import List

from pydantic import BaseModel, Field

from ..autograd import Tensor, finite_difference_check
from ..losses.objectives import LossWeights, phase1_loss, phase3_loss
from ..losses.prototypes import PrototypeFlavor, PrototypeSet
from ..models.mlp import LocalModel, ModelConfig, init_model
from ..utils.logger import get_logger
from ..utils.seeding import make_rng

logger = get_logger("runtime.grad_suite")

DEFAULT_TOLERANCE = 1e-3
SUITE_MODEL = ModelConfig(input_dim=5, hidden=(6,), feature_dim=4, num_classes=3)
BATCH = 6


class GradCheckCase(BaseModel):
    seed: int
    objective: str
    max_relative_error: float


class GradCheckReport(BaseModel):
    tolerance: float
    cases: List[GradCheckCase] = Field(default_factory=list)

    @property
    def worst(self) -> float:
        return max((case.max_relative_error for case in self.cases), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance


def _fixture(seed: int):
    rng = make_rng(seed, "grad-suite")
    model = LocalModel.from_snapshot(init_model(SUITE_MODEL, int(rng.integers(2**31))))
    x = Tensor(rng.standard_normal((BATCH, SUITE_MODEL.input_dim)))
    labels = rng.integers(0, SUITE_MODEL.num_classes, size=BATCH)
    # class 2 has no prototype so the skip path is covered
    prototypes = PrototypeSet(
        {k: rng.standard_normal(SUITE_MODEL.feature_dim) for k in (0, 1)},
        PrototypeFlavor.FUSED,
        0,
    )
    return model, x, labels, prototypes


def run_grad_suite(num_seeds: int = 20, tolerance: float = DEFAULT_TOLERANCE) -> GradCheckReport:
    """
    Check the Phase I and Phase III gradients on randomized small models.

    Phase III is checked with the hybrid feature off and on
    (``lambda_hy`` 0 and 0.5), with both mixup partners.

    Args:
        num_seeds: Number of random fixtures
        tolerance: Pass threshold on the max relative error

    Returns:
        GradCheckReport with one case per (seed, objective)
    """
    report = GradCheckReport(tolerance=tolerance)
    for seed in range(num_seeds):
        model, x, labels, prototypes = _fixture(seed)
        params = model.parameters()

        error = finite_difference_check(lambda: phase1_loss(model.forward(x)[1], labels), params)
        report.cases.append(GradCheckCase(seed=seed, objective="phase1", max_relative_error=error))

        for lambda_hy in (0.0, 0.5):
            for partner in ("sample", "prototype"):
                weights = LossWeights(kappa=1.0, eta=0.5, tau2=0.5, lambda_hy=lambda_hy, lambda_mix=0.3)
                pairing = seed * 7919 + 13

                def objective(weights=weights, partner=partner, pairing=pairing):
                    return phase3_loss(x, labels, model, prototypes, weights, pairing, partner).total

                error = finite_difference_check(objective, params)
                report.cases.append(GradCheckCase(
                    seed=seed,
                    objective=f"phase3[lambda_hy={lambda_hy},mfa={partner}]",
                    max_relative_error=error,
                ))

    logger.info(
        "Gradient suite finished",
        extra={"context": {"cases": len(report.cases), "worst": report.worst, "passed": report.passed}},
    )
    return report
