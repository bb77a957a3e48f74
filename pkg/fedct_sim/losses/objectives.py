"""
Training objectives for local training and cross-training.

Prototypes enter every loss as constants: they are broadcast as data and no
gradient flows into them.
"""

from typing import NamedTuple, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .prototypes import PrototypeSet
from ..autograd import (
    Tensor,
    add,
    cosine_similarity_matrix,
    mul,
    scale,
    softmax_cross_entropy,
    sub,
    take_rows,
)
from ..models.mlp import ClassifierParams, LocalModel, classify
from ..utils.errors import DimensionError, InputError

MFA_PARTNERS = ("sample", "prototype")


class LossWeights(BaseModel):
    """
    Weights and temperatures of the cross-training objective.
    """
    kappa: float = Field(1.0, ge=0.0, description="Weight of the prototypical contrastive term")
    eta: float = Field(0.1, ge=0.0, description="Weight of the mixup term")
    tau2: float = Field(0.05, gt=0.0, description="Contrastive temperature")
    lambda_hy: float = Field(0.3, ge=0.0, le=1.0, description="Extrapolation weight of the hybrid feature")
    lambda_mix: float = Field(0.3, ge=0.0, le=1.0, description="Mixup coefficient")
    lambda_fuse: float = Field(0.5, ge=0.0, le=1.0, description="Weight of the global view when fusing")


class ApclOutput(NamedTuple):
    loss: Tensor
    skipped: int


class Phase3Output(NamedTuple):
    """Total cross-training loss and its parts (unweighted)."""
    total: Tensor
    l_cls: float
    l_apcl: float
    l_mix: float
    apcl_skipped: int
    kappa: float
    eta: float

    def weighted_terms(self) -> Tuple[float, float, float]:
        """(L_cls, kappa * L_APCL, eta * L_mix); sums to ``total``."""
        return self.l_cls, self.kappa * self.l_apcl, self.eta * self.l_mix


def _zero() -> Tensor:
    return Tensor(0.0)


def apcl_loss(features: Tensor, labels: Sequence[int], fused: PrototypeSet,
              lambda_hy: float, tau2: float) -> ApclOutput:
    """
    Augmented prototypical contrastive loss.

    Each feature is extrapolated away from its positive prototype,
    ``f_h = f + lambda_hy * (f - u+)``, and scored against every fused
    prototype by cosine similarity over ``tau2``; the loss is the mean
    cross-entropy of picking the positive. Samples whose class has no
    prototype are skipped.

    Args:
        features: b×d sample features
        labels: Class index per row
        fused: Fused prototype set
        lambda_hy: Extrapolation weight
        tau2: Temperature

    Returns:
        ApclOutput(loss, skipped); loss is a constant zero when every sample is skipped

    Raises:
        InputError: If the prototype set is empty or labels do not match the batch
    """
    if len(fused) == 0:
        raise InputError("apcl_loss needs a non-empty prototype set")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size != features.rows:
        raise InputError(f"apcl_loss: {labels.size} labels for {features.rows} rows")
    if fused.dim != features.cols:
        raise DimensionError(f"apcl_loss: features have width {features.cols}, prototypes {fused.dim}")

    protos, classes = fused.matrix()
    column = {label: position for position, label in enumerate(classes)}
    kept = [row for row, label in enumerate(labels) if int(label) in column]
    skipped = labels.size - len(kept)
    if not kept:
        return ApclOutput(_zero(), skipped)

    f_x = features if skipped == 0 else take_rows(features, kept)
    positives = [column[int(labels[row])] for row in kept]
    u_pos = Tensor(protos[positives])

    f_hybrid = add(f_x, scale(sub(f_x, u_pos), lambda_hy))
    sims = cosine_similarity_matrix(f_hybrid, Tensor(protos))
    return ApclOutput(softmax_cross_entropy(scale(sims, 1.0 / tau2), positives), skipped)


def mixup_features(f_a: Tensor, f_b: Tensor, lambda_mix: float) -> Tensor:
    """
    ``lambda_mix * f_a + (1 - lambda_mix) * f_b``.

    Raises:
        DimensionError: If the shapes differ
    """
    if f_a.shape != f_b.shape:
        raise DimensionError(f"mixup_features: shapes differ ({f_a.shape} vs {f_b.shape})")
    return add(scale(f_a, lambda_mix), scale(f_b, 1.0 - lambda_mix))


def mixup_loss(classifier: ClassifierParams, f_mix: Tensor, labels_a: Sequence[int],
               labels_b: Sequence[int], lambda_mix: float) -> Tensor:
    """
    ``lambda_mix * CE(H(f_mix), y_a) + (1 - lambda_mix) * CE(H(f_mix), y_b)``.

    Both terms share the logits of the mixed feature.

    Raises:
        InputError: If the label sequences differ in length from each other or the batch
    """
    labels_a = np.asarray(labels_a, dtype=np.int64).reshape(-1)
    labels_b = np.asarray(labels_b, dtype=np.int64).reshape(-1)
    if labels_a.size != labels_b.size or labels_a.size != f_mix.rows:
        raise InputError(
            f"mixup_loss: {labels_a.size} and {labels_b.size} labels for {f_mix.rows} mixed rows"
        )
    logits = classify(classifier, f_mix)
    return add(
        scale(softmax_cross_entropy(logits, labels_a), lambda_mix),
        scale(softmax_cross_entropy(logits, labels_b), 1.0 - lambda_mix),
    )


def phase1_loss(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Local-training objective with a FedAvg base: plain cross-entropy."""
    return softmax_cross_entropy(logits, labels)


def _prototype_partner(features: Tensor, labels: np.ndarray, fused: PrototypeSet,
                       lambda_mix: float) -> Tensor:
    # rows with a class prototype mix with it; the others stay as they are
    coef = np.ones(features.shape)
    offset = np.zeros(features.shape)
    for row, label in enumerate(labels):
        if int(label) in fused:
            coef[row] = lambda_mix
            offset[row] = (1.0 - lambda_mix) * fused[int(label)]
    return add(mul(features, Tensor(coef)), Tensor(offset))


def phase3_loss(x: Tensor, labels: Sequence[int], model: LocalModel, fused: PrototypeSet,
                weights: LossWeights, pairing_seed: int, mfa_partner: str = "sample") -> Phase3Output:
    """
    Cross-training objective ``L_cls + kappa * L_APCL + eta * L_mix``.

    Terms with a zero weight are not evaluated. Mixup pairs each row with a
    seeded permutation of the batch, or with its own class prototype when
    ``mfa_partner == "prototype"``.

    Args:
        x: b×d_in batch
        labels: Class index per row
        model: Live model being trained
        fused: Fused prototypes guiding the model
        weights: Loss weights
        pairing_seed: Seed of the mixup permutation
        mfa_partner: "sample" or "prototype"

    Returns:
        Phase3Output with the differentiable total and the unweighted term values
    """
    if mfa_partner not in MFA_PARTNERS:
        raise InputError(f"mfa_partner must be one of {MFA_PARTNERS}, got {mfa_partner!r}")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    features, logits = model.forward(x)

    l_cls = softmax_cross_entropy(logits, labels)
    total = l_cls
    l_apcl_value, l_mix_value, skipped = 0.0, 0.0, 0

    if weights.kappa > 0.0:
        apcl = apcl_loss(features, labels, fused, weights.lambda_hy, weights.tau2)
        skipped = apcl.skipped
        l_apcl_value = apcl.loss.item()
        total = add(total, scale(apcl.loss, weights.kappa))

    if weights.eta > 0.0:
        if mfa_partner == "sample":
            order = np.random.default_rng(pairing_seed).permutation(labels.size)
            f_mix = mixup_features(features, take_rows(features, order), weights.lambda_mix)
            labels_b = labels[order]
        else:
            if len(fused) == 0:
                raise InputError("Prototype mixup partner needs a non-empty prototype set")
            f_mix = _prototype_partner(features, labels, fused, weights.lambda_mix)
            labels_b = labels
        mix = mixup_loss(model.classifier, f_mix, labels, labels_b, weights.lambda_mix)
        l_mix_value = mix.item()
        total = add(total, scale(mix, weights.eta))

    return Phase3Output(
        total=total,
        l_cls=l_cls.item(),
        l_apcl=l_apcl_value,
        l_mix=l_mix_value,
        apcl_skipped=skipped,
        kappa=weights.kappa,
        eta=weights.eta,
    )
