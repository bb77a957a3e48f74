"""
Losses module: prototype sets and the training objectives.
"""

from .prototypes import PrototypeSet, PrototypeFlavor, fuse_prototypes, SERVER
from .objectives import (
    LossWeights,
    ApclOutput,
    Phase3Output,
    apcl_loss,
    mixup_features,
    mixup_loss,
    phase1_loss,
    phase3_loss,
    MFA_PARTNERS,
)

__all__ = [
    "PrototypeSet",
    "PrototypeFlavor",
    "fuse_prototypes",
    "SERVER",
    "LossWeights",
    "ApclOutput",
    "Phase3Output",
    "apcl_loss",
    "mixup_features",
    "mixup_loss",
    "phase1_loss",
    "phase3_loss",
    "MFA_PARTNERS",
]
