"""
Class prototype sets and multi-view fusion.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..utils.errors import DimensionError, InputError

SERVER = "server"


class PrototypeFlavor(str, Enum):
    LOCAL = "local"
    GLOBAL = "global"
    FUSED = "fused"


@dataclass(frozen=True, eq=False)
class PrototypeSet:
    """
    Class index -> d-dimensional centroid.

    Entries may cover any subset of the classes. Vectors are stored as
    read-only float64 copies.
    """
    entries: Dict[int, np.ndarray] = field(default_factory=dict)
    flavor: PrototypeFlavor = PrototypeFlavor.LOCAL
    source: Union[int, str] = SERVER

    def __post_init__(self):
        frozen: Dict[int, np.ndarray] = {}
        dims = set()
        for label, vector in self.entries.items():
            array = np.array(vector, dtype=np.float64).reshape(-1)
            array.setflags(write=False)
            frozen[int(label)] = array
            dims.add(array.size)
        if len(dims) > 1:
            raise DimensionError(f"Prototype vectors have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "entries", dict(sorted(frozen.items())))
        object.__setattr__(self, "flavor", PrototypeFlavor(self.flavor))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, label: int) -> bool:
        return int(label) in self.entries

    def __getitem__(self, label: int) -> np.ndarray:
        return self.entries[int(label)]

    @property
    def dim(self) -> Optional[int]:
        if not self.entries:
            return None
        return next(iter(self.entries.values())).size

    def classes(self) -> List[int]:
        return list(self.entries.keys())

    def matrix(self) -> Tuple[np.ndarray, List[int]]:
        """Stacked prototypes (m×d) and their labels, in ascending class order."""
        labels = self.classes()
        if not labels:
            return np.zeros((0, 0)), []
        return np.stack([self.entries[k] for k in labels]), labels

    def to_dict(self) -> Dict[str, object]:
        return {
            "flavor": self.flavor.value,
            "source": self.source,
            "entries": {str(k): v.tolist() for k, v in self.entries.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "PrototypeSet":
        entries = {int(k): np.asarray(v) for k, v in data["entries"].items()}
        return cls(entries, PrototypeFlavor(data["flavor"]), data["source"])


def fuse_prototypes(local: PrototypeSet, global_: PrototypeSet, lambda_fuse: float) -> PrototypeSet:
    """
    Blend the local and global views of each class.

    Shared classes get ``lambda_fuse * u_g + (1 - lambda_fuse) * u_l``; a class
    present in only one set is copied from it.

    Args:
        local: Local prototypes of the model's origin client
        global_: Server-side global prototypes
        lambda_fuse: Weight of the global view in [0, 1]

    Returns:
        Fused prototype set (source = the local set's source)

    Raises:
        InputError: If lambda_fuse is out of range or the dimensions differ
    """
    if not 0.0 <= lambda_fuse <= 1.0:
        raise InputError(f"lambda_fuse must lie in [0, 1], got {lambda_fuse}")
    if local.dim is not None and global_.dim is not None and local.dim != global_.dim:
        raise DimensionError(f"Cannot fuse prototypes of dimension {local.dim} and {global_.dim}")

    fused: Dict[int, np.ndarray] = {}
    for label in sorted(set(local.classes()) | set(global_.classes())):
        if label in local and label in global_:
            fused[label] = lambda_fuse * global_[label] + (1.0 - lambda_fuse) * local[label]
        elif label in global_:
            fused[label] = global_[label]
        else:
            fused[label] = local[label]
    return PrototypeSet(fused, PrototypeFlavor.FUSED, local.source)
