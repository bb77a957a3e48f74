"""
Data module: synthetic datasets and non-IID client partitioning.
"""

from .synthetic import Dataset, make_synthetic, concatenate
from .partition import PartitionSpec, Shard, dirichlet_partition, batches, pooled_test_set

__all__ = [
    "Dataset",
    "make_synthetic",
    "concatenate",
    "PartitionSpec",
    "Shard",
    "dirichlet_partition",
    "batches",
    "pooled_test_set",
]
