import tempfile
import unittest
from pathlib import Path

import numpy as np

from fedct_sim.autograd import Tensor, add, backward, get_tape, matmul, softmax_cross_entropy
from fedct_sim.data import (
    Dataset,
    PartitionSpec,
    batches,
    concatenate,
    dirichlet_partition,
    make_synthetic,
    pooled_test_set,
)
from fedct_sim.utils.errors import InputError, PartitionError


class TestSynthetic(unittest.TestCase):
    """Test cases for the Gaussian-mixture generator."""

    def test_counts(self):
        """Test class bookkeeping."""
        data = make_synthetic(num_classes=2, per_class=10, dim=4, class_separation=1.0, seed=0)
        self.assertEqual(len(data), 20)
        np.testing.assert_array_equal(data.class_histogram(), [10, 10])
        self.assertEqual(data.dim, 4)

    def test_deterministic(self):
        """Test that identical seeds give identical datasets."""
        a = make_synthetic(3, 5, 6, 2.0, seed=42)
        b = make_synthetic(3, 5, 6, 2.0, seed=42)
        c = make_synthetic(3, 5, 6, 2.0, seed=43)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)
        self.assertFalse(np.array_equal(a.features, c.features))

    def test_wide_separation_is_linearly_separable(self):
        """Test that a linear probe reaches full train accuracy at separation 50."""
        data = make_synthetic(2, 50, 8, class_separation=50.0, seed=1)
        weight = Tensor(np.zeros((8, 2)), requires_grad=True)
        bias = Tensor(np.zeros((1, 2)), requires_grad=True)
        x = Tensor(data.features / 50.0)
        for _ in range(200):
            get_tape().clear()
            backward(softmax_cross_entropy(add(matmul(x, weight), bias), data.labels))
            weight.data -= 0.5 * weight.grad
            bias.data -= 0.5 * bias.grad
            weight.grad = bias.grad = None
        predictions = np.argmax(x.data @ weight.data + bias.data, axis=1)
        self.assertEqual(float(np.mean(predictions == data.labels)), 1.0)

    def test_preconditions(self):
        """Test invalid generator arguments."""
        with self.assertRaises(InputError):
            make_synthetic(1, 10, 4, 1.0, seed=0)
        with self.assertRaises(InputError):
            make_synthetic(2, 10, 4, 0.0, seed=0)

    def test_dataset_validation(self):
        """Test that labels outside [0, K) are rejected."""
        with self.assertRaises(InputError):
            Dataset(np.zeros((2, 3)), np.array([0, 3]), 3)

    def test_csv_round_trip(self):
        """Test writing and reading a dataset as CSV."""
        data = make_synthetic(3, 4, 2, 1.0, seed=7)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "data.csv"
            data.to_csv(path)
            loaded = Dataset.from_csv(path, num_classes=3)
        np.testing.assert_allclose(loaded.features, data.features, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(loaded.labels, data.labels)


class TestPartition(unittest.TestCase):
    """Test cases for the Dirichlet label-skew partition."""

    def setUp(self):
        self.data = make_synthetic(num_classes=10, per_class=60, dim=4, class_separation=1.0, seed=0)

    def test_partition_is_complete_and_disjoint(self):
        """Test that shards cover every index exactly once."""
        for beta in (0.1, 1.0, 100.0):
            shards = dirichlet_partition(self.data, PartitionSpec(num_clients=5, beta=beta, seed=3))
            indices = np.concatenate([shard.indices for shard in shards])
            self.assertEqual(len(indices), len(self.data))
            np.testing.assert_array_equal(np.sort(indices), np.arange(len(self.data)))
            for shard in shards:
                self.assertEqual(int(shard.class_histogram.sum()), shard.size)

    def test_shards_hold_their_samples(self):
        """Test that shard datasets match the indexed rows."""
        shards = dirichlet_partition(self.data, PartitionSpec(num_clients=4, beta=0.5, seed=1))
        for shard in shards:
            np.testing.assert_array_equal(shard.train.features, self.data.features[shard.train_indices])
            np.testing.assert_array_equal(shard.test.labels, self.data.labels[shard.test_indices])

    def test_large_beta_is_near_uniform(self):
        """Test that a huge concentration spreads each class evenly."""
        data = make_synthetic(num_classes=4, per_class=500, dim=2, class_separation=1.0, seed=0)
        for seed in range(10):
            shards = dirichlet_partition(data, PartitionSpec(num_clients=5, beta=1e6, seed=seed))
            for shard in shards:
                expected = 500 / 5
                histogram = shard.class_histogram
                self.assertTrue(np.all(np.abs(histogram - expected) <= 0.1 * expected), histogram)

    def test_small_beta_is_skewed(self):
        """Test the severe-skew regime at beta 0.1."""
        concentrated = []
        for seed in range(10):
            shards = dirichlet_partition(self.data, PartitionSpec(num_clients=10, beta=0.1, seed=seed))
            per_client = np.stack([shard.class_histogram for shard in shards]).astype(float)
            count = 0
            for k in range(10):
                shares = np.sort(per_client[:, k])[::-1] / per_client[:, k].sum()
                if shares[:2].sum() > 0.8:
                    count += 1
            concentrated.append(count)
        self.assertGreaterEqual(float(np.median(concentrated)), 5)

    def test_min_samples_enforced(self):
        """Test that every client gets the minimum sample count."""
        shards = dirichlet_partition(
            self.data, PartitionSpec(num_clients=10, beta=0.3, seed=2, min_samples_per_client=20)
        )
        self.assertTrue(all(shard.size >= 20 for shard in shards))

    def test_retry_budget_exhausted(self):
        """Test the error when no draw satisfies the minimum."""
        with self.assertRaises(PartitionError):
            dirichlet_partition(
                self.data,
                PartitionSpec(num_clients=10, beta=0.01, seed=0, min_samples_per_client=59, max_retries=3),
            )

    def test_too_small_dataset(self):
        """Test the error when the dataset cannot satisfy the minimum at all."""
        with self.assertRaises(PartitionError):
            dirichlet_partition(self.data, PartitionSpec(num_clients=10, beta=1.0, seed=0, min_samples_per_client=61))

    def test_stratified_test_split(self):
        """Test the per-shard 80/20 split."""
        shards = dirichlet_partition(self.data, PartitionSpec(num_clients=3, beta=100.0, seed=4))
        for shard in shards:
            self.assertGreater(len(shard.test), 0)
            ratio = len(shard.test) / shard.size
            self.assertAlmostEqual(ratio, 0.2, delta=0.05)

    def test_pooled_test_set(self):
        """Test that the pooled set is the union of test splits."""
        shards = dirichlet_partition(self.data, PartitionSpec(num_clients=4, beta=1.0, seed=5))
        pooled = pooled_test_set(shards)
        self.assertEqual(len(pooled), sum(len(shard.test) for shard in shards))
        np.testing.assert_array_equal(pooled.labels, concatenate([s.test for s in shards]).labels)

    def test_partition_is_deterministic(self):
        """Test that the same seed gives the same shards."""
        spec = PartitionSpec(num_clients=5, beta=0.5, seed=9)
        first = dirichlet_partition(self.data, spec)
        second = dirichlet_partition(self.data, spec)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.train_indices, b.train_indices)
            np.testing.assert_array_equal(a.test_indices, b.test_indices)


class TestBatches(unittest.TestCase):
    """Test cases for epoch batching."""

    def setUp(self):
        data = make_synthetic(num_classes=2, per_class=25, dim=2, class_separation=1.0, seed=0)
        self.shard = dirichlet_partition(data, PartitionSpec(num_clients=2, beta=100.0, seed=0))[0]

    def test_batch_sizes(self):
        """Test chunk arithmetic on the train split."""
        n = len(self.shard.train)
        sizes = [len(batch) for batch in batches(self.shard, 4, epoch_seed=0)]
        self.assertEqual(sum(sizes), n)
        self.assertTrue(all(size == 4 for size in sizes[:-1]))
        self.assertEqual(sizes[-1], n - 4 * (len(sizes) - 1))

    def test_same_seed_same_order(self):
        """Test determinism and the permutation property."""
        first = batches(self.shard, 3, epoch_seed=11)
        second = batches(self.shard, 3, epoch_seed=11)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(np.sort(np.concatenate(first)), np.arange(len(self.shard.train)))

    def test_invalid_batch_size(self):
        """Test batch_size below 1."""
        with self.assertRaises(InputError):
            batches(self.shard, 0, epoch_seed=0)


if __name__ == "__main__":
    unittest.main()
