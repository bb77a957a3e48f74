import math
import unittest

import numpy as np

from fedct_sim.autograd import Tensor, finite_difference_check, no_grad, softmax_cross_entropy
from fedct_sim.losses import (
    LossWeights,
    PrototypeFlavor,
    PrototypeSet,
    apcl_loss,
    fuse_prototypes,
    mixup_features,
    mixup_loss,
    phase1_loss,
    phase3_loss,
)
from fedct_sim.models import ClassifierParams, LocalModel, ModelConfig, classify, init_model
from fedct_sim.utils.errors import DimensionError, InputError

SMALL = ModelConfig(input_dim=4, hidden=(5,), feature_dim=3, num_classes=3)


def protos(entries, flavor=PrototypeFlavor.LOCAL, source=0) -> PrototypeSet:
    return PrototypeSet({k: np.asarray(v, dtype=float) for k, v in entries.items()}, flavor, source)


class TestPrototypeSet(unittest.TestCase):
    """Test cases for prototype sets."""

    def test_sorted_and_read_only(self):
        """Test class ordering and immutability of stored vectors."""
        prototypes = protos({2: [1.0, 0.0], 0: [0.0, 1.0]})
        self.assertEqual(prototypes.classes(), [0, 2])
        matrix, labels = prototypes.matrix()
        np.testing.assert_array_equal(matrix, [[0.0, 1.0], [1.0, 0.0]])
        self.assertEqual(labels, [0, 2])
        self.assertEqual(prototypes.dim, 2)
        with self.assertRaises(ValueError):
            prototypes[0][0] = 5.0

    def test_mixed_dimensions(self):
        """Test that vectors of different widths are rejected."""
        with self.assertRaises(DimensionError):
            protos({0: [1.0, 0.0], 1: [1.0, 0.0, 0.0]})

    def test_dict_round_trip(self):
        """Test the plain-dict form."""
        prototypes = protos({1: [0.5, -0.5]}, PrototypeFlavor.GLOBAL, "server")
        restored = PrototypeSet.from_dict(prototypes.to_dict())
        self.assertEqual(restored.flavor, PrototypeFlavor.GLOBAL)
        self.assertEqual(restored.source, "server")
        np.testing.assert_array_equal(restored[1], prototypes[1])


class TestFusePrototypes(unittest.TestCase):
    """Test cases for multi-view fusion."""

    def setUp(self):
        self.local = protos({0: [0.0, 2.0], 1: [1.0, 1.0]})
        self.global_ = protos({0: [2.0, 0.0], 2: [3.0, 3.0]}, PrototypeFlavor.GLOBAL, "server")

    def test_endpoints(self):
        """Test lambda_fuse 0 and 1 on shared classes."""
        np.testing.assert_array_equal(fuse_prototypes(self.local, self.global_, 0.0)[0], self.local[0])
        np.testing.assert_array_equal(fuse_prototypes(self.local, self.global_, 1.0)[0], self.global_[0])

    def test_midpoint(self):
        """Test lambda_fuse 0.5 on (0,2) and (2,0)."""
        np.testing.assert_array_equal(fuse_prototypes(self.local, self.global_, 0.5)[0], [1.0, 1.0])

    def test_unshared_classes_copied(self):
        """Test that classes in one view only are copied."""
        fused = fuse_prototypes(self.local, self.global_, 0.5)
        self.assertEqual(fused.classes(), [0, 1, 2])
        np.testing.assert_array_equal(fused[1], self.local[1])
        np.testing.assert_array_equal(fused[2], self.global_[2])
        self.assertEqual(fused.flavor, PrototypeFlavor.FUSED)

    def test_errors(self):
        """Test range and dimension checks."""
        with self.assertRaises(InputError):
            fuse_prototypes(self.local, self.global_, 1.5)
        with self.assertRaises(InputError):
            fuse_prototypes(self.local, protos({0: [1.0, 0.0, 0.0]}), 0.5)


class TestApclLoss(unittest.TestCase):
    """Test cases for the augmented prototypical contrastive loss."""

    def test_single_prototype_gives_zero(self):
        """Test that a lone positive has no negatives to contrast with."""
        out = apcl_loss(Tensor([[0.3, 0.7]]), [0], protos({0: [1.0, 0.0]}), lambda_hy=0.3, tau2=0.5)
        self.assertAlmostEqual(out.loss.item(), 0.0, places=12)
        self.assertEqual(out.skipped, 0)

    def test_hand_evaluated_value(self):
        """Test a feature at its unit prototype with one orthogonal negative."""
        fused = protos({0: [1.0, 0.0], 1: [0.0, 1.0]})
        out = apcl_loss(Tensor([[1.0, 0.0]]), [0], fused, lambda_hy=0.0, tau2=0.5)
        self.assertAlmostEqual(out.loss.item(), math.log(1 + math.exp(-2)), places=10)
        self.assertAlmostEqual(out.loss.item(), 0.126928, places=6)

    def test_equal_similarities(self):
        """Test that equal similarity to positive and negative gives ln 2."""
        fused = protos({0: [1.0, 0.0], 1: [0.0, 1.0]})
        for tau2 in (0.1, 0.5, 2.0):
            out = apcl_loss(Tensor([[1.0, 1.0]]), [0], fused, lambda_hy=0.0, tau2=tau2)
            self.assertAlmostEqual(out.loss.item(), math.log(2), places=10)

    def test_hybrid_feature_at_prototype(self):
        """Test that extrapolation is a no-op for a feature equal to its prototype."""
        fused = protos({0: [1.0, 0.0], 1: [0.0, 1.0]})
        plain = apcl_loss(Tensor([[1.0, 0.0]]), [0], fused, lambda_hy=0.0, tau2=0.5).loss.item()
        hybrid = apcl_loss(Tensor([[1.0, 0.0]]), [0], fused, lambda_hy=0.7, tau2=0.5).loss.item()
        self.assertAlmostEqual(plain, hybrid, places=12)

    def test_skips_missing_classes(self):
        """Test skip counting and the all-skipped zero loss."""
        fused = protos({0: [1.0, 0.0], 1: [0.0, 1.0]})
        partial = apcl_loss(Tensor([[1.0, 0.0], [0.5, 0.5]]), [0, 2], fused, 0.0, 0.5)
        self.assertEqual(partial.skipped, 1)
        only_first = apcl_loss(Tensor([[1.0, 0.0]]), [0], fused, 0.0, 0.5)
        self.assertAlmostEqual(partial.loss.item(), only_first.loss.item(), places=12)

        skipped = apcl_loss(Tensor([[1.0, 0.0]]), [2], fused, 0.0, 0.5)
        self.assertEqual(skipped.skipped, 1)
        self.assertEqual(skipped.loss.item(), 0.0)

    def test_empty_prototype_set(self):
        """Test the input error on an empty set."""
        with self.assertRaises(InputError):
            apcl_loss(Tensor([[1.0, 0.0]]), [0], PrototypeSet({}), 0.0, 0.5)

    def test_gradient(self):
        """Test the APCL gradient with the hybrid feature on."""
        rng = np.random.default_rng(0)
        features = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
        labels = [0, 1, 2, 0, 1]
        fused = protos({k: rng.standard_normal(3) for k in range(3)})
        error = finite_difference_check(lambda: apcl_loss(features, labels, fused, 0.5, 0.5).loss, [features])
        self.assertLess(error, 1e-3)

    def test_positive_rescaling(self):
        """Test invariance to rescaling f_x and single prototypes."""
        rng = np.random.default_rng(7)
        features = rng.standard_normal((4, 3))
        labels = [0, 1, 2, 0]
        entries = {k: rng.standard_normal(3) for k in range(3)}

        def loss(feats, protos_, lambda_hy):
            return apcl_loss(Tensor(feats), labels, protos(protos_), lambda_hy, 0.5).loss.item()

        base = loss(features, entries, 0.0)
        self.assertAlmostEqual(loss(features * 3.7, entries, 0.0), base, delta=1e-9)
        for label in entries:
            rescaled = dict(entries, **{label: entries[label] * 0.4})
            self.assertAlmostEqual(loss(features, rescaled, 0.0), base, delta=1e-9)

        # with extrapolation on, only a prototype no row uses as positive is free to scale
        rows, row_labels = features[[0, 3]], [0, 0]
        hybrid = apcl_loss(Tensor(rows), row_labels, protos(entries), 0.5, 0.5).loss.item()
        for label in (1, 2):
            rescaled = protos(dict(entries, **{label: entries[label] * 5.0}))
            value = apcl_loss(Tensor(rows), row_labels, rescaled, 0.5, 0.5).loss.item()
            self.assertAlmostEqual(value, hybrid, delta=1e-9)
        joint = protos({k: v * 2.5 for k, v in entries.items()})
        value = apcl_loss(Tensor(rows * 2.5), row_labels, joint, 0.5, 0.5).loss.item()
        self.assertAlmostEqual(value, hybrid, delta=1e-9)

    def test_rotation_toward_positive(self):
        """Test that the loss strictly falls as f_x turns toward its prototype."""
        fused = protos({0: [1.0, 0.0], 1: [0.0, 1.0], 2: [-1.0, 0.2]})
        for lambda_hy in (0.0, 0.3):
            values = []
            for degrees in (80, 60, 40, 20, 5, 0):
                angle = math.radians(degrees)
                f_x = Tensor([[math.cos(angle), math.sin(angle)]])
                values.append(apcl_loss(f_x, [0], fused, lambda_hy, 0.5).loss.item())
            for before, after in zip(values, values[1:]):
                self.assertLess(after, before)


class TestMixup(unittest.TestCase):
    """Test cases for feature mixup."""

    def test_mixup_features(self):
        """Test boundary, midpoint and idempotence."""
        f_a, f_b = Tensor([[2.0, 0.0]]), Tensor([[0.0, 2.0]])
        np.testing.assert_array_equal(mixup_features(f_a, f_b, 1.0).data, f_a.data)
        np.testing.assert_array_equal(mixup_features(f_a, f_b, 0.5).data, [[1.0, 1.0]])
        for lam in (0.0, 0.3, 0.9):
            np.testing.assert_allclose(mixup_features(f_a, f_a, lam).data, f_a.data, atol=1e-15)
        with self.assertRaises(DimensionError):
            mixup_features(f_a, Tensor([[1.0, 2.0, 3.0]]), 0.5)

    def test_mixup_loss(self):
        """Test the boundary, equal-label and hand-built cases."""
        classifier = ClassifierParams(Tensor(np.eye(2)), Tensor(np.zeros((1, 2))))
        f_a = Tensor([[2.0, 0.0]])
        at_one = mixup_loss(classifier, mixup_features(f_a, Tensor([[0.0, 2.0]]), 1.0), [0], [1], 1.0)
        self.assertAlmostEqual(at_one.item(), softmax_cross_entropy(classify(classifier, f_a), [0]).item(), places=12)

        f_mix = Tensor([[1.0, 0.5]])
        same = mixup_loss(classifier, f_mix, [1], [1], 0.3)
        self.assertAlmostEqual(same.item(), softmax_cross_entropy(classify(classifier, f_mix), [1]).item(), places=12)

        # logits (1, 0.5): CE0 = log(1 + e^-0.5), CE1 = log(1 + e^0.5)
        mixed = mixup_loss(classifier, f_mix, [0], [1], 0.5)
        expected = 0.5 * math.log(1 + math.exp(-0.5)) + 0.5 * math.log(1 + math.exp(0.5))
        self.assertAlmostEqual(mixed.item(), expected, places=12)

    def test_swapped_pair_symmetry(self):
        """Test mixup_loss(lam, a, b) == mixup_loss(1 - lam, b, a)."""
        rng = np.random.default_rng(11)
        classifier = ClassifierParams(Tensor(rng.standard_normal((3, 4))), Tensor(rng.standard_normal((1, 4))))
        f_a, f_b = Tensor(rng.standard_normal((5, 3))), Tensor(rng.standard_normal((5, 3)))
        labels_a, labels_b = [0, 1, 2, 3, 0], [3, 3, 1, 0, 2]
        for lam in (0.1, 0.3, 0.5, 0.8):
            forward = mixup_loss(classifier, mixup_features(f_a, f_b, lam), labels_a, labels_b, lam)
            swapped = mixup_loss(classifier, mixup_features(f_b, f_a, 1.0 - lam), labels_b, labels_a, 1.0 - lam)
            self.assertAlmostEqual(forward.item(), swapped.item(), places=12)

    def test_mixup_loss_lengths(self):
        """Test label count checks."""
        classifier = ClassifierParams(Tensor(np.eye(2)), Tensor(np.zeros((1, 2))))
        with self.assertRaises(InputError):
            mixup_loss(classifier, Tensor([[1.0, 0.0]]), [0], [0, 1], 0.5)


class TestPhaseObjectives(unittest.TestCase):
    """Test cases for the local-training and cross-training objectives."""

    def setUp(self):
        rng = np.random.default_rng(4)
        self.model = LocalModel.from_snapshot(init_model(SMALL, 4))
        self.x = Tensor(rng.standard_normal((6, 4)))
        self.labels = np.array([0, 1, 2, 0, 1, 2])
        self.fused = protos({k: rng.standard_normal(3) for k in range(3)}, PrototypeFlavor.FUSED)

    def test_phase1_uniform_and_saturated(self):
        """Test ln K for uniform logits and ~0 for saturated ones."""
        self.assertAlmostEqual(phase1_loss(Tensor(np.zeros((3, 5))), [0, 1, 4]).item(), math.log(5), places=12)
        self.assertAlmostEqual(phase1_loss(Tensor(np.eye(3) * 1e3), [0, 1, 2]).item(), 0.0, places=12)

    def test_phase3_reduces_to_phase1(self):
        """Test that zero weights leave plain cross-entropy."""
        weights = LossWeights(kappa=0.0, eta=0.0)
        with no_grad():
            out = phase3_loss(self.x, self.labels, self.model, self.fused, weights, pairing_seed=0)
            expected = phase1_loss(self.model.forward(self.x)[1], self.labels).item()
        self.assertAlmostEqual(out.total.item(), expected, places=12)
        self.assertEqual((out.l_apcl, out.l_mix), (0.0, 0.0))

    def test_phase3_is_sum_of_terms(self):
        """Test total = CE + kappa * APCL for a single sample."""
        weights = LossWeights(kappa=1.0, eta=0.0, lambda_hy=0.3, tau2=0.5)
        x = Tensor(self.x.data[:1])
        with no_grad():
            out = phase3_loss(x, [0], self.model, self.fused, weights, pairing_seed=0)
            features, logits = self.model.forward(x)
            ce = softmax_cross_entropy(logits, [0]).item()
            apcl = apcl_loss(features, [0], self.fused, 0.3, 0.5).loss.item()
        self.assertAlmostEqual(out.total.item(), ce + apcl, places=12)
        self.assertAlmostEqual(sum(out.weighted_terms()), out.total.item(), places=12)

    def test_phase3_pairing_is_seeded(self):
        """Test that the mixup pairing depends only on the seed."""
        weights = LossWeights(kappa=0.0, eta=1.0)
        with no_grad():
            first = phase3_loss(self.x, self.labels, self.model, self.fused, weights, pairing_seed=5).l_mix
            second = phase3_loss(self.x, self.labels, self.model, self.fused, weights, pairing_seed=5).l_mix
        self.assertEqual(first, second)

    def test_phase3_prototype_partner(self):
        """Test that prototype mixup differs from sample mixup and checks its input."""
        weights = LossWeights(kappa=0.0, eta=1.0)
        with no_grad():
            sample = phase3_loss(self.x, self.labels, self.model, self.fused, weights, 1, "sample").l_mix
            prototype = phase3_loss(self.x, self.labels, self.model, self.fused, weights, 1, "prototype").l_mix
        self.assertNotAlmostEqual(sample, prototype, places=6)
        with self.assertRaises(InputError):
            phase3_loss(self.x, self.labels, self.model, self.fused, weights, 1, "neighbour")

    def test_phase3_gradient(self):
        """Test every cross-training term against finite differences."""
        for lambda_hy in (0.0, 0.5):
            weights = LossWeights(kappa=1.0, eta=0.5, lambda_hy=lambda_hy)
            error = finite_difference_check(
                lambda: phase3_loss(self.x, self.labels, self.model, self.fused, weights, 3).total,
                self.model.parameters(),
            )
            self.assertLess(error, 1e-3)


if __name__ == "__main__":
    unittest.main()
