import unittest
import os
import sys

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

# Import test modules
from tests.test_autograd import (
    TestTensor,
    TestOps,
    TestBackward,
    TestFiniteDifferenceCheck,
    TestTorchOracle
)
from tests.test_data import TestSynthetic, TestPartition, TestBatches
from tests.test_models import TestInitModel, TestForward, TestSgdStep, TestSnapshots
from tests.test_losses import (
    TestPrototypeSet,
    TestFusePrototypes,
    TestApclLoss,
    TestMixup,
    TestPhaseObjectives
)
from tests.test_protocol import (
    TestBroadcastPlan,
    TestConsistencyMatrix,
    TestAggregation,
    TestClientPhases,
    TestFederatedServer
)
from tests.test_metrics import TestEvaluation, TestLinearCka, TestKnowledgeReport, TestMetricsWriter
from tests.test_runtime import TestConfig, TestExperiment, TestAblation, TestCli, TestGradSuite
from tests.test_directional import TestDirectionalComparisons, TestMinorityRecall

CASES = [
    TestTensor, TestOps, TestBackward, TestFiniteDifferenceCheck, TestTorchOracle,
    TestSynthetic, TestPartition, TestBatches,
    TestInitModel, TestForward, TestSgdStep, TestSnapshots,
    TestPrototypeSet, TestFusePrototypes, TestApclLoss, TestMixup, TestPhaseObjectives,
    TestBroadcastPlan, TestConsistencyMatrix, TestAggregation, TestClientPhases, TestFederatedServer,
    TestEvaluation, TestLinearCka, TestKnowledgeReport, TestMetricsWriter,
    TestConfig, TestExperiment, TestAblation, TestCli, TestGradSuite,
    # skipped unless FEDCT_SIM_SLOW=1
    TestDirectionalComparisons, TestMinorityRecall,
]

if __name__ == "__main__":
    # Create test suite
    loader = unittest.TestLoader()
    test_suite = unittest.TestSuite()
    for case in CASES:
        test_suite.addTest(loader.loadTestsFromTestCase(case))

    # Run tests
    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(test_suite)
    sys.exit(0 if result.wasSuccessful() else 1)
