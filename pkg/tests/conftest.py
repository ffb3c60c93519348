import numpy as np
import pytest

from platerec.data import DIGITS, decode_label, synth_dataset
from platerec.layers import AdamState
from platerec.model import CrnnConfig, build_crnn, train_step
from platerec.pipeline import predict_plates


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def overfit():
    """Default-shape digit recognizer trained until it reads its 8 training plates perfectly."""
    samples = synth_dataset(8, DIGITS, seed=3)
    model = build_crnn(CrnnConfig(num_classes=len(DIGITS) + 1), seed=0, alphabet=DIGITS)
    adam = AdamState.for_params(model.parameters(), learning_rate=3e-3, beta2=0.99)
    rng = np.random.default_rng(0)
    X = np.stack([s.image for s in samples])
    Y = [s.label for s in samples]
    truth = [decode_label(y, DIGITS) for y in Y]
    for step in range(1, 1501):
        train_step(model, X, Y, adam, rng)
        if step % 20 == 0 and predict_plates(model, list(X)) == truth:
            return model, samples
    pytest.fail("overfit fixture did not reach 100% training accuracy")


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
