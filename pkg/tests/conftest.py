import pytest

from .harness import ChainHarness


@pytest.fixture
def chain():
    return ChainHarness(label="chain")


@pytest.fixture
def ehr_chain():
    harness = ChainHarness(label="ehr")
    fixture = harness.setup_ehr(patient_count=2)
    return harness, fixture
