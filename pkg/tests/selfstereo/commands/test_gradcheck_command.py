from unittest.mock import MagicMock

import pytest

from selfstereo.autodiff import ops
from selfstereo.autodiff.gradcheck_suite import CASES, GradCase
from selfstereo.commands import gradcheck as gradcheck_module
from selfstereo.commands.gradcheck import GradCheck
from selfstereo.errors import SelfStereoError


def test_passing_cases_return_reports():
    cases = [case for case in CASES if case.name in ("mul", "layer_norm")]
    reports = GradCheck().do(seed=0, cases=cases)
    assert len(reports) == 6


def test_failure_raises_and_logs(monkeypatch):
    mock_logger = MagicMock()
    monkeypatch.setattr(gradcheck_module, "logger", mock_logger)

    def build(rng, shape):
        return (lambda x: ops.sum(ops.exp(x.detach()))), rng.normal(size=shape)

    with pytest.raises(SelfStereoError, match="1 of 1"):
        GradCheck().do(cases=[GradCase("detached_exp", build, ((3,),))])
    mock_logger.error.assert_called_once()
