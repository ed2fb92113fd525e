from typing import List, Optional, Sequence

from selfstereo.autodiff.gradcheck import GradCheckReport
from selfstereo.autodiff.gradcheck_suite import CASES, SUITE_TOLERANCE, GradCase, run_gradcheck_suite
from selfstereo.commands.abstract_command import Command
from selfstereo.errors import SelfStereoError
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)


class GradCheck(Command):
    """Finite-difference check of every differentiable op; raises when any of them fails."""

    def do(self, seed: int = 0, cases: Optional[Sequence[GradCase]] = None) -> List[GradCheckReport]:
        reports = run_gradcheck_suite(seed=seed, cases=CASES if cases is None else cases)
        failed = [r for r in reports if not r.passed(SUITE_TOLERANCE)]
        for report in failed:
            logger.error(
                "%s: max rel err %.3e over %d probes", report.op_name, report.max_rel_error, report.probe_count
            )
        if failed:
            raise SelfStereoError(f"Gradient check failed for {len(failed)} of {len(reports)} cases")
        logger.info("Gradient check passed for %d cases", len(reports))
        return reports
