import shutil
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from molkit.milp_core import default_solver_template  # noqa: E402

_ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Remember one acceptance line; printed in the terminal summary."""
    _ACCEPTANCE[criterion] = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"


def _solver_present() -> bool:
    template = default_solver_template()
    return bool(template) and shutil.which(template.split()[0]) is not None


requires_solver = pytest.mark.skipif(not _solver_present(), reason="no MILP solver on PATH")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])
