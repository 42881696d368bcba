import json
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def oracle_values():
    return json.loads((DATA / "oracle_values.json").read_text())


def write_config(tmp_path, scenarios, **extra):
    """Save scenarios as files and build a validated RunConfig around them."""
    from millwatch.config import parse_config

    tmp_path.mkdir(parents=True, exist_ok=True)
    cams = []
    for i, sc in enumerate(scenarios):
        if isinstance(sc, tuple):
            cam_id, sc = sc
        else:
            cam_id = f"cam{i + 1}"
        path = tmp_path / f"{cam_id}.scenario.json"
        sc.save(path)
        cams.append({"camera_id": cam_id, "source": f"synth:{path}", **extra.pop(f"cam_{cam_id}", {})})
    doc = {"cameras": cams, "sinks": {"out_dir": str(tmp_path / "out")}, **extra}
    return parse_config(doc, base_dir=tmp_path)


# -- acceptance summary: one line per criterion --------------------------------------

_acceptance: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid or report.when != "call" and not report.failed:
        return
    name = report.nodeid.split("::")[-1]
    if not name.startswith("test_ac"):
        return
    n = int(name[len("test_ac"):].split("_")[0])
    if report.when == "call" or n not in _acceptance:
        _acceptance[n] = ("PASS" if report.passed else "FAIL", name)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        status, name = _acceptance[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {name}")
