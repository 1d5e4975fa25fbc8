from __future__ import annotations

import copy
from importlib.resources import files
from pathlib import Path

import pytest
import yaml
from hypothesis import HealthCheck, settings

from fourdare.loader import load_spec
from fourdare.tracer import load_snapshot

settings.register_profile(
    "repo",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

FIXTURES = Path(str(files("fourdare") / "fixtures"))
BANK = FIXTURES / "bank"
RETAIL = FIXTURES / "retail" / "bundle.yaml"
EASTERN = BANK / "snapshots" / "eastern.yaml"
DATA = Path(__file__).parent / "data"

BANK_FILES = {
    1: "layer1_question_inventory.yaml",
    2: "layer2_attribution_model.yaml",
    3: "layer3_data_mapping.yaml",
    4: "layer4_dual_track.yaml",
    5: "layer5_boundaries.yaml",
}


@pytest.fixture(scope="session")
def bank_spec():
    return load_spec(BANK)


@pytest.fixture(scope="session")
def retail_spec():
    return load_spec(RETAIL)


@pytest.fixture(scope="session")
def eastern():
    return load_snapshot(EASTERN)


def bank_layers() -> dict[int, dict]:
    return {n: yaml.safe_load((BANK / name).read_text(encoding="utf-8")) for n, name in BANK_FILES.items()}


def write_layers(folder: Path, layers: dict[int, dict]) -> Path:
    folder.mkdir(parents=True, exist_ok=True)
    for n, name in BANK_FILES.items():
        (folder / name).write_text(yaml.safe_dump(layers[n], sort_keys=False, allow_unicode=True), encoding="utf-8")
    return folder


def mutated_bank(folder: Path, mutate) -> Path:
    layers = copy.deepcopy(bank_layers())
    mutate(layers)
    return write_layers(folder, layers)


# ---------------------------------------------------------------- acceptance lines

_ACCEPTANCE: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    status = "PASS" if rep.passed else "FAIL"
    _ACCEPTANCE.append(f"criterion {number}: {status}  {title}  ({rep.duration:.2f}s)")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
