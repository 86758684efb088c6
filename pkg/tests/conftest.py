import pytest

from twinrep.config import RunConfig
from twinrep.data import FIXTURES


def fixture_config(**overrides) -> RunConfig:
    """A small run over the bundled fixtures."""
    cfg = RunConfig(
        nli_train=[str(FIXTURES / "nli_train.tsv")],
        nli_valid=str(FIXTURES / "nli_valid.tsv"),
        ppdb_train=[str(FIXTURES / "ppdb_train.tsv")],
        num_layers=1, num_heads=2, hidden_dim=16, ffn_dim=32,
        total_steps=12, lr=1e-3, sentence_max_len=16,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg.validate()


ACCEPTANCE: list[str] = []


class _Criterion:
    """Context manager that records one PASS/FAIL line per acceptance criterion."""

    def __init__(self, number: int, title: str):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        line = f"{verdict} criterion {self.number}: {self.title}"
        if self.detail:
            line += f" [{self.detail}]"
        ACCEPTANCE.append(line)
        print(line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
