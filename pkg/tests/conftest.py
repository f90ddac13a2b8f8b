import pytest


@pytest.fixture
def announce(capsys):
    """Print one line straight to the terminal, bypassing capture."""
    def _say(line: str) -> None:
        with capsys.disabled():
            print("\n" + line, flush=True)
    return _say
