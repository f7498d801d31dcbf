import pytest

from acceptance_checks import CRITERIA, line


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, acceptance_log):
    ok, detail = CRITERIA[k]()
    text = line(k, ok, detail)
    print(text)
    acceptance_log.append(text)
    assert ok, text
