import pytest

SAMPLE_STATUS = "34,10,00:24:58.796044288,CBO,1,P,~, , , , , ~,P"
SAMPLE_MAPPING = "3,11,BANC,1,51,N,C,100,11.47,0,0,N,.0001,1"
# the printed 105 sample wraps after "0,"; joined back into one record
SAMPLE_IMBALANCE = "105,273294,09:29:34.061214976,UHT,33,66.21,170,1141,0,0930,M,B,67.67,0,0,0,0,0,0,0,0,0, ,"
SAMPLE_LINES = (SAMPLE_STATUS, SAMPLE_MAPPING, SAMPLE_IMBALANCE)


@pytest.fixture
def sample_bytes():
    return ("\n".join(SAMPLE_LINES) + "\n").encode()


@pytest.fixture
def sample_file(tmp_path, sample_bytes):
    path = tmp_path / "sample.taq"
    path.write_bytes(sample_bytes)
    return path


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[n])
