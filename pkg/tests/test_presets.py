import pytest

from nlstools.cli.presets import NOTE, PASS, get_preset, regress

# presets that run in seconds on the reference grid; the continuation and dynamics presets are left to `nlstools regress`
TWOMODE_AND_OVERLAP_PRESETS = [
    "basis",
    "overlaps-gaussian",
    "overlaps-exponential",
    "overlaps-high-order",
    "critical-norms",
    "phase-portrait",
    "twomode-sigma01",
    "twomode-sigma1",
    "twomode-sigma8",
    "twomode-focusing",
]


@pytest.fixture(scope="module")
def lambda_sq_report():
    return regress(get_preset("lambda-sq"))


@pytest.mark.parametrize("name", TWOMODE_AND_OVERLAP_PRESETS)
def test_preset_reproduces_reference_values(name):
    report = regress(get_preset(name))
    assert report.rows
    assert report.status == PASS, report.table()
    assert all(row.measured is not None for row in report.rows)


def test_lambda_sq_sign_changes(lambda_sq_report):
    assert lambda_sq_report.status == PASS, lambda_sq_report.table()
    rows = {row.quantity: row for row in lambda_sq_report.rows}
    assert rows["N2cr"].status == PASS
    assert rows["N3cr"].status == PASS


def test_lambda_sq_reports_the_existence_endpoints(lambda_sq_report):
    rows = {row.quantity: row for row in lambda_sq_report.rows}
    onset, end = rows["asymmetric_onset_N"], rows["asymmetric_end_N"]

    # the asymmetric family is born and dies where the antisymmetric lambda^2 changes sign
    assert onset.measured == pytest.approx(rows["N2cr"].measured, abs=1e-8)
    assert end.measured == pytest.approx(rows["N3cr"].measured, abs=1e-8)

    assert (onset.expected, end.expected) == (0.03, 4.75)
    assert onset.status == NOTE
    assert end.status == NOTE
    assert "asymmetric_end_N" in lambda_sq_report.table()
