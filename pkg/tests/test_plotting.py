from fourdare.plotting import plot_report
from fourdare.tracer import snapshot_from_dict, trace


def test_plot_writes_png(bank_spec, eastern, tmp_path):
    path = plot_report(trace(bank_spec, "Q2", eastern), tmp_path / "t.png")
    data = path.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    assert len(data) > 1000


def test_plot_trigger_only_report(bank_spec, tmp_path):
    snap = snapshot_from_dict({"questions": {"Q2": {"aum_ratio": 0.9}}})
    assert plot_report(trace(bank_spec, "Q2", snap), tmp_path / "t.png").exists()
