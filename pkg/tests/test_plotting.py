import numpy as np
import pytest

from wignerlab.lawcheck import scaling_fit
from wignerlab.plotting import emit_plot


def test_loglog_plot_is_byte_deterministic(tmp_path):
    x = np.array([128, 256, 512, 1024.0])
    y = 0.5 / x
    fit = scaling_fit(x, y)
    a = emit_plot({"median": (x, y)}, "loglog", tmp_path / "a.svg", fit=fit)
    b = emit_plot({"median": (x, y)}, "loglog", tmp_path / "b.svg", fit=fit)
    assert a.read_bytes() == b.read_bytes()
    assert b"slope -1.000" in a.read_bytes()


def test_single_point_series(tmp_path):
    path = emit_plot({"one": ([1.0], [2.0])}, "overlay", tmp_path / "p.svg")
    text = path.read_text()
    assert text.startswith("<?xml") and "<svg" in text


def test_overlay_and_validation(tmp_path):
    x = np.linspace(-2, 2, 5)
    emit_plot({"a": (x, x), "b": (x, -x)}, "overlay", tmp_path / "o.svg")
    with pytest.raises(ValueError):
        emit_plot({}, "loglog", tmp_path / "e.svg")
    with pytest.raises(ValueError):
        emit_plot({"a": (x, x)}, "scatter", tmp_path / "e.svg")
    with pytest.raises(OSError):
        emit_plot({"a": (x, x)}, "overlay", tmp_path / "missing" / "dir" / "e.svg")
