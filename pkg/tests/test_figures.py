"""Unit tests for the SVG figure writer."""

import pytest

from catebal.figures import FigureSpec, Series, render_svg, write_svg


def spec_with_series(**kw):
    fig = FigureSpec("Title here", "xlab", "ylab")
    fig.series.append(Series("alpha", [0.0, 1.0, 2.0], [1.0, 4.0, 9.0], **kw))
    return fig


def test_series_validation():
    with pytest.raises(ValueError):
        Series("bad", [0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        Series("bad", [0.0, 1.0], [1.0, 2.0], band=[0.1])


def test_render_contains_structure_and_data_comment():
    svg = render_svg(spec_with_series())
    assert svg.startswith("<svg") and svg.endswith("</svg>")
    assert "Title here" in svg and "xlab" in svg and "ylab" in svg
    # numbers are embedded as a diffable comment
    assert "<!-- data: alpha" in svg
    assert "'9'" in svg or "9" in svg
    assert "polyline" in svg


def test_render_band_and_styles():
    svg = render_svg(spec_with_series(band=[0.5, 0.5, 0.5]))
    assert "polygon" in svg and "band=" in svg
    svg2 = render_svg(spec_with_series(dashed=True))
    assert "stroke-dasharray" in svg2
    svg3 = render_svg(spec_with_series(points_only=True))
    assert "circle" in svg3 and "polyline" not in svg3


def test_render_empty_and_degenerate_ranges():
    # no series and constant series must not divide by zero
    assert "</svg>" in render_svg(FigureSpec("t", "x", "y"))
    fig = FigureSpec("t", "x", "y")
    fig.series.append(Series("const", [1.0, 1.0], [2.0, 2.0]))
    assert "</svg>" in render_svg(fig)


def test_render_is_deterministic():
    assert render_svg(spec_with_series()) == render_svg(spec_with_series())


def test_write_svg(tmp_path):
    path = tmp_path / "fig.svg"
    write_svg(path, spec_with_series())
    assert path.read_text().startswith("<svg")
