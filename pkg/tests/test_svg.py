import re
import xml.etree.ElementTree as ET

import pytest

from growthpaths.contour import build_chart
from growthpaths.rpca import project_dataset
from growthpaths.simharness import SimReport, fit_reference
from growthpaths.svgplot import chart_svg, components_svg, paths_svg, power_svg, write_svg

NS = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def fitted(setting_data):
    data, _ = setting_data
    model = fit_reference(data)
    scores, _ = project_dataset(data, model)
    return data, model, scores, build_chart(scores[:, :2])


def _elements(text, tag, cls):
    root = ET.fromstring(text)
    return [e for e in root.iter(NS + tag) if e.get("class") == cls]


def test_chart_has_three_nested_contours(fitted):
    _, _, scores, chart = fitted
    text = chart_svg(chart, scores[:, :2], highlight=scores[0, :2])
    polys = _elements(text, "polygon", "contour")
    assert [p.get("data-tau") for p in polys] == ["0.5", "0.75", "0.95"]
    assert len(_elements(text, "circle", "score")) == len(scores)
    assert len(_elements(text, "circle", "highlight")) == 1
    assert text == chart_svg(chart, scores[:, :2], highlight=scores[0, :2])
    with pytest.raises(ValueError):
        chart_svg(chart, scores, levels=(0.33,))


def test_components_two_curves(fitted):
    _, model, _, _ = fitted
    text = components_svg(model)
    curves = _elements(text, "polyline", "curve")
    assert len(curves) == 2 and {c.get("data-component") for c in curves} == {"1", "2"}
    assert text == components_svg(model)
    for c in curves:
        assert all(re.fullmatch(r"-?\d+\.\d\d", v) for v in re.split(r"[ ,]", c.get("points")))


def test_paths_and_power(tmp_path, fitted):
    data, model, _, _ = fitted
    text = paths_svg(data.subset(range(20)), model, highlight=data.subjects[0].id)
    assert len(_elements(text, "polyline", "path")) >= 19
    assert len(_elements(text, "polyline", "fitted")) == 1
    report = SimReport([{"A": a, "B": b, "mean": 0.5, "sd": 0.1, "n_effective": 3}
                        for a in (-1, 0) for b in (0, 4)], 0.95, 3)
    svg = power_svg(report)
    assert len(_elements(svg, "rect", "cell")) == 4
    out = tmp_path / "x.svg"
    write_svg(out, svg)
    ET.parse(out)
