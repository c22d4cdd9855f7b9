import pytest

from piccam.bd_metrics import RDPoint
from piccam.errors import EmptyInput
from piccam.report_utils import rd_table, render_svg, write_report
from tests import ClassWithTempDir

CURVES = {
    "anchor": [RDPoint(0.01, 30), RDPoint(0.02, 33), RDPoint(0.05, 36), RDPoint(0.12, 39)],
    "pic": [RDPoint(0.008, 30.5), RDPoint(0.015, 33.2), RDPoint(0.04, 36.1), RDPoint(0.1, 39.3)],
}


class TestSVG:
    def test_one_polyline_and_legend_entry_per_curve(self):
        svg = render_svg(CURVES)
        assert svg.startswith("<svg")
        assert svg.rstrip().endswith("</svg>")
        assert svg.count('<polyline class="curve"') == 2
        assert svg.count('<g class="legend">') == 2
        assert svg.count("<circle") == 8
        assert "anchor" in svg and "pic" in svg

    def test_names_are_escaped(self):
        svg = render_svg({"a<b": CURVES["pic"]})
        assert "a&lt;b" in svg

    def test_single_point_curve(self):
        svg = render_svg({"lone": [RDPoint(0.1, 35)]})
        assert svg.count("<circle") == 1

    @pytest.mark.parametrize("curves", [{}, {"anchor": []}])
    def test_empty_input_fails(self, curves):
        with pytest.raises(EmptyInput):
            render_svg(curves)


class TestTable(ClassWithTempDir):
    def test_one_row_per_point(self):
        fname = self.temp_file("rd.tsv")
        write_report(CURVES, self.temp_file("rd.svg"), fname)
        rows = [line for line in fname.read_text().splitlines() if line.strip() != ""]
        assert sum(line.startswith("anchor") for line in rows) == 4
        assert sum(line.startswith("pic") for line in rows) == 4
        assert self.temp_file("rd.svg").read_text().count("<polyline") == 2

    def test_empty_input_fails(self):
        with pytest.raises(EmptyInput):
            rd_table({})
