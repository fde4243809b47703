import json

import numpy as np
import pytest

from models.schemas import AffinePiece, SplineKind
from services.funcs import benchmark_data
from services.parser import (
    ParserError,
    normalize_column_name,
    read_config_file,
    read_samples_csv,
    read_spline_json,
    split_pair,
    write_samples_csv,
)
from services.spline import make_one_knot, spline_to_dict


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestColumnNames:
    @pytest.mark.parametrize("raw,expected", [(" T ", "t"), ("Big M", "big_m"), ("f(t)", "f_t"), ("", "unnamed_column")])
    def test_normalize(self, raw, expected):
        assert normalize_column_name(raw) == expected


class TestReadSamples:
    def test_headers_normalized(self, tmp_path):
        path = _write(tmp_path / "abs.csv", "T , F\n-1, 1\n0, 0\n1, 1\n")
        data = read_samples_csv(path)
        assert data.label == "abs"
        np.testing.assert_allclose(data.t, [-1.0, 0.0, 1.0])
        np.testing.assert_allclose(data.f, [1.0, 0.0, 1.0])
        assert data.grid.uniform

    def test_unsorted_rows_sorted_with_warning(self, tmp_path, caplog):
        path = _write(tmp_path / "shuffled.csv", "t,f\n1,3\n0,1\n0.5,2\n")
        data = read_samples_csv(path)
        np.testing.assert_allclose(data.t, [0.0, 0.5, 1.0])
        np.testing.assert_allclose(data.f, [1.0, 2.0, 3.0])
        assert "sorted by t" in caplog.text

    def test_non_uniform_abscissae(self, tmp_path):
        data = read_samples_csv(_write(tmp_path / "uneven.csv", "t,f\n0,0\n0.1,1\n1,0\n"))
        assert not data.grid.uniform
        assert data.interval == (0.0, 1.0)

    @pytest.mark.parametrize("body", [
        "t,f\n0,1\n0,2\n1,3\n",
        "t,f\n0,1\nabc,2\n1,3\n",
        "t,f\n0,1\n",
        "x,y\n0,1\n1,2\n",
        "",
    ])
    def test_malformed(self, tmp_path, body):
        with pytest.raises(ParserError):
            read_samples_csv(_write(tmp_path / "bad.csv", body))

    def test_wrong_extension(self, tmp_path):
        with pytest.raises(ParserError, match="Unsupported"):
            read_samples_csv(_write(tmp_path / "data.xlsx", "t,f\n0,1\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParserError, match="No such file"):
            read_samples_csv(tmp_path / "absent.csv")


class TestWriteSamples:
    def test_benchmark_round_trip(self, tmp_path):
        data = benchmark_data("f5", h=0.1)
        path = write_samples_csv(data, tmp_path / "f5.csv")
        assert path.read_text().splitlines()[0] == "t,f"
        back = read_samples_csv(path)
        np.testing.assert_array_equal(back.t, data.t)
        np.testing.assert_array_equal(back.f, data.f)
        assert back.grid.uniform

    def test_uneven_abscissae_survive(self, tmp_path, samples):
        data = samples([0.0, 0.1, 1.0 / 3.0], [2.0, -1e-17, 7.5])
        back = read_samples_csv(write_samples_csv(data, tmp_path / "uneven.csv"))
        np.testing.assert_array_equal(back.t, data.t)
        np.testing.assert_array_equal(back.f, data.f)


class TestReadSpline:
    SPLINE = make_one_knot(AffinePiece(slope=1.0, intercept=0.0), AffinePiece(slope=-1.0, intercept=0.0),
                           SplineKind.MAX_OF_TWO, (-1.0, 1.0))

    def test_compact_form(self, tmp_path):
        path = _write(tmp_path / "spline.json", json.dumps(spline_to_dict(self.SPLINE)))
        assert read_spline_json(path) == self.SPLINE

    def test_report_form(self, tmp_path):
        payload = {"label": "abs", "best_spline": self.SPLINE.model_dump(mode="json")}
        path = _write(tmp_path / "report.json", json.dumps(payload))
        assert read_spline_json(path) == self.SPLINE

    @pytest.mark.parametrize("body", ["not json", "[1, 2]", '{"best_spline": 3}', '{"kind": "max"}'])
    def test_malformed(self, tmp_path, body):
        with pytest.raises(ParserError):
            read_spline_json(_write(tmp_path / "spline.json", body))


class TestConfigFile:
    def test_key_values(self, tmp_path):
        path = _write(tmp_path / "run.cfg", "# solver settings\nBig M = 300\n\nnode-limit=50  # small\n")
        assert read_config_file(path) == {"big_m": "300", "node_limit": "50"}

    def test_line_without_equals(self, tmp_path):
        with pytest.raises(ParserError, match="run.cfg:2"):
            read_config_file(_write(tmp_path / "run.cfg", "a = 1\nbroken\n"))

    def test_missing(self, tmp_path):
        with pytest.raises(ParserError):
            read_config_file(tmp_path / "none.cfg")


class TestScalars:
    @pytest.mark.parametrize("text", ["-1,1", "-1 1", " -1 , 1 "])
    def test_split_pair(self, text):
        assert split_pair(text) == (-1.0, 1.0)

    def test_split_pair_rejects(self):
        with pytest.raises(ParserError):
            split_pair("1,2,3")
