"""Tests for panel CSV parsing and fit persistence."""

import numpy as np
import pytest

from nsbfm.linkfn import LinkKind
from nsbfm.models import FitResult, ModelParams, Panel
from nsbfm.panel_io import (
    covariates_to_long,
    load_fit,
    load_panel,
    read_matrix,
    save_fit,
    save_panel,
    write_matrix,
)
from nsbfm.validation import DataValidationError, PanelParseError


@pytest.fixture
def outcome_file(tmp_path):
    path = tmp_path / "y.csv"
    path.write_text("1,0,1\n0,0,1\n")
    return path


class TestLoadPanel:
    """Tests for load_panel()."""

    def test_outcomes_only(self, outcome_file):
        """Test that a headerless 0/1 matrix loads as a q = 0 panel."""
        panel = load_panel(outcome_file)
        assert (panel.n_units, panel.n_periods, panel.n_covariates) == (2, 3, 0)
        np.testing.assert_array_equal(panel.y, [[1, 0, 1], [0, 0, 1]])

    def test_float_formatted_binary_cells(self, tmp_path):
        """Test that '1.0' and '0.0' are accepted as outcomes."""
        path = tmp_path / "y.csv"
        path.write_text("1.0,0.0\n0,1\n")
        np.testing.assert_array_equal(load_panel(path).y, [[1, 0], [0, 1]])

    def test_with_covariates_in_any_row_order(self, outcome_file, tmp_path):
        """Test that long-format covariates land at their (unit, period) cell."""
        x_path = tmp_path / "x.csv"
        rows = ["unit,period,cov_1,cov_2"]
        for u in (1, 0):
            for t in (2, 1, 0):
                rows.append(f"{u},{t},{10 * u + t},{-(10 * u + t)}")
        x_path.write_text("\n".join(rows) + "\n")

        panel = load_panel(outcome_file, x_path)
        assert panel.x.shape == (2, 3, 2)
        assert panel.x[1, 2, 0] == 12.0
        assert panel.x[0, 1, 1] == -1.0

    def test_non_binary_cell_reports_location(self, tmp_path):
        """Test that a 2 in row 2, column 3 is reported there."""
        path = tmp_path / "y.csv"
        path.write_text("1,0,1\n0,1,2\n")
        with pytest.raises(PanelParseError) as exc:
            load_panel(path)
        assert (exc.value.row, exc.value.column) == (2, 3)

    def test_non_binary_first_cell(self, tmp_path):
        """Test that a 2 in the first cell is reported at row 1, column 1."""
        path = tmp_path / "y.csv"
        path.write_text("2,1,1\n1,0,0\n")
        with pytest.raises(PanelParseError, match="row 1, col 1"):
            load_panel(path)

    def test_ragged_row(self, tmp_path):
        """Test that rows of different widths are rejected."""
        path = tmp_path / "y.csv"
        path.write_text("1,0,1\n0,1\n")
        with pytest.raises(PanelParseError, match="ragged"):
            load_panel(path)

    def test_empty_outcome_file(self, tmp_path):
        """Test that an empty outcome file is rejected."""
        path = tmp_path / "y.csv"
        path.write_text("\n")
        with pytest.raises(PanelParseError, match="empty"):
            load_panel(path)

    def test_missing_covariate_cell(self, outcome_file, tmp_path):
        """Test that an absent (unit, period) row is rejected."""
        x_path = tmp_path / "x.csv"
        x_path.write_text("unit,period,cov_1\n0,0,1\n0,1,1\n0,2,1\n1,0,1\n1,1,1\n")
        with pytest.raises(PanelParseError, match="no covariate row for unit 1, period 2"):
            load_panel(outcome_file, x_path)

    def test_duplicate_covariate_cell(self, outcome_file, tmp_path):
        """Test that a repeated (unit, period) row is rejected."""
        lines = ["unit,period,cov_1"] + [f"{u},{t},0.5" for u in range(2) for t in range(3)]
        lines.append("0,1,0.7")
        x_path = tmp_path / "x.csv"
        x_path.write_text("\n".join(lines) + "\n")
        with pytest.raises(PanelParseError, match="duplicate"):
            load_panel(outcome_file, x_path)

    def test_covariate_index_out_of_grid(self, outcome_file, tmp_path):
        """Test that a unit index beyond N is rejected with its row number."""
        lines = ["unit,period,cov_1"] + [f"{u},{t},0.5" for u in range(2) for t in range(3)]
        lines[3] = "5,2,0.5"
        x_path = tmp_path / "x.csv"
        x_path.write_text("\n".join(lines) + "\n")
        with pytest.raises(PanelParseError) as exc:
            load_panel(outcome_file, x_path)
        assert exc.value.row == 4
        assert exc.value.column == 1

    def test_non_finite_covariate(self, outcome_file, tmp_path):
        """Test that NaN covariate values are rejected."""
        lines = ["unit,period,cov_1"] + [f"{u},{t},0.5" for u in range(2) for t in range(3)]
        lines[2] = "0,1,nan"
        x_path = tmp_path / "x.csv"
        x_path.write_text("\n".join(lines) + "\n")
        with pytest.raises(PanelParseError, match="not finite"):
            load_panel(outcome_file, x_path)

    def test_bad_header(self, outcome_file, tmp_path):
        """Test that a header without unit,period is rejected."""
        x_path = tmp_path / "x.csv"
        x_path.write_text("u,t,cov_1\n0,0,1\n")
        with pytest.raises(PanelParseError, match="header"):
            load_panel(outcome_file, x_path)

    def test_missing_file(self, tmp_path):
        """Test that a missing outcome file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_panel(tmp_path / "nope.csv")


class TestPanelModel:
    """Tests for the Panel data model."""

    def test_rejects_non_binary(self):
        """Test that y must be 0/1."""
        with pytest.raises(DataValidationError, match="binary"):
            Panel(y=np.array([[0, 2]]), x=None)

    def test_rejects_mismatched_covariates(self):
        """Test that x must have the outcome grid as leading dims."""
        with pytest.raises(DataValidationError, match="expected"):
            Panel(y=np.zeros((2, 3)), x=np.zeros((3, 2, 1)))

    def test_arrays_are_read_only(self, tiny_panel):
        """Test that panel arrays cannot be modified in place."""
        with pytest.raises(ValueError):
            tiny_panel.y[0, 0] = 0


class TestFitPersistence:
    """Tests for save_fit()/load_fit() and the matrix writers."""

    def _fit(self):
        params = ModelParams(
            b=np.array([[0.1], [1.0 / 3.0]]),
            lam=np.array([[2.0], [-np.pi]]),
            f=np.array([[np.e], [1e-300], [-7.25]]),
        )
        x = np.ones((2, 3, 1))
        return FitResult(
            params=params,
            zhat=params.index(x),
            loglik_trace=(-10.0, -4.123456789012345),
            n_iterations=1,
            converged=True,
            sigma_hat=np.array([np.mean(params.lam[:, 0] ** 2)]),
            link=LinkKind.PROBIT,
        )

    def test_round_trip_is_bit_exact(self, tmp_path):
        """Test that matrices written with 17 digits read back exactly."""
        fit = self._fit()
        save_fit(fit, tmp_path / "fit")
        loaded = load_fit(tmp_path / "fit", link="probit")

        np.testing.assert_array_equal(loaded.params.b, fit.params.b)
        np.testing.assert_array_equal(loaded.params.lam, fit.params.lam)
        np.testing.assert_array_equal(loaded.params.f, fit.params.f)
        np.testing.assert_array_equal(loaded.zhat, fit.zhat)
        assert loaded.loglik_trace == fit.loglik_trace
        assert loaded.link is LinkKind.PROBIT
        assert loaded.converged is False

    def test_missing_fit_file(self, tmp_path):
        """Test that load_fit names the missing files."""
        save_fit(self._fit(), tmp_path)
        (tmp_path / "F.csv").unlink()
        with pytest.raises(FileNotFoundError, match="F.csv"):
            load_fit(tmp_path)

    def test_zero_column_matrix(self, tmp_path):
        """Test that an N x 0 matrix is written empty and read back with N rows."""
        path = write_matrix(tmp_path / "B.csv", np.zeros((4, 0)))
        assert path.read_text() == ""
        assert read_matrix(path, n_rows=4).shape == (4, 0)

    def test_unwritable_directory(self, tmp_path):
        """Test that writing under a regular file raises OSError naming the path."""
        blocker = tmp_path / "blocker"
        blocker.write_text("x")
        with pytest.raises(OSError, match="blocker"):
            save_fit(self._fit(), blocker / "fit")

    def test_save_panel_round_trip(self, tiny_panel, tmp_path):
        """Test that save_panel output loads back to the same panel."""
        save_panel(tiny_panel, tmp_path)
        loaded = load_panel(tmp_path / "y.csv", tmp_path / "x.csv")
        np.testing.assert_array_equal(loaded.y, tiny_panel.y)
        np.testing.assert_array_equal(loaded.x, tiny_panel.x)

    def test_covariates_to_long_order(self):
        """Test that the long frame is unit-major with 1-based covariate names."""
        x = np.arange(2 * 2 * 1, dtype=float).reshape(2, 2, 1)
        frame = covariates_to_long(x)
        assert list(frame.columns) == ["unit", "period", "cov_1"]
        assert frame["unit"].tolist() == [0, 0, 1, 1]
        assert frame["cov_1"].tolist() == [0.0, 1.0, 2.0, 3.0]
