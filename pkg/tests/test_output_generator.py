import pytest

from app.errors import RunDirectoryExistsError, UnknownPlotKindError
from app.output_generator import OutputGenerator, emit_plot_data, read_table, run_directory

from .conftest import RUN_FILES


class TestRunDirectory:
    def test_layout(self, finished_run):
        out_root, run_dir, config, _ = finished_run
        assert run_dir == run_directory(out_root, "quick", "mdcpp", 0)
        for name in RUN_FILES:
            assert (run_dir / name).is_file(), name

    def test_tables(self, finished_run):
        _, run_dir, config, result = finished_run
        summary = read_table(run_dir / "result.tsv")
        assert len(summary) == 1
        assert summary.loc[0, "completion_time"] == pytest.approx(result.completion_time, abs=1e-6)
        densities = read_table(run_dir / "densities.tsv")
        assert len(densities) == config.grid.n_cells
        assert list(read_table(run_dir / "robots.tsv")["robot_id"]) == [0, 1]

    def test_report_mentions_the_outcome(self, finished_run):
        _, run_dir, _, _ = finished_run
        report = (run_dir / "report.md").read_text(encoding="utf-8")
        assert "Complete coverage" in report
        assert "quick / mdcpp / seed 0" in report

    def test_existing_run_directory_is_refused(self, finished_run):
        out_root, _, config, result = finished_run
        with pytest.raises(RunDirectoryExistsError):
            OutputGenerator(out_root).check_run_dir(config.name, result.strategy, result.seed)


class TestPlotData:
    def test_trajectories_split_by_robot(self, finished_run, tmp_path):
        _, run_dir, _, _ = finished_run
        written = emit_plot_data(run_dir, "trajectories", tmp_path)
        assert sorted(p.name for p in written) == ["trajectory_robot_0.tsv", "trajectory_robot_1.tsv"]
        assert list(read_table(written[0]).columns) == ["time", "x", "y"]

    def test_partitions_per_event(self, finished_run, tmp_path):
        _, run_dir, _, result = finished_run
        written = emit_plot_data(run_dir, "partitions", tmp_path)
        assert len(written) == result.partition_events + 1
        assert written[0].name == "partition_event_0.tsv"

    def test_density_grids(self, finished_run, tmp_path):
        _, run_dir, config, _ = finished_run
        truth, predicted = emit_plot_data(run_dir, "density_heatmaps", tmp_path)
        grid = read_table(truth)
        assert grid.shape == (config.grid.height_cells, config.grid.width_cells + 1)
        assert predicted.name == "density_predicted.tsv"

    def test_swd_curve(self, finished_run, tmp_path):
        _, run_dir, _, result = finished_run
        (curve,) = emit_plot_data(run_dir, "swd_curve", tmp_path)
        assert len(read_table(curve)) == len(result.swd_series)

    def test_summary_bars_scan_the_tree(self, finished_run, tmp_path):
        out_root, _, _, _ = finished_run
        (bars,) = emit_plot_data(out_root, "summary_bars", tmp_path)
        table = read_table(bars)
        assert list(table["strategy"]) == ["mdcpp"]
        assert table.loc[0, "runs"] == 1

    def test_default_destination(self, finished_run):
        _, run_dir, _, _ = finished_run
        (curve,) = emit_plot_data(run_dir, "swd_curve")
        assert curve.parent == run_dir / "plot_data"

    def test_unknown_kind(self, finished_run):
        _, run_dir, _, _ = finished_run
        with pytest.raises(UnknownPlotKindError, match="trajectories"):
            emit_plot_data(run_dir, "pie_chart")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            emit_plot_data(tmp_path / "nowhere", "trajectories")
