import pytest

from piccam import NoiseMode
from piccam.config_utils import (
    build_config,
    load_config,
    read_config_lines,
    sort_entries,
)
from piccam.errors import (
    BadConfigValue,
    MissingPath,
    QpOutOfRange,
    UnknownConfigKey,
)
from tests import ClassWithTempDir

BASELINE_LINES = [
    "baseline.x264.encode_template = ffmpeg -y -i {input} -crf {quality} {output}",
    "baseline.x264.decode_template = ffmpeg -y -i {input} {output}",
    "baseline.x264.quality_values = 22, 27, 32, 37",
    "baseline.x264.bitstream_suffix = .mkv",
]


class TestReadLines:
    def test_comments_and_blank_lines(self):
        entries = read_config_lines(
            ["# experiment", "", "train.epochs = 3  # short run", "  quality.base_qp=40  "]
        )
        assert entries == {"train.epochs": "3", "quality.base_qp": "40"}

    def test_duplicate_key_fails(self):
        with pytest.raises(BadConfigValue):
            read_config_lines(["train.epochs = 3", "train.epochs = 4"])

    def test_line_without_value_fails(self):
        with pytest.raises(BadConfigValue):
            read_config_lines(["train.epochs"])


class TestSortEntries:
    def test_values_are_typed(self):
        sections, _ = sort_entries(
            {
                "train.qp_list": "8, 24,40",
                "train.noise_mode": "none",
                "quality.qp_offsets": "0,1,0,2,0,2,0,2",
                "metrics.w_y": "4",
            }
        )
        assert sections["train"]["qp_list"] == (8, 24, 40)
        assert sections["train"]["noise_mode"] is NoiseMode.none
        assert sections["quality"]["qp_offsets"] == (0, 1, 0, 2, 0, 2, 0, 2)
        assert sections["metrics"]["w_y"] == 4.0

    @pytest.mark.parametrize(
        "key", ["train.momentum", "epochs", "paths.dataset_dir.extra", "baseline.x264.crf"]
    )
    def test_unknown_key_fails(self, key):
        with pytest.raises(UnknownConfigKey):
            sort_entries({key: "1"})

    def test_bad_value_fails(self):
        with pytest.raises(BadConfigValue):
            sort_entries({"train.epochs": "many"})
        with pytest.raises(BadConfigValue):
            sort_entries({"train.noise_mode": "gaussian"})


class TestBuildConfig(ClassWithTempDir):
    def test_defaults(self):
        cfg = build_config({}, base_dir=self.temp_path)
        assert cfg.dataset_dir is None
        assert cfg.output_dir == self.temp_path
        assert cfg.quality.base_qp == 32
        assert cfg.weights.as_tuple() == (6.0, 1.0, 1.0)

    def test_preset_then_overrides(self):
        cfg = build_config({"train.clip_len": "10"}, preset="ssf", base_dir=self.temp_path)
        assert cfg.train.clip_len == 10
        assert cfg.train.scale_group_lr == 1e-3
        assert cfg.train.learning_rate == 2e-5

    def test_missing_dataset_fails(self):
        with pytest.raises(MissingPath):
            build_config({"paths.dataset_dir": "nowhere"}, base_dir=self.temp_path)

    def test_config_errors_surface(self):
        with pytest.raises(QpOutOfRange):
            build_config({"quality.base_qp": "64"}, base_dir=self.temp_path)
        with pytest.raises(BadConfigValue):
            build_config({"data.crop_width": "64"}, base_dir=self.temp_path)

    def test_baselines(self):
        entries = read_config_lines(BASELINE_LINES)
        cfg = build_config(entries, base_dir=self.temp_path)
        x264 = cfg.baselines["x264"]
        assert x264.quality_values == ("22", "27", "32", "37")
        assert x264.bitstream_suffix == ".mkv"

    def test_incomplete_baseline_fails(self):
        entries = read_config_lines(BASELINE_LINES[:2])
        with pytest.raises(BadConfigValue):
            build_config(entries, base_dir=self.temp_path)


class TestLoadConfig(ClassWithTempDir):
    def test_paths_resolve_next_to_config(self):
        dataset = self.temp_path / "scenes"
        dataset.mkdir()
        for name in ("b.y4m", "a.yuv", "notes.txt"):
            (dataset / name).touch()
        fname = self.temp_file("experiment.conf")
        fname.write_text(
            "paths.dataset_dir = scenes\npaths.output_dir = out\ntrain.epochs = 2\n"
        )
        cfg = load_config(fname)
        assert cfg.dataset_dir == dataset
        assert cfg.output_dir == self.temp_path / "out"
        assert [p.name for p in cfg.dataset_files()] == ["a.yuv", "b.y4m"]
        assert cfg.train.epochs == 2

    def test_missing_file_fails(self):
        with pytest.raises(MissingPath):
            load_config(self.temp_file("absent.conf"))
