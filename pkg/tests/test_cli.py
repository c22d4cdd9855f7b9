import json

import pytest
from click.testing import CliRunner

from piccam.bd_metrics import RDCurve, load_curve, save_curve
from piccam.codec_core import QualityConfig, encode_video
from piccam.model_params import load_model, save_model
from piccam.pic_trainer import init_params
from piccam.piccam import main
from piccam.synthetic import generate_static_scene
from piccam.video_io import load_y4m, sample_clip, save_y4m
from tests import ClassWithTempDir

ANCHOR_PAIRS = [(0.01, 30), (0.02, 33), (0.05, 36), (0.12, 39)]


def json_lines(result) -> list:
    return [json.loads(line) for line in result.output.splitlines() if line.startswith("{")]


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


class TestCodecCommands(ClassWithTempDir):
    @classmethod
    def setup_class(cls):
        super().setup_class()
        cls.clip = generate_static_scene(32, 32, 6, n_sprites=1, seed=2)
        cls.video = cls.temp_file("scene.y4m")
        save_y4m(cls.clip, cls.video)
        cls.model = cls.temp_file("scene.picm")
        save_model(init_params(cls.clip.frames[:4], scene_id="scene"), cls.model)
        cls.other_model = cls.temp_file("other.picm")
        other = generate_static_scene(32, 32, 4, seed=3)
        save_model(init_params(other.frames), cls.other_model)

    def test_encode_then_decode(self):
        bitstream = self.temp_file("scene.pic")
        result = invoke("encode", self.video, self.model, bitstream, "--qp", 40)
        assert result.exit_code == 0
        records = json_lines(result)
        assert [r["frame_index"] for r in records[:-1]] == list(range(6))
        summary = records[-1]
        assert summary["bytes"] == bitstream.stat().st_size
        assert summary["bpp"] == pytest.approx(8 * summary["bytes"] / (32 * 32 * 6))

        decoded = self.temp_file("decoded.y4m")
        result = invoke("decode", bitstream, self.model, decoded)
        assert result.exit_code == 0
        assert json_lines(result) == [dict(frames=6, width=32, height=32)]
        assert len(load_y4m(decoded)) == 6

    def test_eval_rate_matches_encode(self):
        bitstream = self.temp_file("eval.pic")
        encoded = json_lines(invoke("encode", self.video, self.model, bitstream, "--qp", 24))
        result = invoke("eval", self.video, self.model, "--qp-list", "24")
        assert result.exit_code == 0
        (point,) = json_lines(result)
        assert point["qp"] == 24
        assert point["bpp"] == pytest.approx(encoded[-1]["bpp"])

    def test_eval_sweep_writes_curve(self):
        curve_fname = self.temp_file("pic_curve.json")
        result = invoke("eval", self.video, self.model, "--output", curve_fname)
        assert result.exit_code == 0
        points = json_lines(result)[:4]
        bpps = [p["bpp"] for p in points]
        assert bpps == sorted(bpps, reverse=True)
        assert len(load_curve(curve_fname)) == 4

    def test_eval_on_a_sampled_window(self):
        window = sample_clip(self.clip, 3, 1)
        expected = encode_video(window, load_model(self.model), QualityConfig(base_qp=24))
        result = invoke(
            "eval", self.video, self.model, "--qp-list", "24", "--clip-len", 3, "--seed", 1
        )
        assert result.exit_code == 0
        (point,) = json_lines(result)
        assert point["bpp"] == pytest.approx(expected.bpp)

    def test_eval_window_longer_than_clip_exits_3(self):
        result = invoke("eval", self.video, self.model, "--clip-len", 7)
        assert result.exit_code == 3

    def test_lossless_points_are_strict_json(self):
        flat = generate_static_scene(32, 32, 4, n_sprites=0, noise_sigma=0, seed=8)
        video, model = self.temp_file("flat.y4m"), self.temp_file("flat.picm")
        save_y4m(flat, video)
        save_model(init_params(flat.frames), model)
        result = invoke("eval", video, model, "--qp-list", "24,40")
        assert result.exit_code == 0

        def reject_constant(name):
            raise ValueError(f"Non-standard JSON constant {name}")

        lines = [line for line in result.output.splitlines() if line.startswith("{")]
        points = [json.loads(line, parse_constant=reject_constant) for line in lines]
        assert [p["qp"] for p in points] == [24, 40]
        assert all(p["psnr_weighted"] is None and p["mse_weighted"] == 0 for p in points)

    def test_qp_out_of_range_exits_5(self):
        result = invoke("encode", self.video, self.model, self.temp_file("x.pic"), "--qp", 64)
        assert result.exit_code == 5

    def test_wrong_model_exits_4(self):
        bitstream = self.temp_file("digest.pic")
        assert invoke("encode", self.video, self.model, bitstream).exit_code == 0
        result = invoke("decode", bitstream, self.other_model, self.temp_file("bad.y4m"))
        assert result.exit_code == 4

    def test_missing_input_exits_2(self):
        result = invoke("encode", self.temp_file("absent.y4m"), self.model, self.temp_file("y.pic"))
        assert result.exit_code == 2

    def test_classify(self):
        result = invoke("classify", self.video, "--window", 3)
        assert result.exit_code == 0
        windows = json_lines(result)
        assert [(w["start"], w["end"]) for w in windows] == [(0, 3), (3, 6)]


class TestCurveCommands(ClassWithTempDir):
    @classmethod
    def setup_class(cls):
        super().setup_class()
        anchor = RDCurve.from_pairs(ANCHOR_PAIRS)
        cls.anchor = cls.temp_file("anchor.json")
        save_curve(anchor, cls.anchor)
        cls.doubled = cls.temp_file("doubled.json")
        save_curve(anchor.scaled(rate_factor=2), cls.doubled)
        cls.far = cls.temp_file("far.json")
        save_curve(anchor.scaled(psnr_offset=20), cls.far)

    def test_bdrate(self):
        result = invoke("bdrate", self.anchor, self.doubled, "--bd-psnr")
        assert result.exit_code == 0
        (record,) = json_lines(result)
        assert record["bd_rate"] == pytest.approx(100, abs=0.05)
        assert record["bd_psnr"] < 0

    @pytest.mark.parametrize("interp", ["cubic", "pchip"])
    def test_bdrate_window(self, interp):
        result = invoke("bdrate", self.anchor, self.doubled, "--interp", interp, "--window", "31,38")
        assert json_lines(result)[0]["bd_rate"] == pytest.approx(100, abs=0.05)

    def test_bad_window_exits_5(self):
        assert invoke("bdrate", self.anchor, self.doubled, "--window", "31").exit_code == 5

    def test_no_overlap_exits_3(self):
        assert invoke("bdrate", self.anchor, self.far).exit_code == 3

    def test_malformed_curve_exits_3(self):
        malformed = self.temp_file("malformed.json")
        malformed.write_text("[{}]")
        assert invoke("bdrate", self.anchor, malformed).exit_code == 3

    def test_report(self):
        svg = self.temp_file("rd.svg")
        table = self.temp_file("rd.tsv")
        result = invoke("report", self.anchor, self.doubled, "--svg", svg, "--table", table)
        assert result.exit_code == 0
        assert svg.read_text().count("<polyline") == 2
        assert table.exists()

    def test_report_table_is_tab_separated(self):
        table = self.temp_file("points.tsv")
        result = invoke("report", self.anchor, "--svg", self.temp_file("p.svg"), "--table", table)
        assert result.exit_code == 0
        lines = table.read_text().splitlines()
        rows = [line.split("\t") for line in lines if line.startswith("anchor")]
        assert len(rows) == len(ANCHOR_PAIRS)
        assert all(len(row) == 4 for row in rows)
        assert "Tab-separated" in invoke("report", "--help").output

    def test_report_without_curves_exits_5(self):
        assert invoke("report").exit_code == 5


class TestFinetuneCommand(ClassWithTempDir):
    @classmethod
    def setup_class(cls):
        super().setup_class()
        cls.dataset = cls.temp_path / "lobby"
        cls.dataset.mkdir()
        save_y4m(generate_static_scene(32, 32, 20, n_sprites=1, seed=6), cls.dataset / "cam0.y4m")
        cls.initial = cls.temp_file("initial.picm")
        save_model(init_params(load_y4m(cls.dataset / "cam0.y4m").frames[:4]), cls.initial)

    def write_config(self, name: str, lines) -> str:
        fname = self.temp_file(name)
        fname.write_text("\n".join(lines) + "\n")
        return fname

    def test_zero_epochs_copies_checkpoint(self):
        config = self.write_config(
            "zero.conf",
            [
                f"paths.dataset_dir = {self.dataset}",
                f"paths.model_file = {self.initial}",
                "paths.output_dir = zero_out",
                "train.epochs = 0",
            ],
        )
        result = invoke("finetune", config)
        assert result.exit_code == 0
        written = self.temp_path / "zero_out" / "model.picm"
        assert written.read_bytes() == self.initial.read_bytes()
        assert json_lines(result)[0]["epochs"] == 0

    def test_short_run_from_warmup(self):
        config = self.write_config(
            "short.conf",
            [
                f"paths.dataset_dir = {self.dataset}",
                "paths.output_dir = short_out",
                "train.epochs = 2",
                "train.clip_len = 4",
                "data.warmup_frames = 4",
            ],
        )
        result = invoke("finetune", config)
        assert result.exit_code == 0
        out_dir = self.temp_path / "short_out"
        model = load_model(out_dir / "model.picm")
        assert (model.scene_id, model.train_step) == ("lobby", 2)
        log = json.loads((out_dir / "train_log.json").read_text())
        assert [e["epoch"] for e in log["epochs"]] == [1, 2]

    def test_missing_dataset_exits_2(self):
        config = self.write_config("missing.conf", ["paths.dataset_dir = nowhere"])
        assert invoke("finetune", config).exit_code == 2

    def test_unknown_key_exits_5(self):
        config = self.write_config(
            "unknown.conf", [f"paths.dataset_dir = {self.dataset}", "train.momentum = 0.9"]
        )
        assert invoke("finetune", config).exit_code == 5


class TestSynthCommand(ClassWithTempDir):
    def test_synth_writes_scene_and_background(self):
        output = self.temp_file("synth.y4m")
        background = self.temp_file("background.y4m")
        result = invoke(
            "synth", output, "--width", 32, "--height", 16, "--frames", 5, "--background", background
        )
        assert result.exit_code == 0
        clip = load_y4m(output)
        assert (len(clip), clip.dims) == (5, (32, 16))
        assert len(load_y4m(background)) == 1

    def test_bad_sprite_count_exits_3(self):
        result = invoke("synth", self.temp_file("bad.y4m"), "--frames", 2, "--sprites", 5)
        assert result.exit_code == 3
