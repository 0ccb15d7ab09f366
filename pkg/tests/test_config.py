"""Run-file parsing: strict keys, typed values, line-numbered errors."""

import pytest

from cyclegan.config import ConfigError, describe_keys, parse_run_config, _SCHEMA


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParsing:
    def test_minimal_synthetic_config(self, tmp_path):
        rc = parse_run_config(write_cfg(tmp_path, "synthetic = invert\n"))
        assert rc.synthetic == "invert"
        assert rc.data_x is None and rc.data_y is None
        assert rc.train.lam == 10.0
        assert rc.train.lr0 == 2e-4
        assert rc.output_dir == "runs"
        assert rc.synthetic_count == 64
        assert rc.eval_count == 16

    def test_values_land_in_the_right_fields(self, tmp_path):
        rc = parse_run_config(write_cfg(tmp_path, "\n".join([
            "synthetic = channel_perm",
            "lr0 = 0.001",
            "lam = 5.5",
            "lam_idt = 0.5",
            "variant = gan_only",
            "resolution = 64",
            "residual_blocks = 3",
            "gen_filters = 8",
            "disc_filters = 4",
            "epochs_constant = 2",
            "epochs_decay = 1",
            "seed = 11",
            "output_dir = out/here",
            "synthetic_count = 5",
            "eval_count = 2",
            "workers = 2",
            "checkpoint_every = 1",
        ]) + "\n"))
        t = rc.train
        assert (t.lr0, t.lam, t.lam_idt, t.variant) == (0.001, 5.5, 0.5, "gan_only")
        assert (t.resolution, t.residual_blocks, t.gen_filters, t.disc_filters) == (64, 3, 8, 4)
        assert (t.epochs_constant, t.epochs_decay, t.seed, t.checkpoint_every) == (2, 1, 11, 1)
        assert rc.output_dir == "out/here"
        assert (rc.synthetic_count, rc.eval_count, rc.workers) == (5, 2, 2)

    def test_residual_blocks_none(self, tmp_path):
        rc = parse_run_config(write_cfg(tmp_path, "synthetic = invert\nresidual_blocks = none\n"))
        assert rc.train.residual_blocks is None

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        rc = parse_run_config(write_cfg(tmp_path,
            "# a full-line comment\n\nsynthetic = invert\n\n# another\nseed = 4\n"))
        assert rc.train.seed == 4

    def test_spacing_is_flexible(self, tmp_path):
        rc = parse_run_config(write_cfg(tmp_path, "synthetic=invert\n  seed =  9 \n"))
        assert rc.train.seed == 9


class TestErrors:
    def test_unknown_key_reports_line_number(self, tmp_path):
        path = write_cfg(tmp_path, "synthetic = invert\nseed = 1\nlr = 0.1\n")
        with pytest.raises(ConfigError, match=r":3: unknown key 'lr'"):
            parse_run_config(path)

    def test_duplicate_key_reports_both_lines(self, tmp_path):
        path = write_cfg(tmp_path, "synthetic = invert\nseed = 1\nseed = 2\n")
        with pytest.raises(ConfigError, match=r":3: duplicate key 'seed' \(first set on line 2\)"):
            parse_run_config(path)

    def test_line_without_equals(self, tmp_path):
        path = write_cfg(tmp_path, "synthetic = invert\njust words\n")
        with pytest.raises(ConfigError, match=r":2: expected 'key = value'"):
            parse_run_config(path)

    def test_non_integer_value(self, tmp_path):
        path = write_cfg(tmp_path, "seed = soon\nsynthetic = invert\n")
        with pytest.raises(ConfigError, match=r":1: seed expects an integer"):
            parse_run_config(path)

    def test_out_of_range_value_reports_line(self, tmp_path):
        path = write_cfg(tmp_path, "synthetic = invert\nlr0 = -1\n")
        with pytest.raises(ConfigError, match=r":2: lr0 must be > 0"):
            parse_run_config(path)

    def test_bad_variant(self, tmp_path):
        path = write_cfg(tmp_path, "synthetic = invert\nvariant = everything\n")
        with pytest.raises(ConfigError, match="variant must be one of"):
            parse_run_config(path)

    def test_resolution_must_be_multiple_of_4(self, tmp_path):
        path = write_cfg(tmp_path, "synthetic = invert\nresolution = 30\n")
        with pytest.raises(ConfigError, match="multiple of 4"):
            parse_run_config(path)

    def test_unknown_synthetic_kind(self, tmp_path):
        path = write_cfg(tmp_path, "synthetic = sepia\n")
        with pytest.raises(ConfigError, match="synthetic must be one of"):
            parse_run_config(path)

    def test_synthetic_excludes_directories(self, tmp_path):
        path = write_cfg(tmp_path, "synthetic = invert\ndata_x = a\ndata_y = b\n")
        with pytest.raises(ConfigError, match="mutually exclusive"):
            parse_run_config(path)

    def test_directories_come_in_pairs(self, tmp_path):
        path = write_cfg(tmp_path, "data_x = a\n")
        with pytest.raises(ConfigError, match="together"):
            parse_run_config(path)

    def test_some_data_source_required(self, tmp_path):
        path = write_cfg(tmp_path, "seed = 1\n")
        with pytest.raises(ConfigError, match="provide either synthetic"):
            parse_run_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_run_config(tmp_path / "absent.cfg")


class TestKeyDocs:
    def test_every_key_documented_with_default(self):
        text = describe_keys()
        for key in _SCHEMA:
            assert f"  {key} = " in text
        assert "lam = 10.0" in text
        assert "residual_blocks = none" in text
        assert "variant = full" in text
