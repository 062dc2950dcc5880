"""
Tests for run settings (config files, overrides, validation), the JSONL
record helpers and the error types.
"""

import math

import pytest

from skill_tools import records
from skill_tools.errors import (ConfigError, FormatVersionMismatch, MissingCamera, RecordFormatError, RecordIOError,
                                SkillPipelineError)
from skill_tools.settings import RunConfig, load_config, parse_config_text


class TestConfig:
    def test_defaults_are_valid(self):
        config = RunConfig()
        assert config.chunk_size >= 1
        assert config.action_mode == 'relT+relO'

    def test_file_then_overrides(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text("# evaluation run\nchunk-size = 5\nw_pose=2.5  # heavier pose term\n\naction_mode = absT+relO\n")
        config = load_config(str(path), chunk_size=7, seed=None)
        assert config.chunk_size == 7
        assert config.w_pose == 2.5
        assert config.action_mode == 'absT+relO'
        assert config.seed == 0

    def test_updated_skips_none(self):
        config = RunConfig().updated(budget=50, trials=None)
        assert config.budget == 50
        assert config.trials == RunConfig().trials

    def test_parse_types(self):
        values = parse_config_text("seed=3\ndropout=0.25\naction_mode=relT+absO")
        assert values == {'seed': 3, 'dropout': 0.25, 'action_mode': 'relT+absO'}
        assert isinstance(values['seed'], int)

    @pytest.mark.parametrize("text, fragment", [
        ("chunk_size 5", "expected key=value"),
        ("colour=blue", "unknown setting"),
        ("chunk_size=five", "bad value"),
    ])
    def test_bad_lines_are_located(self, text, fragment):
        with pytest.raises(ConfigError) as excinfo:
            parse_config_text("seed=1\n" + text, source='run.cfg')
        assert str(excinfo.value).startswith('run.cfg:2:')
        assert fragment in str(excinfo.value)

    @pytest.mark.parametrize("changes", [
        {'chunk_size': 0}, {'budget': 0}, {'dropout': 1.5}, {'score_threshold': -0.1}, {'pose_scale': 0.0},
        {'w_obs': -1.0}, {'feature_dim': 4}, {'w_obs': 0.0, 'w_goal': 0.0, 'w_pose': 0.0},
        {'action_mode': 'relT'}, {'seed': -1},
    ])
    def test_validation(self, changes):
        with pytest.raises(ConfigError):
            RunConfig(**changes)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / 'absent.cfg'))


class TestRecords:
    def test_floats_survive_bit_exactly(self, tmp_path, rng):
        values = [float(v) for v in rng.normal(size=50)] + [math.pi, 1e-300, -0.0]
        path = tmp_path / 'nested' / 'values.jsonl'
        assert records.write_records(path, [{'v': v} for v in values]) == len(values)
        read = [rec['v'] for _, rec in records.read_records(path)]
        assert [v.hex() for v in read] == [v.hex() for v in values]

    def test_blank_lines_keep_numbering(self, tmp_path):
        path = tmp_path / 'r.jsonl'
        path.write_text('{"a":1}\n\n{"a":2}\n')
        assert records.read_records(path) == [(1, {'a': 1}), (3, {'a': 2})]

    def test_invalid_json_names_the_line(self, tmp_path):
        path = tmp_path / 'r.jsonl'
        path.write_text('{"a":1}\n{"a":\n')
        with pytest.raises(RecordFormatError) as excinfo:
            records.read_records(path)
        assert excinfo.value.line_no == 2
        assert str(excinfo.value).startswith(f"{path}:2: invalid JSON")

    def test_non_object_record(self, tmp_path):
        path = tmp_path / 'r.jsonl'
        path.write_text('[1, 2]\n')
        with pytest.raises(RecordFormatError):
            records.read_records(path)

    def test_nan_is_refused_and_nothing_is_left_behind(self, tmp_path):
        path = tmp_path / 'r.jsonl'
        with pytest.raises(ValueError):
            records.write_records(path, [{'v': float('nan')}])
        assert list(tmp_path.iterdir()) == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(RecordIOError):
            records.read_records(tmp_path / 'absent.jsonl')

    def test_field_helpers(self):
        assert records.floats([1, 2.5, 3], 3, 'p', 4, 'xyz') == (1.0, 2.5, 3.0)
        with pytest.raises(RecordFormatError, match="'xyz' must be 3 numbers"):
            records.floats([1, 2], 3, 'p', 4, 'xyz')
        with pytest.raises(RecordFormatError, match="non-numeric"):
            records.floats([1, 'a'], None, 'p', 4, 'xyz')
        with pytest.raises(RecordFormatError, match="missing field 'pose'"):
            records.field({}, 'pose', 'p', 4)

    def test_header_checks(self):
        head = records.header('skill-dataset', 1, d=8)
        records.check_header(head, 'skill-dataset', 1, 'p', 1)
        with pytest.raises(FormatVersionMismatch):
            records.check_header(head, 'skill-dataset', 2, 'p', 1)
        with pytest.raises(RecordFormatError):
            records.check_header(head, 'hand-poses', 1, 'p', 1)


class TestErrors:
    def test_error_hierarchy(self):
        assert issubclass(ConfigError, ValueError)
        assert issubclass(RecordIOError, OSError)
        assert issubclass(FormatVersionMismatch, RecordFormatError)
        for cls in (ConfigError, RecordIOError, RecordFormatError, MissingCamera):
            assert issubclass(cls, SkillPipelineError)

    def test_messages(self):
        assert str(MissingCamera(7)) == "no camera for frame 7"
        assert str(RecordFormatError('a.jsonl', None, "empty")) == "a.jsonl: empty"
        assert str(RecordFormatError('a.jsonl', 3, "bad")) == "a.jsonl:3: bad"
