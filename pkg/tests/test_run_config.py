import tempfile
from pathlib import Path

import pytest

from ctap_interferometer.run_config import (
    FIELD_NAMES, RunConfig, build_config, load_config_file, parse_steps,
)


def _write(text: str, td: str) -> Path:
    path = Path(td) / "run.conf"
    path.write_text(text, encoding="utf-8")
    return path


class TestRunConfig:

    def test_defaults_are_valid(self):
        config = RunConfig().validate()
        assert config.omega_max == 1.0
        assert config.steps == "auto"
        assert config.resolution == 201
        assert config.system == "ring"
        assert config.workers == 1

    @pytest.mark.parametrize("changes", [
        {"omega_max": 0.0},
        {"t_max": -1.0},
        {"delta_u": float("nan")},
        {"antisymmetric": float("inf")},
        {"delta_min": 1.0, "delta_max": 1.0},
        {"t_max_min": 500.0, "t_max_max": 100.0},
        {"resolution": 1},
        {"samples": 1},
        {"t_max_count": 1},
        {"fringe_count": 1},
        {"steps": 1},
        {"steps": "many"},
        {"workers": 0},
        {"system": "ladder"},
        {"fd_step": 0.0},
        {"t_max_values": (100.0, -1.0)},
    ])
    def test_validate_rejects(self, changes):
        with pytest.raises(ValueError):
            build_config(flag_values=changes)

    def test_as_metadata(self):
        metadata = RunConfig(t_max_values=(100.0, 250.5)).as_metadata()
        assert metadata["t_max_values"] == "100 250.5"
        assert metadata["fd_step"] is None
        assert set(metadata) == set(FIELD_NAMES)
        assert RunConfig().as_metadata()["t_max_values"] is None


class TestParseSteps:

    def test_values(self):
        assert parse_steps("auto") == "auto"
        assert parse_steps(" AUTO ") == "auto"
        assert parse_steps("4000") == 4000
        assert parse_steps(123) == 123
        with pytest.raises(ValueError):
            parse_steps("lots")


class TestLoadConfigFile:

    def test_keys_and_comments(self):
        """'-' と '_' のキー、コメント・空行"""
        text = (
            "# 干渉縞マップ\n"
            "\n"
            "t-max = 1000\n"
            "delta_min = -0.5   # 下限\n"
            "steps = auto\n"
            "eigenvectors = yes\n"
            "t-max-values = 100, 200 400\n"
            "fd-step = none\n"
            "output = out/map.csv\n"
        )
        with tempfile.TemporaryDirectory() as td:
            values = load_config_file(_write(text, td))
        assert values == {
            "t_max": 1000.0,
            "delta_min": -0.5,
            "steps": "auto",
            "eigenvectors": True,
            "t_max_values": (100.0, 200.0, 400.0),
            "fd_step": None,
            "output": "out/map.csv",
        }

    def test_unknown_key(self):
        with tempfile.TemporaryDirectory() as td:
            path = _write("t_max = 10\ncolour = red\n", td)
            with pytest.raises(ValueError, match=r":2: unknown key"):
                load_config_file(path)

    def test_bad_value(self):
        with tempfile.TemporaryDirectory() as td:
            path = _write("resolution = many\n", td)
            with pytest.raises(ValueError, match=r":1: bad value for resolution"):
                load_config_file(path)

    def test_syntax_error(self):
        with tempfile.TemporaryDirectory() as td:
            path = _write("just some words\n", td)
            with pytest.raises(ValueError, match="expected 'key = value'"):
                load_config_file(path)


class TestBuildConfig:

    def test_precedence(self):
        """既定値 < 設定ファイル < フラグ"""
        config = build_config({"t_max": 500.0, "resolution": 51}, {"t_max": 800.0})
        assert config.t_max == 800.0
        assert config.resolution == 51
        assert config.omega_max == 1.0

    def test_unknown_parameter(self):
        with pytest.raises(ValueError):
            build_config(flag_values={"colour": "red"})

    def test_invalid_after_merge(self):
        with pytest.raises(ValueError):
            build_config({"delta_min": 0.5}, {"delta_max": 0.2})
