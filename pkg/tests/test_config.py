"""Config file parsing and flag/file/default precedence."""

import pytest

from attackmapper.config import ENV_VAR, Settings, load_settings, parse_config_text
from attackmapper.errors import ParseError, ValidationError


class TestParse:
    def test_assignments_and_noise(self):
        text = "\n".join(
            [
                "# training knobs",
                "",
                "epochs = 12",
                "  learning_rate=0.05  ",
                "label = toy ft model",
            ]
        )
        assert parse_config_text(text) == {
            "epochs": "12",
            "learning_rate": "0.05",
            "label": "toy ft model",
        }

    def test_last_assignment_wins(self):
        assert parse_config_text("a = 1\na = 2") == {"a": "2"}

    def test_missing_separator_names_line(self):
        with pytest.raises(ParseError, match="line 3"):
            parse_config_text("a = 1\n\nbare-word")

    def test_empty_key_rejected(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_config_text("= 5")

    def test_value_may_contain_equals(self):
        assert parse_config_text("expr = a=b") == {"expr": "a=b"}


class TestLoadSettings:
    def test_flag_path(self, tmp_path):
        file = tmp_path / "run.conf"
        file.write_text("k = 3\n", encoding="utf-8")
        assert load_settings(str(file), env={}) == {"k": "3"}

    def test_env_fallback(self, tmp_path):
        file = tmp_path / "env.conf"
        file.write_text("seed = 9\n", encoding="utf-8")
        assert load_settings(None, env={ENV_VAR: str(file)}) == {"seed": "9"}

    def test_flag_beats_env(self, tmp_path):
        flagged = tmp_path / "a.conf"
        flagged.write_text("src = flag\n", encoding="utf-8")
        ignored = tmp_path / "b.conf"
        ignored.write_text("src = env\n", encoding="utf-8")
        values = load_settings(str(flagged), env={ENV_VAR: str(ignored)})
        assert values == {"src": "flag"}

    def test_neither_source(self):
        assert load_settings(None, env={}) == {}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="does not exist"):
            load_settings(str(tmp_path / "gone.conf"), env={})


class TestSettings:
    def test_flag_beats_file_beats_default(self):
        settings = Settings({"epochs": "7"})
        assert settings.integer("epochs", 3, 10) == 3
        assert settings.integer("epochs", None, 10) == 7
        assert settings.integer("batch_size", None, 16) == 16

    def test_text(self):
        settings = Settings({"label": "from-file"})
        assert settings.text("label", "from-flag", "d") == "from-flag"
        assert settings.text("label", None, "d") == "from-file"
        assert settings.text("other", None, None) is None

    def test_real(self):
        settings = Settings({"lr": "2.5e-2"})
        assert settings.real("lr", None, 0.1) == 0.025
        assert settings.real("lr", 0.5, 0.1) == 0.5
        assert settings.real("momentum", None, 0.9) == 0.9

    def test_zero_flag_is_explicit(self):
        # Falsy flags still count as provided.
        settings = Settings({"k": "5"})
        assert settings.integer("k", 0, 9) == 0
        assert settings.real("k", 0.0, 9.0) == 0.0
        assert settings.text("k", "", "d") == ""

    def test_bad_integer(self):
        with pytest.raises(ParseError, match="'epochs'"):
            Settings({"epochs": "ten"}).integer("epochs", None, 1)

    def test_bad_real(self):
        with pytest.raises(ParseError, match="'lr'"):
            Settings({"lr": "fast"}).real("lr", None, 0.1)
