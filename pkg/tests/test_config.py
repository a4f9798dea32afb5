from __future__ import annotations

import json

import pytest

from src import config


@pytest.fixture(autouse=True)
def config_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "CONFIG_DIR", tmp_path / "dl-circuits")
    monkeypatch.setattr(config, "CONFIG_FILE", tmp_path / "dl-circuits" / "settings.json")
    monkeypatch.delenv(config.NODE_CAP_ENV, raising=False)
    return tmp_path / "dl-circuits"


def test_defaults_without_file():
    assert config.load() == config.DEFAULTS


def test_file_values_override_known_keys_only(config_dir):
    config_dir.mkdir()
    (config_dir / "settings.json").write_text(json.dumps({"batch_size": 17, "colour": "red"}))
    settings = config.load()
    assert settings["batch_size"] == 17
    assert "colour" not in settings


def test_broken_file_falls_back(config_dir, caplog):
    config_dir.mkdir()
    (config_dir / "settings.json").write_text("{broken")
    assert config.load() == config.DEFAULTS
    assert "Failed to load config" in caplog.text


def test_node_cap_environment(monkeypatch, caplog):
    monkeypatch.setenv(config.NODE_CAP_ENV, "1234")
    assert config.load()["node_cap"] == 1234
    monkeypatch.setenv(config.NODE_CAP_ENV, "lots")
    assert config.load()["node_cap"] == config.DEFAULTS["node_cap"]
    assert "Ignoring" in caplog.text


def test_save_and_reset(config_dir):
    settings = dict(config.DEFAULTS, threads=8)
    config.save(settings)
    assert config.load()["threads"] == 8
    config.reset_to_defaults()
    assert config.load() == config.DEFAULTS
