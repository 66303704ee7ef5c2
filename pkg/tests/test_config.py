from __future__ import annotations

import pytest

from foggis.compression import Codec, SelectionPolicy
from foggis.config import BadConfig, GatewayConfig, load_config


def test_defaults_without_file():
    cfg = load_config(None, env={})
    assert cfg == GatewayConfig()
    assert cfg.policy() == SelectionPolicy("minsize")
    assert Codec.TARGZ in cfg.codec_set()


def test_yaml_and_json(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("port: 9000\ncodecs: [gzip, store]\ndefault_policy: weighted:0.5\n")
    cfg = load_config(y, env={})
    assert cfg.port == 9000 and cfg.codec_set() == [Codec.GZIP, Codec.STORE]
    assert cfg.policy() == SelectionPolicy("weighted", 0.5)
    j = tmp_path / "c.json"
    j.write_text('{"workers": 4, "rtt": 0.2}')
    cfg = load_config(j, env={})
    assert (cfg.workers, cfg.rtt) == (4, 0.2)


def test_env_overrides_file(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("port: 9000\n")
    cfg = load_config(y, env={"FOGGIS_PORT": "9100", "FOGGIS_CODECS": "zip, tar.gz",
                              "FOGGIS_BANDWIDTH": "2e6", "FOGGIS_CLOUD_URL": "http://c:1"})
    assert cfg.port == 9100 and cfg.codecs == ["zip", "tar.gz"]
    assert cfg.bandwidth == 2e6 and cfg.cloud_url == "http://c:1"


@pytest.mark.parametrize("text,line", [
    ("port: 1\nworkers: [\n", 3),
    ("a: 1\n  b: 2\n", 2),
])
def test_yaml_syntax_error_has_line(tmp_path, text, line):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    with pytest.raises(BadConfig, match=f"line {line}"):
        load_config(p, env={})


def test_json_syntax_error_has_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "port": 1,\n "workers": }\n')
    with pytest.raises(BadConfig, match="line 3"):
        load_config(p, env={})


@pytest.mark.parametrize("text", [
    "bogus: 1\n",
    "- a\n- b\n",
    "workers: 0\n",
    "codecs: [rar]\n",
    "default_policy: fastest\n",
    "on_duplicate: overwrite\n",
    "bandwidth: 0\n",
])
def test_invalid_values(tmp_path, text):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    with pytest.raises(BadConfig):
        load_config(p, env={})


def test_bad_env_value():
    with pytest.raises(BadConfig, match="FOGGIS_PORT"):
        load_config(None, env={"FOGGIS_PORT": "eighty"})


def test_missing_file(tmp_path):
    with pytest.raises(BadConfig):
        load_config(tmp_path / "nope.yaml", env={})
