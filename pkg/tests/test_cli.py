import io
import json
import os
from contextlib import redirect_stdout
from pathlib import Path

import pytest

from wsobolev.cli import RunConfig, build_parser, main, parse_config
from wsobolev.exceptions import ConfigError

GOLDEN = Path(__file__).parent / "golden"


def test_help_matches_golden():
    buf = io.StringIO()
    build_parser().print_help(buf)
    assert buf.getvalue() == (GOLDEN / "help.txt").read_text()


def test_help_exits_zero():
    with redirect_stdout(io.StringIO()):
        assert main(["--help"]) == 0


def test_minimal_flags_fill_defaults():
    cfg = parse_config(["density", "--map", "norm-squared", "--dim", "4"], env={})
    expected = RunConfig(command="density", map="norm-squared", dim=4)
    assert cfg == expected
    assert cfg.bins == 64 and cfg.out_dir == "wsobolev_out"


def test_misspelled_config_key_is_named(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"stencill": 8}))
    with pytest.raises(ConfigError) as info:
        parse_config(["sobolev-norm", "--config", str(path)], env={})
    assert info.value.key == "stencill"
    assert main(["sobolev-norm", "--config", str(path)]) == 2


def test_unknown_suite_parameter_is_named(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"params": {"l_lst": [2]}}))
    with pytest.raises(ConfigError) as info:
        parse_config(["verify", "thresholds", "--config", str(path)], env={})
    assert info.value.key == "params.l_lst"


def test_parsed_threshold_config_matches_golden(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({
        "command": "verify",
        "params": {"l_list": [2, 3, 5], "p_list": [1, 2], "k_list": [1]},
        "tolerances": {"gamma_star_l2_p1_k1": 0.1},
    }))
    cfg = parse_config(["verify", "thresholds", "--config", str(path)], env={})
    assert cfg.to_dict() == json.loads((GOLDEN / "threshold_config.json").read_text())


def test_flags_override_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"h": 0.25, "k": 2}))
    cfg = parse_config(["sobolev-norm", "--config", str(path), "--k", "3"], env={})
    assert (cfg.h, cfg.k) == (0.25, 3)


def test_output_directory_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"out_dir": "from-config"}))
    argv = ["kernel", "--config", str(path)]
    assert parse_config(argv, env={}).out_dir == "from-config"
    assert parse_config(argv, env={"WSOBOLEV_OUT": "from-env"}).out_dir == "from-env"
    assert parse_config(argv + ["--out", "from-flag"], env={"WSOBOLEV_OUT": "from-env"}).out_dir == "from-flag"


def test_invalid_value_exits_two():
    assert main(["sobolev-norm", "--h", "-1"]) == 2


def test_verify_flat_cusp_passes(tmp_path):
    out = tmp_path / "out"
    with redirect_stdout(io.StringIO()):
        assert main(["verify", "flat-cusp", "--out", str(out)]) == 0
    data = json.loads((out / "flat-cusp.json").read_text())
    assert data["verdict"] == "pass"
    assert (out / "flat-cusp.csv").exists()


def test_zero_tolerance_fails(tmp_path):
    with redirect_stdout(io.StringIO()):
        assert main(["verify", "flat-cusp", "--tolerance", "0", "--out", str(tmp_path)]) == 1


def test_unusable_output_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["verify", "retraction", "--out", str(blocker / "sub")]) == 2


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_read_only_output_directory(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    try:
        assert main(["verify", "retraction", "--out", str(ro)]) == 2
    finally:
        ro.chmod(0o700)


def test_environment_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("WSOBOLEV_OUT", str(tmp_path / "env"))
    with redirect_stdout(io.StringIO()):
        assert main(["sobolev-norm", "--h", "0.0625"]) == 0
    assert (tmp_path / "env" / "sobolev_norm.json").exists()


def test_geodesic_command(tmp_path):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(["geodesic", "--domain", "lshape", "--h", "0.0625",
                     "--a-point", "0.25,0.75", "--b-point", "0.75,0.375", "--out", str(tmp_path)])
    assert code == 0 and "d_X" in buf.getvalue()
    d = json.loads((tmp_path / "geodesic.json").read_text())
    # shortest path bends at the reentrant corner (0.5, 0.5)
    # the graph cannot touch the corner itself, so it overshoots by less than h
    exact = 0.5**0.5 / 2 + (0.25**2 + 0.125**2) ** 0.5
    assert 0 < d["distance"] - exact < 0.0625
    assert d["euclidean"] < d["distance"]
