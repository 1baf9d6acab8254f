import json
import os
import warnings

import pytest

from tollrl.harness import cli
from tollrl.harness.config import (OUTPUT_ROOT_ENV, ExperimentConfig, load_config,
                                   resolve_out_dir, save_config)
from tollrl.harness.scenarios import (CalibrationWarning, _data_path, build_scenario_parallel,
                                      build_scenario_sioux, check_calibration, enumerate_routes,
                                      get_scenario, load_calibration, load_scenario,
                                      save_scenario)
from tollrl.harness.tntp import (TntpParseError, dump_tntp_net, load_tntp, load_trips,
                                 parse_tntp_net, parse_tntp_trips)
from tollrl.network import validate_network

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SMOKE = os.path.join(ROOT, "configs", "smoke.json")

HEADER = "<NUMBER OF NODES> 3\n<NUMBER OF LINKS> 2\n<END OF METADATA>\n"


# -- TNTP -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def sioux_tntp():
    return load_tntp(_data_path("SiouxFalls_net.tntp"))


def test_sioux_falls_file(sioux_tntp):
    assert sioux_tntp.n_nodes == 24 and sioux_tntp.n_links == 76
    first = sioux_tntp.link(1)
    assert (first.init_node, first.term_node, first.free_flow_time) == (1, 2, 6)


def test_roundtrip_through_emitter(sioux_tntp):
    back = parse_tntp_net(dump_tntp_net(sioux_tntp))
    assert back.links == sioux_tntp.links and back.n_nodes == 24


def test_trips_file():
    trips = load_trips(_data_path("SiouxFalls_trips.tntp"))
    assert len(trips) == 576
    assert sum(trips.values()) == pytest.approx(360600)


def test_empty_file_is_an_error():
    with pytest.raises(TntpParseError):
        parse_tntp_net("")
    with pytest.raises(TntpParseError):
        parse_tntp_net("  \n\n")


def test_comment_prelude_is_ignored():
    body = HEADER + "1 2 10 1 1 ;\n2 3 10 1 2 ;\n"
    noisy = "~ a comment\n~ another\n\n" + HEADER + "~ column names\n1\t2\t10\t1\t1\t;\n  2 3 10 1 2;\n"
    assert parse_tntp_net(noisy).links == parse_tntp_net(body).links


@pytest.mark.parametrize("rows,lineno", [
    ("1 2 10 1 1 ;\n2 x 10 1 2 ;\n", 5),
    ("1 2 10 1 1 ;\n2 3 ;\n", 5),
    ("1 9 10 1 1 ;\n2 3 10 1 2 ;\n", 4),
    ("1 2 0 1 1 ;\n2 3 10 1 2 ;\n", 4),
])
def test_bad_rows_report_line_numbers(rows, lineno):
    with pytest.raises(TntpParseError) as info:
        parse_tntp_net(HEADER + rows, "net.tntp")
    assert info.value.lineno == lineno
    assert f"net.tntp:{lineno}:" in str(info.value)


def test_header_problems():
    with pytest.raises(TntpParseError, match=":2: expected a <TAG>"):
        parse_tntp_net("<NUMBER OF NODES> 3\n1 2 3 4 5\n")
    with pytest.raises(TntpParseError, match="END OF METADATA"):
        parse_tntp_net("<NUMBER OF NODES> 3\n")
    with pytest.raises(TntpParseError, match="declares 2 links"):
        parse_tntp_net(HEADER + "1 2 10 1 1 ;\n")
    with pytest.raises(TntpParseError, match="NUMBER OF LINKS"):
        parse_tntp_net("<NUMBER OF NODES> 3\n<END OF METADATA>\n")


def test_trips_parser():
    text = "<NUMBER OF ZONES> 2\n<END OF METADATA>\nOrigin 1\n 1 : 0.0; 2 : 5.5;\nOrigin 2\n 1 : 3;\n"
    assert parse_tntp_trips(text) == {(1, 1): 0.0, (1, 2): 5.5, (2, 1): 3.0}


# -- scenarios ------------------------------------------------------------------


def test_parallel_defaults():
    net = build_scenario_parallel()
    assert net.n_routes == 3 and len(net.tolled) == 3 and len(net.od_pairs) == 1
    assert net.params.horizon == 80 and net.params.t_star == 30
    assert net.params.alpha == 1.0 and net.params.beta == 0.45
    assert validate_network(net) == []


def test_scenario_file_roundtrip(tmp_path):
    net = build_scenario_parallel()
    path = tmp_path / "p.json"
    save_scenario(net, path)
    assert load_scenario(path) == net
    assert get_scenario(str(path)) == net
    doc = json.loads(path.read_text())
    doc["routes"][0]["bottlenecks"] = [99]
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="99"):
        load_scenario(path)


def test_route_enumeration(sioux_tntp):
    routes = enumerate_routes(sioux_tntp, 1, 2, 3)
    assert routes[0] == [1]
    assert len(routes) == 3 and len({tuple(r) for r in routes}) == 3


@pytest.fixture(scope="module")
def sioux_net():
    with warnings.catch_warnings():
        warnings.simplefilter("error", CalibrationWarning)
        return build_scenario_sioux()


def test_sioux_tolled_set_and_calibration_target(sioux_net):
    tolled = sorted(sioux_net.bottlenecks[r].id for r in sioux_net.tolled)
    assert tolled == [29, 48, 53, 58]
    assert check_calibration(sioux_net, load_calibration()) == [29, 48, 49, 52, 53, 58, 61]


def test_sioux_zero_demand_warns():
    calib = load_calibration().scaled(0.0)
    with pytest.warns(CalibrationWarning, match="differ"):
        net = build_scenario_sioux(calib=calib)
    assert net.total_demand == 0


def test_sioux_ten_times_demand_is_superset_and_warns():
    calib = load_calibration()
    big = calib.scaled(10.0)
    net = build_scenario_sioux(calib=big, check=False)
    with pytest.warns(CalibrationWarning):
        congested = check_calibration(net, big, max_days=30)
    assert set(calib.target_congested) < set(congested)


# -- configuration --------------------------------------------------------------


def test_config_roundtrip(tmp_path):
    cfg = load_config(SMOKE)
    path = tmp_path / "c.json"
    save_config(cfg, path)
    again = load_config(path)
    assert again == cfg
    save_config(again, tmp_path / "d.json")
    assert (tmp_path / "d.json").read_bytes() == path.read_bytes()


def test_shipped_configs_load():
    for name in os.listdir(os.path.join(ROOT, "configs")):
        cfg = load_config(os.path.join(ROOT, "configs", name))
        assert cfg.learner.gamma_rl == 0.5


@pytest.mark.parametrize("patch", [{"control": {"G": -1}}, {"control": {"bogus": 1}},
                                   {"methods": ["nope"]}, {"scenario": "missing.json"},
                                   {"behavior": {"nope": 1}}, {"format": "x"}])
def test_config_rejects_bad_values(tmp_path, patch):
    doc = ExperimentConfig().to_dict()
    doc.update(patch)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises((ValueError, FileNotFoundError)):
        load_config(path)


def test_output_root_env(monkeypatch, tmp_path):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    assert resolve_out_dir("runs/x") == "runs/x"
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert resolve_out_dir("runs/x") == os.path.join(str(tmp_path), "runs/x")
    assert resolve_out_dir("/abs/x") == "/abs/x"


# -- CLI ------------------------------------------------------------------------


def test_cli_simulate(tmp_path, capsys):
    assert cli.main(["simulate", "--scenario", "parallel", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "simulate.csv").read_text().splitlines()
    assert lines[0] == "day,total_travel_time,total_wait,wait_1,wait_2,wait_3"
    assert len(lines) > 2
    assert (tmp_path / "final_day.csv").exists()
    assert "congested bottlenecks [1, 2, 3]" in capsys.readouterr().out


def test_cli_simulate_honours_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert cli.main(["simulate", "--scenario", "single", "--out", "rel"]) == 0
    assert (tmp_path / "rel" / "simulate.csv").exists()


def test_cli_train_is_deterministic_and_evaluates(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["train", "--config", SMOKE, "--seed", "7", "--out", str(out)]) == 0
        outs.append(out)
    for f in ("metrics.csv", "tolls.csv", "baseline.json"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
    # re-running into the same directory replaces rather than appends
    assert cli.main(["train", "--config", SMOKE, "--seed", "7", "--out", str(outs[0])]) == 0
    assert (outs[0] / "metrics.csv").read_bytes() == (outs[1] / "metrics.csv").read_bytes()
    assert json.loads((outs[0] / "config.json").read_text())["seed"] == 7

    ck = outs[0] / "checkpoints" / "dp_ddpg" / "set_0" / "cycle_1"
    ev = tmp_path / "ev"
    assert cli.main(["evaluate", "--config", SMOKE, "--checkpoint", str(ck), "--out", str(ev)]) == 0
    assert len((ev / "evaluate.csv").read_text().splitlines()) == 1 + 3


def test_cli_compare(tmp_path):
    assert cli.main(["compare", "--config", SMOKE, "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "compare.csv").read_text().splitlines()
    assert rows[0] == "method,set,final_wait,zero_toll_wait,ratio"
    assert sorted(r.split(",")[0] for r in rows[1:]) == ["centralized", "distributed", "dp_ddpg"]


def test_cli_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code != 0
    assert "usage" in capsys.readouterr().err
    assert cli.main(["simulate", "--scenario", "nowhere.json", "--out", str(tmp_path)]) == 2
    assert "nowhere.json" in capsys.readouterr().err
