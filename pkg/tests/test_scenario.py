import json

import pytest

from disco.scenario import ConfigInvalid, World, bundled_config, dump_metrics, parse_config, run_scenario
from disco.scenario.cli import main, parse_simtime
from disco.simnet import MS, SECOND

SHORT = dict(pre_attack_s=2, attack_s=4, post_attack_s=4)


def short(name="default", **traffic):
    return bundled_config(name).override("traffic", **{**SHORT, **traffic})


def test_config_defaults_and_overrides():
    cfg = parse_config("[traffic]\nattack_rate = 12.5\nremediate = yes\n[detector]\nflexible = on\n")
    assert cfg.traffic.attack_rate == 12.5 and cfg.traffic.remediate and cfg.detector.flexible
    assert cfg.duration == 25 * SECOND and cfg.max_period == 500 * MS


@pytest.mark.parametrize(
    "text",
    [
        "[nope]\n",
        "[traffic]\nbogus = 1\n",
        "[traffic]\nattack_rate = -1\n",
        "[traffic]\nvariant = smurf\n",
        "[traffic]\nvictim_prefix = 4.2.0.0/40\n",
        "[detector]\ndrop_threshold = 0\n",
        "[detector]\nflexible = maybe\n",
        "[disco]\nzfilter_k = 300\n",
        "not an ini file",
    ],
)
def test_invalid_configs(text):
    with pytest.raises(ConfigInvalid):
        parse_config(text)


def test_no_attack_means_no_alarm():
    m = run_scenario(short(attack_rate=0))
    assert m["detect.count"] == 0 and m["false_alarms"] == 0 and m["detect.latency_us"] == -1


def test_metrics_shape():
    m = run_scenario(short())
    assert m["detect.count"] == 1 and m["detect.end_count"] == 1
    assert any(k.startswith("bytes.link.") for k in m)
    assert any(k.startswith("msgs.topic.") for k in m)
    assert any(k.startswith("stretch.topic.") for k in m)
    assert m["agg.ratio"] >= 1
    assert all(v >= 0 for k, v in m.items() if isinstance(v, (int, float)) and k != "detect.latency_us")
    assert json.loads(dump_metrics(m)) == m


def test_detections_fall_inside_the_attack_window():
    cfg = short()
    m = run_scenario(cfg)
    slack = cfg.detector.rate_window_ms * MS + cfg.detector.check_interval_ms * MS
    assert all(cfg.attack_start <= t <= cfg.attack_end + slack for t in m["detect.times_us"])


def test_flexible_subscription_sees_both_drop_kinds():
    m = run_scenario(short("flexibility"))
    assert m["flex.queue_full_events"] > 0 and m["flex.ttl_events"] > 0
    rigid = run_scenario(short())
    assert rigid["flex.queue_full_events"] == 0


def test_aggregates_mix_both_sources_when_both_match():
    m = run_scenario(short("multi_source"))
    assert m["agg.mixed_sources"] > 0


def test_server_attack_is_caught_and_diagnosed():
    m = run_scenario(short("server_ddos"))
    assert m["detect.count"] == 1 and m["false_alarms"] == 0
    assert m["dws.lookup.overload"] > 0


def test_flash_crowd_raises_no_alarm():
    m = run_scenario(short("flash_crowd"))
    assert m["detect.count"] == 0


def test_remediation_closes_the_loop():
    open_loop = run_scenario(short())
    closed = run_scenario(short(remediate=True))
    assert closed["events.published"] < open_loop["events.published"]
    assert any(a.split(":", 1)[1].startswith("rate-limit") for a in closed["remediation.actions"])


def test_replies_elect_drop_events_for_the_post_mortem():
    m = run_scenario(short())
    assert m["reply.sent"] > 0 and m["dws.elections"] > 0
    assert m["dws.lookup.drops"] > 0


def test_seed_changes_the_run():
    assert run_scenario(short(), seed=1) != run_scenario(short(), seed=2)


def test_the_analyzer_is_not_the_rendezvous():
    w = World(short())
    assert w.dep.overlay.owner(w.drop_topic) not in (w.ids["A"], w.ids["U"], w.ids["V"])


def test_simtime_parsing():
    assert parse_simtime("25s") == 25 * SECOND
    assert parse_simtime("500ms") == 500 * MS
    assert parse_simtime("1200") == 1200
    assert parse_simtime("1.5s") == 1_500_000


def test_cli_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[traffic]\nvariant = smurf\n")
    assert main(["--config", str(bad)]) == 2
    assert "invalid config" in capsys.readouterr().err
    assert main(["--config", str(tmp_path / "missing.ini")]) == 2


def test_cli_until_and_outputs(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[traffic]\nattack_s = 2\npost_attack_s = 2\n")
    trace = tmp_path / "t.log"
    assert main(["--config", str(cfg), "--until", "3s", "--trace", str(trace)]) == 0
    m = json.loads(capsys.readouterr().out)
    assert m["sim.end_us"] == 3 * SECOND
    lines = trace.read_text().splitlines()
    assert lines and all(len(line.split("\t")) == 4 for line in lines)
