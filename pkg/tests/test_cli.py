import json

import numpy as np
import pytest

from cspez.cli import main
from cspez.config import ConfigError, ScenarioConfig, config_from_dict, \
    load_config

SMALL = """
seed = 3

[grid]
nx = 7
ny = 7

[eval]
mc_n = 300
n_configs = 50
bins = 4

[planner]
n_samples = 40
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text(SMALL)
    return p


# -- config layer -------------------------------------------------------------


def test_defaults_and_unknown_keys():
    cfg = config_from_dict({})
    assert cfg.seed == 0
    assert cfg.planner.n_ctrl == 8
    assert cfg.eval.thresholds == (0.01, 0.05, 0.25, 0.5)
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"nope": 1})
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"planner": {"n_ctrl": 8, "typo": 2}})
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"training": {"hyper": {"lr": 1.0}}})


def test_json_and_toml_agree(tmp_path):
    tpath = tmp_path / "c.toml"
    tpath.write_text(SMALL)
    obj = {"seed": 3, "grid": {"nx": 7, "ny": 7},
           "eval": {"mc_n": 300, "n_configs": 50, "bins": 4},
           "planner": {"n_samples": 40}}
    jpath = tmp_path / "c.json"
    jpath.write_text(json.dumps(obj))
    a, b = load_config(tpath), load_config(jpath)
    assert (a.seed, a.grid, a.eval, a.planner) == \
        (b.seed, b.grid, b.eval, b.planner)
    assert np.allclose(a.belief.cov, b.belief.cov)


def test_bad_files(tmp_path):
    p = tmp_path / "broken.toml"
    p.write_text("this = is = not toml")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_belief_block_parsed():
    cfg = config_from_dict({"belief": {
        "mean": [0, 0, 0.5, 0.2, 1.0, 2.0],
        "cov_pos": [[0.01, 0.0], [0.0, 0.01]],
        "var_psi": 0.1, "var_a": 0.001, "var_R": 0.05, "var_v": 0.1}})
    assert cfg.belief.mean[2] == 0.5
    with pytest.raises(ConfigError):
        config_from_dict({"belief": {"mean": [0] * 6}})


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        config_from_dict({"evader": {"speed": -1.0}})
    with pytest.raises(ConfigError):
        config_from_dict({"grid": {"x_min": 2.0, "x_max": 1.0}})
    with pytest.raises(ConfigError):
        config_from_dict({"planner": {"region": [0, 1, 0]}})


# -- subcommands --------------------------------------------------------------


def test_csbez_grid_deterministic(small_cfg, tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["csbez-grid", "--config", str(small_cfg),
                 "--out", str(out1)]) == 0
    assert main(["csbez-grid", "--config", str(small_cfg),
                 "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    lines = out1.read_text().splitlines()
    assert lines[0] == "x,y,z"
    assert len(lines) == 1 + 49


def test_csbez_grid_empty(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[grid]\nnx = 0\nny = 0\n")
    out = tmp_path / "empty.csv"
    assert main(["csbez-grid", "--config", str(cfg), "--out", str(out)]) == 0
    assert out.read_text() == "x,y,z\n"


def test_csbez_grid_boundary_matches_bisection(small_cfg, tmp_path):
    """The CSV's sign boundary along a grid row brackets the root of
    ez_value along that ray."""
    from scipy.optimize import brentq

    from cspez.config import load_config as lc
    from cspez.geometry import EvaderState, PursuerParams, ez_value
    out = tmp_path / "z.csv"
    cfg_obj = lc(small_cfg)
    assert main(["csbez-grid", "--config", str(small_cfg),
                 "--out", str(out)]) == 0
    rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
    data = {(float(r[0]), float(r[1])): float(r[2]) for r in rows}
    p = PursuerParams.from_vector(cfg_obj.belief.mean)

    def z_at(x, y):
        return ez_value(EvaderState(x, y, cfg_obj.evader.heading,
                                    cfg_obj.evader.speed), p)

    xs = sorted({k[0] for k in data})
    y = 0.0
    signs = [data[(x, y)] for x in xs]
    crossings = [(xs[i], xs[i + 1]) for i in range(len(xs) - 1)
                 if signs[i] * signs[i + 1] < 0]
    assert crossings
    for lo, hi in crossings:
        root = brentq(lambda x: z_at(x, y), lo, hi)
        assert lo <= root <= hi


def test_compare_and_trace_bins_reproducible(small_cfg, tmp_path):
    out1, out2 = tmp_path / "m1.csv", tmp_path / "m2.csv"
    assert main(["compare", "--config", str(small_cfg),
                 "--out", str(out1)]) == 0
    assert main(["compare", "--config", str(small_cfg),
                 "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    tb = tmp_path / "tb.csv"
    assert main(["trace-bins", "--config", str(small_cfg),
                 "--out", str(tb)]) == 0
    assert tb.read_text().splitlines()[0] == "bin_lo,bin_hi,method,median_err"


def test_seed_flag_changes_mc_results(small_cfg, tmp_path):
    out1, out2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
    main(["compare", "--config", str(small_cfg), "--out", str(out1)])
    main(["compare", "--config", str(small_cfg), "--seed", "99",
          "--out", str(out2)])
    assert out1.read_bytes() != out2.read_bytes()


def test_cspez_eval_writes_grid(small_cfg, tmp_path):
    out = tmp_path / "ls.csv"
    assert main(["cspez-eval", "--config", str(small_cfg),
                 "--method", "quadratic", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,y,method,p,abs_err"
    methods = {line.split(",")[2] for line in lines[1:]}
    assert methods == {"mc", "quadratic"}


def test_label_subcommand(small_cfg, tmp_path):
    cfg = tmp_path / "lbl.toml"
    cfg.write_text(SMALL + "\n[training]\nn_samples = 30\nmc_n = 1000\n")
    out = tmp_path / "data.npz"
    assert main(["label", "--config", str(cfg), "--out", str(out)]) == 0
    from cspez.features import TrainingSet
    ts = TrainingSet.load(out)
    assert ts.features.shape == (30, 14)
    assert ts.meta["seed"] == 3


def test_plan_subcommand_and_json(small_cfg, tmp_path):
    out = tmp_path / "plan.json"
    code = main(["plan", "--config", str(small_cfg), "--method", "linear",
                 "--epsilon", "0.25", "--out", str(out)])
    assert code == 0
    obj = json.loads(out.read_text())
    assert obj["status"] == "success"
    assert obj["epsilon"] == 0.25
    assert obj["validation"]["max_mc_probability"] <= 0.27
    from cspez.bspline import SplineTrajectory
    traj = SplineTrajectory.from_json(json.dumps(obj["trajectory"]))
    assert traj.tf == pytest.approx(obj["t_f"])


def test_exit_codes(small_cfg, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("bogus = 1\n")
    assert main(["compare", "--config", str(bad),
                 "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["compare", "--config", str(tmp_path / "nothere.toml"),
                 "--out", str(tmp_path / "x.csv")]) == 2
    # Monte Carlo cannot serve as a planning constraint.
    assert main(["plan", "--config", str(small_cfg), "--method", "mc",
                 "--out", str(tmp_path / "x.json")]) == 2
    # nn planning without a configured model is a config error.
    assert main(["plan", "--config", str(small_cfg), "--method", "nn",
                 "--out", str(tmp_path / "x.json")]) == 2


def test_workers_flag_is_result_invariant(small_cfg, tmp_path):
    out1, out2 = tmp_path / "w1.csv", tmp_path / "w2.csv"
    main(["compare", "--config", str(small_cfg), "--out", str(out1)])
    main(["compare", "--config", str(small_cfg), "--workers", "3",
          "--out", str(out2)])
    assert out1.read_bytes() == out2.read_bytes()
