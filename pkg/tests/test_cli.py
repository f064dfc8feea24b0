import json

from enkbf_lab.cli import main

LINEAR = 'model = "linear"\nA = 1\nC = 0.70710678118654757\nH = 1\nR = 1\ndt = 1e-2\nn_steps = 40\n'
LORENZ = 'model = "lorenz63"\nepsilon_list = 0.1, 0.01\nn_steps = 2000\nn_seeds = 1\n'


def write(tmp_path, text, name="c.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_riccati(tmp_path, capsys):
    assert main(["riccati", "--config", write(tmp_path, LINEAR)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["p_inf"][0][0] - (1 + 2 ** 0.5)) < 1e-8
    assert out["observability_rank"] == 1 and out["controllability_rank"] == 1
    assert out["residual_norm"] < 1e-10
    assert abs(out["lambda_star"] - 2 ** 0.5) < 1e-8


def test_riccati_needs_linear(tmp_path, capsys):
    assert main(["riccati", "--config", write(tmp_path, LORENZ)]) == 2


def test_truth(tmp_path, capsys):
    cfg = write(tmp_path, LINEAR)
    assert main(["truth", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "truth.csv").read_text().splitlines()
    assert lines[0] == "t,x_1,dy_1" and len(lines) == 42


def test_filter(tmp_path, capsys):
    assert main(["filter", "--config", write(tmp_path, LORENZ), "--out", str(tmp_path / "f")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["time_avg_mse"] > 0
    assert (tmp_path / "f" / "diagnostics.csv").exists()


def test_sweeps_and_seed_override(tmp_path, capsys):
    cfg = write(tmp_path, LORENZ)
    assert main(["sweep-epsilon", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert main(["sweep-epsilon", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() != (tmp_path / "b" / "sweep.csv").read_bytes()
    assert "mse_slope=" in capsys.readouterr().out
    m_cfg = write(tmp_path, LORENZ + "m_list = 2, 4\n", "m.cfg")
    assert main(["sweep-m", "--config", m_cfg, "--out", str(tmp_path / "m"), "--workers", "2"]) == 0
    assert "M=2: mse_slope=" in capsys.readouterr().out


def test_chaos(tmp_path, capsys):
    cfg = write(tmp_path, LINEAR)
    assert main(["chaos", "--config", cfg, "--out", str(tmp_path / "c"), "--m-list", "8,16", "--seeds", "2"]) == 0
    assert (tmp_path / "c" / "chaos.csv").read_text().startswith("M,seeds_used,mean_gap,stderr_gap\n")


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["truth", "--config", write(tmp_path, 'model = "lorenz63"\nbogus = 1\n')]) == 2
    assert "bogus" in capsys.readouterr().err
