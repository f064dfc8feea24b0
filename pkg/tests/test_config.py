import dataclasses

import pytest

from enkbf_lab.config import (
    DEFAULT_EPSILONS,
    ExperimentConfig,
    format_config,
    model_for,
    parse_config,
    parse_config_text,
    write_config_echo,
)
from enkbf_lab.errors import ConfigError
from enkbf_lab.model import LinearModelSpec


def test_minimal_defaults(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text('model = "lorenz63"\n')
    cfg = parse_config(path)
    assert cfg.epsilon_list == DEFAULT_EPSILONS == (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    assert (cfg.m, cfg.dt, cfg.n_steps, cfg.n_seeds, cfg.burn_in_fraction) == (4, 2e-4, 500_000, 3, 0.1)
    assert cfg.record_every is None and cfg.m_list is None


def test_full_file():
    cfg = parse_config_text("""
        # sweep
        model = "lorenz63"   # trailing comment
        epsilon_list = 1e-1, 1e-3
        m_list = 2, 3
        n_steps = 5e5
        dt = 5e-5
        record_every = 100
        master_seed = 7
        output_dir = runs/a
    """)
    assert cfg.epsilon_list == (0.1, 0.001)
    assert cfg.m_list == (2, 3)
    assert cfg.n_steps == 500_000 and isinstance(cfg.n_steps, int)
    assert cfg.output_dir == "runs/a"


@pytest.mark.parametrize("text,key", [
    ('model = "lorenz63"\nepsilon_list = 0.1, 0\n', "epsilon_list"),
    ('model = "lorenz63"\nm = 4\nm = 5\n', "m"),
    ('model = "lorenz63"\nfoo = 1\n', "foo"),
    ('model = "lorenz63"\ndt = abc\n', "dt"),
    ('model = "lorenz63"\nn_steps = 1.5\n', "n_steps"),
    ('model = "lorenz63"\nm_list = 1, 4\n', "m_list"),
    ('model = "lorenz63"\nepsilon_list = 0.1,,0.2\n', "epsilon_list"),
    ("epsilon_list = 0.1\n", "model"),
    ('model = "vortex"\n', "model"),
    ('model = "linear"\n', "A"),
    ('model = "lorenz63"\nburn_in_fraction = 1\n', "burn_in_fraction"),
])
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.key == key


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.cfg")


def test_echo_round_trip(tmp_path):
    cfg = parse_config_text("""
        model = "linear"
        A = 0, 1; -1, -0.3
        b = 0.5, 0
        C = 1, 0; 0.1, 0.7
        H = 1, 0
        R = 0.25
        epsilon_list = 0.1, 0.03333333333333333
        m_list = 4, 8
        record_every = 3
        x0 = 1, 2
        init_scale = 2.5
        m_ref = 64
    """)
    path = write_config_echo(cfg, tmp_path / "echo.txt")
    assert parse_config(path) == cfg
    default = ExperimentConfig(model="lorenz63")
    assert parse_config_text(format_config(default)) == default
    other = dataclasses.replace(default, dt=1.0 / 3.0, epsilon_list=[0.7])
    assert parse_config_text(format_config(other)) == other


def test_model_for_linear():
    cfg = parse_config_text('model = "linear"\nA = -1\nR = 2\n')
    model = model_for(cfg)
    assert isinstance(model, LinearModelSpec)
    assert model.obs_cov[0, 0] == 2.0
    assert model_for(cfg, 0.01).obs_cov[0, 0] == 0.01


def test_model_for_bad_linear():
    cfg = parse_config_text('model = "linear"\nA = 1, 0; 0, 1\nH = 1, 0, 0\n')
    with pytest.raises(ConfigError):
        model_for(cfg)
