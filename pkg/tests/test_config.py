import pytest

from qmpc.config import Config, ConfigError, load_config, parse_config

SAMPLE = """
# a run
n = 32
epsilon = 0.01
seed = 7
scheduler = random   # trailing comment
step_budget = 1000000
p = 2147483647
adversary = equivocate
inputs = 1, 2 3
"""


def test_parse_sample():
    cfg = parse_config(SAMPLE)
    assert (cfg.n, cfg.seed, cfg.scheduler, cfg.adversary) == (32, 7, "random", "equivocate")
    assert cfg.bad_count == 3
    xs = cfg.input_vector()
    assert xs[:4] == [1, 2, 3, 0] and len(xs) == 32


def test_aliases_and_overrides():
    cfg = parse_config("n = 16\nstrategy = maxchain\nbad_count = 1\nmodulus = 101\n", seed=3, adversary=None)
    assert cfg.scheduler == "maxchain" and cfg.t == 1 and cfg.p == 101 and cfg.seed == 3


@pytest.mark.parametrize(
    "text",
    [
        "n 16",
        "colour = red",
        "n = sixteen",
        "p = 15",
        "n = 16\np = 31",
        "epsilon = 0.2",
        "n = 1",
        "copies = 2",
        "trace = maybe",
    ],
)
def test_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_text_round_trip():
    cfg = parse_config(SAMPLE)
    back = parse_config(cfg.to_text())
    assert back == cfg and back.digest() == cfg.digest()
    assert parse_config(SAMPLE, seed=8).digest() != cfg.digest()


def test_load(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("n = 8\ntrace = false\n")
    cfg = load_config(f)
    assert cfg.n == 8 and cfg.trace is False


def test_defaults_valid():
    assert Config().validate().bad_count == 1
