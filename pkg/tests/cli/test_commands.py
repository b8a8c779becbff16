"""End-to-end runs of the CLI: simulate, then train, evaluate and analyze."""

import pytest

from src.presentation.cli.commands import app, parse_overrides
from tests.conftest import SMALL_SIM

LEARNER = {
    "K": 3,
    "lambda_u": 0.1,
    "lambda_theta": 0.1,
    "lambda_eta": 1.0,
    "max_iters": 15,
    "folds": 3,
    "threads": 1,
}


@pytest.fixture
def simulated_config(cli, config_factory, tmp_path):
    """Config whose event logs come from a `simulate` run."""
    sim_out = tmp_path / "sim"
    config = config_factory(SMALL_SIM)
    result = cli.invoke(app, ["--config", config, "--out", str(sim_out), "simulate"])
    assert result.exit_code == 0, result.output
    values = {
        **SMALL_SIM,
        **LEARNER,
        "events": str(sim_out / "events.tsv"),
        "meta": str(sim_out / "meta.tsv"),
        "exposures": str(sim_out / "exposures.tsv"),
    }
    return lambda **extra: config_factory({**values, **extra}, name="run.yaml")


def test_simulate_reports_shape(cli, config_factory, tmp_path):
    result = cli.invoke(app, ["--config", config_factory(SMALL_SIM), "simulate"])
    assert result.exit_code == 0, result.output
    assert "[SUCCESS] Simulated 30 users x 40 items" in result.output
    assert (tmp_path / "out" / "truth.txt").is_file()


def test_train_evaluate_analyze(cli, simulated_config, tmp_path):
    config = simulated_config()
    out = tmp_path / "out"

    result = cli.invoke(app, ["--config", config, "train"])
    assert result.exit_code == 0, result.output
    assert "[SUCCESS] Trained on 30 users x 40 items" in result.output
    assert (out / "checkpoint.txt").is_file()

    result = cli.invoke(app, ["--config", config, "evaluate"])
    assert result.exit_code == 0, result.output
    assert "Recall (cross-validated)" in result.output
    assert "Recall by training activity" in result.output
    header = (out / "recall.tsv").read_text().splitlines()[0]
    assert header.count("recall@") == 4

    result = cli.invoke(app, ["--config", config, "analyze"])
    assert result.exit_code == 0, result.output
    assert "Items by cascade size" in result.output
    assert "Correlation with cascade size" in result.output
    assert (out / "decomposition.tsv").is_file()


def test_runs_are_byte_identical(cli, simulated_config, tmp_path):
    config = simulated_config()
    for name in ("a", "b"):
        for command in ("train", "evaluate"):
            out = str(tmp_path / name)
            result = cli.invoke(app, ["--config", config, "--out", out, command])
            assert result.exit_code == 0, result.output
    for name in ("checkpoint.txt", "trace.tsv", "recall.tsv", "summary.txt"):
        first = (tmp_path / "a" / name).read_bytes()
        assert first == (tmp_path / "b" / name).read_bytes()


def test_model_subset_and_overrides(cli, simulated_config, tmp_path):
    config = simulated_config()
    result = cli.invoke(
        app,
        ["--config", config, "evaluate", "--models", "vip,random", "--recall_at=1,3"],
    )
    assert result.exit_code == 0, result.output
    rows = (tmp_path / "out" / "recall.tsv").read_text().splitlines()
    assert rows[0] == "# model\trecall@1\trecall@3"
    assert [row.split("\t")[0] for row in rows[1:]] == ["vip", "random"]


def test_missing_events_file_is_named(cli, config_factory, tmp_path):
    missing = tmp_path / "absent-events.tsv"
    config = config_factory({"events": str(missing), "meta": str(missing)})
    result = cli.invoke(app, ["--config", config, "train"])
    assert result.exit_code == 1
    assert "[ERROR]" in result.output
    assert "absent-events.tsv" in result.output


def test_missing_config_file(cli, tmp_path):
    result = cli.invoke(app, ["--config", str(tmp_path / "none.yaml"), "train"])
    assert result.exit_code == 1
    assert "Configuration file not found" in result.output


@pytest.mark.parametrize(
    "extra,needle",
    [
        (["--n_users", "0"], "n_users"),
        (["--models", "vip,popularity"], "models"),
        (["--K"], "missing value for --K"),
        (["stray"], "unexpected argument 'stray'"),
    ],
)
def test_invalid_settings_exit_nonzero(cli, config_factory, extra, needle):
    config = config_factory(SMALL_SIM)
    result = cli.invoke(app, ["--config", config, "simulate", *extra])
    assert result.exit_code == 1
    assert needle in result.output


def test_checkpoint_shape_mismatch(cli, simulated_config, config_factory, tmp_path):
    other = tmp_path / "other"
    result = cli.invoke(
        app,
        [
            "--config",
            config_factory({**SMALL_SIM, "n_items": 41}, name="other.yaml"),
            "--out",
            str(other),
            "simulate",
        ],
    )
    assert result.exit_code == 0, result.output

    result = cli.invoke(
        app,
        [
            "--config",
            simulated_config(),
            "analyze",
            "--checkpoint",
            str(other / "truth.txt"),
        ],
    )
    assert result.exit_code == 1
    assert "(30, 41)" in result.output and "(30, 40)" in result.output


def test_global_options_become_overrides(cli, simulated_config, tmp_path):
    out = tmp_path / "seeded"
    args = ["--config", simulated_config(), "--seed", "5", "--threads", "2"]
    result = cli.invoke(app, [*args, "--out", str(out), "train"])
    assert result.exit_code == 0, result.output
    resolved = (out / "config.resolved.yaml").read_text()
    assert "seed: 5\n" in resolved
    assert "threads: 2\n" in resolved


@pytest.mark.parametrize(
    "args,expected",
    [
        ([], {}),
        (["--K", "5"], {"K": "5"}),
        (["--seed=3", "--lambda-eta", "0.5"], {"seed": "3", "lambda_eta": "0.5"}),
        (["--out_dir=a=b"], {"out_dir": "a=b"}),
    ],
)
def test_parse_overrides(args, expected):
    assert parse_overrides(args) == expected


@pytest.mark.parametrize("args", [["K", "5"], ["--"], ["--K"]])
def test_parse_overrides_rejects_malformed(args):
    with pytest.raises(ValueError):
        parse_overrides(args)
