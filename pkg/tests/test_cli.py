"""Command-line surface, exercised in-process through main(argv)."""

import json

import pytest

from xlc import load_dataset, load_model
from xlc.cli import main


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def planted(tmp_path):
    """Noise-free 3-block dataset plus a trained autoencoder container."""
    data = tmp_path / "data.txt"
    names = tmp_path / "names.txt"
    model = tmp_path / "model.xlc"
    assert _run("gen-synth", "--blocks", 3, "--rows", 30,
                "--labels-per-block", 4, "--noise", 0.0, "--seed", 2,
                "--out", data, "--names-out", names) == 0
    assert _run("train-ae", "--data", data, "--dims", "3",
                "--init", "nmf-greedy", "--seed", 1, "--label-names", names,
                "--out", model) == 0
    return data, names, model


def test_gen_synth_writes_parseable_dataset(tmp_path, capsys):
    out = tmp_path / "d.txt"
    assert _run("gen-synth", "--blocks", 2, "--rows", 8,
                "--labels-per-block", 3, "--noise", 0.1, "--seed", 0,
                "--out", out) == 0
    assert "wrote 8 rows" in capsys.readouterr().out
    x, v = load_dataset(out)
    assert (x.rows, x.cols, v.n_labels) == (8, 2, 6)


def test_pipeline_perfect_recovery_on_noise_free_data(planted, tmp_path, capsys):
    data, _, model = planted
    assert _run("fit-reg", "--data", data, "--model", model, "--kind", "ridge",
                "--lam", "1e-8", "--seed", 0) == 0
    report = tmp_path / "eval.txt"
    assert _run("eval", "--model", model, "--data", data, "--k", "1,3",
                "--split", "all", "--out", report) == 0
    text = report.read_text()
    assert "P@1 = 1.000000" in text
    assert "P@3 = 1.000000" in text
    assert "nDCG@1 = 1.000000" in text


def test_predict_output_format(planted, tmp_path):
    data, _, model = planted
    _run("fit-reg", "--data", data, "--model", model, "--kind", "ridge")
    out = tmp_path / "pred.txt"
    assert _run("predict", "--model", model, "--data", data, "--top-n", 2,
                "--out", out) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 30
    assert lines[0].startswith("row 0: ")
    assert len(lines[0].split(": ")[1].split()) == 2
    for token in lines[0].split(": ")[1].split():
        label, score = token.split(":")
        int(label), float(score)


def test_hierarchy_exact_render(planted, tmp_path):
    _, _, model = planted
    out = tmp_path / "h.txt"
    assert _run("hierarchy", "--model", model, "--layer", 1, "--unit", 0,
                "--top-m", 3, "--out", out) == 0
    line = out.read_text().rstrip("\n")
    assert line.startswith("H1, unit 0: ")
    listed = line.split(": ", 1)[1].split(", ")
    assert len(listed) == 3
    # names came from the sidecar, all from one block
    assert len({name.split("_")[0] for name in listed}) == 1


def test_explain_text_and_json(planted, tmp_path):
    data, _, model = planted
    _run("fit-reg", "--data", data, "--model", model, "--kind", "ridge")
    out = tmp_path / "e.txt"
    jout = tmp_path / "e.json"
    assert _run("explain", "--model", model, "--data", data, "--row", 0,
                "--samples", 200, "--k-features", 2, "--seed", 0,
                "--out", out, "--json-out", jout) == 0
    text = out.read_text()
    assert "explained latent unit:" in text
    assert "H1, unit" in text
    blob = json.loads(jout.read_text())
    assert {"latent_unit", "surrogate", "hierarchy"} <= blob.keys()


def test_nmf_command_stores_factors(planted, tmp_path, capsys):
    data, _, _ = planted
    out = tmp_path / "nmf.xlc"
    assert _run("nmf", "--data", data, "--k", 3, "--seed", 0, "--out", out) == 0
    assert "objective" in capsys.readouterr().out
    c = load_model(out)
    assert c.nmf is not None
    assert c.nmf.w.values.shape == (30, 3)


def test_config_file_supplies_and_flags_override(tmp_path):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text("blocks=2\nrows=6\nlabels-per-block=3\nnoise=0.0\nseed=1\n"
                   "# comment line\n")
    out = tmp_path / "d.txt"
    assert _run("gen-synth", "--config", cfg, "--rows", 12, "--out", out) == 0
    x, v = load_dataset(out)
    # rows from the flag, everything else from the config file
    assert x.rows == 12
    assert (x.cols, v.n_labels) == (2, 6)


def test_cli_determinism_byte_identical(planted, tmp_path):
    data, names, model = planted
    model2 = tmp_path / "model2.xlc"
    assert _run("train-ae", "--data", data, "--dims", "3",
                "--init", "nmf-greedy", "--seed", 1, "--label-names", names,
                "--out", model2) == 0
    assert model.read_bytes() == model2.read_bytes()

    _run("fit-reg", "--data", data, "--model", model2, "--kind", "ridge")
    r1, r2 = tmp_path / "r1.txt", tmp_path / "r2.txt"
    _run("eval", "--model", model2, "--data", data, "--split", "test", "--out", r1)
    _run("eval", "--model", model2, "--data", data, "--split", "test", "--out", r2)
    assert r1.read_bytes() == r2.read_bytes()


def test_eval_uses_split_stored_at_fit_time(planted, tmp_path):
    data, _, model = planted
    _run("fit-reg", "--data", data, "--model", model, "--kind", "ridge",
         "--holdout-frac", "0.3", "--split-seed", 9)
    stored = load_model(model).config
    assert stored["holdout_frac"] == "0.3"
    assert stored["split_seed"] == "9"
    report = tmp_path / "r.txt"
    assert _run("eval", "--model", model, "--data", data, "--out", report) == 0
    assert "rows evaluated: 9 " in report.read_text()  # 30 * 0.3


def test_missing_file_is_a_one_line_error(tmp_path, capsys):
    assert _run("train-ae", "--data", tmp_path / "absent.txt", "--dims", "2",
                "--out", tmp_path / "m.xlc") == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ")
    assert len(err.rstrip("\n").splitlines()) == 1


def test_missing_required_option(capsys, tmp_path):
    assert _run("gen-synth", "--blocks", 2, "--rows", 4,
                "--labels-per-block", 2) == 1
    assert "--out" in capsys.readouterr().err


def test_unknown_flag_exits_nonzero():
    with pytest.raises(SystemExit) as exc:
        _run("gen-synth", "--bogus", 1)
    assert exc.value.code == 2


def test_fit_reg_requires_encoder_section(tmp_path, capsys):
    data = tmp_path / "d.txt"
    _run("gen-synth", "--blocks", 2, "--rows", 6, "--labels-per-block", 2,
         "--noise", 0.0, "--seed", 0, "--out", data)
    bare = tmp_path / "bare.xlc"
    _run("nmf", "--data", data, "--k", 2, "--out", bare)
    assert _run("fit-reg", "--data", data, "--model", bare) == 1
    assert "no 'encoder' section" in capsys.readouterr().err


def test_mlp_kind_flag_round_trips(planted, tmp_path):
    data, _, model = planted
    assert _run("fit-reg", "--data", data, "--model", model, "--kind", "mlp",
                "--hidden", 8, "--epochs", 40, "--seed", 3) == 0
    stored = load_model(model)
    assert stored.regressor.kind == "mlp-1hidden"
    assert stored.config["reg_hidden"] == "8"
