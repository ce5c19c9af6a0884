import json
import subprocess
import sys

import numpy as np
import pytest

from lzmelody import cli
from lzmelody.corpus import TokenCorpus, read_corpus, write_corpus
from lzmelody.metrics import EmbeddingSet, evaluate, frechet_distance, write_embeddings
from lzmelody.midi import parse_smf
from lzmelody.oracle import sample_source
from lzmelody.spa import deserialize_model, serialize_model, LzTree
from lzmelody.tokens import encode_tokens, is_valid_sequence


@pytest.fixture(scope="module")
def files(tmp_path_factory, melody):
    d = tmp_path_factory.mktemp("cli")
    data = sample_source(melody, 400, seed=5)
    (d / "train.lztk").write_bytes(write_corpus(data.head(300)))
    (d / "ref.lztk").write_bytes(write_corpus(TokenCorpus(90, 256, data.tokens[300:])))
    assert cli.main(["train", "--corpus", str(d / "train.lztk"), "--out", str(d / "model.lzsp")]) == 0
    return d


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_train_round_trips_and_reports(tmp_path, capsys):
    toy = TokenCorpus.from_sequences([[0, 0, 1, 2], [2, 2, 2, 2], [3, 0, 3, 0]], 4, seq_len=4)
    (tmp_path / "toy.lztk").write_bytes(write_corpus(toy))
    assert run("train", "--corpus", tmp_path / "toy.lztk", "--out", tmp_path / "m.lzsp") == 0
    stats = json.loads(capsys.readouterr().out)
    tree = deserialize_model((tmp_path / "m.lzsp").read_bytes())
    expected = LzTree(4)
    expected.train(toy.tokens)
    assert tree == expected
    assert stats["node_count"] == tree.node_count
    assert stats["serialized_bytes"] == (tmp_path / "m.lzsp").stat().st_size
    assert "wall_time_s" in stats


def test_train_limit(files, tmp_path, capsys):
    assert run("train", "--corpus", files / "train.lztk", "--out", tmp_path / "m.lzsp", "--limit", 100) == 0
    tree = deserialize_model((tmp_path / "m.lzsp").read_bytes())
    assert tree.total_symbols_trained == 100 * 256


def test_generate_reproducible_with_midi(files, tmp_path):
    args = ["generate", "--model", files / "model.lzsp", "--num", 4, "--seed", 3, "--midi", "--text"]
    assert run(*args, "--out-dir", tmp_path / "a") == 0
    assert run(*args, "--out-dir", tmp_path / "b") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["generated.lztk", "generated.txt"] + [f"sample_{i:05d}.mid" for i in range(4)]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    gen = read_corpus((tmp_path / "a" / "generated.lztk").read_bytes())
    assert len(gen) == 4 and all(is_valid_sequence(s) for s in gen)
    for i, seq in enumerate(gen):
        doc = parse_smf((tmp_path / "a" / f"sample_{i:05d}.mid").read_bytes())
        assert encode_tokens(doc).tolist() == seq.tolist()


def test_generate_zero(files, tmp_path):
    assert run("generate", "--model", files / "model.lzsp", "--num", 0, "--out-dir", tmp_path / "z") == 0
    assert len(read_corpus((tmp_path / "z" / "generated.lztk").read_bytes())) == 0


def test_generate_bad_params(files, tmp_path):
    assert run("generate", "--model", files / "model.lzsp", "--num", 1, "--top-k", 0,
               "--out-dir", tmp_path / "x") == cli.EXIT_USAGE
    assert not (tmp_path / "x").exists()


def test_generate_empty_model_cannot_seed(tmp_path):
    (tmp_path / "empty.lzsp").write_bytes(serialize_model(LzTree(90)))
    assert run("generate", "--model", tmp_path / "empty.lzsp", "--num", 2,
               "--out-dir", tmp_path / "o") == cli.EXIT_GENERATION
    assert not (tmp_path / "o").exists()


def test_eval_self_and_direct_match(files, tmp_path, capsys, rng):
    ref = files / "ref.lztk"
    assert run("eval", "--gen", ref, "--ref", ref, "--out", tmp_path / "self.json") == 0
    rep = json.loads((tmp_path / "self.json").read_text())
    assert "fad" not in rep
    assert (rep["c_pitch"], rep["var_pitch"], rep["c_duration"], rep["var_duration"], rep["wd"]) == (1, 1, 1, 1, 0)
    assert rep["kl"] == pytest.approx(0, abs=1e-12)
    assert "c_pitch" in capsys.readouterr().out

    train = files / "train.lztk"
    ea, eb = EmbeddingSet(rng.normal(size=(30, 3))), EmbeddingSet(rng.normal(size=(25, 3)))
    (tmp_path / "a.csv").write_text(write_embeddings(ea))
    (tmp_path / "b.csv").write_text(write_embeddings(eb))
    assert run("eval", "--gen", train, "--ref", ref, "--emb-gen", tmp_path / "a.csv",
               "--emb-ref", tmp_path / "b.csv", "--out", tmp_path / "r.json") == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    direct = evaluate(read_corpus(train.read_bytes()).tokens, read_corpus(ref.read_bytes()).tokens)
    assert rep["wd"] == direct.wd and rep["kl"] == direct.kl and rep["c_pitch"] == direct.c_pitch
    assert rep["fad"] == pytest.approx(frechet_distance(eb, ea), abs=1e-9)


def test_eval_half_embeddings_is_usage_error(files, tmp_path):
    ref = files / "ref.lztk"
    assert run("eval", "--gen", ref, "--ref", ref, "--emb-gen", ref, "--out", tmp_path / "r.json") == cli.EXIT_USAGE


def test_format_and_io_errors(files, tmp_path):
    (tmp_path / "junk").write_bytes(b"XXXX\x01\x00")
    assert run("inspect", "--model", tmp_path / "junk") == cli.EXIT_FORMAT
    assert run("train", "--corpus", tmp_path / "junk", "--out", tmp_path / "m") == cli.EXIT_FORMAT
    assert run("inspect", "--model", tmp_path / "missing") == cli.EXIT_IO
    assert not (tmp_path / "m").exists()


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["generate"])
    assert exc.value.code == 2


def test_inspect_empty_model(tmp_path, capsys):
    (tmp_path / "e.lzsp").write_bytes(serialize_model(LzTree(90)))
    assert run("inspect", "--model", tmp_path / "e.lzsp") == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["node_count"] == 1 and stats["alphabet_size"] == 90


def test_sweep_covers_default_space(files, tmp_path, capsys):
    out = tmp_path / "sweep.jsonl"
    args = ["sweep", "--model", files / "model.lzsp", "--ref", files / "ref.lztk", "--trials", 80,
            "--samples", 2, "--len", 64, "--min-context", 8, "--seed", 2, "--out", out]
    assert run(*args) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len({(r["gamma"], r["top_k"], r["temperature"]) for r in rows}) == 80
    best = json.loads((tmp_path / "sweep.best.json").read_text())
    assert best["best"]["trial"] == rows[0]["trial"]
    first = [(r["trial"], r["objective"]) for r in rows]
    assert run(*args) == 0
    assert [(json.loads(l)["trial"], json.loads(l)["objective"]) for l in out.read_text().splitlines()] == first


def test_convergence_csv(tmp_path, capsys):
    out = tmp_path / "conv.csv"
    assert run("convergence", "--source", "iid:0.7,0.3;n=4", "--m-list", "10,100", "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "m,kl_nats,wall_time_s"
    assert [l.split(",")[0] for l in lines[1:]] == ["10", "100"]
    assert run("convergence", "--source", "nonsense", "--out", out) == cli.EXIT_USAGE


def test_console_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "lzmelody.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "convergence" in res.stdout
