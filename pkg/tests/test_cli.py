from __future__ import annotations

import json
from pathlib import Path

import pytest

from herman import cli
from herman.text import CorpusRecord, iter_jsonl, write_corpus

THREE_RECORDS = [
    CorpusRecord.from_text("r1", "The school raised £4,000 in 2019 and £2,500 in 2018.",
                 "The school raised £4,000 in 2019."),
    CorpusRecord.from_text("r2", "Around 45% of voters backed the plan on Tuesday, up from 38% in May 2015.",
                 "Around 45% of voters backed the plan."),
    CorpusRecord.from_text("r3", "Nine runners finished the 26 mile race and 14 others dropped out.",
                 "Nine runners finished the race."),
]


def run(capsys, *argv: str) -> tuple[int, dict | None, dict | None]:
    code = cli.main([str(a) for a in argv])
    cap = capsys.readouterr()
    out = json.loads(cap.out) if cap.out.strip() else None
    err = json.loads(cap.err) if cap.err.strip() else None
    return code, out, err


@pytest.fixture
def corpus(tmp_path) -> Path:
    path = tmp_path / "corpus.jsonl"
    write_corpus(path, THREE_RECORDS)
    return path


class TestSettings:
    def test_flags_override_config_file(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("# sweep point\nalpha = 0.33\nhidden=12\n")
        args = cli.build_parser().parse_args(["train", "--config", str(conf), "--hidden", "20"])
        s = cli.effective_settings("train", args)
        assert s["alpha"] == 0.33 and s["hidden"] == 20 and s["embed"] == 100

    @pytest.mark.parametrize("alpha", ["0.33", "0.5", "0.66"])
    def test_alpha_sweep_by_config(self, tmp_path, alpha):
        conf = tmp_path / f"a{alpha}.conf"
        conf.write_text(f"alpha={alpha}\n")
        args = cli.build_parser().parse_args(["train", "--config", str(conf)])
        assert cli.herman_config(cli.effective_settings("train", args)).alpha == float(alpha)

    def test_unknown_config_key(self, tmp_path, capsys):
        conf = tmp_path / "bad.conf"
        conf.write_text("alfa=0.5\n")
        code, _, err = run(capsys, "train", "--config", conf)
        assert code == 2 and err["error"] == "config" and "alfa" in err["message"]

    def test_hash_ignores_output_location(self):
        a = {"seed": 1, "out": "x.jsonl", "policy": "all"}
        b = {"seed": 1, "out": "y/z.jsonl", "policy": "all"}
        assert cli.settings_hash(a) == cli.settings_hash(b)
        assert cli.settings_hash(a) != cli.settings_hash({**a, "seed": 2})


class TestErrors:
    def test_alpha_out_of_range_is_config_error(self, tmp_path, capsys):
        code, out, err = run(capsys, "train", "--alpha", "1.5", "--train", tmp_path / "missing.jsonl",
                             "--val", tmp_path / "missing.jsonl", "--checkpoint", tmp_path / "m.hrmn")
        # rejected before the (missing) data files are even opened
        assert code == cli.EXIT_CONFIG and out is None
        assert err["error"] == "config" and "alpha" in err["message"]
        assert not (tmp_path / "m.hrmn").exists()

    def test_unknown_flag(self, capsys):
        code, _, err = run(capsys, "gen-data", "--no-such-flag", "1")
        assert code == 2 and err["error"] == "config"

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(capsys, "tag-quantities", "--input", tmp_path / "nope.jsonl", "--out", tmp_path / "o")
        assert code == cli.EXIT_DATA and "not found" in err["message"]

    def test_malformed_line_reports_line_number(self, tmp_path, capsys):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"id": "a", "article": "x 1", "summary": "x"}\n{"id": "b", "article": \n')
        code, _, err = run(capsys, "tag-quantities", "--input", path, "--out", tmp_path / "o.jsonl")
        assert code == cli.EXIT_DATA and err["error"] == "data" and ":2" in err["message"]

    def test_error_is_single_line(self, tmp_path, capsys):
        cli.main(["verify", "--checkpoint", str(tmp_path / "none.hrmn"), "--article", "a", "--summary", "b"])
        assert len(capsys.readouterr().err.strip().splitlines()) == 1

    def test_bad_checkpoint(self, tmp_path, capsys):
        bad = tmp_path / "bad.hrmn"
        bad.write_bytes(b"garbage")
        code, _, err = run(capsys, "verify", "--checkpoint", bad, "--article", "a 1", "--summary", "a 1")
        assert code == cli.EXIT_DATA and "checkpoint" in err["message"]


class TestGenData:
    def test_byte_identical_reruns(self, corpus, tmp_path, capsys):
        outs = []
        for run_dir in ("a", "b"):
            out = tmp_path / run_dir / "data.jsonl"
            out.parent.mkdir()
            code, summary, _ = run(capsys, "gen-data", "--corpus", corpus, "--seed", "7", "--out", out)
            assert code == 0 and summary["instances"] == 6
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_header_and_config_dump(self, corpus, tmp_path, capsys):
        out = tmp_path / "data.jsonl"
        run(capsys, "gen-data", "--corpus", corpus, "--seed", "7", "--out", out)
        header = json.loads(out.read_text().splitlines()[0])["_header"]
        assert header["seed"] == 7 and header["tool"] == "herman" and header["command"] == "gen-data"
        dumped = json.loads(Path(str(out) + ".config.json").read_text())
        assert dumped["config"]["seed"] == 7 and dumped["_header"] == header

    def test_split_directory(self, corpus, tmp_path, capsys):
        code, summary, _ = run(capsys, "gen-data", "--corpus", corpus, "--seed", "7",
                               "--out-dir", tmp_path / "splits", "--split", "0.34,0.33,0.33")
        assert code == 0
        sizes = [len(list(iter_jsonl(tmp_path / "splits" / f"{n}.jsonl"))) for n in ("train", "val", "test")]
        assert sum(sizes) == 6 and all(s % 2 == 0 for s in sizes)

    def test_bad_split(self, corpus, tmp_path, capsys):
        code, _, _ = run(capsys, "gen-data", "--corpus", corpus, "--out", tmp_path / "d", "--split", "0.5,0.6,0")
        assert code == 2


class TestTagQuantities:
    def test_output_rows(self, corpus, tmp_path, capsys):
        out = tmp_path / "spans.jsonl"
        code, _, _ = run(capsys, "tag-quantities", "--input", corpus, "--out", out)
        assert code == 0
        rows = [obj for _, obj in iter_jsonl(out)]
        assert [r["id"] for r in rows] == ["r1", "r2", "r3"]
        money = rows[0]["summary_spans"][0]
        assert money["type"] == "MONEY" and money["normalized"] == "£4000"


class TestEndToEnd:
    def test_pipeline(self, tmp_path, capsys):
        data = tmp_path / "data"
        code, _, _ = run(capsys, "gen-data", "--seed", "0", "--out-dir", data)
        assert code == 0
        conf = tmp_path / "small.conf"
        conf.write_text("hidden=8\nembed=8\nbatch_size=16\nlr=0.01\nmax_epochs=1\n")
        ckpt = tmp_path / "model.hrmn"
        code, summary, _ = run(capsys, "train", "--config", conf, "--train", data / "train.jsonl",
                               "--val", data / "val.jsonl", "--checkpoint", ckpt)
        assert code == 0 and summary["epochs"] == 1
        log = [obj for _, obj in iter_jsonl(Path(str(ckpt) + ".log.jsonl"))]
        assert log[0]["epoch"] == 1 and log[0]["seed"] == 0

        beams = tmp_path / "beams.jsonl"
        lines = Path(cli.bundled("toy_beams.jsonl")).read_text().splitlines()[:11]
        beams.write_text("\n".join(lines) + "\n")
        ranked = tmp_path / "ranked.jsonl"
        code, summary, _ = run(capsys, "rerank", "--beams", beams, "--checkpoint", ckpt,
                               "--scorer", "local", "--out", ranked)
        assert code == 0 and summary["beams"] == 10

        report = tmp_path / "report.json"
        code, _, _ = run(capsys, "evaluate", "--pred", ranked, "--ref", beams, "--report", report,
                         "--data", data / "test.jsonl", "--checkpoint", ckpt)
        assert code == 0
        rep = json.loads(report.read_text())
        assert rep["count"] == 10 and set(rep["rouge"]["reranked"]) == {"R1", "R2", "RL"}
        assert rep["tagging"]["labels"]["O"]["f1"] == 100.0

        code, row, _ = run(capsys, "verify", "--checkpoint", ckpt, "--article", "They paid £40 on Monday.",
                           "--summary", "They paid £90.")
        assert code == 0 and row["tags"][2] in ("B-V", "B-U") and row["tags"][0] == "O"
