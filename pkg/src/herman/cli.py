"""Command-line entry point: tag-quantities, gen-data, train, verify, rerank, evaluate.

Settings come from built-in defaults, then an optional ``--config`` file of
``key=value`` lines, then command-line flags (flags win).  Every output file
carries a header with the tool version, a hash of the effective settings and
the seed, and the effective settings are written next to the main output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from . import __version__
from .metrics import avg_q, corpus_rouge, pct_diff, tag_report, type_counts
from .model import ConfigError, Herman, HermanConfig, train
from .nn.optim import NumericError
from .quantities import tag_quantities
from .rerank import SCORERS, BeamCandidate, rerank
from .synth import TAG_NAMES, LabeledInstance, build_dataset, split_dataset
from .text import JsonlError, iter_jsonl, read_corpus, tokenize, words, write_jsonl

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
TOOL = "herman"


class DataError(ValueError):
    pass


def bundled(name: str) -> str:
    return str(resources.files("herman") / "data" / name)


# -- settings ----------------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Setting:
    name: str
    kind: Callable[[str], Any]
    default: Any
    help: str
    commands: tuple[str, ...]


_HERMAN_HELP = {
    "hidden": "LSTM hidden size per direction",
    "embed": "word embedding size",
    "vocab": "maximum vocabulary size including padding and unknown",
    "alpha": "weight of the tag loss; the verdict loss gets 1 - alpha",
    "lr": "Adam learning rate",
    "clip_norm": "global gradient-norm clipping threshold",
    "batch_size": "training mini-batch size",
    "max_article": "article truncation length in tokens",
    "max_summary": "summary truncation length in tokens",
    "seed": "random seed",
    "loss_mode": "tag loss: sequence or token-marginal",
    "patience": "epochs without validation improvement tolerated before stopping",
    "max_epochs": "maximum number of training epochs",
    "m_embed": "size of the entity-mask embedding",
    "match_attention": "word-match term in attention scores: lexical, embedding or none",
    "match_gain": "initial weight of the word-match attention term",
    "product_features": "add the elementwise product of summary state and context",
    "z_pool": "pooling for the verdict head: entity or mean",
    "m_input": "feed the entity mask into the summary encoder",
    "m_emission": "feed the entity mask into the tag scores",
}


def _herman_settings() -> list[Setting]:
    out = []
    defaults = HermanConfig()
    for f in fields(HermanConfig):
        value = getattr(defaults, f.name)
        kind = _parse_bool if isinstance(value, bool) else type(value)
        commands = ("train", "gen-data", "tag-quantities", "verify", "rerank", "evaluate") \
            if f.name == "seed" else ("train",)
        out.append(Setting(f.name, kind, value, _HERMAN_HELP[f.name], commands))
    return out


SETTINGS: dict[str, Setting] = {s.name: s for s in _herman_settings() + [
    Setting("input", str, None, "input corpus JSONL (id, article, summary)", ("tag-quantities", "verify")),
    Setting("out", str, None, "output file", ("tag-quantities", "gen-data", "verify", "rerank")),
    Setting("corpus", str, None, "corpus JSONL; defaults to the bundled toy corpus", ("gen-data",)),
    Setting("out_dir", str, None, "output directory for train/val/test splits", ("gen-data",)),
    Setting("policy", str, "all", "perturbation policy: all or one", ("gen-data",)),
    Setting("split", str, "0.8,0.1,0.1", "train,val,test fractions", ("gen-data",)),
    Setting("train", str, None, "training instances JSONL", ("train",)),
    Setting("val", str, None, "validation instances JSONL", ("train",)),
    Setting("checkpoint", str, None, "model checkpoint path", ("train", "verify", "rerank", "evaluate")),
    Setting("log", str, None, "training log JSONL; defaults to <checkpoint>.log.jsonl", ("train",)),
    Setting("embedding_file", str, None, "optional GloVe-format embedding file", ("train",)),
    Setting("article", str, None, "article text for a single verification", ("verify",)),
    Setting("summary", str, None, "summary text for a single verification", ("verify",)),
    Setting("beams", str, None, "beam JSONL (id, article, candidates)", ("rerank",)),
    Setting("scorer", str, "global", f"one of {', '.join(SCORERS)}", ("rerank",)),
    Setting("pred", str, None, "re-ranked JSONL from the rerank command", ("evaluate",)),
    Setting("ref", str, None, "reference JSONL (id, article, summary)", ("evaluate",)),
    Setting("data", str, None, "labelled instances JSONL for the tagging report", ("evaluate",)),
    Setting("report", str, None, "JSON report path", ("evaluate",)),
]}


def read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SETTINGS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def effective_settings(command: str, args: argparse.Namespace) -> dict[str, Any]:
    relevant = {n: s for n, s in SETTINGS.items() if command in s.commands}
    settings = {n: s.default for n, s in relevant.items()}
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            if key in relevant:
                settings[key] = _convert(relevant[key], value)
    for key in relevant:
        if key in vars(args):
            settings[key] = vars(args)[key]
    return settings


def _convert(setting: Setting, value: str) -> Any:
    try:
        return setting.kind(value)
    except ValueError:
        raise ConfigError(f"bad value for {setting.name}: {value!r}") from None


# where results are written does not change them, so these stay out of the hash
OUTPUT_KEYS = frozenset({"out", "out_dir", "log", "report"})


def settings_hash(settings: dict) -> str:
    content = {k: v for k, v in settings.items() if k not in OUTPUT_KEYS}
    blob = json.dumps(content, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def make_header(command: str, settings: dict) -> dict:
    return {"tool": TOOL, "version": __version__, "command": command,
            "config_hash": settings_hash(settings), "seed": settings.get("seed")}


def dump_settings(output: str | Path, command: str, settings: dict) -> None:
    path = Path(str(output) + ".config.json")
    payload = {"_header": make_header(command, settings), "config": settings}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def herman_config(settings: dict) -> HermanConfig:
    return HermanConfig.from_dict({f.name: settings[f.name] for f in fields(HermanConfig)})


def require(settings: dict, *names: str) -> None:
    missing = [n for n in names if not settings.get(n)]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")


def existing(path: str) -> str:
    if not Path(path).is_file():
        raise DataError(f"file not found: {path}")
    return path


# -- data helpers -------------------------------------------------------------------------

def read_instances(path: str) -> list[LabeledInstance]:
    out = []
    for lineno, obj in iter_jsonl(existing(path)):
        try:
            out.append(LabeledInstance.from_json(obj))
        except (KeyError, ValueError, TypeError) as exc:
            raise JsonlError(path, lineno, f"bad instance ({exc})") from None
    if not out:
        raise DataError(f"{path}: no instances")
    return out


def read_beams(path: str) -> list[dict]:
    beams = []
    for lineno, obj in iter_jsonl(existing(path)):
        cands = obj.get("candidates")
        if "id" not in obj or not isinstance(obj.get("article"), str) or not isinstance(cands, list) or not cands:
            raise JsonlError(path, lineno, "beam needs id, article and a non-empty candidates list")
        try:
            parsed = [BeamCandidate(str(c["text"]), int(c.get("beam_rank", i)),
                                    None if c.get("model_score") is None else float(c["model_score"]))
                      for i, c in enumerate(cands)]
        except (KeyError, TypeError, ValueError) as exc:
            raise JsonlError(path, lineno, f"bad candidate ({exc})") from None
        if len({c.beam_rank for c in parsed}) != len(parsed):
            raise JsonlError(path, lineno, "duplicate beam_rank")
        beams.append({"id": str(obj["id"]), "article": obj["article"], "candidates": parsed})
    return beams


def load_model(path: str) -> Herman:
    try:
        return Herman.load(existing(path))
    except (ValueError, KeyError) as exc:
        if isinstance(exc, (ConfigError, DataError)):
            raise
        raise DataError(f"cannot load checkpoint {path}: {exc}") from None


# -- commands -----------------------------------------------------------------------------

def cmd_tag_quantities(s: dict) -> dict:
    require(s, "input", "out")
    records = read_corpus(existing(s["input"]))
    rows = ({"id": r.id,
             "article_spans": [q.to_json() for q in tag_quantities(r.article)],
             "summary_spans": [q.to_json() for q in tag_quantities(r.summary)]} for r in records)
    write_jsonl(s["out"], rows, make_header("tag-quantities", s))
    dump_settings(s["out"], "tag-quantities", s)
    return {"records": len(records), "out": s["out"]}


def _fractions(text: str) -> tuple[float, ...]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"bad split {text!r}") from None
    if len(parts) != 3 or any(p < 0 for p in parts) or abs(sum(parts) - 1.0) > 1e-9:
        raise ConfigError(f"split must be three non-negative fractions summing to 1, got {text!r}")
    return parts


def cmd_gen_data(s: dict) -> dict:
    if not s["out"] and not s["out_dir"]:
        raise ConfigError("gen-data needs --out (one dataset file) and/or --out-dir (train/val/test splits)")
    if s["policy"] not in ("all", "one"):
        raise ConfigError(f"policy must be 'all' or 'one', got {s['policy']!r}")
    fractions = _fractions(s["split"])
    corpus_path = s["corpus"] or bundled("toy_corpus.jsonl")
    records = read_corpus(existing(corpus_path))
    instances = build_dataset(records, s["seed"], s["policy"])
    header = make_header("gen-data", s)
    counts = {}
    if s["out"]:
        write_jsonl(s["out"], (i.to_json() for i in instances), header)
        dump_settings(s["out"], "gen-data", s)
    if s["out_dir"]:
        out_dir = Path(s["out_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, part in zip(("train", "val", "test"), split_dataset(instances, fractions, s["seed"])):
            write_jsonl(out_dir / f"{name}.jsonl", (i.to_json() for i in part), header)
            counts[name] = len(part)
        dump_settings(out_dir / "data", "gen-data", s)
    return {"records": len(records), "instances": len(instances), **counts}


def cmd_train(s: dict) -> dict:
    require(s, "train", "val", "checkpoint")
    cfg = herman_config(s)
    train_set, val_set = read_instances(s["train"]), read_instances(s["val"])
    if s["embedding_file"]:
        existing(s["embedding_file"])
    header = make_header("train", s)
    log_path = Path(s["log"] or s["checkpoint"] + ".log.jsonl")
    rows: list[dict] = []

    def on_epoch(row: dict) -> None:
        rows.append(row)
        write_jsonl(log_path, rows, header)

    result = train(train_set, val_set, cfg, s["embedding_file"], on_epoch=on_epoch)
    result.model.save(s["checkpoint"], header)
    dump_settings(s["checkpoint"], "train", s)
    return {"epochs": len(result.log), "best_epoch": result.best_epoch,
            "best_val_loss": result.log[result.best_epoch - 1]["val_loss"],
            "checkpoint": s["checkpoint"], "log": str(log_path)}


def _verify_row(model: Herman, rid: str, article: str, summary: str) -> dict:
    art, summ = tokenize(article), tokenize(summary)
    if not art or not summ:
        raise DataError(f"record {rid}: empty article or summary")
    out = model.verify(art, summ)
    words_ = [t.text for t in summ][:len(out.tag_sequence)]
    return {"id": rid, "tokens": words_, "tags": [TAG_NAMES[t] for t in out.tag_sequence],
            "z_prob": out.z_prob, "verdict": out.verdict.value, "truncated": out.truncated}


def cmd_verify(s: dict) -> dict:
    require(s, "checkpoint")
    model = load_model(s["checkpoint"])
    if s["article"] is not None or s["summary"] is not None:
        require(s, "article", "summary")
        row = _verify_row(model, "cli", s["article"], s["summary"])
        if s["out"]:
            write_jsonl(s["out"], [row], make_header("verify", s))
            dump_settings(s["out"], "verify", s)
        return row
    require(s, "input", "out")
    rows = []
    for lineno, obj in iter_jsonl(existing(s["input"])):
        if not isinstance(obj.get("article"), str) or not isinstance(obj.get("summary"), str):
            raise JsonlError(s["input"], lineno, "article and summary must be strings")
        rows.append(_verify_row(model, str(obj.get("id", lineno)), obj["article"], obj["summary"]))
    write_jsonl(s["out"], rows, make_header("verify", s))
    dump_settings(s["out"], "verify", s)
    return {"records": len(rows), "out": s["out"]}


def cmd_rerank(s: dict) -> dict:
    require(s, "beams", "out")
    if s["scorer"] not in SCORERS:
        raise ConfigError(f"scorer must be one of {SCORERS}, got {s['scorer']!r}")
    model = None
    if s["scorer"] in ("global", "local"):
        require(s, "checkpoint")
        model = load_model(s["checkpoint"])
    beams = read_beams(s["beams"])
    rows = [rerank(b["candidates"], b["article"], s["scorer"], model, beam_id=b["id"]).to_json()
            for b in beams]
    write_jsonl(s["out"], rows, make_header("rerank", s))
    dump_settings(s["out"], "rerank", s)
    changed = sum(r["selected"] != _top_index(r) for r in rows)
    return {"beams": len(rows), "changed": changed, "out": s["out"]}


def _top_index(row: dict) -> int:
    return min(range(len(row["candidates"])), key=lambda i: row["candidates"][i]["beam_rank"])


def cmd_evaluate(s: dict) -> dict:
    require(s, "pred", "ref", "report")
    refs = {r.id: r for r in read_corpus(existing(s["ref"]))}
    original, reranked, pairs_orig, pairs_new = [], [], [], []
    changed = 0
    for lineno, row in iter_jsonl(existing(s["pred"])):
        rid = str(row.get("id"))
        if rid not in refs:
            raise JsonlError(s["pred"], lineno, f"id {rid!r} not in reference file")
        try:
            cands = row["candidates"]
            top = cands[_top_index(row)]["text"]
            chosen = cands[int(row["selected"])]["text"]
        except (KeyError, IndexError, TypeError, ValueError):
            raise JsonlError(s["pred"], lineno, "expected rerank output with candidates and selected") from None
        ref_words = refs[rid].summary_words
        original.append(words(top))
        reranked.append(words(chosen))
        pairs_orig.append((original[-1], ref_words))
        pairs_new.append((reranked[-1], ref_words))
        changed += top != chosen
    if not original:
        raise DataError(f"{s['pred']}: no predictions")
    before, after = type_counts(original), type_counts(reranked)
    report = {
        "_header": make_header("evaluate", s),
        "count": len(original),
        "changed": changed,
        "rouge": {"original": corpus_rouge(pairs_orig), "reranked": corpus_rouge(pairs_new)},
        "avg_q": {"original": round(avg_q(original), 2), "reranked": round(avg_q(reranked), 2)},
        "type_counts": {t: {"original": before[t], "reranked": after[t],
                            "pct_diff": pct_diff(before[t], after[t])} for t in before},
    }
    if s["data"]:
        require(s, "checkpoint")
        model = load_model(s["checkpoint"])
        instances = read_instances(s["data"])
        outs = model.predict(instances)
        report["tagging"] = tag_report([o.tag_sequence for o in outs], [i.y for i in instances],
                                       [o.verdict for o in outs], [i.z for i in instances]).to_json()
    Path(s["report"]).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    dump_settings(s["report"], "evaluate", s)
    return {"count": len(original), "report": s["report"]}


COMMANDS: dict[str, tuple[Callable[[dict], dict], str]] = {
    "tag-quantities": (cmd_tag_quantities, "tag quantity entities in a corpus"),
    "gen-data": (cmd_gen_data, "build VERIFIED/UNVERIFIED training data and splits"),
    "train": (cmd_train, "train a verification model"),
    "verify": (cmd_verify, "verify summaries against their articles"),
    "rerank": (cmd_rerank, "select a summary from each beam"),
    "evaluate": (cmd_evaluate, "ROUGE, quantity statistics and tagging report"),
}


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as config errors instead of exiting."""

    def error(self, message: str):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=TOOL, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key=value settings file (flags override it)")
        for setting in SETTINGS.values():
            if name not in setting.commands:
                continue
            default = "" if setting.default is None else f" (default: {setting.default})"
            p.add_argument("--" + setting.name.replace("_", "-"), dest=setting.name,
                           type=setting.kind,
                           default=argparse.SUPPRESS, help=setting.help + default,
                           metavar=setting.name.upper())
    return parser


def fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message.replace("\n", " ")}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        return fail("config", str(exc), EXIT_CONFIG)
    handler = COMMANDS[args.command][0]
    try:
        settings = effective_settings(args.command, args)
        if args.command == "train":
            herman_config(settings)
        summary = handler(settings)
    except ConfigError as exc:
        return fail("config", str(exc), EXIT_CONFIG)
    except (NumericError, FloatingPointError) as exc:
        return fail("numeric", str(exc), EXIT_NUMERIC)
    except JsonlError as exc:
        return fail("data", str(exc), EXIT_DATA)
    except (DataError, OSError, ValueError) as exc:
        return fail("data", str(exc), EXIT_DATA)
    print(json.dumps(summary, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
