"""Command-line interface: score, serve, passk, gen, train.

Configuration is a JSON document with ``reward``, ``optim``, and ``train``
sections.  Precedence is command-line flags, then the config file, then
built-in defaults; the ``ENTRL_CONFIG`` environment variable names a config
file to use when ``--config`` is absent.  Unknown config keys are errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .evalkit import PassAtKInput, pass_at_k_curve
from .optim import OptimConfig
from .reward import ABLATIONS, RewardConfig
from .scoring import RewardService, score_lines, serve_stdio, summarize
from .toytask import (
    PolicyConfig,
    SyntheticLexicon,
    gen_lexicon,
    init_activation_prior,
    measure_pass_at_k,
    metrics_to_csv,
    save_policy,
    toy_reward_config,
    train,
)

__all__ = ["main", "CliError"]

CONFIG_ENV_VAR = "ENTRL_CONFIG"

_REWARD_KEYS = {"alpha", "tau", "length_unit", "markers"}
_OPTIM_ALIASES = {"G": "group_size", "mini_batch": "mini_batch_size"}
_OPTIM_KEYS = {
    "G",
    "group_size",
    "eps_low",
    "eps_high",
    "learning_rate",
    "mini_batch",
    "mini_batch_size",
    "updates_per_batch",
    "std_floor",
}
_TRAIN_KEYS = {"steps", "max_len", "temperature", "seed", "lexicon", "ablation", "target_pass1_max"}


class CliError(Exception):
    """Fatal command error; message goes to stderr, exit code is 1."""


def _check_keys(section: str, given, allowed) -> None:
    unknown = sorted(set(given) - allowed)
    if unknown:
        raise CliError(f"unknown {section} config key(s): {', '.join(unknown)}")


def load_config(path_flag: str | None) -> dict:
    path = path_flag or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path!r} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise CliError(f"config {path!r} must be a JSON object")
    _check_keys("top-level", doc, {"reward", "optim", "train"})
    for name, keys in (("reward", _REWARD_KEYS), ("optim", _OPTIM_KEYS), ("train", _TRAIN_KEYS)):
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise CliError(f"config section {name!r} must be an object")
        _check_keys(name, section, keys)
    return doc


def reward_config_from(doc: dict, defaults: RewardConfig | None = None) -> RewardConfig:
    base = defaults or RewardConfig()
    section = doc.get("reward", {})
    kwargs = {
        "alpha": base.alpha,
        "tau": base.tau,
        "length_unit": base.length_unit,
        "open_marker": base.open_marker,
        "close_marker": base.close_marker,
    }
    for key in ("alpha", "tau", "length_unit"):
        if key in section:
            kwargs[key] = section[key]
    if "markers" in section:
        markers = section["markers"]
        if not isinstance(markers, dict):
            raise CliError("reward.markers must be an object with open/close")
        _check_keys("reward.markers", markers, {"open", "close"})
        if "open" in markers:
            kwargs["open_marker"] = markers["open"]
        if "close" in markers:
            kwargs["close_marker"] = markers["close"]
    try:
        return RewardConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad reward config: {exc}") from None


def optim_config_from(doc: dict) -> OptimConfig:
    section = doc.get("optim", {})
    kwargs: dict = {}
    for key, value in section.items():
        canon = _OPTIM_ALIASES.get(key, key)
        if canon in kwargs:
            raise CliError(f"optim config sets {canon!r} twice (alias clash on {key!r})")
        kwargs[canon] = value
    try:
        return OptimConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad optim config: {exc}") from None


def _read_lines(path: str) -> list[bytes]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path!r}: {exc}") from None
    lines = raw.split(b"\n")
    if lines and not lines[-1]:
        lines.pop()
    return lines


def cmd_score(args: argparse.Namespace) -> int:
    config = reward_config_from(load_config(args.config))
    lines = _read_lines(args.input)
    if not lines:
        raise CliError(f"input {args.input!r} is empty")
    replies, breakdowns = score_lines(lines, config)
    out = "\n".join(json.dumps(r, ensure_ascii=False) for r in replies) + "\n"
    try:
        Path(args.output).write_text(out, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {args.output!r}: {exc}") from None
    print(json.dumps(summarize(breakdowns).to_dict(), ensure_ascii=False))
    return 0


def _parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep or not host:
        raise CliError(f"--bind expects host:port, got {bind!r}")
    try:
        return host, int(port)
    except ValueError:
        raise CliError(f"bad port in --bind {bind!r}") from None


def cmd_serve(args: argparse.Namespace) -> int:
    config = reward_config_from(load_config(args.config))
    if args.stdio:
        serve_stdio(config, sys.stdin.buffer, sys.stdout.buffer)
        return 0
    host, port = _parse_bind(args.bind)
    try:
        server = RewardService((host, port), config)
    except OSError as exc:
        raise CliError(f"cannot bind {args.bind!r}: {exc}") from None
    bound = server.server_address
    print(json.dumps({"listening": f"{bound[0]}:{bound[1]}"}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_passk(args: argparse.Namespace) -> int:
    try:
        ks = tuple(int(part) for part in args.ks.split(",") if part.strip())
    except ValueError:
        raise CliError(f"--ks must be comma-separated integers, got {args.ks!r}") from None
    if not ks:
        raise CliError("--ks lists no values")

    lines = _read_lines(args.input)
    if not lines:
        raise CliError(f"input {args.input!r} is empty")
    n_seen: int | None = None
    counts: list[int] = []
    for lineno, raw in enumerate(lines, start=1):
        try:
            obj = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CliError(f"line {lineno}: {exc}") from None
        if not isinstance(obj, dict) or "n" not in obj:
            raise CliError(f"line {lineno}: expected an object with n and c")
        c = obj.get("c", obj.get("correct_count"))
        n = obj["n"]
        if not isinstance(n, int) or not isinstance(c, int):
            raise CliError(f"line {lineno}: n and c must be integers")
        if n_seen is None:
            n_seen = n
        elif n != n_seen:
            raise CliError(f"line {lineno}: n={n} but earlier records had n={n_seen}")
        counts.append(c)
    try:
        curve = pass_at_k_curve(PassAtKInput(n=n_seen, counts=tuple(counts), ks=ks))
    except ValueError as exc:
        raise CliError(str(exc)) from None

    rows = ["k,estimate"] + [f"{k},{est}" for k, est in zip(curve.ks, curve.estimates)]
    try:
        Path(args.output).write_text("\n".join(rows) + "\n", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {args.output!r}: {exc}") from None
    print(json.dumps({"ks": list(curve.ks), "estimates": list(curve.estimates)}))
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    try:
        lexicon = gen_lexicon(
            seed=args.seed,
            n_entities=args.entities,
            aliases_per_entity=args.aliases,
            alias_len_range=(args.alias_len_min, args.alias_len_max),
            train_fraction=args.train_frac,
            vocab_size=args.vocab_size,
        )
    except (ValueError, RuntimeError) as exc:
        raise CliError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lexicon.save(out / "lexicon.json")
    for name, ids in (("train_prompts.jsonl", lexicon.train_ids), ("test_prompts.jsonl", lexicon.test_ids)):
        records = []
        for ent_id in ids:
            ent = lexicon.entity(ent_id)
            records.append(
                json.dumps(
                    {
                        "id": ent_id,
                        "prompt": f"<src> {lexicon.token_text(ent.source_token)}",
                        "gold_aliases": [lexicon.alias_text(a) for a in ent.aliases],
                        "ref_lengths": lexicon.ref_lengths(ent_id),
                    },
                    ensure_ascii=False,
                )
            )
        (out / name).write_text("\n".join(records) + "\n", encoding="utf-8")
    print(
        json.dumps(
            {
                "lexicon": str(out / "lexicon.json"),
                "train_entities": len(lexicon.train_ids),
                "test_entities": len(lexicon.test_ids),
            }
        )
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    doc = load_config(args.config)
    reward_cfg = reward_config_from(doc, defaults=toy_reward_config())
    optim_cfg = optim_config_from(doc)
    section = doc.get("train", {})

    steps = args.steps if args.steps is not None else int(section.get("steps", 2000))
    seed = args.seed if args.seed is not None else int(section.get("seed", 0))
    ablation = args.ablation or section.get("ablation", "full")
    if ablation not in ABLATIONS:
        raise CliError(f"unknown ablation {ablation!r}, expected one of {ABLATIONS}")
    max_len = int(section.get("max_len", 24))
    temperature = float(section.get("temperature", 1.0))
    target = float(section.get("target_pass1_max", 0.10))
    lexicon_path = args.lexicon or section.get("lexicon")
    if not lexicon_path:
        raise CliError("no lexicon: pass --lexicon or set train.lexicon in the config")
    try:
        lexicon = SyntheticLexicon.load(lexicon_path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot load lexicon {lexicon_path!r}: {exc}") from None

    policy_cfg = PolicyConfig(temperature=temperature, max_len=max_len)
    try:
        policy = init_activation_prior(lexicon, policy_cfg, target_pass1_max=target, seed=seed)
        result = train(
            lexicon,
            policy,
            reward_cfg,
            optim_cfg,
            steps=steps,
            ablation=ablation,
            seed=seed,
            max_len=max_len,
        )
    except (ValueError, RuntimeError) as exc:
        raise CliError(str(exc)) from None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics_to_csv(result.metrics, out / "metrics.csv")
    save_policy(result.policy, out / "policy.npz")
    curve, _ = measure_pass_at_k(
        result.policy, lexicon.train_ids, n=128, ks=(1,), seed=seed, max_len=max_len,
        config=reward_cfg,
    )
    last = result.metrics[-1]
    print(
        json.dumps(
            {
                "steps": steps,
                "ablation": ablation,
                "final_mean_reward": last.mean_reward,
                "final_mean_trans_length": last.mean_trans_length,
                "final_pass1": curve.estimates[0],
                "metrics": str(out / "metrics.csv"),
                "policy": str(out / "policy.npz"),
            }
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="score a JSONL file of responses")
    p_score.add_argument("--input", required=True)
    p_score.add_argument("--config")
    p_score.add_argument("--output", required=True)
    p_score.set_defaults(func=cmd_score)

    p_serve = sub.add_parser("serve", help="serve scoring over a line-protocol socket")
    p_serve.add_argument("--bind", default="127.0.0.1:8377")
    p_serve.add_argument("--config")
    p_serve.add_argument("--stdio", action="store_true", help="serve over stdin/stdout instead")
    p_serve.set_defaults(func=cmd_serve)

    p_passk = sub.add_parser("passk", help="pass@k curve from per-problem counts")
    p_passk.add_argument("--input", required=True)
    p_passk.add_argument("--ks", required=True, help="comma-separated k values")
    p_passk.add_argument("--output", required=True)
    p_passk.set_defaults(func=cmd_passk)

    p_gen = sub.add_parser("gen", help="generate a synthetic lexicon and prompt files")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--entities", type=int, default=20)
    p_gen.add_argument("--aliases", type=int, default=3)
    p_gen.add_argument("--train-frac", type=float, default=0.75)
    p_gen.add_argument("--vocab-size", type=int, default=48)
    p_gen.add_argument("--alias-len-min", type=int, default=2)
    p_gen.add_argument("--alias-len-max", type=int, default=4)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen)

    p_train = sub.add_parser("train", help="train the toy policy with gated rewards")
    p_train.add_argument("--config")
    p_train.add_argument("--ablation", choices=ABLATIONS)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--steps", type=int)
    p_train.add_argument("--lexicon")
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=cmd_train)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
