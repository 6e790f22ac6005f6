"""Command-line entry point wiring the toolkit together.

Every mutating subcommand writes a run manifest next to its primary output
(`<output>.manifest.json`) recording the command, resolved configuration,
seeds, input digests and output digests.  Outputs are written atomically;
a failing command leaves no partial files behind.

Configuration precedence: command-line flag > REWARDLAB_* environment
variable > config file (--config) > built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from rewardlab import __version__, backend
from rewardlab import configfile as cf
from rewardlab.dataset import (
    SyntheticSpec,
    binarize,
    compute_median_thresholds,
    generate_synthetic,
    load_dataset,
    load_feedback,
    load_labels,
    split_by_prompt,
    write_dataset,
    write_feedback,
    write_labels,
)
from rewardlab.errors import RewardLabError, ValidationError
from rewardlab.evaluation import (
    SweepSpec,
    annotation_cost,
    emit_report,
    run_sweep,
)
from rewardlab.mlp import MlpConfig
from rewardlab.oracles import (
    alignment_scores,
    attribute_agreement_matrix,
    categorize_question,
    load_lexicon,
    read_question_scores,
)
from rewardlab.reward import (
    inspect_aggregator,
    load_model,
    save_model,
    score,
    train_cbm,
    train_coarse,
)
from rewardlab.service import serve_annotation
from rewardlab.sxs import (
    build_annotation_plan,
    default_tasks,
    ingest_sxs,
    load_plan,
    load_sxs_log,
    report_to_json_bytes,
    select_disagreement_pairs,
    write_pairs,
    write_plan,
)
from rewardlab.targets import (
    default_tree,
    evaluate_tree,
    label_dataset_with_tree,
    load_tree,
)
from rewardlab.util import atomic_write_text, dump_json_line, sha256_file, write_jsonl

ENV_PREFIX = "REWARDLAB_"


class RunContext:
    """Collects manifest material while a command runs."""

    def __init__(self, command: str, argv: list[str]):
        self.command = command
        self.argv = list(argv)
        self.started_at = datetime.now(timezone.utc).isoformat()
        self.config: dict[str, object] = {}
        self.seeds: list[int] = []
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []

    def add_input(self, path) -> Path:
        path = Path(path)
        self.inputs[str(path)] = sha256_file(path)
        return path

    def add_output(self, path) -> Path:
        path = Path(path)
        self.outputs.append(path)
        return path

    def add_seed(self, seed: int) -> int:
        self.seeds.append(int(seed))
        return int(seed)

    def write_manifest(self) -> None:
        if not self.outputs:
            return
        manifest = {
            "command": self.command,
            "argv": self.argv,
            "tool_version": __version__,
            "backend": backend.ACTIVE_NAME,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": {str(p): sha256_file(p) for p in self.outputs},
            "started_at": self.started_at,
            "finished_at": datetime.now(timezone.utc).isoformat(),
        }
        path = Path(str(self.outputs[0]) + ".manifest.json")
        atomic_write_text(path, json.dumps(manifest, indent=1) + "\n")


def _env_get(key: str) -> str | None:
    return os.environ.get(ENV_PREFIX + key.upper().replace(".", "_").replace("-", "_"))


def resolve(ctx: RunContext, cfg: dict[str, str], key: str, flag_value, default, cast):
    """flag > environment > config file > default, recorded in the manifest."""
    if flag_value is not None:
        value = cast(flag_value) if isinstance(flag_value, str) else flag_value
    else:
        env = _env_get(key)
        if env is not None:
            value = cast(env)
        elif key in cfg:
            value = cast(cfg[key])
        else:
            value = default
    ctx.config[key] = value if not isinstance(value, (list, tuple)) else list(value)
    return value


def _load_cfg(args) -> dict[str, str]:
    if getattr(args, "config", None):
        return cf.load_config(args.config)
    return {}


def _mlp_config_from(ctx: RunContext, cfg: dict[str, str], args, register_seed=True) -> MlpConfig:
    hidden = resolve(ctx, cfg, "train.hidden_dims", args.hidden, [256, 256],
                     lambda s: cf.parse_int_list(s, "hidden dims"))
    seed = resolve(ctx, cfg, "train.seed", args.seed, 0, int)
    config = MlpConfig(
        input_dim=1,  # resolved from the data at training time
        n_heads=1,
        hidden_dims=list(hidden),
        learning_rate=resolve(ctx, cfg, "train.learning_rate", args.learning_rate, 1e-4, float),
        epochs=resolve(ctx, cfg, "train.epochs", args.epochs, 100, int),
        batch_size=resolve(ctx, cfg, "train.batch_size", args.batch_size, 128, int),
        seed=ctx.add_seed(seed) if register_seed else seed,
        optimizer=resolve(ctx, cfg, "train.optimizer", args.optimizer, "adam", str),
    )
    return config


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, help="training seed")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--learning-rate", type=float, dest="learning_rate")
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--hidden", help="comma-separated hidden layer widths")
    parser.add_argument("--optimizer", choices=["adam", "sgd"])


def _print(line: str) -> None:
    sys.stdout.write(line + "\n")
    sys.stdout.flush()


# ---------------------------------------------------------------------------
# Subcommands


def cmd_ingest(ctx, args):
    dataset = load_dataset(ctx.add_input(args.infile))
    write_dataset(dataset, ctx.add_output(args.out))
    _print(f"ingested {len(dataset.examples)} examples "
           f"({len(dataset.attribute_names)} attributes, dim {dataset.embedding_dim})")
    return 0


def cmd_synth(ctx, args):
    cfg = _load_cfg(args)
    names = resolve(ctx, cfg, "synthetic.names", args.names, None,
                    cf.parse_str_list)
    n_attributes = resolve(ctx, cfg, "synthetic.attributes", args.attributes, 3, int)
    marginals = resolve(ctx, cfg, "synthetic.marginals", args.marginals, None,
                        lambda s: cf.parse_float_list(s, "marginals"))
    if marginals is None:
        marginals = [0.5] * n_attributes
        ctx.config["synthetic.marginals"] = marginals
    spec = SyntheticSpec(
        n_examples=resolve(ctx, cfg, "synthetic.n", args.n, 1000, int),
        embedding_dim=resolve(ctx, cfg, "synthetic.dim", args.dim, 16, int),
        n_attributes=n_attributes,
        attribute_marginals=list(marginals),
        noise_sigma=resolve(ctx, cfg, "synthetic.noise", args.noise, 0.0, float),
        seed=ctx.add_seed(resolve(ctx, cfg, "synthetic.seed", args.seed, 0, int)),
        attribute_names=list(names) if names else None,
        examples_per_prompt=resolve(ctx, cfg, "synthetic.per_prompt", args.per_prompt, 1, int),
    )
    dataset, feedback = generate_synthetic(spec)
    write_dataset(dataset, ctx.add_output(args.out))
    if args.feedback_out:
        write_feedback(feedback, dataset.attribute_names, ctx.add_output(args.feedback_out))
    _print(f"generated {spec.n_examples} synthetic examples -> {args.out}")
    return 0


def cmd_split(ctx, args):
    cfg = _load_cfg(args)
    dataset = load_dataset(ctx.add_input(args.dataset))
    fractions = resolve(ctx, cfg, "split.fractions", args.fractions, [0.5, 0.25, 0.25],
                        lambda s: cf.parse_float_list(s, "split fractions"))
    seed = ctx.add_seed(resolve(ctx, cfg, "split.seed", args.seed, 0, int))
    if len(fractions) != 3:
        raise ValidationError("split fractions must have three entries")
    out = split_by_prompt(dataset, tuple(fractions), seed)
    write_dataset(out, ctx.add_output(args.out))
    counts = {s: 0 for s in ("train", "val", "test")}
    for split in out.split_assignment.values():
        counts[split] += 1
    _print(f"split prompts train/val/test = {counts['train']}/{counts['val']}/{counts['test']}")
    return 0


def cmd_binarize(ctx, args):
    cfg = _load_cfg(args)
    dataset = load_dataset(ctx.add_input(args.dataset))
    coarse_values = None
    if args.labels:
        coarse_values = {k: float(v) for k, v in load_labels(ctx.add_input(args.labels)).items()}
    explicit, explicit_coarse = cf.thresholds_from_config(cfg)
    policy = resolve(ctx, cfg, "threshold.policy", args.policy,
                     "explicit" if explicit else "median", str)
    if policy == "median":
        thresholds, coarse_threshold = compute_median_thresholds(dataset, coarse_values)
    elif policy == "explicit":
        thresholds, coarse_threshold = explicit, explicit_coarse
    else:
        raise ValidationError(f"unknown threshold policy {policy!r}")
    ctx.config["threshold.values"] = {k: thresholds[k] for k in sorted(thresholds)}
    ctx.config["threshold.coarse"] = coarse_threshold
    feedback = binarize(dataset, thresholds, coarse_threshold, coarse_values)
    write_feedback(feedback, dataset.attribute_names, ctx.add_output(args.out),
                   thresholds=thresholds, coarse_threshold=coarse_threshold)
    _print(f"binarized {len(feedback)} examples under the {policy} policy")
    return 0


def cmd_train_coarse(ctx, args):
    cfg = _load_cfg(args)
    dataset = load_dataset(ctx.add_input(args.dataset))
    labels = load_labels(ctx.add_input(args.labels))
    config = _mlp_config_from(ctx, cfg, args)
    model = train_coarse(dataset, labels, config)
    save_model(model, ctx.add_output(args.out))
    _print(f"trained coarse model on {len(dataset.examples_in_split('train'))} examples -> {args.out}")
    return 0


def cmd_train_cbm(ctx, args):
    cfg = _load_cfg(args)
    dataset = load_dataset(ctx.add_input(args.dataset))
    feedback, _ = load_feedback(ctx.add_input(args.feedback))
    coarse = load_labels(ctx.add_input(args.labels)) if args.labels else None
    attributes = cf.parse_str_list(args.attributes) if args.attributes else list(dataset.attribute_names)
    ctx.config["cbm.attributes"] = attributes
    config = _mlp_config_from(ctx, cfg, args)
    model = train_cbm(dataset, feedback, attributes, config, coarse_labels=coarse)
    save_model(model, ctx.add_output(args.out))
    _print(f"trained cbm model over {len(attributes)} attributes -> {args.out}")
    return 0


def cmd_score(ctx, args):
    model = load_model(ctx.add_input(args.model))
    dataset = load_dataset(ctx.add_input(args.dataset))
    rows = []
    for ex in dataset.examples:
        rows.append({"example_id": ex.example_id, "score": float(score(model, ex.model_input()))})
    header = {"format": "rewardlab-scores", "version": 1, "model_kind": model.kind}
    write_jsonl(ctx.add_output(args.out), header, rows)
    _print(f"scored {len(rows)} examples -> {args.out}")
    return 0


def cmd_sweep(ctx, args):
    cfg = _load_cfg(args)
    dataset = load_dataset(ctx.add_input(args.dataset))
    feedback, _ = load_feedback(ctx.add_input(args.feedback))
    labels = load_labels(ctx.add_input(args.labels))
    sizes = resolve(ctx, cfg, "sweep.sizes", args.sizes, None,
                    lambda s: cf.parse_int_list(s, "sweep sizes"))
    if not sizes:
        raise ValidationError("sweep needs --sizes")
    seeds = resolve(ctx, cfg, "sweep.seeds", args.seeds, [0],
                    lambda s: cf.parse_int_list(s, "sweep seeds"))
    for s in seeds:
        ctx.add_seed(s)
    kinds = resolve(ctx, cfg, "sweep.kinds", args.kinds, ["coarse", "cbm"], cf.parse_str_list)
    attribute_sets: dict[str, list[str]] = {}
    for item in args.set or []:
        name, _, attrs = item.partition("=")
        if not attrs:
            raise ValidationError(f"--set expects name=attr1,attr2 (got {item!r})")
        attribute_sets[name.strip()] = cf.parse_str_list(attrs)
    for key, value in cfg.items():
        if key.startswith("sweep.set."):
            attribute_sets.setdefault(key[len("sweep.set."):], cf.parse_str_list(value))
    ctx.config["sweep.sets"] = {k: v for k, v in sorted(attribute_sets.items())}
    cost_model = cf.cost_model_from_config(cf.load_config(ctx.add_input(args.cost_config))) \
        if args.cost_config else cf.cost_model_from_config(cfg)
    spec = SweepSpec(
        train_sizes=list(sizes),
        attribute_sets=attribute_sets,
        seeds=list(seeds),
        model_kinds=list(kinds),
    )
    # Per-cell training seeds derive from the sweep seeds, not the template.
    config = _mlp_config_from(ctx, cfg, args, register_seed=False)
    points, errors = run_sweep(dataset, feedback, labels, spec, cost_model, config,
                               jobs=args.jobs)
    fmt = args.format
    emit_report(points, ctx.add_output(args.out), fmt)
    if errors:
        error_rows = [
            {"model_name": e.model_name, "n_train": e.n_train, "seed": e.seed,
             "message": e.message}
            for e in errors
        ]
        errors_path = ctx.add_output(str(args.out) + ".errors.jsonl")
        atomic_write_text(errors_path, "\n".join(dump_json_line(r) for r in error_rows) + "\n")
        for err in errors:
            sys.stderr.write(
                f"warning: sweep cell failed: {err.model_name} n={err.n_train} "
                f"seed={err.seed}: {err.message}\n"
            )
    _print(f"sweep wrote {len(points)} curve points -> {args.out}"
           + (f" ({len(errors)} failed cells)" if errors else ""))
    return 0


def cmd_cost_report(ctx, args):
    cfg = cf.load_config(ctx.add_input(args.config)) if args.config else {}
    cost_model = cf.cost_model_from_config(cfg)
    attributes = cf.parse_str_list(args.attributes) if args.attributes else []
    total = annotation_cost(cost_model, args.n, attributes=attributes, kind=args.kind)
    doc = {
        "kind": args.kind,
        "n": args.n,
        "attributes": attributes,
        "include_coarse": cost_model.include_coarse_for_cbm,
        "cost": total,
    }
    if args.out:
        atomic_write_text(ctx.add_output(args.out), dump_json_line(doc) + "\n")
    _print(dump_json_line(doc))
    return 0


def cmd_tree_label(ctx, args):
    tree = load_tree(ctx.add_input(args.tree)) if args.tree else default_tree()
    ctx.config["tree"] = args.tree or "<default>"
    feedback, attribute_names = load_feedback(ctx.add_input(args.feedback))
    if args.dataset:
        dataset = load_dataset(ctx.add_input(args.dataset))
        labels = label_dataset_with_tree(dataset, tree, feedback)
    else:
        labels = {k: evaluate_tree(tree, fv) for k, fv in feedback.items()}
    write_labels(labels, ctx.add_output(args.out))
    if args.feedback_out:
        updated = {
            k: dataclasses.replace(fv, coarse_label=labels[k]) for k, fv in feedback.items()
        }
        write_feedback(updated, attribute_names, ctx.add_output(args.feedback_out))
    positive = sum(labels.values())
    _print(f"tree-labeled {len(labels)} examples ({positive} good)")
    return 0


def cmd_select_pairs(ctx, args):
    from rewardlab.sxs import CandidatePool

    dataset = load_dataset(ctx.add_input(args.pool))
    model_a = load_model(ctx.add_input(args.model_a))
    model_b = load_model(ctx.add_input(args.model_b))
    pool = CandidatePool(items=dataset.examples, source_tag=args.pool)
    pairs = select_disagreement_pairs(pool, model_a, model_b, args.k, mode=args.mode)
    write_pairs(pairs, ctx.add_output(args.out))
    message = f"selected {len(pairs)} disagreement pairs -> {args.out}"
    if args.plan_out:
        tasks = cf.parse_str_list(args.tasks) if args.tasks else default_tasks(dataset.attribute_names)
        plan = build_annotation_plan(
            pairs, tasks, raters_per_pair=args.raters,
            seed=ctx.add_seed(args.plan_seed),
        )
        write_plan(plan, ctx.add_output(args.plan_out))
        message += f"; plan with {len(plan.assignments)} assignments -> {args.plan_out}"
    _print(message)
    return 0


def cmd_serve_annotation(ctx, args):
    plan = load_plan(ctx.add_input(args.plan))
    host, _, port = args.bind.rpartition(":")
    server = serve_annotation(
        plan, (host or "127.0.0.1", int(port)), args.log,
        static_dir=args.static_dir,
    )
    ctx.add_output(args.log)
    ctx.write_manifest()  # written at startup; the log grows afterwards
    host, port = server.server_address[:2]
    _print(f"serving annotation plan on http://{host}:{port}/ (log: {args.log})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.store.close()
    return 0


def cmd_sxs_report(ctx, args):
    plan = load_plan(ctx.add_input(args.plan))
    records = load_sxs_log(ctx.add_input(args.log))
    report = ingest_sxs(records, plan)
    payload = report_to_json_bytes(report)
    if args.out:
        out = ctx.add_output(args.out)
        atomic_write_text(out, payload.decode("utf-8"))
        _print(f"report over {len(records)} records -> {args.out}")
    else:
        sys.stdout.write(payload.decode("utf-8"))
    return 0


def cmd_inspect_aggregator(ctx, args):
    model = load_model(ctx.add_input(args.model))
    weights = inspect_aggregator(model)
    doc = {"weights": {name: w for name, w in weights}, "bias": model.stage2.bias}
    for name, w in weights:
        _print(f"{name}\t{w!r}")
    _print(f"bias\t{model.stage2.bias!r}")
    if args.out:
        atomic_write_text(ctx.add_output(args.out), json.dumps(doc, indent=1) + "\n")
    return 0


def cmd_agreement_matrix(ctx, args):
    feedback, attribute_names = load_feedback(ctx.add_input(args.feedback))
    attributes = cf.parse_str_list(args.attributes) if args.attributes else attribute_names
    matrix = attribute_agreement_matrix(feedback, attributes)
    lines = ["attribute," + ",".join(attributes)]
    for name, row in zip(attributes, matrix):
        lines.append(name + "," + ",".join(repr(float(v)) for v in row))
    atomic_write_text(ctx.add_output(args.out), "\n".join(lines) + "\n")
    _print(f"agreement matrix over {len(attributes)} attributes -> {args.out}")
    return 0


def cmd_categorize_questions(ctx, args):
    lexicon = load_lexicon(ctx.add_input(args.lexicon)) if args.lexicon else load_lexicon()
    questions = read_question_scores(ctx.add_input(args.questions))
    rows = []
    per_example: dict[str, list] = {}
    for example_id, question in questions:
        category = categorize_question(question, lexicon)
        rows.append(
            {
                "example_id": example_id,
                "question_text": question.question_text,
                "category": category.value,
            }
        )
        per_example.setdefault(example_id, []).append(question)
    header = {"format": "rewardlab-categories", "version": 1}
    write_jsonl(ctx.add_output(args.out), header, rows)
    if args.scores_out:
        score_rows = []
        for example_id in sorted(per_example):
            scores = alignment_scores(per_example[example_id], lexicon)
            score_rows.append(
                {"example_id": example_id, **{c.value: s for c, s in scores.items()}}
            )
        write_jsonl(ctx.add_output(args.scores_out),
                    {"format": "rewardlab-alignment-scores", "version": 1}, score_rows)
    _print(f"categorized {len(rows)} questions -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rewardlab",
        description="Reward models from coarse and fine-grained feedback.",
    )
    parser.add_argument("--version", action="version", version=f"rewardlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and canonicalize a dataset file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--feedback-out", dest="feedback_out")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--attributes", type=int, help="number of latent attributes")
    p.add_argument("--marginals", help="comma-separated attribute marginals")
    p.add_argument("--noise", type=float)
    p.add_argument("--names", help="comma-separated attribute names")
    p.add_argument("--per-prompt", dest="per_prompt", type=int,
                   help="images per prompt group (default 1)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="assign prompts to train/val/test")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fractions", help="e.g. 0.5,0.25,0.25")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("binarize", help="threshold raw scores into binary feedback")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--policy", choices=["median", "explicit"])
    p.add_argument("--labels", help="labels file supplying coarse values")
    p.set_defaults(func=cmd_binarize)

    p = sub.add_parser("train-coarse", help="train the single-stage coarse model")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_coarse)

    p = sub.add_parser("train-cbm", help="train the two-stage fine-grained model")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--feedback", required=True)
    p.add_argument("--attributes", help="comma-separated attribute subset")
    p.add_argument("--labels", help="coarse labels overriding the feedback file")
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_cbm)

    p = sub.add_parser("score", help="score a dataset with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="learning-curve sweep over sizes/seeds/models")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--feedback", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sizes", help="comma-separated train sizes")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--kinds", help="coarse,cbm")
    p.add_argument("--set", action="append", help="name=attr1,attr2 (repeatable)")
    p.add_argument("--cost-config", dest="cost_config")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--jobs", type=int, default=1)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cost-report", help="annotation cost for a labeling plan")
    p.add_argument("--config", help="cost model config file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--attributes")
    p.add_argument("--kind", choices=["coarse", "cbm"], default="cbm")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost_report)

    p = sub.add_parser("tree-label", help="score feedback with a decision-tree target")
    p.add_argument("--feedback", required=True)
    p.add_argument("--tree", help="tree file (default: built-in tree)")
    p.add_argument("--dataset", help="optional dataset to check coverage against")
    p.add_argument("--out", required=True)
    p.add_argument("--feedback-out", dest="feedback_out",
                   help="also write feedback with the coarse label filled in")
    p.set_defaults(func=cmd_tree_label)

    p = sub.add_parser("select-pairs", help="maximal-disagreement pairs from two models")
    p.add_argument("--pool", required=True, help="dataset file of candidates")
    p.add_argument("--model-a", dest="model_a", required=True)
    p.add_argument("--model-b", dest="model_b", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mode", choices=["dual-argmax", "score-diff"], default="dual-argmax")
    p.add_argument("--out", required=True)
    p.add_argument("--plan-out", dest="plan_out", help="also build an annotation plan")
    p.add_argument("--tasks", help="comma-separated task list (default: aggregate + attributes)")
    p.add_argument("--raters", type=int, default=3)
    p.add_argument("--plan-seed", dest="plan_seed", type=int, default=0)
    p.set_defaults(func=cmd_select_pairs)

    p = sub.add_parser("serve-annotation", help="serve the annotation HTTP API")
    p.add_argument("--plan", required=True)
    p.add_argument("--bind", default="127.0.0.1:8437")
    p.add_argument("--log", required=True, help="append-only response log")
    p.add_argument("--static-dir", dest="static_dir", help="UI bundle to serve at /")
    p.set_defaults(func=cmd_serve_annotation)

    p = sub.add_parser("sxs-report", help="aggregate a response log into a report")
    p.add_argument("--plan", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sxs_report)

    p = sub.add_parser("inspect-aggregator", help="named aggregator weights of a cbm model")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_inspect_aggregator)

    p = sub.add_parser("agreement-matrix", help="pairwise attribute agreement")
    p.add_argument("--feedback", required=True)
    p.add_argument("--attributes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_agreement_matrix)

    p = sub.add_parser("categorize-questions", help="rule-based question categories")
    p.add_argument("--questions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scores-out", dest="scores_out",
                   help="also write per-example alignment category means")
    p.add_argument("--lexicon")
    p.set_defaults(func=cmd_categorize_questions)

    return parser


def cmd_dispatch(argv: list[str] | None = None) -> int:
    """Parse and run one command; returns the process exit code."""
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage; 2 on bad flags
        return int(exc.code or 0)
    ctx = RunContext(args.command, argv)
    try:
        code = args.func(ctx, args)
        if args.command != "serve-annotation":
            ctx.write_manifest()
        return code
    except RewardLabError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1


def main() -> None:
    sys.exit(cmd_dispatch())


if __name__ == "__main__":
    main()
