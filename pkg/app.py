# app.py
"""
SRG + GCN object-goal navigation pipeline.

    python app.py generate    --workspace ws --config configs/tiny.yaml --scenes 8 --eval-scenes 2 --seed 0
    python app.py trajectories --workspace ws
    python app.py build-srg   --workspace ws --prune-threshold 0.5
    python app.py train       --workspace ws --lr 0.0003 --epochs 200 --embed-dim 128 --seed 0
    python app.py evaluate    --workspace ws --policy srg_gcn random greedy --episodes-per-scene 50
    python app.py trace       --workspace ws --episode eval_000:3 --policy srg_gcn
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

import audit_log
from config_loader import SceneConfigLoader
from errors import (
    ConfigError,
    HashMismatchError,
    MalformedFileError,
    MissingDependencyError,
    SceneFormatError,
    SrgNavError,
)
from eval_metrics import compare_policies, format_report_csv, format_report_table, records_frame
from gcn_embed import TrainConfig, load_checkpoint, loss_history_csv, save_checkpoint, train
from graph_core import build_srg, export_dot, extract_scene_graph, load_srg, prune_srg, save_srg
from manifest_db import ManifestDatabase
from navigator import POLICY_ALIASES, SRG_GCN, EpisodeConfig
from scene_world import generate_scene_set, load_scene, save_scene
from trace_renderer import TraceRenderer
from trajectories import generate_corpus, load_corpus, save_corpus, summarize_corpus
from utils import write_text

logger = logging.getLogger("app")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_CONFIG = 2
EXIT_MISSING_DEPENDENCY = 3
EXIT_HASH_MISMATCH = 4
EXIT_MALFORMED = 5


def _load_scenes(manifest: ManifestDatabase, key: str):
    space = manifest.space()
    return [load_scene(p, space) for p in manifest.artifact(key)]


def _eval_scenes(manifest: ManifestDatabase):
    if manifest.load()["artifacts"].get("scenes_eval"):
        return _load_scenes(manifest, "scenes_eval")
    logger.warning("No held-out scenes in this workspace; evaluating on the training scenes")
    return _load_scenes(manifest, "scenes_train")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    loader = SceneConfigLoader(args.config)
    config = loader.parse()
    seed = config.seed if args.seed is None else args.seed
    space = config.space
    manifest = ManifestDatabase(args.workspace)
    manifest.create(space, loader.raw)

    artifacts = {}
    for key, prefix, count, set_seed in (
        ("scenes_train", "train", args.scenes, seed),
        ("scenes_eval", "eval", args.eval_scenes, seed + 1),
    ):
        paths = []
        for scene in generate_scene_set(config, count, set_seed, prefix=prefix) if count else []:
            path = save_scene(manifest.workspace / "scenes" / prefix / f"{scene.id}.json", scene, space)
            paths.append(manifest.relative(path))
        if paths:
            artifacts[key] = paths
    manifest.update(
        artifacts=artifacts,
        seeds={"generate": seed},
        statistics={"train_scenes": args.scenes, "eval_scenes": args.eval_scenes},
    )
    audit_log.log_stage(args.workspace, "generate", f"{args.scenes} train / {args.eval_scenes} eval scenes, seed {seed}")
    print(f"Generated {args.scenes} training and {args.eval_scenes} held-out scenes in {manifest.workspace}")
    return EXIT_OK


def cmd_trajectories(args) -> int:
    manifest = ManifestDatabase(args.workspace)
    space = manifest.space()
    scenes = _load_scenes(manifest, "scenes_train")
    corpus = generate_corpus(scenes, space)
    path = save_corpus(manifest.workspace / "trajectories.jsonl", corpus, space)
    summary = summarize_corpus(corpus, space, len(scenes))
    manifest.update(
        artifacts={"trajectories": manifest.relative(path)},
        statistics={"trajectories": summary.count, "trajectories_per_target": summary.per_target},
    )
    audit_log.log_stage(args.workspace, "trajectories", f"{summary.count} trajectories")
    print(f"{summary.count} valid trajectories from {summary.scenes} scenes")
    return EXIT_OK


def cmd_build_srg(args) -> int:
    manifest = ManifestDatabase(args.workspace)
    space = manifest.space()
    scenes = _load_scenes(manifest, "scenes_train")
    srg = build_srg([extract_scene_graph(s) for s in scenes], space)
    pruned = prune_srg(srg, args.prune_threshold)
    ws = manifest.workspace
    save_srg(ws / "srg.json", srg)
    save_srg(ws / "srg_pruned.json", pruned)
    write_text(ws / "srg.dot", export_dot(srg))
    manifest.update(
        artifacts={"srg": "srg.json", "srg_pruned": "srg_pruned.json", "srg_dot": "srg.dot"},
        statistics={
            "srg_nodes": srg.graph.number_of_nodes(),
            "srg_edges": srg.num_edges,
            "srg_pruned_edges": pruned.num_edges,
            "prune_threshold": args.prune_threshold,
        },
    )
    audit_log.log_stage(args.workspace, "build-srg", f"{srg.num_edges} edges, {pruned.num_edges} after pruning")
    print(f"SRG: {srg.graph.number_of_nodes()} nodes, {srg.num_edges} edges ({pruned.num_edges} > {args.prune_threshold})")
    return EXIT_OK


def cmd_train(args) -> int:
    manifest = ManifestDatabase(args.workspace)
    space = manifest.space()
    pruned = load_srg(manifest.artifact("srg_pruned"), space)
    corpus = load_corpus(manifest.artifact("trajectories"), space)
    config = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        embed_dim=args.embed_dim,
        hidden1=args.hidden,
        hidden2=args.hidden,
        seed=args.seed,
        similarity=args.similarity,
        activation=args.activation,
        patience=args.patience,
    )
    result = train(pruned, corpus, space, config)
    ws = manifest.workspace
    save_checkpoint(ws / "checkpoint.json", result, config, space)
    write_text(ws / "loss_history.csv", loss_history_csv(result.loss_history))
    write_text(ws / "embeddings.csv", result.table.to_csv())
    manifest.update(
        artifacts={"checkpoint": "checkpoint.json", "loss_history": "loss_history.csv", "embeddings": "embeddings.csv"},
        seeds={"train": args.seed},
        statistics={"epochs_run": result.epochs_run},
    )
    final = result.loss_history[-1] if result.loss_history else float("nan")
    audit_log.log_stage(args.workspace, "train", f"{result.epochs_run} epochs, final loss {final:.6g}")
    print(f"Trained {result.epochs_run} epochs; final loss {final:.6g}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    manifest = ManifestDatabase(args.workspace)
    space = manifest.space()
    policies = [POLICY_ALIASES.get(p, p) for p in args.policy]
    srg = table = None
    if SRG_GCN in policies:
        # dependencies are resolved before any episode runs
        checkpoint = manifest.artifact("checkpoint")
        srg = load_srg(manifest.artifact("srg"), space)
        _, table, _ = load_checkpoint(checkpoint, space)
    scenes = _eval_scenes(manifest)
    config = EpisodeConfig(
        max_steps=args.max_steps,
        k=args.k,
        history_weight=args.history_weight,
        step_translation_m=scenes[0].cell_size,
    )
    comparison = compare_policies(scenes, policies, args.episodes_per_scene, args.seed, config,
                                  srg=srg, table=table, workers=args.workers)

    ws = manifest.workspace
    write_text(ws / "reports" / "metrics.txt", format_report_table(comparison.reports))
    write_text(ws / "reports" / "metrics.csv", format_report_csv(comparison.reports))
    artifacts = {"report_table": "reports/metrics.txt", "report_csv": "reports/metrics.csv"}
    for kind, records in comparison.records.items():
        lines = [json.dumps(r.to_dict(space), sort_keys=True, ensure_ascii=False) for r in records]
        write_text(ws / "reports" / f"episodes_{kind}.jsonl", "\n".join(lines) + "\n")
        artifacts[f"episodes_{kind}"] = f"reports/episodes_{kind}.jsonl"
        audit_log.save_episode_results(args.workspace, records_frame(records, space), kind, comparison.spec_hash)
    manifest.update(
        artifacts=artifacts,
        seeds={"evaluate": args.seed},
        statistics={"episode_spec_hash": comparison.spec_hash, "episodes_per_scene": args.episodes_per_scene},
    )
    audit_log.log_stage(args.workspace, "evaluate", f"policies {', '.join(policies)}; spec hash {comparison.spec_hash[:16]}")
    print(format_report_table(comparison.reports), end="")
    return EXIT_OK


def cmd_trace(args) -> int:
    manifest = ManifestDatabase(args.workspace)
    space = manifest.space()
    policy = POLICY_ALIASES.get(args.policy, args.policy)
    log_path = manifest.artifact(f"episodes_{policy}")
    try:
        scene_id, index = args.episode.rsplit(":", 1)
        index = int(index)
    except ValueError:
        raise ConfigError(f"--episode must look like <scene_id>:<index>, got {args.episode!r}") from None

    record = None
    for line in log_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            candidate = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedFileError(f"{log_path}: {e}") from e
        if candidate.get("scene_id") == scene_id and candidate.get("episode") == index:
            record = candidate
            break
    if record is None:
        raise ConfigError(f"episode {args.episode} not found in {log_path.name}")

    text = TraceRenderer(list(space.region_categories)).render(record)
    write_text(manifest.workspace / "traces" / f"{scene_id}_{index}_{policy}.txt", text)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srgnav", description=__doc__.splitlines()[1])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--workspace", default="workspace", help="workspace directory holding manifest.json")
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "generate training and held-out scenes")
    p.add_argument("--config", required=True, help="scene generation YAML")
    p.add_argument("--scenes", type=int, default=30)
    p.add_argument("--eval-scenes", type=int, default=0)
    p.add_argument("--seed", type=int, default=None, help="defaults to the seed in the config file")

    add("trajectories", cmd_trajectories, "build the valid-trajectory corpus")

    p = add("build-srg", cmd_build_srg, "build, prune and export the SRG")
    p.add_argument("--prune-threshold", type=float, default=0.5)

    p = add("train", cmd_train, "train node embeddings")
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--similarity", choices=["dot", "cosine"], default="dot")
    p.add_argument("--activation", choices=["relu", "tanh"], default="relu")
    p.add_argument("--patience", type=int, default=20, help="0 disables early stopping")

    p = add("evaluate", cmd_evaluate, "run episodes and report Success/SPL/SoftSPL/DTS")
    p.add_argument("--policy", nargs="+", default=[SRG_GCN],
                   choices=["srg_gcn", "random", "greedy", "greedy_unexplored"])
    p.add_argument("--episodes-per-scene", type=int, default=50)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--max-steps", type=int, default=350)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--history-weight", type=float, default=0.0)

    p = add("trace", cmd_trace, "print the decision trace of one logged episode")
    p.add_argument("--episode", required=True, help="<scene_id>:<index>")
    p.add_argument("--policy", default=SRG_GCN)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="[%(levelname)s] %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except MissingDependencyError as e:
        logger.error("missing dependency: %s", e)
        return EXIT_MISSING_DEPENDENCY
    except HashMismatchError as e:
        logger.error("category space mismatch: %s", e)
        return EXIT_HASH_MISMATCH
    except (MalformedFileError, SceneFormatError) as e:
        logger.error("malformed file: %s", e)
        return EXIT_MALFORMED
    except SrgNavError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
