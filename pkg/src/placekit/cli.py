"""Command line interface: ``placekit <command> --help`` for details.

``PLACEKIT_SEED`` sets the default ``--seed`` of every command.
"""
from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from . import errors


def default_seed():
    return int(os.environ.get("PLACEKIT_SEED", "0"))


seed_option = click.option("--seed", type=int, default=default_seed, show_default="$PLACEKIT_SEED or 0")


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip()) if text else None


def _pairs(text):
    out = []
    for item in text.split(","):
        obj, _, scene = item.strip().partition(":")
        if not scene:
            raise click.BadParameter("pairs look like plate:dish_rack,mug:flat_table")
        out.append((obj, scene))
    return out


def _params(items):
    out = {}
    for item in items:
        key, _, value = item.partition("=")
        try:
            out[key] = float(value)
        except ValueError:
            raise click.BadParameter("parameters look like radius=0.08") from None
    return out


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Learn and infer object placements in 3D point-cloud scenes."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("kind", required=False)
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@click.option("-p", "--param", multiple=True, help="Generator parameter, e.g. radius=0.1.")
@click.option("--random-scene", is_flag=True, help="Write a random multi-object scene manifest.")
@seed_option
def gen(kind, out, param, random_scene, seed):
    """Generate a synthetic object or placing-area cloud (.pcd)."""
    from .bench.generators import OBJECT_KINDS, SCENE_KINDS, generate_object, generate_scene
    from .geometry import write_pcd
    from .pipeline import random_scene_manifest

    if random_scene:
        Path(out).write_text(json.dumps(random_scene_manifest(seed), indent=1))
        return
    if kind in OBJECT_KINDS:
        cloud = generate_object(kind, _params(param), seed)
    elif kind in SCENE_KINDS:
        cloud = generate_scene(kind, _params(param), seed)
    else:
        raise click.BadParameter("kind must be one of %s" % ", ".join(OBJECT_KINDS + SCENE_KINDS))
    write_pcd(cloud, out)


@main.command()
@click.option("--pairs", required=True, help="object:scene pairs, comma separated.")
@click.option("--per-pair", type=int, default=500, show_default=True)
@click.option("--variant", "variants", multiple=True, default=("single145",), show_default=True,
              type=click.Choice(["single145", "multi178"]))
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out", required=True, type=click.Path(file_okay=False))
@seed_option
def dataset(pairs, per_pair, variants, vocab_path, out, seed):
    """Sample, label and featurize placements into a dataset directory."""
    from .bench.dataset import build_dataset
    from .fpfh import BowVocabulary

    vocab = BowVocabulary.load(vocab_path) if vocab_path else None
    build_dataset(_pairs(pairs), per_pair, seed, out, tuple(variants), vocab)
    click.echo(Path(out, "counts.json").read_text())


@main.command()
@click.argument("clouds", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", type=click.Path(exists=True, file_okay=False),
              help="Directory of .pcd files to train on.")
@click.option("--kinds", help="Generator kinds to use instead of files ('all' for every kind).")
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@seed_option
def vocab(clouds, corpus, kinds, out, seed):
    """Fit the bag-of-words vocabulary on FPFH signatures."""
    from .bench.generators import OBJECT_KINDS, SCENE_KINDS, generate_object, generate_scene
    from .fpfh import BowVocabulary
    from .geometry import read_pcd

    paths = list(clouds) + (sorted(str(p) for p in Path(corpus).glob("*.pcd")) if corpus else [])
    items = [read_pcd(p) for p in paths]
    if kinds:
        names = OBJECT_KINDS + SCENE_KINDS if kinds == "all" else kinds.split(",")
        for k in names:
            items.append(generate_object(k, seed=seed) if k in OBJECT_KINDS else generate_scene(k, seed=seed))
    if not items:
        raise click.UsageError("give cloud files, --corpus or --kinds")
    v = BowVocabulary(seed=seed).fit(items)
    v.save(out)
    click.echo("vocabulary %s (%d words)" % (v.fingerprint_[:16], v.n_words))


def _training_data(data, features, target, task, vocab_path, seed):
    from .bench.dataset import Dataset, semantic_training_set
    from .bench.generators import OBJECT_KINDS, SCENE_KINDS
    from .fpfh import BowVocabulary
    from .model import semantic_config

    if features == "semantic":
        if not vocab_path:
            raise click.UsageError("--features semantic needs --vocab")
        v = BowVocabulary.load(vocab_path)
        X, y, pairs = semantic_training_set(OBJECT_KINDS, SCENE_KINDS, v, seed)
        return X, y, ["%s__%s" % p for p in pairs], semantic_config(v)
    if not data:
        raise click.UsageError("--data is required for stability features")
    ds = Dataset(data)
    rows = ds.rows if task is None else ds.task_rows(task)
    return ds.features(rows, features), ds.labels(rows, target), [r.task for r in rows], features


_train_options = [
    click.option("--data", type=click.Path(exists=True, file_okay=False)),
    click.option("--features", default="multi178", show_default=True,
                 type=click.Choice(["single145", "multi178", "semantic"])),
    click.option("--target", default="preferred", show_default=True,
                 type=click.Choice(["preferred", "stable"])),
    click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False)),
    click.option("-C", "C", type=float, default=1.0, show_default=True),
    click.option("--balanced", is_flag=True, help="Scale C per class by inverse frequency."),
    click.option("--scale/--no-scale", default=True, show_default=True,
                 help="Standardize features inside the model."),
    click.option("-o", "--out", required=True, type=click.Path(dir_okay=False)),
    seed_option,
]


def _with(options):
    def wrap(f):
        for opt in reversed(options):
            f = opt(f)
        return f
    return wrap


@main.command()
@_with(_train_options)
@click.option("--kind", default="linear", show_default=True, type=click.Choice(["linear", "kernel"]))
@click.option("--task", help="Train on one task of the dataset only.")
def train(data, features, target, vocab_path, C, balanced, scale, out, seed, kind, task):
    """Train a linear or degree-2 polynomial SVM."""
    from .learn import KernelSVM, LinearSVM, save_model

    X, y, _, fc = _training_data(data, features, target, task, vocab_path, seed)
    cls = LinearSVM if kind == "linear" else KernelSVM
    model = cls(C=C, class_weight="balanced" if balanced else None, feature_scaling=scale,
                feature_config=fc, seed=seed).fit(X, y)
    save_model(model, out)
    click.echo("%s model on %d examples -> %s" % (kind, len(y), out))


@main.command("train-multitask")
@_with(_train_options)
@click.option("--lambda-s", type=float, default=0.1, show_default=True)
@click.option("--lambda-b", type=float, default=0.1, show_default=True)
@click.option("--max-iter", type=int, default=500, show_default=True)
def train_multitask(data, features, target, vocab_path, C, balanced, scale, out, seed,
                    lambda_s, lambda_b, max_iter):
    """Train the shared-sparsity multi-task SVM, one task per dataset task."""
    from .learn import SharedSparsitySVM, save_model

    X, y, tasks, fc = _training_data(data, features, target, None, vocab_path, seed)
    model = SharedSparsitySVM(C=C, lambda_s=lambda_s, lambda_b=lambda_b, max_iter=max_iter,
                              class_weight="balanced" if balanced else None, feature_scaling=scale,
                              feature_config=fc, seed=seed).fit(X, y, tasks)
    save_model(model, out)
    click.echo("multitask model, %d tasks, objective %.6g -> %s"
               % (len(model.tasks_), model.objective_, out))


@main.command()
@click.option("--object", "object_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--base", "base_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--placement", default="0,0,0,1,0,0,0", show_default=True,
              help="x,y,z,qw,qx,qy,qz of the object relative to the base frame.")
@click.option("--config", default="single145", show_default=True,
              type=click.Choice(["single145", "multi178", "semantic"]))
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--base-height", type=float, help="Semantic only; default from the base cloud.")
@click.option("-o", "--out", type=click.Path(dir_okay=False), help="Write here instead of stdout.")
def features(object_path, base_path, placement, config, vocab_path, base_height, out):
    """Print one feature vector as comma-separated decimals."""
    from .fpfh import BowVocabulary
    from .geometry import Placement, Rotation, read_pcd
    from .semantic import semantic_vector, support_height
    from .stability import StabilityConfig, stability_vector

    obj, base = read_pcd(object_path), read_pcd(base_path)
    if config == "semantic":
        if not vocab_path:
            raise click.UsageError("semantic features need --vocab")
        h = support_height(base) if base_height is None else base_height
        values = semantic_vector(obj, base, BowVocabulary.load(vocab_path), h).values
    else:
        try:
            v = [float(t) for t in placement.split(",")]
        except ValueError:
            v = []
        if len(v) != 7:
            raise click.BadParameter("placement needs 7 comma-separated numbers")
        values = stability_vector(obj, base, Placement(v[:3], Rotation(v[3:])),
                                  StabilityConfig.named(config)).values
    line = ",".join(repr(float(x)) for x in values)
    if out:
        Path(out).write_text(line + "\n")
    else:
        click.echo(line)


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model-s", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model-p", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", default="exact", show_default=True, type=click.Choice(["exact", "relax"]))
@click.option("--grid", type=float, default=0.1, show_default=True)
@click.option("--configs", help="Indices into the 24 axis-aligned rotations, e.g. 0,4.")
@click.option("--top-k", type=int, default=5, show_default=True)
@click.option("--stacking/--no-stacking", default=True, show_default=True)
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@seed_option
def infer(scene_path, model_s, model_p, vocab_path, mode, grid, configs, top_k, stacking, out, seed):
    """Find the best placing strategy for a scene manifest.

    Exits with status 2 when no feasible strategy exists.
    """
    from .fpfh import BowVocabulary
    from .learn import load_model
    from .model import save_strategy
    from .pipeline import PipelineConfig, infer_scene, load_scene

    scene = load_scene(scene_path)
    config = PipelineConfig(grid=grid, configs=_ints(configs), top_k=top_k, stacking=stacking, seed=seed)
    try:
        strategy, objective, _ = infer_scene(scene, load_model(model_s), load_model(model_p),
                                             BowVocabulary.load(vocab_path), config,
                                             "relax-round" if mode == "relax" else "exact")
    except (errors.Infeasible, errors.NoCandidates) as exc:
        click.echo("infeasible: %s" % exc, err=True)
        sys.exit(2)
    save_strategy(strategy, scene, out)
    click.echo("objective %.6f -> %s" % (objective, out))


@main.command("eval")
@click.option("--data", type=click.Path(exists=True, file_okay=False))
@click.option("--scenario", default="seso", show_default=True, type=click.Choice(["seso", "neno"]))
@click.option("--features", default="single145", show_default=True,
              type=click.Choice(["single145", "multi178"]))
@click.option("--seeds", help="Comma separated split seeds (default: --seed).")
@click.option("--scene", "scene_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--strategy", "strategy_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False), help="Write the report as JSON here.")
@seed_option
def evaluate(data, scenario, features, seeds, scene_path, strategy_path, report, seed):
    """Rank metrics on a dataset, or feasibility and stability of a strategy."""
    if strategy_path:
        from .bench.evaluate import strategy_report
        from .model import load_strategy
        from .pipeline import load_scene

        if not scene_path:
            raise click.UsageError("--strategy needs --scene")
        scene = load_scene(scene_path)
        rep = strategy_report(scene, load_strategy(strategy_path, scene))
        text = json.dumps(rep, indent=1)
        if report:
            Path(report).write_text(text)
        click.echo(text)
        sys.exit(2 if rep["violations"] else 0)
    if not data:
        raise click.UsageError("give --data, or --scene with --strategy")
    from .bench.dataset import Dataset
    from .bench.evaluate import merge_reports, neno, seso

    ds = Dataset(data)
    run = seso if scenario == "seso" else neno
    reports = [run(ds, s, features) for s in (_ints(seeds) or (seed,))]
    rep = merge_reports(reports)
    if report:
        rep.save(report)
        Path(str(report) + ".txt").write_text(rep.table() + "\n")
    click.echo(json.dumps(rep.to_dict()["aggregate"], indent=1, sort_keys=True))
    click.echo(rep.table())


if __name__ == "__main__":
    main()
