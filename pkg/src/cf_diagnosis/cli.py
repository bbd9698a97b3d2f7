#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Command-line surface: `train-target`, `diagnose`, `harden`, `fr` and
`render-pairs`. Every command is a function of the config file and seed;
the only timestamp written goes into the `run_meta.json` sidecar.

Exit codes: 0 success, 2 config or input error, 3 numeric failure,
4 hardening abort.

see copyright/license in README.md
"""

import argparse
import dataclasses
import datetime
import logging
import pathlib
import sys
import typing

from .analysis import AnalysisConfig, CandidateBank, Diagnosis, DiagnosisReport, diagnose
from .config import RunConfig, load_config
from .counterfactual import (
    CounterfactualObjective,
    CounterfactualPair,
    EditSet,
    OptimizationResult,
    load_edits,
    optimize_edits,
    zero_shot_disagreement,
)
from .embedding import EmbeddingSpace
from .errors import ConfigError, DiagnosisError, NumericError
from .hardening import FRResult, HardenConfig, HardeningResult, eval_accuracy, flip_resistance, harden
from .sem import Thesaurus
from .targets import TargetModel, load_model, train_target
from .tensorio import save_pgm
from .toyworld import Dataset, World
from .util import rng_stream, serialize_json

logger: logging.Logger = logging.getLogger(__name__)

PROG: str = "cf-diagnosis"


@dataclasses.dataclass
class Session:
    """
    State shared by one command invocation: the decoded config, the built
    world, and the output directory.
    """

    command: str
    config_path: pathlib.Path
    config: RunConfig
    world: World
    out_dir: pathlib.Path
    debug: bool = False

    @classmethod
    def open(
        cls,
        args: argparse.Namespace,
    ) -> "Session":
        """
        Load the config named by `--config`, apply `--seed` and `--out`.
        """
        config_path: pathlib.Path = pathlib.Path(args.config)
        config: RunConfig = load_config(config_path, seed=args.seed)

        if args.out is not None:
            config = dataclasses.replace(config, output=pathlib.Path(args.out))

        out_dir: pathlib.Path = config.output
        out_dir.mkdir(parents=True, exist_ok=True)

        return cls(args.command, config_path, config, config.build_world(), out_dir, debug=args.debug)

    def model_dir(
        self,
        args: argparse.Namespace,
    ) -> pathlib.Path:
        """
        `--model`, else the checkpoint written by `train-target`.
        """
        return pathlib.Path(args.model) if getattr(args, "model", None) else self.out_dir / "model"

    def load_target(
        self,
        model_dir: pathlib.Path,
    ) -> TargetModel:
        """
        Load a checkpoint and check it fits this world.
        """
        model: TargetModel = load_model(model_dir)

        if tuple(model.image_size) != tuple(self.world.image_size):
            raise ConfigError(
                f"checkpoint {model_dir} expects {model.image_size} images, world renders {self.world.image_size}"
            )

        if model.task != self.world.rule.task:
            raise ConfigError(f"checkpoint {model_dir} is a {model.task} model, world task is {self.world.rule.task}")

        return model

    def space(
        self,
        thesaurus: Thesaurus | None = None,
    ) -> EmbeddingSpace:
        """
        Embedding space for the session's world.
        """
        return self.config.embedding_space(self.world, thesaurus)

    def write_meta(
        self,
        outputs: typing.Sequence[str],
    ) -> None:
        """
        Sidecar metadata: the only file carrying a wall-clock timestamp.
        """
        serialize_json(
            {
                "command": self.command,
                "config": str(self.config_path),
                "seed": self.config.seed,
                "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
                "outputs": list(outputs),
            },
            self.out_dir / "run_meta.json",
        )


######################################################################
# shared helpers


def export_pairs(
    pairs: typing.Sequence[CounterfactualPair],
    out_dir: pathlib.Path,
    *,
    rel_to: pathlib.Path,
) -> list[dict[str, typing.Any]]:
    """
    Write each pair as two PGM images and return report entries that
    reference them by relative path.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: list[dict[str, typing.Any]] = []
    counters: dict[int, int] = {}

    for pair in pairs:
        idx: int = counters.get(pair.backend, 0)
        counters[pair.backend] = idx + 1

        x_path: pathlib.Path = out_dir / f"b{pair.backend}_{idx:03d}_x.pgm"
        x_hat_path: pathlib.Path = out_dir / f"b{pair.backend}_{idx:03d}_xhat.pgm"
        save_pgm(pair.x, x_path)
        save_pgm(pair.x_hat, x_hat_path)

        entries.append(
            {
                **pair.to_dict(),
                "x": x_path.relative_to(rel_to).as_posix(),
                "x_hat": x_hat_path.relative_to(rel_to).as_posix(),
            }
        )

    return entries


def load_edit_dirs(
    edits_dir: pathlib.Path,
) -> list[EditSet]:
    """
    One edit-set checkpoint, or a directory of `backend_<b>/` checkpoints.
    """
    if (edits_dir / "manifest.json").is_file():
        return [load_edits(edits_dir)]

    subdirs: list[pathlib.Path] = sorted(edits_dir.glob("backend_*"))

    if not subdirs:
        raise ConfigError(f"no edit-set checkpoints under {edits_dir}")

    return [load_edits(path) for path in subdirs]


def render_table(
    table: dict[str, typing.Any],
) -> str:
    """
    Aligned plain-text rendering of a comparison table.
    """
    columns: list[str] = ["metric", *table["columns"]]
    cells: list[list[str]] = [columns]

    for row in table["rows"]:
        cells.append([row["metric"], *(f"{row[col]:.2f}" for col in table["columns"])])

    widths: list[int] = [max(len(line[i]) for line in cells) for i in range(len(columns))]
    lines: list[str] = []

    for num, line in enumerate(cells):
        lines.append("  ".join(cell.ljust(widths[0]) if i == 0 else cell.rjust(widths[i]) for i, cell in enumerate(line)))

        if num == 0:
            lines.append("  ".join("-" * width for width in widths))

    return "\n".join(lines) + "\n"


######################################################################
# commands


def cmd_train_target(
    args: argparse.Namespace,
) -> int:
    """
    Train the target model on the biased dataset and write its checkpoint
    plus a metrics document.
    """
    session: Session = Session.open(args)
    config: RunConfig = session.config

    train, val = config.training_data(session.world)

    model: TargetModel = train_target(
        train,
        config.target,
        validation=val,
        keypoints=config.world.rule.keypoints,
        seg_classes=config.world.rule.seg_classes,
        debug=session.debug,
    )

    model.save(session.out_dir / "model")

    serialize_json(
        {
            "task": model.task,
            "train_size": len(train),
            "planted": int(train.planted.sum()),
            "validation_size": len(val),
            **model.metrics,
        },
        session.out_dir / "train_metrics.json",
    )

    session.write_meta(["model", "train_metrics.json"])
    print(f"validation accuracy {model.metrics['val_accuracy']:.4f} -> {session.out_dir / 'model'}")
    return 0


def cmd_diagnose(  # pylint: disable=R0914
    args: argparse.Namespace,
) -> int:
    """
    Optimize edits per backend, analyze them against the candidate bank,
    and write the report with its exported pairs.
    """
    session: Session = Session.open(args)
    config: RunConfig = session.config
    out_dir: pathlib.Path = session.out_dir

    model: TargetModel = session.load_target(session.model_dir(args))
    thesaurus: Thesaurus | None = config.thesaurus()
    space: EmbeddingSpace = session.space(thesaurus)
    bank: CandidateBank = config.candidate_bank(session.world, thesaurus)

    analysis_cfg: AnalysisConfig = config.analysis

    if args.no_uniqueness:
        analysis_cfg = dataclasses.replace(analysis_cfg, uniqueness=False)

    if args.top is not None:
        analysis_cfg = dataclasses.replace(analysis_cfg, top=args.top)

    objective: CounterfactualObjective = CounterfactualObjective(model, session.world, space, config.optimizer)
    log_path: pathlib.Path = out_dir / "optimize.jsonl"

    try:
        result: OptimizationResult = optimize_edits(objective, log_path=log_path, debug=session.debug)
    except NumericError as ex:
        raise NumericError(f"{ex}; optimization log: {log_path}", step=ex.step, breakdown=ex.breakdown) from ex

    for edits in result.edit_sets:
        edits.save(out_dir / "edits" / f"backend_{edits.backend}")

    diagnosis: Diagnosis = diagnose(
        objective,
        result,
        bank,
        analysis_cfg,
        meta={"command": "diagnose", "seed": config.seed, "task": model.task},
        debug=session.debug,
    )

    report: DiagnosisReport = diagnosis.report
    exported: list[CounterfactualPair] = [
        pair for pairs in diagnosis.pairs for pair in pairs[: analysis_cfg.export_pairs]
    ]
    report.pairs = export_pairs(exported, out_dir / "pairs", rel_to=out_dir)
    report.meta["zero_shot_disagreement"] = round(
        zero_shot_disagreement([pair for pairs in diagnosis.pairs for pair in pairs], objective),
        6,
    )

    report.save(out_dir / "report.json")

    rdf: Thesaurus = Thesaurus()
    rdf.add_report(report, run_id=f"seed{config.seed}")
    rdf.save_source(out_dir / "report.ttl")

    session.write_meta(["edits", "optimize.jsonl", "pairs", "report.json", "report.ttl"])

    for score in report.ranking:
        print(f"{score.rank:>3}  {score.phrase:<24}  s_sim {score.s_sim:+.4f}  s_uni {score.s_uni:.4f}")

    return 0


def fr_table(
    base: TargetModel,
    hardened: TargetModel,
    session: Session,
    space: EmbeddingSpace,
) -> dict[str, typing.Any]:
    """
    Accuracy and Flip Resistance of the base and hardened models, on a
    held-out split and fresh attack latents shared by both.
    """
    config: RunConfig = session.config
    hcfg: HardenConfig = config.hardening
    test_set: Dataset = session.world.sample_biased_dataset(
        dataclasses.replace(config.world.dataset, n_per_class=hcfg.val_per_class),
        rng_stream(config.seed, "data", "test"),
    )

    models: dict[str, TargetModel] = {"base": base, "hardened": hardened}
    rows: list[dict[str, typing.Any]] = [
        {"metric": "accuracy", **{name: round(100.0 * eval_accuracy(model, test_set), 4) for name, model in models.items()}}
    ]

    for k_steps in hcfg.fr_steps:
        row: dict[str, typing.Any] = {"metric": f"FR-{k_steps}"}

        for name, model in models.items():
            result: FRResult = flip_resistance(
                model, session.world, space, k_steps, hcfg.fr_images, config.optimizer, hcfg.seed
            )
            row[name] = round(result.fr_percent, 4)

        rows.append(row)

    return {"columns": list(models), "rows": rows}


def cmd_harden(
    args: argparse.Namespace,
) -> int:
    """
    Counterfactual training, then the base-versus-hardened comparison.
    """
    session: Session = Session.open(args)
    config: RunConfig = session.config
    out_dir: pathlib.Path = session.out_dir

    model: TargetModel = session.load_target(session.model_dir(args))
    space: EmbeddingSpace = session.space(config.thesaurus())

    result: HardeningResult = harden(
        model,
        session.world,
        space,
        config.hardening,
        optim=config.optimizer,
        dataset_spec=config.world.dataset,
        train_batch=config.target.batch_size,
        log_path=out_dir / "harden_rounds.jsonl",
        debug=session.debug,
    )

    result.model.save(out_dir / "hardened")

    table: dict[str, typing.Any] = fr_table(model, result.model, session, space)
    table["rounds"] = result.rounds
    serialize_json(table, out_dir / "fr_table.json")

    text: str = render_table(table)
    (out_dir / "fr_table.txt").write_text(text, encoding="utf-8")

    session.write_meta(["hardened", "harden_rounds.jsonl", "fr_table.json", "fr_table.txt"])
    print(text, end="")
    return 0


def cmd_fr(
    args: argparse.Namespace,
) -> int:
    """
    Flip Resistance of one checkpoint at one attack budget.
    """
    session: Session = Session.open(args)
    config: RunConfig = session.config

    model_dir: pathlib.Path = session.model_dir(args)
    model: TargetModel = session.load_target(model_dir)
    k_steps: int = args.steps if args.steps is not None else config.hardening.fr_steps[0]
    n_images: int = args.images if args.images is not None else config.hardening.fr_images

    result: FRResult = flip_resistance(
        model,
        session.world,
        session.space(config.thesaurus()),
        k_steps,
        n_images,
        config.optimizer,
        config.hardening.seed,
    )

    out_name: str = f"fr_{k_steps}.json"
    serialize_json({"model": str(model_dir), **result.to_dict()}, session.out_dir / out_name)
    session.write_meta([out_name])

    print(f"FR-{k_steps}: {result.fr_percent:.4f} ({result.resist_count}/{result.n_images} resisted)")
    return 0


def cmd_render_pairs(
    args: argparse.Namespace,
) -> int:
    """
    Re-render best-edit pairs from saved edit sets.
    """
    session: Session = Session.open(args)
    config: RunConfig = session.config

    model: TargetModel = session.load_target(session.model_dir(args))
    edits_dir: pathlib.Path = pathlib.Path(args.edits) if args.edits else session.out_dir / "edits"
    edit_sets: list[EditSet] = load_edit_dirs(edits_dir)
    count: int = args.count if args.count is not None else max(config.analysis.export_pairs, 1)

    for edits in edit_sets:
        if not 0 <= edits.backend < len(session.world.backends):
            raise ConfigError(f"edit set for backend {edits.backend} does not fit a world of {len(session.world.backends)}")

        if edits.vectors.shape[1] != session.world.attr_count:
            raise ConfigError(f"edit vectors have K={edits.vectors.shape[1]}, world has K={session.world.attr_count}")

    objective: CounterfactualObjective = CounterfactualObjective(
        model, session.world, session.space(config.thesaurus()), config.optimizer
    )

    pairs: list[CounterfactualPair] = [
        pair for edits in edit_sets for pair in objective.make_pairs(edits, count, config.analysis.seed)
    ]

    entries: list[dict[str, typing.Any]] = export_pairs(pairs, session.out_dir / "pairs", rel_to=session.out_dir)
    serialize_json(entries, session.out_dir / "pairs.json")
    session.write_meta(["pairs", "pairs.json"])

    print(f"{len(pairs)} pairs ({sum(pair.flipped for pair in pairs)} flipped) -> {session.out_dir / 'pairs'}")
    return 0


######################################################################
# argument parsing


COMMANDS: dict[str, typing.Callable[[argparse.Namespace], int]] = {
    "train-target": cmd_train_target,
    "diagnose": cmd_diagnose,
    "harden": cmd_harden,
    "fr": cmd_fr,
    "render-pairs": cmd_render_pairs,
}


def build_parser() -> argparse.ArgumentParser:
    """
    Parser with one subcommand per pipeline stage.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=pathlib.Path, required=True, help="run config, .toml or .json")
    common.add_argument("--seed", type=int, default=None, help="global seed (overrides the config)")
    common.add_argument("--out", type=pathlib.Path, default=None, help="output directory (overrides the config)")
    common.add_argument("--debug", action="store_true", help="verbose logging")

    with_model = argparse.ArgumentParser(add_help=False)
    with_model.add_argument("--model", type=pathlib.Path, default=None, help="target checkpoint (default: OUT/model)")

    parser = argparse.ArgumentParser(prog=PROG, description="Unsupervised counterfactual diagnosis of image models")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train-target", parents=[common], help="train the target model on the biased world")

    p_diag = sub.add_parser("diagnose", parents=[common, with_model], help="find and rank model sensitivities")
    p_diag.add_argument("--no-uniqueness", action="store_true", help="rank by similarity alone")
    p_diag.add_argument("--top", type=int, default=None, help="number of attributes to select")

    sub.add_parser("harden", parents=[common, with_model], help="counterfactual training plus FR table")

    p_fr = sub.add_parser("fr", parents=[common, with_model], help="Flip Resistance of a checkpoint")
    p_fr.add_argument("--steps", type=int, default=None, help="attack steps k")
    p_fr.add_argument("--images", type=int, default=None, help="number of attacked images n")

    p_render = sub.add_parser("render-pairs", parents=[common, with_model], help="re-render pairs from saved edits")
    p_render.add_argument("--edits", type=pathlib.Path, default=None, help="edit-set checkpoint(s) (default: OUT/edits)")
    p_render.add_argument("--count", type=int, default=None, help="pairs per edit set")

    return parser


def main(
    argv: typing.Sequence[str] | None = None,
) -> int:
    """
    Entry point; returns the process exit code.
    """
    args: argparse.Namespace = build_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.debug else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        return COMMANDS[args.command](args)
    except DiagnosisError as ex:
        print(f"{PROG} {args.command}: {type(ex).__name__}: {ex}", file=sys.stderr)
        return ex.exit_code
    except OSError as ex:
        print(f"{PROG} {args.command}: {ex}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
