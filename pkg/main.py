"""
Main CLI - Command Line Interface for the gaitlu toolkit

Runs the pipeline stages from the command line:
synth -> train-lugan -> gen-views -> train-recognizer -> eval, plus plot and
lemma-check.
"""

import argparse
import logging
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

import pandas as pd

from src import config as run_config
from src.camera_geometry import lemma1_residual
from src.dataio import load_dataset, load_manifest, save_dataset
from src.errors import ArtifactError, ConfigurationError, DegenerateDepthError, GaitError, exit_code_for
from src.evalkit import rank1_matrix, report
from src.figures import PLOT_KINDS, plot, sample_label
from src.hypergraph_conv import canonical_adjacencies, dump_adjacency_csv
from src.lugan import generate_pose
from src.recognizer import embed, sharing_parameter_table
from src.skeleton import GaitSample, SkeletonTopology
from src.synth_gait import CameraRig, WalkerParams, make_dataset, synth_walk_3d
from src.trainers import (
    ViewCompleter,
    dump_embeddings,
    load_lugan,
    load_recognizer,
    save_checkpoint,
    train_lugan,
    train_recognizer,
)
from src.utils import create_directory_structure, derive_seed, format_percentage, setup_logging

logger = logging.getLogger(__name__)

DATASET_NAME = "dataset.jsonl"


def _resolve(args, **overrides):
    return run_config.resolve_config(
        preset=args.preset,
        config_path=args.config,
        overrides={"out": args.out, "seed": args.seed, **overrides},
        views_k=args.views_k,
    )


def _stage_dir(cfg, name: str) -> Path:
    directory = create_directory_structure(Path(cfg.out) / name)
    cfg.save(directory)
    return directory


def _rig_for(data_path: Path, cfg) -> CameraRig:
    manifest = load_manifest(data_path)
    if manifest.rig:
        return CameraRig.from_dict(manifest.rig)
    return run_config.build_rig(cfg)


def _sources(records):
    return [r for r in records if not r.generated]


def _completer(mode, view_list, rig, records, lugan_path):
    lugan = None
    if mode == "lugan":
        if lugan_path is None:
            raise ArtifactError("view mode 'lugan' needs --lugan-checkpoint")
        lugan, _ = load_lugan(lugan_path)
    return ViewCompleter(mode, view_list, rig=rig, lugan=lugan, records=records)


def cmd_synth(args) -> None:
    cfg = _resolve(args, synth={"ids": args.ids, "frames": args.frames, "runs": args.runs, "workers": args.workers})
    out_dir = _stage_dir(cfg, "synth")
    rig = run_config.build_rig(cfg)
    synth = cfg.synth
    manifest = make_dataset(
        synth["ids"], synth["conditions"], rig, synth["frames"],
        derive_seed(cfg.seed, "synth"), out_dir / DATASET_NAME,
        runs=synth["runs"], workers=synth["workers"],
    )
    print(f"✓ Dataset written: {manifest.record_count:,} records, {manifest.identity_count} identities, "
          f"{len(manifest.view_list)} views -> {out_dir / DATASET_NAME}")


def cmd_train_lugan(args) -> None:
    cfg = _resolve(args, lugan_training={"epochs": args.epochs})
    out_dir = _stage_dir(cfg, "lugan")
    records = _sources(load_dataset(args.data))
    rig = _rig_for(Path(args.data), cfg)
    generator_cfg = run_config.generator_config(cfg, rig)
    model, log = train_lugan(
        records, rig.yaws, generator_cfg, derive_seed(cfg.seed, "lugan"),
        run_config.lugan_training(cfg),
    )
    digest = save_checkpoint(
        model, out_dir / "lugan.pt", "lugan", generator_cfg.to_dict(), cfg.seed,
        extra={"view_list": list(rig.yaws), "rig": rig.to_dict()},
    )
    log.to_csv(out_dir / "lugan_log.csv", index=False)
    print(f"✓ LUGAN trained for {len(log)} epochs (digest {digest[:12]}) -> {out_dir / 'lugan.pt'}")


def cmd_gen_views(args) -> None:
    cfg = _resolve(args)
    out_dir = _stage_dir(cfg, "gen_views")
    lugan, payload = load_lugan(args.checkpoint)
    records = _sources(load_dataset(args.data))
    if args.rig_from_checkpoint:
        targets = list(payload["extra"].get("view_list", []))
        if not targets:
            raise ArtifactError(f"{args.checkpoint} carries no rig view list")
    else:
        targets = load_manifest(args.data).view_list

    generated = []
    skipped = 0
    for sample in records:
        for view in targets:
            if view == sample.view_degrees:
                continue
            try:
                sequence, _ = generate_pose(sample.sequence, view, lugan.generator)
            except DegenerateDepthError as e:
                skipped += 1
                logger.warning("skipping %s -> %g deg: %s", sample_label(sample), view, e)
                continue
            generated.append(GaitSample(
                sample.identity, view, sample.condition, sequence, sample.run, sample.aligned_group,
                provenance={"generated": True, "source_view": sample.view_degrees, "target_view": view},
            ))
    output = out_dir / DATASET_NAME
    save_dataset(
        records + generated, output, seed=cfg.seed,
        extra={"lugan_checkpoint": str(args.checkpoint), "skipped_degenerate": skipped},
    )
    per_sample = len(generated) / max(1, len(records))
    print(f"✓ Generated {len(generated):,} sequences ({per_sample:.0f} per source) -> {output}")
    if skipped:
        print(f"⚠️  {skipped} view(s) skipped: transformed joints reached zero depth")


def cmd_train_recognizer(args) -> None:
    cfg = _resolve(args, recognizer_training={"epochs": args.epochs})
    out_dir = _stage_dir(cfg, "recognizer")
    records = _sources(load_dataset(args.data))
    rig = _rig_for(Path(args.data), cfg)
    rec_cfg = run_config.recognizer_config(cfg, rig.yaws, view_mode=args.views)
    completer = _completer(rec_cfg.view_mode, rec_cfg.view_list, rig, records, args.lugan_checkpoint)

    model, log = train_recognizer(
        records, rec_cfg, completer, derive_seed(cfg.seed, "recognizer"),
        run_config.recognizer_training(cfg), run_config.eval_protocol(cfg),
    )
    digest = save_checkpoint(
        model, out_dir / "recognizer.pt", "recognizer", rec_cfg.to_dict(), cfg.seed,
        extra={"lugan_checkpoint": str(args.lugan_checkpoint) if args.lugan_checkpoint else None},
    )
    log.to_csv(out_dir / "training_log.csv", index=False)
    print(f"✓ Recognizer trained for {len(log)} epochs, view mode {rec_cfg.view_mode} (digest {digest[:12]})")


def cmd_eval(args) -> None:
    cfg = _resolve(args, protocol={"same_view_policy": args.policy})
    out_dir = _stage_dir(cfg, "eval")
    records = _sources(load_dataset(args.data))
    rig = _rig_for(Path(args.data), cfg)
    model, _ = load_recognizer(args.checkpoint)
    completer = None
    if model.generative_branch is not None:
        completer = _completer(model.config.view_mode, model.config.view_list, rig, records, args.lugan_checkpoint)

    if args.dump_embeddings:
        dump_embeddings(records, model, completer, out_dir / "embeddings.jsonl")
    embeddings = [embed(r, model, completer) for r in records]
    results = rank1_matrix(embeddings, run_config.eval_protocol(cfg))
    paths = report(results, out_dir / "results")
    print(f"✓ Results written to: {paths['csv']}")

    means = results[results["probe_view"] == "mean"]
    print("\n📊 MEAN RANK-1:\n")
    for row in means.itertuples():
        print(f"  • {row.probe_condition} ({row.policy}): {format_percentage(row.accuracy)}%")


def cmd_plot(args) -> None:
    cfg = _resolve(args)
    out_dir = _stage_dir(cfg, "figures")
    log = pd.read_csv(args.log) if args.log else None
    samples = []
    if args.kind == "poses":
        if not args.data:
            raise ConfigurationError("plot poses needs --data")
        records = load_dataset(args.data)
        samples = [r for r in records if args.sample is None or sample_label(r).startswith(args.sample)][:1]
        if not samples:
            raise ConfigurationError(f"no sample matches {args.sample!r}")
    table = None
    if args.kind == "sharing":
        rig = CameraRig.preset(args.rig) if args.rig else run_config.build_rig(cfg)
        table = pd.DataFrame(sharing_parameter_table(run_config.recognizer_config(cfg, rig.yaws)))
        table.to_csv(out_dir / "sharing_parameters.csv", index=False)
    if args.kind == "adjacency":
        topology = SkeletonTopology.coco()
        for adjacency in canonical_adjacencies(topology):
            dump_adjacency_csv(adjacency, out_dir / f"adjacency_order{adjacency.source_order}.csv", topology.joint_names)
    paths = plot(args.kind, out_dir, log=log, samples=samples, table=table)
    print(f"✓ {len(paths)} figure(s) written to: {out_dir}")


def cmd_lemma_check(args) -> None:
    cfg = _resolve(args)
    out_dir = _stage_dir(cfg, "lemma")
    walk = synth_walk_3d(WalkerParams.average(stride_m=0.0), frames=args.frames, seed=cfg.seed)
    frames = []
    for radius in args.radii:
        if args.rig.startswith("cocentered"):
            rig = CameraRig.preset(args.rig)
        else:
            rig = CameraRig.preset(args.rig, radius=radius)
        residuals = lemma1_residual(rig, walk)
        residuals.insert(0, "radius", radius)
        frames.append(residuals)
    table = pd.concat(frames, ignore_index=True)
    table.to_csv(out_dir / "lemma_check.csv", index=False)
    summary = table.groupby("radius")["mean_error_px"].mean()
    print("✓ Mean transformed-joint error per radius:")
    for radius, error in summary.items():
        print(f"  • r={radius:g} m: {error:.4g} px")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="gaitlu - complete-view pose gait recognition toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py synth --preset acceptance --seed 1
  python main.py train-lugan --data runs/synth/dataset.jsonl --preset acceptance
  python main.py train-recognizer --data runs/synth/dataset.jsonl --views oracle
  python main.py eval --data runs/synth/dataset.jsonl --checkpoint runs/recognizer/recognizer.pt
        """
    )
    parser.add_argument('--verbose', action='store_true', help='Print detailed progress information')
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument('--config', type=str, default=None, help='JSON config file')
        p.add_argument('--preset', type=str, default=None, help='casia-like, ou-like, cocentered-k or acceptance')
        p.add_argument('--views-k', type=int, default=None, help='Camera count for the cocentered-k preset')
        p.add_argument('--seed', type=int, default=None, help='Root seed (default 0)')
        p.add_argument('--out', type=str, default=None, help='Output root (default $GAIT_OUTPUT_ROOT or runs/)')
        return p

    p = common(sub.add_parser("synth", help="Generate a synthetic multi-view dataset"))
    p.add_argument('--ids', type=int, default=None)
    p.add_argument('--frames', type=int, default=None)
    p.add_argument('--runs', type=int, default=None)
    p.add_argument('--workers', type=int, default=None)
    p.set_defaults(handler=cmd_synth)

    p = common(sub.add_parser("train-lugan", help="Train the cross-view pose generator"))
    p.add_argument('--data', type=str, required=True)
    p.add_argument('--epochs', type=int, default=None)
    p.set_defaults(handler=cmd_train_lugan)

    p = common(sub.add_parser("gen-views", help="Add generated views to a dataset"))
    p.add_argument('--data', type=str, required=True)
    p.add_argument('--checkpoint', type=str, required=True)
    p.add_argument('--rig-from-checkpoint', action='store_true', help="Generate the checkpoint rig's views")
    p.set_defaults(handler=cmd_gen_views)

    p = common(sub.add_parser("train-recognizer", help="Train the gait recognizer"))
    p.add_argument('--data', type=str, required=True)
    p.add_argument('--views', choices=["lugan", "oracle", "aligned", "none"], default=None)
    p.add_argument('--lugan-checkpoint', type=str, default=None)
    p.add_argument('--epochs', type=int, default=None)
    p.set_defaults(handler=cmd_train_recognizer)

    p = common(sub.add_parser("eval", help="Rank-1 evaluation"))
    p.add_argument('--data', type=str, required=True)
    p.add_argument('--checkpoint', type=str, required=True)
    p.add_argument('--lugan-checkpoint', type=str, default=None)
    p.add_argument('--policy', choices=["include", "exclude", "both"], default=None)
    p.add_argument('--dump-embeddings', action='store_true')
    p.set_defaults(handler=cmd_eval)

    p = common(sub.add_parser("plot", help="Write figure images"))
    p.add_argument('kind', choices=PLOT_KINDS)
    p.add_argument('--log', type=str, default=None, help='Recognizer training log CSV')
    p.add_argument('--data', type=str, default=None)
    p.add_argument('--sample', type=str, default=None, help='Sample label prefix, e.g. id003_v90')
    p.add_argument('--rig', type=str, default=None, help='Rig preset for the sharing curve (default from config)')
    p.set_defaults(handler=cmd_plot)

    p = common(sub.add_parser("lemma-check", help="Single-transform residual versus camera distance"))
    p.add_argument('--rig', type=str, default="acceptance")
    p.add_argument('--radii', type=float, nargs='+', default=[2.0, 5.0, 10.0, 50.0])
    p.add_argument('--frames', type=int, default=100)
    p.set_defaults(handler=cmd_lemma_check)
    return parser


def main(argv=None) -> int:
    """
    Main CLI entry point

    Returns:
        Process exit code
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    try:
        args.handler(args)
    except (GaitError, FileNotFoundError, OSError) as e:
        print(f"❌ Error: {e}")
        if args.verbose:
            import traceback
            traceback.print_exc()
        return exit_code_for(e)
    except Exception as e:
        print(f"❌ Error during {args.command}: {e}")
        if args.verbose:
            import traceback
            traceback.print_exc()
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
