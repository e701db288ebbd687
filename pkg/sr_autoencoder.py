#!/usr/bin/env python3
"""Semi-regular mesh autoencoder - CLI entry point."""

from __future__ import annotations

import argparse
import glob
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from checkpoint import load_checkpoint, save_checkpoint
from config import load_config
from errors import (
    FitDivergenceError,
    SRMeshError,
    ShapeMismatchError,
    TrainingDivergedError,
)
from evaluate import embed_sequence, evaluate_classes, reconstruct_sequence, sequence_patches
from mesh_io import load_mesh, load_srm, save_mesh, save_srm
from models import SemiRegularMesh
from patch import write_patch_dataset
from remesh import remesh_mesh, transfer_sequence
from report import generate_report, write_embedding, write_face_errors, write_loss_history
from shapes import SEQUENCES, write_sequence
from trainer import train

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3

MESH_SUFFIXES = (".obj", ".off")


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="sr_autoencoder",
        description="Remesh surfaces to semi-regular meshes and train a patch autoencoder on them",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""\
Examples:
  %(prog)s synth cylinder data/cylinder_obj
  %(prog)s remesh data/cylinder_obj/frame_000.obj data/template.srm
  %(prog)s transfer data/template.srm data/cylinder_obj data/cylinder
  %(prog)s train "data/cylinder/*.srm" -c configs/default.yaml -o model.ckpt
  %(prog)s eval model.ckpt "data/cylinder/*.srm" --split test
  %(prog)s embed model.ckpt "data/cylinder/*.srm" -o embedding.csv
""",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Verbose logging")
    parser.add_argument("--seed", type=int, help="Override every seed in the config")
    parser.add_argument("--no-progress", action="store_true", help="Hide progress bars")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("remesh", help="Simplify, subdivide and fit a mesh")
    p.add_argument("input", help="OBJ/OFF mesh")
    p.add_argument("output", help="Output .srm path")
    p.add_argument("-c", "--config", help="JSON or YAML pipeline config")
    p.add_argument("--force", action="store_true", help="Proceed on non-manifold input")

    p = sub.add_parser("transfer", help="Apply a template remeshing to every frame of a sequence")
    p.add_argument("template", help="Template .srm")
    p.add_argument("frames_dir", help="Directory of OBJ/OFF frames sharing one topology")
    p.add_argument("out_dir", help="Output directory for .srm frames")
    p.add_argument(
        "--template-mesh", help="Irregular mesh the template was fit to (default: first frame)"
    )

    p = sub.add_parser("patches", help="Export the patch dataset of .srm files")
    p.add_argument("srm", nargs="+", help=".srm files or glob patterns")
    p.add_argument("-o", "--out", required=True, help="Output dataset path")
    p.add_argument("-c", "--config", help="JSON or YAML pipeline config")

    p = sub.add_parser("train", help="Train the autoencoder")
    p.add_argument("srm", nargs="+", help=".srm files or glob patterns; classes are parent directories")
    p.add_argument("-c", "--config", help="JSON or YAML pipeline config")
    p.add_argument("-o", "--out", required=True, help="Output checkpoint path")

    p = sub.add_parser("reconstruct", help="Reconstruct frames and write error maps")
    p.add_argument("checkpoint")
    p.add_argument("srm", nargs="+")
    p.add_argument("-o", "--out", required=True, help="Output directory")
    p.add_argument("-c", "--config", help="JSON or YAML pipeline config")

    p = sub.add_parser("embed", help="Concatenated patch latents and their PCA projection")
    p.add_argument("checkpoint")
    p.add_argument("srm", nargs="+")
    p.add_argument("-o", "--out", required=True, help="Output CSV path")
    p.add_argument("-c", "--config", help="JSON or YAML pipeline config")

    p = sub.add_parser("eval", help="Per-class reconstruction MSE table")
    p.add_argument("checkpoint")
    p.add_argument("srm", nargs="+")
    p.add_argument("-c", "--config", help="JSON or YAML pipeline config")
    p.add_argument(
        "--split",
        choices=["all", "test"],
        default="all",
        help="Evaluate all frames or only the frames after the training fraction",
    )
    p.add_argument("--report", help="Also write the table to this file")

    p = sub.add_parser("synth", help="Write a synthetic deforming sequence as OBJ frames")
    p.add_argument("shape", choices=sorted(SEQUENCES))
    p.add_argument("out_dir")
    p.add_argument("--frames", type=int, default=48)
    p.add_argument("--period", type=int, default=16)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    commands = {
        "remesh": cmd_remesh,
        "transfer": cmd_transfer,
        "patches": cmd_patches,
        "train": cmd_train,
        "reconstruct": cmd_reconstruct,
        "embed": cmd_embed,
        "eval": cmd_eval,
        "synth": cmd_synth,
    }
    try:
        commands[args.command](args)
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FitDivergenceError, TrainingDivergedError) as e:
        print(f"Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SRMeshError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


# ---------------------------------------------------------------------------
# helpers


def expand_paths(patterns: list[str]) -> list[Path]:
    paths: list[Path] = []
    for pattern in patterns:
        if any(ch in pattern for ch in "*?["):
            matches = sorted(glob.glob(pattern))
            if not matches:
                raise FileNotFoundError(f"No files match {pattern}")
            paths.extend(Path(m) for m in matches)
        else:
            paths.append(Path(pattern))
    return paths


def load_classes(patterns: list[str]) -> dict[str, list[SemiRegularMesh]]:
    """Group .srm files by parent directory; frames sorted by file name."""
    groups: dict[str, list[Path]] = defaultdict(list)
    for path in expand_paths(patterns):
        groups[path.parent.name or "."].append(path)
    print(f"Loading {sum(len(v) for v in groups.values())} semi-regular meshes...")
    classes = {}
    levels = set()
    for name in sorted(groups):
        frames = [load_srm(p) for p in sorted(groups[name], key=lambda p: p.name)]
        levels.update(sr.level for sr in frames)
        classes[name] = frames
        print(f"  {name}: {len(frames)} frames, {frames[0].base.n_faces} patches, {frames[0].n_vertices} vertices")
    if len(levels) > 1:
        raise ShapeMismatchError(f"inputs mix subdivision levels {sorted(levels)}")
    return classes


def split_frames(frames: list, fraction: float) -> tuple[list, list]:
    """First ``fraction`` of the frames train, the rest test."""
    n_train = max(1, int(len(frames) * fraction))
    return frames[:n_train], frames[n_train:]


def _progress(args) -> bool:
    return not args.no_progress


# ---------------------------------------------------------------------------
# commands


def cmd_remesh(args) -> None:
    cfg = load_config(args.config, seed=args.seed)
    print(f"Loading mesh: {args.input}")
    mesh = load_mesh(args.input)
    print(f"  {mesh.n_vertices} vertices, {mesh.n_faces} faces")

    print(f"Remeshing (target {cfg.target_base_faces} base faces, level {cfg.level})...")
    result = remesh_mesh(mesh, cfg, force=args.force, progress=_progress(args))
    sr = result.mesh
    if not result.reached_target:
        print(f"  Warning: base mesh has {sr.base.n_faces} faces, above the target")
    out = save_srm(sr, args.output)
    print(f"  Saved {out}")
    print("\n--- Remesh Summary ---")
    print(f"Input topology:  {result.input_report}")
    print(f"Base topology:   {result.base_report}")
    print(f"Base faces:      {sr.base.n_faces}")
    print(f"Fine vertices:   {sr.n_vertices}")
    print(f"Chamfer (avg):   {result.chamfer:.6g}")


def cmd_transfer(args) -> None:
    sr = load_srm(args.template)
    frames_dir = Path(args.frames_dir)
    if not frames_dir.is_dir():
        raise FileNotFoundError(f"Frames directory not found: {frames_dir}")
    paths = sorted(p for p in frames_dir.iterdir() if p.suffix.lower() in MESH_SUFFIXES)
    if not paths:
        raise FileNotFoundError(f"No OBJ/OFF frames in {frames_dir}")
    print(f"Loading {len(paths)} frames from {frames_dir}...")
    frames = [load_mesh(p) for p in paths]
    template = load_mesh(args.template_mesh) if args.template_mesh else frames[0]

    out = transfer_sequence(sr, template, frames, names=[p.name for p in paths], progress=_progress(args))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path, frame in zip(paths, out):
        save_srm(frame, out_dir / f"{path.stem}.srm")
    print(f"  Wrote {len(out)} .srm files to {out_dir}")


def cmd_patches(args) -> None:
    cfg = load_config(args.config, seed=args.seed)
    classes = load_classes(args.srm)
    grids = []
    for frames in classes.values():
        grids.extend(sequence_patches(frames, cfg.pad_width).grids())
    out = write_patch_dataset(args.out, grids)
    print(f"  Wrote {len(grids)} patches to {out}")


def cmd_train(args) -> None:
    cfg = load_config(args.config, seed=args.seed)
    classes = load_classes(args.srm)

    print("Building training patches...")
    blocks = []
    for name, frames in classes.items():
        train_frames, _ = split_frames(frames, cfg.train.train_fraction)
        seq = sequence_patches(train_frames, cfg.pad_width)
        blocks.append(seq.patches.reshape(-1, *seq.patches.shape[2:]))
        print(f"  {name}: {len(train_frames)} training frames")
    patches = np.concatenate(blocks)
    print(f"  {len(patches)} patches" + (" (x3 with rotations)" if cfg.train.augment else ""))

    print(f"Training for {cfg.train.epochs} epochs...")
    ckpt, history = train(patches, cfg.train, progress=_progress(args))
    ckpt.metadata["classes"] = sorted(classes)
    out = save_checkpoint(ckpt, args.out)
    loss_csv = write_loss_history(Path(out).with_name(f"{Path(out).stem}_loss.csv"), history)
    print(f"  Checkpoint saved to: {out}")
    print(f"  Loss history saved to: {loss_csv}")
    print(f"\nFinal training loss: {history[-1]:.6g}")


def cmd_reconstruct(args) -> None:
    cfg = load_config(args.config, seed=args.seed)
    model = load_checkpoint(args.checkpoint).model()
    classes = load_classes(args.srm)
    out_dir = Path(args.out)
    for name, frames in classes.items():
        target = out_dir / name
        target.mkdir(parents=True, exist_ok=True)
        recs = reconstruct_sequence(model, frames, cfg.pad_width, progress=_progress(args))
        for k, rec in enumerate(recs):
            stem = f"frame_{k:03d}"
            save_mesh(rec.mesh, target / f"{stem}.obj")
            write_face_errors(target / f"{stem}_errors.csv", rec.face_errors)
        mses = [r.mse for r in recs]
        print(f"  {name}: {len(recs)} frames, MSE mean {np.mean(mses):.6g}, max {np.max(mses):.6g}")
    print(f"  Reconstructions written to {out_dir}")


def cmd_embed(args) -> None:
    cfg = load_config(args.config, seed=args.seed)
    model = load_checkpoint(args.checkpoint).model()
    classes = load_classes(args.srm)
    frames = [sr for seq in classes.values() for sr in seq]
    emb = embed_sequence(model, frames, cfg.pad_width)
    out = write_embedding(args.out, emb)
    ratios = ", ".join(f"{r:.3f}" for r in emb.explained_variance_ratio)
    print(f"  {emb.n_timesteps} frames x {emb.latents.shape[1]} latents, explained variance [{ratios}]")
    print(f"  Embedding saved to: {out}")


def cmd_eval(args) -> None:
    cfg = load_config(args.config, seed=args.seed)
    model = load_checkpoint(args.checkpoint).model()
    classes = load_classes(args.srm)
    if args.split == "test":
        classes = {name: split_frames(frames, cfg.train.train_fraction)[1] for name, frames in classes.items()}
        empty = [name for name, frames in classes.items() if not frames]
        if empty:
            raise ShapeMismatchError(f"no test frames left for {', '.join(empty)}")
    scores = evaluate_classes(model, classes, cfg.pad_width, progress=_progress(args))
    print()
    print(generate_report(scores, checkpoint=str(args.checkpoint), output_path=args.report), end="")


def cmd_synth(args) -> None:
    meshes = SEQUENCES[args.shape](frames=args.frames, period=args.period)
    paths = write_sequence(meshes, args.out_dir)
    print(f"  Wrote {len(paths)} {args.shape} frames ({meshes[0].n_vertices} vertices) to {args.out_dir}")


if __name__ == "__main__":
    sys.exit(main())
