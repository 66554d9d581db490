# app/main.py
import argparse
import logging
import shutil
import sys
from pathlib import Path
from typing import List, Optional

from app import __version__
from app.config import get_settings
from app.errors import RefractorError, ValidationFailedError
from app.schemas.scene import Task
from app.services import pipeline
from app.services.scene_loader import load_scene

logger = logging.getLogger(__name__)

SCENES_DIR = Path(__file__).parent / "scenes"


def bundled_scenes() -> List[Path]:
    return sorted(SCENES_DIR.glob("*.json"))


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="python -m app",
        description="Refracting profiles as envelopes of Cartesian ovals.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=settings.log_level, help="logging level (default: %(default)s)")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", parents=[common], help="run a scene and write its artifacts")
    run.add_argument("scene", type=Path)
    run.add_argument("--out", type=Path, default=Path(settings.output_dir), help="output directory")
    run.add_argument("--only", type=Task, choices=list(Task), help="run a single task")
    run.add_argument(
        "--seed-figures",
        action="store_true",
        help="also write and run the bundled figure scenes into <out>/figures",
    )

    validate = commands.add_parser(
        "validate", parents=[common], help="run a scene and print its summary, writing nothing"
    )
    validate.add_argument("scene", type=Path)
    return parser


def seed_figures(out_dir: Path) -> None:
    """Copy the bundled scenes to <out>/figures and run each into its own directory.

    A failed check in one scene does not stop the others; the first failure is raised at the end.
    """
    figures = out_dir / "figures"
    figures.mkdir(parents=True, exist_ok=True)
    failed: Optional[ValidationFailedError] = None
    for path in bundled_scenes():
        shutil.copyfile(path, figures / path.name)
        try:
            pipeline.run(load_scene(path), figures / path.stem)
        except ValidationFailedError as exc:
            logger.error(f"{path.stem}: {exc.detail}")
            failed = failed or exc
    if failed is not None:
        raise failed


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        scene = load_scene(args.scene)
        if args.command == "validate":
            summary = pipeline.summarize(scene)
            sys.stdout.write(summary.model_dump_json(indent=2) + "\n")
            return 0 if summary.passed else ValidationFailedError.exit_code
        pipeline.run(scene, args.out, args.only)
        if args.seed_figures:
            seed_figures(args.out)
    except RefractorError as exc:
        logger.error(f"{type(exc).__name__}: {exc.detail}")
        return exc.exit_code
    return 0
