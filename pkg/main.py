import argparse
import logging
import sys

from dotenv import load_dotenv

# Import modules
from modules import __version__
from modules.config_manager import ConfigManager
from modules.exceptions import SynsaccError
from modules.experiment_manager import ExperimentManager
from modules.utils import setup_logging

logger = logging.getLogger("main")


def build_parser():
    """Build the command-line parser"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker thread cap")

    dataset = argparse.ArgumentParser(add_help=False)
    dataset.add_argument("--dataset", help="dataset directory holding manifest.json")

    parser = argparse.ArgumentParser(prog="synsacc",
                                     description="Synthetic event-camera saccade detection with spiking networks")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", parents=[common], help="generate a labeled event dataset")

    simulate = sub.add_parser("simulate", parents=[common], help="convert PGM frames to an EVB1 file")
    simulate.add_argument("--frames", required=True, help="directory of frame_%%06d.pgm files")
    simulate.add_argument("--fps", type=float, help="frame rate of the input frames")
    simulate.add_argument("--output", help="EVB1 path (default OUT/events.evb1)")

    train = sub.add_parser("train", parents=[common, dataset], help="train a model")
    train.add_argument("--arch", choices=["dense", "conv"])
    train.add_argument("--epochs", type=int)

    evaluate = sub.add_parser("eval", parents=[common, dataset], help="evaluate a checkpoint")
    evaluate.add_argument("--checkpoint", required=True)

    finetune = sub.add_parser("finetune", parents=[common, dataset], help="finetune a pretrained checkpoint")
    finetune.add_argument("--checkpoint")
    finetune.add_argument("--fraction", type=float, action="append",
                          help="fraction of the train split; repeat for several")
    finetune.add_argument("--epochs", type=int)

    sweep = sub.add_parser("sweep", parents=[common, dataset], help="train across window lengths")
    sweep.add_argument("--ts", type=float, nargs="+", help="window lengths in ms")
    sweep.add_argument("--epochs", type=int)

    ops = sub.add_parser("ops", parents=[common, dataset], help="SNN vs ANN operation counts")
    ops.add_argument("--checkpoint")
    ops.add_argument("--arch", choices=["dense", "conv"])
    ops.add_argument("--height", type=int)
    ops.add_argument("--width", type=int)
    ops.add_argument("--events", type=float, nargs="+",
                     help="mean events per timestep entering each accounted layer")

    benchmark = sub.add_parser("benchmark", parents=[common, dataset], help="compare architectures")
    benchmark.add_argument("--arch", nargs="+", choices=["dense", "conv"], dest="archs")
    benchmark.add_argument("--epochs", type=int)

    return parser


def resolve_config(args):
    """Defaults, then the config file, then flags"""
    config = ConfigManager(args.config)
    config.override(seed=args.seed, out=args.out, threads=args.threads,
                    dataset=getattr(args, "dataset", None))
    config.override(**{
        "train.epochs": getattr(args, "epochs", None),
        "render.fps": getattr(args, "fps", None),
    })
    if args.command == "train":
        config.override(**{"model.arch": args.arch})
    return config


def run(args):
    """Dispatch one subcommand"""
    config = resolve_config(args)
    experiments = ExperimentManager(config)

    if args.command == "gen":
        manifest = experiments.gen()
        counts = manifest.class_counts
        print(f"fixation: {counts['fixation']}  saccade: {counts['saccade']}  "
              f"(train {len(manifest.splits['train'])}, test {len(manifest.splits['test'])})")
    elif args.command == "simulate":
        path, stream = experiments.simulate(args.frames, args.output)
        on, off = stream.polarity_counts()
        print(f"{path}: {len(stream)} events ({on} ON / {off} OFF)")
    elif args.command == "train":
        _, history, result = experiments.train()
        print(f"trained {len(history)} epochs; test accuracy {result.metrics['accuracy']:.4f}")
    elif args.command == "eval":
        result = experiments.evaluate(args.checkpoint)
        print(f"accuracy {result.metrics['accuracy']:.4f}  f1 {result.metrics['f1']:.4f}")
    elif args.command == "finetune":
        print(experiments.finetune(args.checkpoint, args.fraction).to_string(index=False))
    elif args.command == "sweep":
        print(experiments.sweep(args.ts).to_string(index=False))
    elif args.command == "ops":
        report = experiments.ops(args.checkpoint, args.arch, args.height, args.width, args.events)
        print(report.to_markdown())
    elif args.command == "benchmark":
        print(experiments.benchmark(args.archs).to_string(index=False))
    return 0


def main(argv=None):
    # Load environment variables
    load_dotenv()

    # Set up logging
    setup_logging()

    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except SynsaccError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logger.critical(f"Critical error: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
