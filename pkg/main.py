"""
Main entry point for the II-DSU driving model
Command-line interface for data generation, training, closed-loop
evaluation, visualization and interpretability analysis
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List

# Make the src package importable when run from any directory
sys.path.insert(0, str(Path(__file__).parent))

from src.analysis.correlation import correlation_report, probe_batch, write_correlation
from src.analysis.weather_probe import format_probe, weather_probe
from src.core.checkpoint import load_checkpoint
from src.data.dataset import model_inputs, read_frame
from src.model.network import DsuNetwork, load_network, stored_model_config
from src.model.policy import ModelPolicy
from src.optimization.trainer import train_model
from src.simulation.collection import collect_dataset
from src.simulation.expert import ExpertPolicy
from src.simulation.runner import evaluate_routes
from src.simulation.scenario import Scenario, generate_scenario, load_scenario
from src.utils.config import ExperimentConfig, ModelConfig, load_config
from src.utils.errors import ContractError, DataIOError, DsuError
from src.utils.metrics import MetricsCalculator
from src.visualization.renderer import PanelRenderer
import logging

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
logger = logging.getLogger(__name__)


def load_network_from_checkpoint(path: str) -> DsuNetwork:
    """Network whose shape comes from the checkpoint's own metadata"""
    precision, records = load_checkpoint(path)
    config = stored_model_config(records, replace(ModelConfig(), precision=precision))
    network = DsuNetwork(config)
    network.load_records(records, source=str(path))
    return network


def resolve_routes(spec: str, config: ExperimentConfig, seed: int) -> List[Scenario]:
    """
    Routes to evaluate

    Args:
        spec: A scenario JSON file, a directory of them, or a route count
        config: Experiment configuration (difficulty and simulation sections)
        seed: Base seed for generated routes

    Returns:
        Scenarios in evaluation order
    """
    path = Path(spec)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise DataIOError(f"no scenario files in {path}")
        return [load_scenario(f) for f in files]
    if path.is_file():
        return [load_scenario(path)]
    try:
        count = int(spec)
    except ValueError:
        raise DataIOError(f"routes must be a scenario file, a directory or a count: {spec}") from None
    if count < 1:
        raise ContractError(f"route count must be >= 1, got {count}")
    return [generate_scenario(seed + i, config.eval.difficulty, config.sim) for i in range(count)]


def cmd_gen_data(args):
    """Generate an expert dataset"""
    config = load_config(args.config)
    logger.info(f"Generating {args.frames} frames into {args.out} (seed {args.seed})")
    frames = collect_dataset(args.out, args.frames, config, seed=args.seed, difficulty=args.difficulty)

    print("\n" + "=" * 60)
    print("EXPERT DATASET")
    print("=" * 60)
    print(f"Frames: {len(frames)}  Routes: {frames['route'].nunique()}")
    for tag, count in frames["weather"].value_counts().sort_index().items():
        print(f"  {tag:<8} {count}")
    print(f"Written to: {args.out}")


def cmd_train(args):
    """Train the network on a generated dataset"""
    config = load_config(args.config)
    trainer = train_model(config, args.data, args.out, resume=args.resume)
    summary = trainer.summary()

    print("\n" + "=" * 60)
    print("TRAINING SUMMARY")
    print("=" * 60)
    print(f"Steps: {summary['steps']}  Skipped samples: {summary['skipped']}")
    if summary["final_total"] is not None:
        print(f"Final total loss: {summary['final_total']:.5f}  waypoint L1: {summary['final_wp']:.5f}")
        print(f"BEV pixel accuracy: {summary['bev_acc']:.4f}  weather accuracy: {summary['weather_acc']:.2f}")
    print(f"Checkpoint: {summary['checkpoint']}")
    print(f"Loss log: {summary['loss_log']}")


def cmd_eval(args):
    """Closed-loop evaluation over routes"""
    config = load_config(args.config)
    if args.difficulty is not None:
        config.eval = replace(config.eval, difficulty=args.difficulty)
    if args.policy == "model":
        if args.ckpt is None:
            raise ContractError("--ckpt is required for --policy model")
        network, _ = load_network(args.ckpt, config.model)
        factory = lambda: ModelPolicy(network, config)  # noqa: E731
    else:
        factory = lambda: ExpertPolicy(config.sim)  # noqa: E731

    scenarios = resolve_routes(args.routes, config, args.seed)
    logger.info(f"Evaluating {args.policy} policy on {len(scenarios)} routes with {config.eval.workers} workers")
    results = evaluate_routes(scenarios, factory, config, workers=config.eval.workers)
    metrics = MetricsCalculator(config.eval)
    metrics.write_report(results, args.report)

    summary = metrics.aggregate(results)
    print("\n" + "=" * 60)
    print("CLOSED-LOOP EVALUATION")
    print("=" * 60)
    print(metrics.to_frame(results).to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    print(f"\nDS {summary['DS']:.2f}  RC {summary['RC']:.2f}  IS {summary['IS']:.3f}  ({summary['km']:.3f} km)")
    print(f"Report: {args.report}")


def cmd_visualize(args):
    """Render input and prediction panels for one frame"""
    network = load_network_from_checkpoint(args.ckpt)
    frame = read_frame(args.frame)
    config = ExperimentConfig(model=network.config)
    image, lidar = model_inputs(frame.clouds, frame.poses, frame.image, config.model, config.sensor)
    outputs = network.forward(image, lidar, frame.labels.goal)
    written = PanelRenderer(config.sensor).render(frame, outputs, args.out)
    for name, path in written.items():
        print(f"{name:<8} {path}")


def cmd_analyze(args):
    """Head correlation report and weather probe for a checkpoint"""
    base = load_config(args.config)
    network = load_network_from_checkpoint(args.ckpt)
    config = replace(base, model=network.config)
    inputs = probe_batch(config, seed=args.probe_seed, size=args.probe_size)
    report = correlation_report(network, inputs, probe_seed=args.probe_seed)
    table_path, figure_path = write_correlation(report, args.out)

    probe = weather_probe(lambda: ModelPolicy(network, config), config, seed=args.probe_seed)
    probe_path = Path(args.out) / "weather_probe.txt"
    try:
        probe_path.write_text(format_probe(probe))
    except OSError as exc:
        raise DataIOError(f"cannot write {probe_path}: {exc}") from None

    print(report.format_table())
    print(format_probe(probe))
    print(f"Written: {table_path}, {figure_path}, {probe_path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="II-DSU driving model: camera and LiDAR fusion with auxiliary scene heads",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py gen-data --config desk.cfg --out data/train --frames 100 --seed 0
  python main.py train --config desk.cfg --data data/train --out runs/model.ckpt
  python main.py eval --config desk.cfg --ckpt runs/model.ckpt --routes 5 --report runs/eval.tsv
  python main.py visualize --ckpt runs/model.ckpt --frame data/train/frame_000000 --out runs/vis
  python main.py analyze --ckpt runs/model.ckpt --out runs/analysis
        """
    )
    parser.add_argument('--verbose', '-v', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen-data', help='Generate an expert dataset')
    gen.add_argument('--config', type=str, default=None, help='Config file')
    gen.add_argument('--out', type=str, required=True, help='Output dataset directory')
    gen.add_argument('--frames', type=int, required=True, help='Number of frames')
    gen.add_argument('--seed', type=int, default=0, help='Random seed')
    gen.add_argument('--difficulty', type=int, default=None, help='Fixed scenario difficulty (default: mixed)')
    gen.set_defaults(handler=cmd_gen_data)

    train = sub.add_parser('train', help='Train the network')
    train.add_argument('--config', type=str, default=None, help='Config file')
    train.add_argument('--data', type=str, required=True, help='Dataset directory')
    train.add_argument('--out', type=str, required=True, help='Output checkpoint path')
    train.add_argument('--resume', type=str, default=None, help='Checkpoint to resume from')
    train.set_defaults(handler=cmd_train)

    ev = sub.add_parser('eval', help='Closed-loop evaluation')
    ev.add_argument('--config', type=str, default=None, help='Config file')
    ev.add_argument('--ckpt', type=str, default=None, help='Model checkpoint')
    ev.add_argument('--routes', type=str, required=True, help='Scenario file, directory or route count')
    ev.add_argument('--report', type=str, required=True, help='Route report path')
    ev.add_argument('--policy', choices=['model', 'expert'], default='model', help='Policy to drive with')
    ev.add_argument('--seed', type=int, default=0, help='Base seed for generated routes')
    ev.add_argument('--difficulty', type=int, default=None, help='Difficulty of generated routes')
    ev.set_defaults(handler=cmd_eval)

    vis = sub.add_parser('visualize', help='Render prediction panels for one frame')
    vis.add_argument('--ckpt', type=str, required=True, help='Model checkpoint')
    vis.add_argument('--frame', type=str, required=True, help='Frame directory')
    vis.add_argument('--out', type=str, required=True, help='Output directory')
    vis.set_defaults(handler=cmd_visualize)

    an = sub.add_parser('analyze', help='Head correlation report and weather probe')
    an.add_argument('--config', type=str, default=None, help='Config file (sim and sensor sections)')
    an.add_argument('--ckpt', type=str, required=True, help='Model checkpoint')
    an.add_argument('--out', type=str, required=True, help='Output directory')
    an.add_argument('--probe-seed', type=int, default=0, help='Probe batch seed')
    an.add_argument('--probe-size', type=int, default=8, help='Probe batch size')
    an.set_defaults(handler=cmd_analyze)
    return parser


def main(argv=None) -> int:
    """Main entry point; returns the process exit status"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT, force=True)
    try:
        args.handler(args)
    except DsuError as exc:
        logger.error(f"{args.command} failed: {exc}")
        message = " ".join(str(exc).split())
        print(f"error: {exc.category}: {message}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.exception(f"{args.command} failed unexpectedly")
        print(f"error: internal: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
