"""
Command-line entry point for the rebar depth and size estimator.

Subcommands:
- simulate:  synthesize a B-scan (suite case, demo scene or custom bars)
- db build:  build the theoretical hyperbola database
- process:   extract hyperbola outlines from a scan
- match:     estimate depth and size for every outline
- evaluate:  run the depth/size case suite end to end
- render:    draw a scan with mask, outlines and matched curves
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from config import RunConfig, reload_config
from core import GprBarError, RadarConfig, RebarPlacement, rebar_size
from evaluate import ConfigMismatch, run_suite, summary_frame
from logger import LOG_LEVELS, get_logger, setup_logger
from match import estimate_all
from pipeline import run_scan
from render import dump_stages, overlay, read_mask_image, save_image, to_gray
from simulate import SceneSpec, build_case_suite, figure_scene, synthesize_bscan
from storage import (
    StorageError,
    read_database,
    read_estimates,
    read_json,
    read_outlines,
    read_placements,
    read_scan,
    write_database,
    write_estimates,
    write_outlines,
    write_report,
    write_scan,
)
from theory import build_database
from utils import parse_id_ranges, parse_lengths

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _bar_argument(text: str) -> tuple:
    """Parse X0_M,DEPTH_M,#N."""
    parts = [p.strip() for p in text.split(',')]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected X0_M,DEPTH_M,#N, got {text!r}")
    try:
        return float(parts[0]), float(parts[1]), rebar_size(parts[2])
    except (ValueError, KeyError) as e:
        raise argparse.ArgumentTypeError(str(e))


def _lengths_argument(text: str) -> List[float]:
    try:
        return parse_lengths(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _sizes_argument(text: str) -> List[str]:
    try:
        return [rebar_size(part).designation for part in text.split(',') if part.strip()]
    except KeyError as e:
        raise argparse.ArgumentTypeError(str(e))


def _ids_argument(text: str) -> List[int]:
    try:
        return parse_id_ranges(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with every subcommand."""
    parser = argparse.ArgumentParser(
        prog='gprbar',
        description="Rebar depth and size estimation from GPR B-scans",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py simulate --figure --out scans/figure
  python main.py db build --depths 6,8,10,12,14cm --out db.json
  python main.py process scans/figure.csv --out outlines.json --dump-stages stages/
  python main.py match outlines.json --db db.json --out estimates.json
  python main.py evaluate --seed 7 --out report.json
  python main.py render scans/figure.csv --outlines outlines.json --out overlay.ppm

Environment Variables:
  GPRBAR_CONFIG      - JSON run configuration file (overridden by --config)
  LOG_LEVEL          - Logging level: DEBUG, INFO, WARNING, ERROR (default: WARNING)
  LOG_PATH           - Optional rotating log file
"""
    )
    parser.add_argument('--log-level', type=str.upper, choices=LOG_LEVELS,
                        help='Logging level (overrides LOG_LEVEL)')
    parser.add_argument('--config', help='JSON run configuration file')
    parser.add_argument('--version', action='version', version='gprbar 1.0.0')

    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', help='Synthesize a B-scan')
    scene = simulate.add_mutually_exclusive_group()
    scene.add_argument('--case', type=int, help='Case id of the depth/size suite (1-45)')
    scene.add_argument('--figure', action='store_true', help='Five #7 bars at 6-14 cm')
    scene.add_argument('--bar', type=_bar_argument, action='append',
                       help='Custom bar X0_M,DEPTH_M,#N (repeatable)')
    scene.add_argument('--scene', metavar='FILE',
                       help='Scene JSON, e.g. the BASE.json of an earlier simulation')
    simulate.add_argument('--noise', type=float, help='Gaussian noise sigma')
    simulate.add_argument('--seed', type=int, help='Random seed')
    simulate.add_argument('--out', required=True, help='Output base path (writes BASE.json + BASE.csv)')

    db = commands.add_parser('db', help='Hyperbola database commands')
    db_commands = db.add_subparsers(dest='db_command', required=True)
    db_build = db_commands.add_parser('build', help='Build the theoretical hyperbola database')
    db_build.add_argument('--depths', type=_lengths_argument, help='Depth list, e.g. 6,8,10,12,14cm')
    db_build.add_argument('--sizes', type=_sizes_argument, help='Designations, e.g. "#3,#4,#5"')
    db_build.add_argument('--out', required=True, help='Output database file')

    process = commands.add_parser('process', help='Extract hyperbola outlines from a scan')
    process.add_argument('scan', help='Scan file (BASE, BASE.csv or BASE.json)')
    process.add_argument('--out', required=True, help='Output outlines file')
    process.add_argument('--dump-stages', metavar='DIR', help='Write one image per stage to DIR')
    process.add_argument('--outline-mode', choices=('peak', 'edge', 'crest'),
                         help='Outline point per column')
    process.add_argument('--seed', type=int, help='RANSAC seed')

    match = commands.add_parser('match', help='Estimate depth and size of every outline')
    match.add_argument('outlines', help='Outlines file written by process')
    match.add_argument('--db', required=True, help='Database file written by db build')
    match.add_argument('--out', required=True, help='Output estimates file')
    match.add_argument('--distance-mode', choices=('euclidean', 'vertical'), help='Outline-to-curve distance')

    evaluate = commands.add_parser('evaluate', help='Run the depth/size case suite')
    evaluate.add_argument('--seed', type=int, help='Base seed (case k uses seed + k)')
    evaluate.add_argument('--noise', type=float, help='Gaussian noise sigma')
    evaluate.add_argument('--cases', type=_ids_argument, help='Case subset, e.g. 1-6,10')
    evaluate.add_argument('--jobs', type=int, help='Worker processes')
    evaluate.add_argument('--out', required=True, help='Output report file')

    render = commands.add_parser('render', help='Render a scan with overlays')
    render.add_argument('scan', help='Scan file (BASE, BASE.csv or BASE.json)')
    render.add_argument('--out', required=True, help='Output image (.pgm or .ppm)')
    render.add_argument('--mask', help='Binary mask image (PGM) drawn in blue')
    render.add_argument('--outlines', help='Outlines file drawn in red')
    render.add_argument('--estimates', help='Estimates file; best-match curves drawn in green')
    render.add_argument('--db', help='Database file (needed with --estimates)')
    render.add_argument('--truth', action='store_true',
                        help='Mark the true bar apexes stored with a simulated scan')

    return parser


def cmd_simulate(args, config: RunConfig) -> int:
    config = config.with_overrides(noise_sigma=args.noise, seed=args.seed)
    radar = config.radar_config()
    if args.scene:
        spec = SceneSpec.from_dict(read_json(args.scene))
        overrides = {'noise_sigma': args.noise, 'seed': args.seed}
        spec = replace(spec, **{k: v for k, v in overrides.items() if v is not None})
    elif args.case is not None:
        suite = build_case_suite(radar, seed=config.seed, noise_sigma=config.noise_sigma).select([args.case])
        if not suite.cases:
            raise GprBarError(f"Unknown case id {args.case}")
        spec = suite.cases[0].scene
    elif args.figure:
        spec = figure_scene(radar, noise_sigma=config.noise_sigma, seed=config.seed)
    else:
        placements = tuple(RebarPlacement(x0, depth, size) for x0, depth, size in (args.bar or []))
        spec = SceneSpec(config=radar, placements=placements,
                         noise_sigma=config.noise_sigma, seed=config.seed)

    scan, _ = synthesize_bscan(spec)
    write_scan(scan, args.out, scene=spec)
    return EXIT_OK


def cmd_db_build(args, config: RunConfig) -> int:
    config = config.with_overrides(
        db_depths=tuple(args.depths) if args.depths else None,
        db_sizes=tuple(args.sizes) if args.sizes else None,
    )
    db = build_database(config.db_depths, config.catalog(), config.radar_config())
    write_database(db, args.out)
    return EXIT_OK


def cmd_process(args, config: RunConfig) -> int:
    config = config.with_overrides(outline_mode=args.outline_mode, seed=args.seed)
    scan = read_scan(args.scan)
    result = run_scan(scan, config)
    write_outlines(result.outlines, args.out, scan.config, result.dropped)
    if args.dump_stages:
        dump_stages(result, args.dump_stages)
    return EXIT_OK


def _check_calibration(db, radar: Optional[RadarConfig], source: str) -> None:
    if radar is not None and not db.matches_config(radar):
        raise ConfigMismatch(f"{source} calibration does not match the hyperbola database")


def cmd_match(args, config: RunConfig) -> int:
    config = config.with_overrides(distance_mode=args.distance_mode)
    outlines, radar, _ = read_outlines(args.outlines)
    db = read_database(args.db)
    _check_calibration(db, radar, args.outlines)
    matched = estimate_all(outlines, db, config.distance_mode, config.min_outline_points)
    write_estimates([(outline.label, estimate) for outline, estimate in matched], args.out)
    return EXIT_OK


def cmd_evaluate(args, config: RunConfig) -> int:
    config = config.with_overrides(seed=args.seed, noise_sigma=args.noise, jobs=args.jobs)
    radar = config.radar_config()
    suite = build_case_suite(radar, seed=config.seed, noise_sigma=config.noise_sigma)
    if args.cases:
        suite = suite.select(args.cases)
    db = build_database(config.db_depths, config.catalog(), radar)
    report = run_suite(suite, db, config)
    write_report(report, args.out)

    frame = summary_frame(report)
    if not frame.empty:
        print(frame.to_string(index=False))

    def pct(value):
        return 'n/a' if value is None else f"{value:.2%}"

    print(f"bars={report.n_bars} depth={pct(report.depth_accuracy)} "
          f"size={pct(report.size_accuracy)} size_pm1={pct(report.size_accuracy_pm1)} "
          f"failures={len(report.failures)}")
    return EXIT_OK


def cmd_render(args, config: RunConfig) -> int:
    scan = read_scan(args.scan)
    mask = read_mask_image(args.mask) if args.mask else None
    outlines = []
    if args.outlines:
        outlines, radar, _ = read_outlines(args.outlines)
        if radar is not None and not radar.same_grid(scan.config):
            raise ConfigMismatch(f"{args.outlines} was extracted from a scan with another calibration")
    estimates = []
    db = None
    if args.estimates:
        if not args.db:
            raise GprBarError("--estimates needs --db")
        estimates = [estimate for _, estimate in read_estimates(args.estimates)]
        db = read_database(args.db)
        _check_calibration(db, scan.config, args.scan)
    truths = read_placements(args.scan) if args.truth else []

    plain = mask is None and not outlines and not estimates and not truths
    if plain and Path(args.out).suffix.lower() == '.pgm':
        save_image(to_gray(scan.intensities), args.out)
    else:
        save_image(overlay(scan, outlines, estimates, db, mask, truths), args.out)
    return EXIT_OK


COMMANDS = {
    'simulate': cmd_simulate,
    'db': cmd_db_build,
    'process': cmd_process,
    'match': cmd_match,
    'evaluate': cmd_evaluate,
    'render': cmd_render,
}


def _report_error(error: BaseException) -> None:
    print(json.dumps({'error': type(error).__name__, 'message': str(error)}), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, configure logging and dispatch one subcommand.

    Returns:
        0 on success, 1 on failure (2 is raised by argparse on usage errors)
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = reload_config(args.config)
    except GprBarError as e:
        _report_error(e)
        return EXIT_FAILURE

    setup_logger(args.log_level or config.log_level, config.log_path)
    logger.info(f"Running '{args.command}' command")

    try:
        return COMMANDS[args.command](args, config)
    except (StorageError, OSError) as e:
        logger.error(f"I/O failure: {e}")
        _report_error(e)
        return EXIT_FAILURE
    except GprBarError as e:
        logger.error(f"Command '{args.command}' failed: {e}")
        _report_error(e)
        return EXIT_FAILURE
    except Exception as e:
        logger.exception(f"Unexpected error in '{args.command}': {e}")
        _report_error(e)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
