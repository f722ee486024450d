"""
Command line entry point: synth, train, eval, gates, route-stats
"""
from __future__ import annotations

from classes.data_classes import ReturnData
from commands.evaluate import evaluate_def
from commands.gates import gates_def
from commands.route_stats import route_stats_def
from commands.synth import synth_def
from commands.train import train_def
from utils.log import log, set_log_dir
import config

import argparse
import sys

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# ---------------- Parser ------------

def _common(parser: argparse.ArgumentParser, config_required: bool = False):
    parser.add_argument('--config', required=config_required, help='"key = value" config file')
    parser.add_argument('--seed', type=int, default=None, help='overrides the config seed')
    parser.add_argument('--out', default='.', help='output directory (also receives log.log)')
    parser.add_argument('--threads', type=int, default=None, help='worker threads')

def _source(parser: argparse.ArgumentParser):
    parser.add_argument('--image', help='PPM image')
    parser.add_argument('--manifest', help='dataset manifest')

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='restore', description='All-in-one image restoration with expert routing')
    sub = parser.add_subparsers(dest='command', required=True)

    synth = sub.add_parser('synth', help='synthesise a clean/degraded dataset')
    _common(synth)
    synth.add_argument('--count', type=int, default=8, help='number of image pairs')
    synth.add_argument('--size', type=int, default=64, help='image side, power of two >= 32')
    synth.add_argument('--kinds', default='noise', help='comma separated degradation kinds')
    synth.add_argument('--sigma', type=float, default=25, help='Gaussian noise sigma on the 0-255 scale')
    synth.add_argument('--intensity', type=float, default=0.5, help='intensity of the non-noise kinds')

    train = sub.add_parser('train', help='train on a manifest')
    _common(train, config_required=True)
    train.add_argument('--manifest', help='overrides the config manifest')

    evaluate = sub.add_parser('eval', help='PSNR / SSIM of a checkpoint on a manifest')
    _common(evaluate)
    evaluate.add_argument('--checkpoint', required=True)
    evaluate.add_argument('--manifest', required=True)

    gates = sub.add_parser('gates', help='export the MST gate maps of one image')
    _common(gates)
    gates.add_argument('--checkpoint', required=True)
    _source(gates)
    gates.add_argument('--index', type=int, default=0, help='manifest record to use')

    route = sub.add_parser('route-stats', help='per-expert routing totals')
    _common(route)
    route.add_argument('--checkpoint', help='trained network (else --config builds an untrained one)')
    _source(route)
    return parser

# ---------------- Dispatch ------------

def run(args: argparse.Namespace) -> ReturnData:
    threads = args.threads or 1
    if args.command == 'synth':
        seed = config.DEFAULT_SEED if args.seed is None else args.seed
        return synth_def(args.out, seed, args.count, args.size, args.kinds, args.sigma, args.intensity, threads)
    if args.command == 'train':
        return train_def(args.config, args.out, args.seed, args.threads, args.manifest)
    if args.command == 'eval':
        return evaluate_def(args.checkpoint, args.manifest, args.out, threads)
    if args.command == 'gates':
        return gates_def(args.checkpoint, args.out, args.image, args.manifest, args.index)
    return route_stats_def(args.out, args.checkpoint, args.config, args.image, args.manifest, args.seed)

def main(argv: list = None) -> int:
    """
    :param argv: arguments without the program name (defaults to sys.argv[1:])
    :return: exit code, 0 success, 1 runtime failure, 2 usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    needs_source = args.command in ('gates', 'route-stats')
    if needs_source and not (args.image or args.manifest):
        parser.print_usage(sys.stderr)
        print(f'{parser.prog} {args.command}: one of --image or --manifest is required', file=sys.stderr)
        return EXIT_USAGE
    if args.command == 'route-stats' and not (args.checkpoint or args.config):
        parser.print_usage(sys.stderr)
        print(f'{parser.prog} route-stats: one of --checkpoint or --config is required', file=sys.stderr)
        return EXIT_USAGE

    # a dataset directory holds only images and the manifest
    if args.command != 'synth':
        set_log_dir(args.out)
    log(None, args.command, vars(args), log_type='command')
    result = run(args)
    if not result.response:
        log(None, result.message, [args.command], log_type='error')
        return EXIT_FAILURE
    log(None, result.message)
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
