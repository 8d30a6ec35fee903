import argparse
import json
import logging
import os
import sys

import numpy as np

from design import d_optimal_design, leverage_scores, write_design
from errors import InputError, KernelBanditError
from harness import SCHEDULE_PRESETS, ExperimentConfig, emit_trace, run_experiment, write_summary
from hparams import hparams
from kernel import KernelSpec
from mercer_proxy import approximation_sup_error, box_sampler, build_proxy, effective_dimension, fit_profile
from quadprog import QuadraticObjective, lag_autocorrelation, quad_ew_sample, write_samples
from utils import make_rng

logger = logging.getLogger('kernel_bandits')


def parse_seeds(text):
    """'20' -> 0..19, '3-7' -> 3..7, '1,4,9' -> those seeds."""
    try:
        if '-' in text:
            first, last = text.split('-')
            return tuple(range(int(first), int(last) + 1))
        if ',' in text:
            return tuple(int(s) for s in text.split(','))
        return tuple(range(int(text)))
    except ValueError:
        raise InputError('Cannot parse seeds "{}"'.format(text))


def _load_csv(path):
    try:
        return np.loadtxt(path, delimiter=',', ndmin=2)
    except ValueError as e:
        raise InputError('Cannot parse {}: {}'.format(path, e))


def run(args):
    if args.config:
        config = ExperimentConfig.load(args.config)
    else:
        params = args.params
        if params not in SCHEDULE_PRESETS:
            try:
                params = json.loads(params)
            except json.JSONDecodeError as e:
                raise InputError('--params must be "paper" or a JSON object: {}'.format(e))
        config = ExperimentConfig(algo=args.algo, kernel=args.kernel, norm_bound=args.norm_bound,
                                  actions=args.actions, dim=args.dim, adversary=args.adversary, n=args.n,
                                  seeds=parse_seeds(args.seeds), adversary_seed=args.adversary_seed,
                                  params=params, proxy_samples=args.proxy_samples, covariance=args.covariance,
                                  covariance_samples=args.covariance_samples, workers=args.workers)

    os.makedirs(args.out, exist_ok=True)
    traces = run_experiment(config, progress=not args.quiet)
    for trace in traces:
        emit_trace(trace, os.path.join(args.out, 'trace_seed{}.csv'.format(trace.seed)), header=config.to_dict())
    summary = write_summary(traces, os.path.join(args.out, 'summary.csv'))

    print('{}: mean final regret {:.4f} +/- {:.4f} over {} seeds, bound {:.4f}'.format(
        config.algo, summary['mean'], summary['stderr'], summary['seeds'], summary['bound']))
    print('Traces written to {}'.format(args.out))


def proxy_check(args):
    kernel = KernelSpec.parse(args.kernel, args.norm_bound)
    rng = make_rng(args.seed, 'proxy')
    probes = np.linspace(0.0, 1.0, args.grid)[:, np.newaxis]
    sampler = box_sampler(0.0, 1.0)

    m = args.m
    if m is None:
        profile = fit_profile(kernel, sampler(make_rng(args.seed, 'sampler'), args.p), probes)
        m = min(effective_dimension(profile, args.eps), args.p)
        print('Fitted eigendecay: C={:.4g}, beta={:.4g}, B={:.4g} -> m={}'.format(
            profile.C, profile.beta, profile.eigfn_bound, m))

    basis = build_proxy(kernel, sampler, m, args.p, rng=rng)
    error = approximation_sup_error(kernel, basis, probes)
    print('Proxy with p={}, m={}: sup error {:.6g} on {} probes, {} eps={}'.format(
        basis.p, basis.m, error, args.grid, 'within' if error <= args.eps else 'exceeds', args.eps))
    if args.out:
        basis.save(args.out)


def design(args):
    features = _load_csv(args.features)
    weights = d_optimal_design(features, tol=args.tol)
    scores = leverage_scores(features, weights.weights)
    print('D-optimal design over {} actions: max leverage {:.8f} (m = {}), support {}'.format(
        features.shape[0], np.max(scores), features.shape[1], np.count_nonzero(weights.weights > 1e-12)))
    write_design(weights, args.out)


def sample_quad(args):
    B = _load_csv(args.B)
    b = _load_csv(args.b).ravel()
    objective = QuadraticObjective(B, b)
    burn_in = hparams.burn_in_per_dim * objective.dim if args.burn_in is None else args.burn_in
    samples = quad_ew_sample(objective, args.count, burn_in, make_rng(args.seed, 'sampler'))

    print('Mean {}'.format(np.array2string(np.mean(samples, axis=0), precision=4)))
    if args.count > 1:
        print('Lag-1 autocorrelation {}'.format(np.array2string(lag_autocorrelation(samples, 1), precision=4)))
    write_samples(samples, args.out)


def build_parser():
    parser = argparse.ArgumentParser(description='Online learning with kernel losses')
    parser.add_argument('--hparams', default='', help='Hyperparameter overrides, e.g. "design_tol=1e-8,workers=4"')
    parser.add_argument('--verbose', action='store_true', help='Debug logging')
    subparsers = parser.add_subparsers(dest='command', required=True)

    run_parser = subparsers.add_parser('run', help='Run an experiment over seeds and write regret traces')
    run_parser.add_argument('--config', help='Experiment config as a JSON file (overrides the other flags)')
    run_parser.add_argument('--algo', default='fullinfo_ew', help='bandit_ew, fullinfo_ew or cg')
    run_parser.add_argument('--kernel', default='linear', help='linear, quadratic, gaussian:<sigma>, '
                                                               'polynomial:<degree>:<offset>')
    run_parser.add_argument('--norm_bound', type=float, default=1.0, help='G')
    run_parser.add_argument('--actions', default='ball', help='ball[:K], random:K, grid:K or a CSV file')
    run_parser.add_argument('--dim', type=int, default=2)
    run_parser.add_argument('--adversary', default='iid-unit')
    run_parser.add_argument('--n', type=int, default=1000)
    run_parser.add_argument('--seeds', default=str(hparams.num_seeds), help='Count, range "a-b" or list "a,b,c"')
    run_parser.add_argument('--adversary_seed', type=int, default=hparams.adversary_seed)
    run_parser.add_argument('--params', default='paper', help='"paper" (alias "theory") or a JSON object')
    run_parser.add_argument('--proxy_samples', type=int, default=hparams.proxy_samples)
    run_parser.add_argument('--covariance', default='exact', help='exact or sampled')
    run_parser.add_argument('--covariance_samples', type=int, default=0)
    run_parser.add_argument('--workers', type=int, default=hparams.workers)
    run_parser.add_argument('--out', default='results/', help='Folder for trace CSVs')
    run_parser.add_argument('--quiet', action='store_true', help='No progress bar')
    run_parser.set_defaults(handler=run)

    proxy_parser = subparsers.add_parser('proxy-check', help='Certify a proxy kernel on [0, 1]')
    proxy_parser.add_argument('--kernel', default='gaussian:0.5')
    proxy_parser.add_argument('--norm_bound', type=float, default=1.0)
    proxy_parser.add_argument('--p', type=int, default=hparams.proxy_samples)
    proxy_parser.add_argument('--m', type=int, default=None, help='Proxy dimension; fitted from eps if omitted')
    proxy_parser.add_argument('--eps', type=float, default=0.05)
    proxy_parser.add_argument('--grid', type=int, default=50)
    proxy_parser.add_argument('--seed', type=int, default=0)
    proxy_parser.add_argument('--out', help='Optional JSON file for the basis')
    proxy_parser.set_defaults(handler=proxy_check)

    design_parser = subparsers.add_parser('design', help='D-optimal exploration design of a feature CSV')
    design_parser.add_argument('--features', required=True)
    design_parser.add_argument('--tol', type=float, default=hparams.design_tol)
    design_parser.add_argument('--out', default='design.csv')
    design_parser.set_defaults(handler=design)

    sample_parser = subparsers.add_parser('sample-quad', help='Sample exp(a^T B a + b^T a) on the unit ball')
    sample_parser.add_argument('--B', required=True, help='CSV with the d x d matrix')
    sample_parser.add_argument('--b', required=True, help='CSV with the length-d vector')
    sample_parser.add_argument('--count', type=int, default=1000)
    sample_parser.add_argument('--burn_in', type=int, default=None)
    sample_parser.add_argument('--seed', type=int, default=0)
    sample_parser.add_argument('--out', default='samples.csv')
    sample_parser.set_defaults(handler=sample_quad)
    return parser


def main(argv=None):
    # overrides must land before build_parser reads its defaults from hparams
    preparser = argparse.ArgumentParser(add_help=False)
    preparser.add_argument('--hparams', default='')
    preparser.add_argument('--verbose', action='store_true')
    early, _ = preparser.parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if early.verbose else logging.INFO,
                        format='%(asctime)s %(name)s %(levelname)s: %(message)s')

    try:
        hparams.parse(early.hparams)
        args = build_parser().parse_args(argv)
        args.handler(args)
    except KernelBanditError as e:
        logger.error('%s: %s', type(e).__name__, e)
        return e.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
