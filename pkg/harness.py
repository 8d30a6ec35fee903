"""Adversaries, regret accounting and seeded experiment orchestration."""
import hashlib
import json
import logging
import math
import warnings
from abc import ABC, abstractmethod
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import partial

import numpy as np
from tqdm import tqdm

from bandit_ew import BanditConfig, BanditExpWeights, configure_bandit, configure_bandit_finite
from errors import DegenerateSpectrumWarning, InputError
from fullinfo import CGConfig, ConditionalGradient, FullInfoExpWeights, fullinfo_eta, fullinfo_regret_bound
from hparams import hparams
from kernel import QUADRATIC, AdversaryAction, KernelSpec, as_points, check_norm_bound, loss_vector
from mercer_proxy import discrete_sampler, fit_profile, gram_spectrum, proxy_from_points
from utils import average_over_seeds, format_float, make_rng

logger = logging.getLogger(__name__)

ALGORITHMS = ('bandit_ew', 'fullinfo_ew', 'cg')
ADVERSARIES = ('fixed', 'zero', 'periodic', 'iid-unit', 'iid-quadratic', 'iid-rank-one')
SCHEDULE_PRESETS = ('paper', 'theory')
TRACE_COLUMNS = ('round', 'action_index', 'loss', 'cum_loss', 'cum_regret')


class Adversary(ABC):
    """An oblivious adversary: the whole schedule is fixed before the first round."""

    @abstractmethod
    def schedule(self, n):
        pass


class Fixed(Adversary):
    def __init__(self, action):
        self.action = action

    def schedule(self, n):
        return [self.action] * n


class IIDRandom(Adversary):
    def __init__(self, draw, rng):
        self._draw = draw
        self._rng = rng

    def schedule(self, n):
        return [self._draw(self._rng) for _ in range(n)]


class Periodic(Adversary):
    def __init__(self, actions):
        if not actions:
            raise InputError('Periodic adversary needs at least one action')
        self.actions = list(actions)

    def schedule(self, n):
        return [self.actions[t % len(self.actions)] for t in range(n)]


class ObliviousSchedule(Adversary):
    def __init__(self, actions):
        self.actions = list(actions)

    def schedule(self, n):
        if n > len(self.actions):
            raise InputError('Schedule has {} actions, {} rounds requested'.format(len(self.actions), n))
        return self.actions[:n]


def schedule_digest(schedule):
    digest = hashlib.sha256()
    for action in schedule:
        digest.update(action.kind.encode('utf-8'))
        digest.update(np.ascontiguousarray(action.vector, dtype=np.float64).tobytes())
    return digest.hexdigest()


def _unit(rng, dim):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def make_adversary(name, kernel, actions, rng):
    """Adversary by name; random parameters are drawn from rng (the adversary stream)."""
    actions = as_points(actions)
    d = actions.shape[1]
    G = kernel.norm_bound

    if name == 'iid-rank-one':
        return IIDRandom(lambda r: AdversaryAction.rank_one(actions[r.integers(actions.shape[0])]), rng)
    if not kernel.has_feature_map:
        raise InputError('Adversary "{}" needs explicit actions, not allowed with the {} kernel; '
                         'use iid-rank-one'.format(name, kernel.variant))

    dim = kernel.feature_dim(d)
    if name == 'zero':
        return Fixed(AdversaryAction.explicit(np.zeros(dim)))
    if name == 'fixed':
        return Fixed(AdversaryAction.explicit(G * _unit(rng, dim)))
    if name == 'periodic':
        w = G * _unit(rng, dim)
        return Periodic([AdversaryAction.explicit(w), AdversaryAction.explicit(-w)])
    if name == 'iid-unit':
        return IIDRandom(lambda r: AdversaryAction.explicit(G * _unit(r, dim)), rng)
    if name == 'iid-quadratic':
        if kernel.variant != QUADRATIC:
            raise InputError('iid-quadratic needs the quadratic kernel, got {}'.format(kernel.variant))

        def draw(r):
            A = r.standard_normal((d, d))
            A = 0.5 * (A + A.T)
            b = r.standard_normal(d)
            scale = G / math.sqrt(np.sum(A ** 2) + np.sum(b ** 2))
            return AdversaryAction.quadratic(scale * A, scale * b)

        return IIDRandom(draw, rng)
    raise InputError('Unknown adversary: {} (expected one of {})'.format(name, ', '.join(ADVERSARIES)))


def ball_directions(K, d, rng=None):
    """K unit vectors: evenly spaced angles when d = 2, normalized Gaussians otherwise."""
    if K < 1 or d < 1:
        raise InputError('Need K >= 1 directions in d >= 1 dimensions')
    if d == 2:
        angles = 2.0 * np.pi * np.arange(K) / K
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    rng = np.random.default_rng(0) if rng is None else rng
    directions = rng.standard_normal((K, d))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def covering_radius(directions, probes=10000, rng=None):
    """Largest distance from a unit vector to its nearest direction (estimated from probes unless d = 2)."""
    directions = as_points(directions)
    K, d = directions.shape
    if d == 2:
        return 2.0 * math.sin(math.pi / (2.0 * K))
    rng = np.random.default_rng(1) if rng is None else rng
    points = rng.standard_normal((probes, d))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    # |x - y|^2 = 2 - 2 x.y on the sphere
    nearest = np.max(points @ directions.T, axis=1)
    return float(np.sqrt(np.max(2.0 - 2.0 * nearest)))


def discretization_error(kernel, directions):
    return kernel.norm_bound ** 2 * covering_radius(directions)


def loss_matrix(kernel, actions, schedule):
    """Row t holds the loss of every action against w_t."""
    actions = as_points(actions)
    return np.array([loss_vector(kernel, actions, w) for w in schedule]).reshape(len(schedule), actions.shape[0])


def best_in_hindsight(kernel, actions, schedule):
    """(index, cumulative loss) of the best fixed action; ties go to the lowest index."""
    return _best_fixed(loss_matrix(kernel, actions, schedule))


def _best_fixed(losses):
    if losses.shape[0] == 0:
        return 0, 0.0
    totals = np.cumsum(losses, axis=0)[-1]
    index = int(np.argmin(totals))
    return index, float(totals[index])


@dataclass(frozen=True, eq=False)
class RegretTrace:
    action_indices: np.ndarray
    losses: np.ndarray
    cum_loss: np.ndarray
    regret_curve: np.ndarray
    best_index: int
    best_fixed_cum_loss: float
    seed: int = 0
    bound: float = float('nan')
    extras: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.losses.shape[0]

    @property
    def final_regret(self):
        return float(self.cum_loss[-1] - self.best_fixed_cum_loss) if self.n else 0.0

    @classmethod
    def from_records(cls, records, losses, seed=0, bound=float('nan'), extras=None):
        """Builds the trace of a run from its round records and the full loss matrix."""
        best_index, best_total = _best_fixed(losses)
        played = np.array([record.loss for record in records], dtype=np.float64)
        cum_loss = np.cumsum(played)
        regret_curve = cum_loss - np.cumsum(losses[:, best_index])
        indices = np.array([record.action_index for record in records], dtype=int)
        return cls(indices, played, cum_loss, regret_curve, best_index, best_total, seed, bound, extras or {})


@dataclass(frozen=True)
class ExperimentConfig:
    algo: str = 'fullinfo_ew'
    kernel: str = 'linear'
    norm_bound: float = 1.0
    actions: str = 'ball'
    dim: int = 2
    adversary: str = 'iid-unit'
    n: int = 1000
    seeds: tuple = field(default_factory=lambda: tuple(range(hparams.num_seeds)))
    adversary_seed: int = field(default_factory=lambda: hparams.adversary_seed)
    params: object = 'paper'
    proxy_samples: int = field(default_factory=lambda: hparams.proxy_samples)
    covariance: str = 'exact'
    covariance_samples: int = 0
    workers: int = field(default_factory=lambda: hparams.workers)

    def __post_init__(self):
        object.__setattr__(self, 'seeds', tuple(int(s) for s in self.seeds))
        if self.algo not in ALGORITHMS:
            raise InputError('Unknown algorithm: {} (expected one of {})'.format(self.algo, ', '.join(ALGORITHMS)))
        if self.adversary not in ADVERSARIES:
            raise InputError('Unknown adversary: {} (expected one of {})'.format(
                self.adversary, ', '.join(ADVERSARIES)))
        if self.n <= 0:
            raise InputError('Horizon n must be positive, got {}'.format(self.n))
        if not self.seeds:
            raise InputError('Seed list is empty')
        if self.params in SCHEDULE_PRESETS:
            object.__setattr__(self, 'params', 'paper')
        elif not isinstance(self.params, dict):
            raise InputError('params must be "paper" or a dict of parameters, got {!r}'.format(self.params))
        self.kernel_spec()

    def kernel_spec(self):
        return KernelSpec.parse(self.kernel, self.norm_bound)

    @classmethod
    def from_dict(cls, values):
        names = {f.name for f in fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise InputError('Unknown config keys: {}'.format(', '.join(sorted(unknown))))
        return cls(**values)

    @classmethod
    def load(cls, path):
        with open(path, encoding='utf-8') as f:
            try:
                values = json.load(f)
            except json.JSONDecodeError as e:
                raise InputError('Cannot parse config {}: {}'.format(path, e))
        return cls.from_dict(values)

    def to_dict(self):
        values = asdict(self)
        values['seeds'] = list(self.seeds)
        return values


def load_actions(config, rng=None):
    """Action set named by config.actions: 'ball[:K]', 'random:K', 'grid:K' or a CSV file.

    A bare 'ball' takes K from hparams.ball_directions.
    """
    rng = make_rng(config.adversary_seed, 'actions') if rng is None else rng
    kind, _, count = config.actions.partition(':')
    if kind in ('ball', 'random', 'grid'):
        try:
            K = hparams.ball_directions if config.actions == 'ball' else int(count)
        except ValueError:
            raise InputError('Cannot parse action set "{}"'.format(config.actions))
        if K < 1:
            raise InputError('Action set needs at least one action, got {}'.format(K))
        if kind == 'ball':
            return ball_directions(K, config.dim, rng)
        if kind == 'random':
            points = rng.standard_normal((K, config.dim))
            return points / np.linalg.norm(points, axis=1, keepdims=True)
        return np.linspace(0.0, 1.0, K)[:, np.newaxis]

    try:
        points = np.loadtxt(config.actions, delimiter=',', ndmin=2)
    except ValueError as e:
        raise InputError('Cannot parse action file {}: {}'.format(config.actions, e))
    return as_points(points)


def _explicit_basis(kernel, actions):
    # kernel PCA on the action set itself reproduces the exact features up to rotation
    spectrum = gram_spectrum(kernel, actions)
    rank = int(np.sum(spectrum > hparams.eig_floor_rel * max(spectrum[0], 0.0)))
    return proxy_from_points(kernel, actions, rank)


def _manual_bandit_config(params, n, m=None):
    values = {'m': m, 'eps': 0.0, **params, 'n': n}
    missing = [name for name in ('eta', 'gamma', 'm') if values.get(name) is None]
    if missing:
        raise InputError('Bandit params are missing {}'.format(', '.join(missing)))
    return BanditConfig(float(values['eta']), float(values['gamma']), int(values['m']), float(values['eps']), n)


def _bandit_player(config, kernel, actions, rng):
    num_actions = actions.shape[0]
    G = kernel.norm_bound
    if kernel.has_feature_map:
        basis = _explicit_basis(kernel, actions)
        if config.params == 'paper':
            bandit_config = configure_bandit_finite(basis.m, config.n, num_actions, G)
        else:
            bandit_config = _manual_bandit_config(config.params, config.n, basis.m)
    else:
        points = as_points(discrete_sampler(actions)(rng, config.proxy_samples))
        if config.params == 'paper':
            profile = fit_profile(kernel, points, actions)
            bandit_config = configure_bandit(profile, config.n, num_actions, G)
        else:
            bandit_config = _manual_bandit_config(config.params, config.n)
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', DegenerateSpectrumWarning)
            basis = proxy_from_points(kernel, points, min(bandit_config.m, points.shape[0]))

    player = BanditExpWeights(kernel, actions, basis, bandit_config, covariance=config.covariance,
                              covariance_samples=config.covariance_samples or None)
    return player, bandit_config.regret_bound(G, num_actions)


def _run_seed(config, actions, schedule, losses, seed):
    kernel = config.kernel_spec()
    G = kernel.norm_bound
    num_actions = actions.shape[0]
    rng = make_rng(seed, 'player')
    params = config.params if isinstance(config.params, dict) else {}
    extras = {}

    if config.algo == 'fullinfo_ew':
        eta = params.get('eta', fullinfo_eta(num_actions, G, config.n))
        _, records = FullInfoExpWeights(kernel, actions, eta).run(schedule, rng)
        bound = fullinfo_regret_bound(num_actions, G, config.n) if 'eta' not in params else float('nan')
    elif config.algo == 'cg':
        cg_config = CGConfig(params['eta'], config.n) if 'eta' in params else CGConfig.from_theorem(config.n)
        _, records = ConditionalGradient(kernel, actions, cg_config).run(schedule, rng)
        bound = cg_config.regret_bound(G)
        extras['num_atoms'] = np.array([record.num_atoms for record in records], dtype=np.float64)
    else:
        player, bound = _bandit_player(config, kernel, actions, make_rng(seed, 'proxy'))
        _, records = player.run(schedule, rng)
        extras['min_eig_sigma'] = np.array([record.min_eig for record in records])
        extras['est_norm'] = np.array([record.est_norm for record in records])

    return RegretTrace.from_records(records, losses, seed=seed, bound=bound, extras=extras)


def prepare_experiment(config):
    """Action set, materialized adversary schedule and its loss matrix."""
    kernel = config.kernel_spec()
    actions = load_actions(config)
    check_norm_bound(kernel, actions)
    if config.actions.partition(':')[0] == 'ball':
        logger.info('Ball discretization: %d directions, regret discretization error <= %.4g',
                    actions.shape[0], discretization_error(kernel, actions))

    adversary = make_adversary(config.adversary, kernel, actions, make_rng(config.adversary_seed, 'adversary'))
    schedule = [w.validate(kernel, actions.shape[1]) for w in adversary.schedule(config.n)]
    logger.info('Adversary schedule %s (%d rounds) sha256 %s', config.adversary, config.n,
                schedule_digest(schedule)[:16])
    return actions, schedule, loss_matrix(kernel, actions, schedule)


def run_experiment(config, progress=True):
    """One regret trace per seed; all player randomness comes from the seed's own streams."""
    actions, schedule, losses = prepare_experiment(config)
    run = partial(_run_seed, config, actions, schedule, losses)

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            futures = [executor.submit(run, seed) for seed in config.seeds]
            traces = [future.result() for future in tqdm(futures, disable=not progress)]
    else:
        traces = [run(seed) for seed in tqdm(config.seeds, disable=not progress)]

    summary = summarize(traces)
    logger.info('%s over %d seeds: final regret %.4f +/- %.4f (bound %.4f)', config.algo, len(traces),
                summary['mean'], summary['stderr'], summary['bound'])
    return traces


def summarize(traces):
    mean, stderr = average_over_seeds([trace.final_regret for trace in traces])
    return {'mean': float(mean), 'stderr': float(stderr), 'bound': traces[0].bound if traces else float('nan'),
            'seeds': len(traces)}


def emit_trace(trace, path, header=None):
    """Writes the trace as CSV.

    Two leading '#' lines hold JSON objects: the config (header) and the run
    summary (seed, best action, its cumulative loss, bound).
    """
    run = {'seed': int(trace.seed), 'best_index': int(trace.best_index),
           'best_fixed_cum_loss': float(trace.best_fixed_cum_loss), 'bound': float(trace.bound)}
    columns = TRACE_COLUMNS + tuple(trace.extras)

    with open(path, 'w', encoding='utf-8') as f:
        f.write('# {}\n'.format(json.dumps(dict(header or {}))))
        f.write('# {}\n'.format(json.dumps(run)))
        f.write(','.join(columns) + '\n')
        for t in range(trace.n):
            row = [str(t + 1), str(int(trace.action_indices[t])), format_float(trace.losses[t]),
                   format_float(trace.cum_loss[t]), format_float(trace.regret_curve[t])]
            row.extend(format_float(trace.extras[name][t]) for name in trace.extras)
            f.write(','.join(row) + '\n')


def read_trace(path):
    echo = {}
    rows = []
    with open(path, encoding='utf-8') as f:
        for line in f:
            line = line.rstrip('\n')
            if line.startswith('#'):
                try:
                    echo.update(json.loads(line[1:]))
                except (json.JSONDecodeError, TypeError, ValueError) as e:
                    raise InputError('{}: header line is not a JSON object: {}'.format(path, e))
            elif line:
                rows.append(line.split(','))

    columns = rows[0] if rows else []
    if tuple(columns[:len(TRACE_COLUMNS)]) != TRACE_COLUMNS:
        raise InputError('{} is not a trace file: header {}'.format(path, ','.join(columns)))
    body = rows[1:]
    data = {name: [row[i] for row in body] for i, name in enumerate(columns)}
    extras = {name: np.array(data[name], dtype=np.float64) for name in columns[len(TRACE_COLUMNS):]}
    return RegretTrace(np.array(data['action_index'], dtype=int), np.array(data['loss'], dtype=np.float64),
                       np.array(data['cum_loss'], dtype=np.float64), np.array(data['cum_regret'], dtype=np.float64),
                       int(echo.get('best_index', 0)), float(echo.get('best_fixed_cum_loss', 'nan')),
                       int(echo.get('seed', 0)), float(echo.get('bound', 'nan')), extras)


def write_summary(traces, path):
    summary = summarize(traces)
    with open(path, 'w', encoding='utf-8') as f:
        for key in ('mean', 'stderr', 'bound'):
            f.write('# {}={}\n'.format(key, format_float(summary[key])))
        f.write('seed,final_regret\n')
        for trace in traces:
            f.write('{},{}\n'.format(trace.seed, format_float(trace.final_regret)))
    return summary
