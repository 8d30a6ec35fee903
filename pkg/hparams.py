from dataclasses import dataclass, fields

from errors import InputError


@dataclass
class HParams:
    #Kernels
    kernel_tol: float = 1e-12 #Slack allowed when checking unit-ball membership and norm bounds
    max_explicit_degree: int = 3 #Polynomial kernels above this degree need rank-one adversaries

    #Proxy kernel
    eig_floor_rel: float = 1e-10 #Eigenvalues below eig_floor_rel * top eigenvalue are dropped
    proxy_samples: int = 400 #p, number of samples drawn for the sample Gram matrix

    #Exploration design
    design_tol: float = 1e-6
    design_max_iter: int = 10000
    floor_fraction: float = 0.5 #Covariance inversion floor as a fraction of gamma / m

    #Conditional gradient / FTRL
    atom_prune: float = 1e-14
    ftrl_tol: float = 1e-8
    ftrl_max_iter: int = 100000

    #Quadratic losses
    trs_tol: float = 1e-10
    chord_grid: int = 256 #Grid points per hit-and-run chord
    burn_in_per_dim: int = 1000
    near_zero_eig: float = 1e-10

    #Harness
    num_seeds: int = 20
    adversary_seed: int = 0
    ball_directions: int = 64
    workers: int = 1
    float_digits: int = 17

    def parse(self, values):
        """Overrides values in place from a comma separated "name=value" string; returns self."""
        if not values:
            return self

        types = {f.name: f.type for f in fields(self)}
        for item in values.split(','):
            name, _, value = item.partition('=')
            name = name.strip()
            if name not in types:
                raise InputError('Unknown hyperparameter: {}'.format(name))
            try:
                setattr(self, name, int(value) if types[name] is int else float(value))
            except ValueError:
                raise InputError('Cannot parse hyperparameter {}={}'.format(name, value))

        return self


# Default hyperparameters
hparams = HParams()
