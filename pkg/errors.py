class KernelBanditError(Exception):
    exit_code = 1


class InputError(KernelBanditError, ValueError):
    exit_code = 2


class NormBoundError(InputError):
    pass


class RankDeficiencyError(InputError):
    def __init__(self, rank, expected):
        super().__init__('Features span a {}-dimensional subspace, expected {} (deficient by {})'.format(
            rank, expected, expected - rank))
        self.rank = rank
        self.expected = expected


class DegenerateStartError(InputError):
    pass


class PreconditionError(KernelBanditError):
    exit_code = 3


class HorizonTooShortError(PreconditionError):
    pass


class NumericalError(KernelBanditError, ArithmeticError):
    exit_code = 4


class IllConditionedCovarianceError(NumericalError):
    def __init__(self, min_eig, floor):
        super().__init__('Covariance min eigenvalue {:.3e} is below the floor {:.3e}; '
                         'was the exploration mixture applied?'.format(min_eig, floor))
        self.min_eig = min_eig
        self.floor = floor


class ToleranceNotMetError(NumericalError):
    def __init__(self, gap, tol):
        super().__init__('Duality gap {:.3e} did not reach tolerance {:.3e}'.format(gap, tol))
        self.gap = gap
        self.tol = tol


class DegenerateSpectrumWarning(UserWarning):
    pass
