"""Privacy accounting with trade-off functions and Gaussian differential privacy.

The package covers trade-off function algebra, the central-limit and
moments accountants for noisy SGD, a numeric composition oracle, duality
with (eps, delta)-DP and noise calibration, plus reference noisy optimizers.
"""

__version__ = "0.1.0"

from .accounting import AccountantQuery, PrivacyReport, clt_report, ma_report, oracle_report
from .composition import (PrivacyLossDistribution, compose_subsampled_gaussian, gap_check,
                          pld_from_subsampled_gaussian, pld_to_tradeoff, self_compose,
                          tradeoff_from_pld)
from .duality import (CalibrationResult, EpsDeltaPoint, calibrate_mu, calibrate_sigma,
                      delta_from_eps, eps_from_delta, steps_from_epochs)
from .exceptions import (CalibrationError, DegenerateError, DomainError, InfeasibleError,
                         IntegrabilityError, QuadratureError, SigmaFloorError, TailMassError)
from .functionals import (AsymptoticRegime, CltFunctionalSums, chi_square,
                          clt_mu_asymmetric, clt_mu_general, clt_mu_subsampled_gaussian,
                          kl_functionals, renyi_from_tradeoff)
from .moments import (MomentsAccountantConfig, alpha_gm, delta_ma, eps_ma,
                      ma_tradeoff_envelope)
from .optimizers import (DPLogisticRegression, OptimizerState, TrainConfig, clip,
                         noisy_adam_step, noisy_sgd_step, poisson_subsample, run)
from .tradeoff import (EpsDelta, Gaussian, Grid, Identity, SubsampledTradeoff,
                       compose_gaussian, conjugate, evaluate, inverse, subsample,
                       symmetrize)
