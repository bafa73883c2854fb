from misspec_lab.rl.api import (  # noqa: F401
    ApiDiagnostics,
    ApiOverrides,
    ApiParameters,
    api_core_set,
    api_parameters,
    propagation_bound,
    rollout_q,
    rollout_returns,
)
from misspec_lab.rl.features import (  # noqa: F401
    FeatureMode,
    QFeatures,
    build_q_features,
    chebyshev_misspecification,
)
from misspec_lab.rl.mdp import CoreSet, Policy, QEstimate, TabularMDP, random_mdp, read_mdp, write_mdp  # noqa: F401
from misspec_lab.rl.solvers import (  # noqa: F401
    exact_policy_eval,
    exact_value_iteration,
    greedy_policy,
    optimal_policy,
    pair_operator,
)
