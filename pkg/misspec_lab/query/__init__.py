from misspec_lab.query.environment import QueryEnvironment  # noqa: F401
from misspec_lab.query.learners import (  # noqa: F401
    chebyshev_fit,
    design_learner,
    learner_is_max_sound,
    learner_is_sound,
    probe_and_fit,
    random_probe_learner,
)
from misspec_lab.query.oracle import brute_force_est_complexity  # noqa: F401
