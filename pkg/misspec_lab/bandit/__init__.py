from misspec_lab.bandit.elimination import (  # noqa: F401
    EliminationConfig,
    elimination_threshold,
    phased_elimination,
    phased_elimination_known_eps,
)
from misspec_lab.bandit.instances import (  # noqa: F401
    BanditInstance,
    ContextSequence,
    Noise,
    NoiseKind,
    failure_instance,
    lower_bound_instance,
    random_bandit_instance,
    random_context_sequence,
    regret_envelope,
)
from misspec_lab.bandit.linucb import confidence_radius, linucb, linucb_modified  # noqa: F401
from misspec_lab.bandit.trace import BanditTrace, EpisodeRecord  # noqa: F401
