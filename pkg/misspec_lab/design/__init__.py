from misspec_lab.design.frank_wolfe import (  # noqa: F401
    FrankWolfeOptions,
    core_set_bound,
    default_max_iters,
    default_max_support,
    frank_wolfe_design,
    g_value,
    gram,
    greedy_volume_init,
    initial_episode_length,
    kw_certificate,
    leverages,
    log_det,
    rounded_allocation,
)
from misspec_lab.design.span import reduce_to_span, span_basis  # noqa: F401
