from misspec_lab.hypothesis.amplification import LambdaQResult, lambda_q, subset_amplification  # noqa: F401
from misspec_lab.hypothesis.io import read_feature_csv, write_feature_csv  # noqa: F401
from misspec_lab.hypothesis.jl import (  # noqa: F401
    embed_unit_vectors,
    hardness_count,
    jl_dimension,
    jl_feature_matrix,
    near_orthogonal_rows,
    random_misspecified_reward,
    scaled_hard_instance,
)
