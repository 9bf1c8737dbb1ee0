from .kernels import (AveragedPolicy, CategoricalGridPolicy, ClippedGaussianPolicy, GridPolicy, History,
                      LinearFeedback, NoiseFeedbackPolicy, Policy, WideSenseControl, act, policy_from_dict)
from .laws import (ProfileLaw, exchangeable_average, iid_index_extension, is_exchangeable,
                   marginal_tv_gap)
from .profiles import Permutation, PolicyProfile, average_policies, permute_profile, symmetrize_profile

__all__ = [
    "AveragedPolicy", "CategoricalGridPolicy", "ClippedGaussianPolicy", "GridPolicy", "History",
    "LinearFeedback", "NoiseFeedbackPolicy", "Permutation", "Policy", "PolicyProfile", "ProfileLaw",
    "WideSenseControl", "act", "average_policies", "exchangeable_average", "iid_index_extension",
    "is_exchangeable", "marginal_tv_gap", "permute_profile", "policy_from_dict", "symmetrize_profile",
]
