"""
Networks from partially observed data
=====================================

Remove modalities from some entities, either at random or cluster by
cluster, and compare the policies that fusion methods use to cope.
"""
# %%
from mmsimnet.cluster import select_resolution
from mmsimnet.evalmetrics import ami
from mmsimnet.integrate import FusionParams, fuse_dataset
from mmsimnet.mmgen import GenParams, build_problem, mask_cluster, mask_random
from mmsimnet.netgraph import knn_graph
from mmsimnet.simkern import KernelParams

ds = build_problem("Easy", n=300, seed=3, d=30, k=10, params=GenParams(center_scale=0.7))
params = FusionParams(kernel=KernelParams(0.5, 15, "gaussian"))


def score(data, method, policy):
    G = knn_graph(fuse_dataset(data, method, policy, params), 15)
    return ami(data.truth, select_resolution(G)[1])


# %%
# Random masking: each entity loses one modality with probability 0.4.
masked = mask_random(ds, 0.4, seed=0)
for method, policy in [("mean", "impute_max"), ("mean", "ignore_nan"),
                       ("extreme", "extreme_shared"), ("snf", "impute_max"),
                       ("nemo", "nemo_shared")]:
    print(f"random 40%  {method:8s} {policy:15s} AMI={score(masked, method, policy):.3f}")

# %%
# Cluster masking removes a modality from whole clusters at once.  The
# partial-data labels ``partial_mask`` tell which group each entity fell in.
for frac in (0.5, 1.0):
    masked = mask_cluster(ds, frac, seed=0)
    print(f"cluster {frac:.0%}  mean ignore_nan  AMI={score(masked, 'mean', 'ignore_nan'):.3f}")
