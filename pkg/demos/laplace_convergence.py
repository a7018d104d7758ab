# coding: utf-8

# # Laplace location: nonsmooth loss, slow convergence
#
# The absolute loss has no Hessian, yet the population risk is smooth with
# curvature 2 f(0) = 1. The rescaled posterior is piecewise linear in log
# scale and approaches the Gaussian limit as n grows. We track the median TV
# over seeds.

# In[1]:

import numpy as np

from lcbvm import build_limit, build_posterior, compare, constraint_set_from_config, get_model
from lcbvm.models import derive_seed

model = get_model("laplace-location", {"dim": 1}, [0.0])
cs = constraint_set_from_config({"shape": "none"}, 1)


# In[2]:

for n in (64, 256, 1024, 4096):
    tvs = []
    for seed in range(20):
        post = build_posterior(model, cs, model.dataset(n, derive_seed(seed, n)))
        tvs.append(compare(post, build_limit(post.regime, post.frame, post.y_n)).tv)
    q25, med, q75 = np.percentile(tvs, [25, 50, 75])
    print(f"n={n:5d}  median TV {med:.4f}  IQR [{q25:.4f}, {q75:.4f}]")


# The same sweep, with CSV and JSON reports, is one call to the harness. The
# bundled config uses 20 seeds and a frozen threshold at the largest n.

# In[3]:

from importlib import resources

from lcbvm import run_experiment

cfg = resources.files("lcbvm").joinpath("configs", "laplace_wellspec_d1.json")
rows, summary = run_experiment(str(cfg))
print(summary["trend"])
