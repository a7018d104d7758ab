# coding: utf-8

# # A misspecified model on the unit ball
#
# Gaussian location with truth (2, 0) constrained to the unit ball. The
# constrained optimum is (1, 0) and the population gradient there is
# u = (-1, 0), which does not vanish. The posterior then concentrates at two
# rates: sqrt(n) along the tangent line of the ball and n along the normal.

# In[1]:

import json

import numpy as np

from lcbvm import (build_limit, build_posterior, compare, constraint_set_from_config, get_model,
                   normalize, solve_theta_star)
from lcbvm.models import derive_seed
from lcbvm.harness import regime_report

model = get_model("gaussian-location", {"dim": 2}, [2.0, 0.0])
cs = constraint_set_from_config({"shape": "ball", "center": [0, 0], "radius": 1}, 2)
print("theta* =", solve_theta_star(model, cs))


# The geometry dossier lists the active facets, the face set, the multiplier
# of -u and the strict-positivity constant alpha of the normal direction.

# In[2]:

report = regime_report({"model": {"id": "gaussian-location", "params": {"dim": 2}},
                        "constraints": {"shape": "ball", "center": [0, 0], "radius": 1},
                        "theta_bar": [2, 0], "n_list": [100], "seeds": [0]})
geo = report["geometry"]
print(json.dumps({k: geo[k] for k in ("J", "J_star", "lambda", "alpha_finite", "dim_L")}))


# The limit law lives on (t, s) with s <= -t^2 / 2 and density proportional to
# exp(-(t - mu)^2 / 2 + s). Integrating s out leaves a Gaussian in t with
# variance 1/2. With Y_n = 0 the normalizer is sqrt(pi).

# In[3]:

frame = build_posterior(model, cs, model.dataset(100, 0)).frame
law = normalize(build_limit("Misspecified", frame, np.zeros(2)))
print("log A_n", law.log_A_n, "expected", -0.5 * np.log(np.pi))


# TV between the exact rescaled posterior and the limit shrinks with n.

# In[4]:

for n in (256, 1024, 4096):
    tvs = []
    for seed in range(20):
        post = build_posterior(model, cs, model.dataset(n, derive_seed(seed, n)))
        tvs.append(compare(post, build_limit(post.regime, post.frame, post.y_n)).tv)
    print(f"n={n:5d}  median TV {np.median(tvs):.4f}")
