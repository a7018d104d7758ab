# coding: utf-8

# # Gaussian location: the limit is exact
#
# For the Gaussian location model the rescaled posterior is a Gaussian for
# every n, so its distance to the limit is zero up to quadrature error. This is
# a good first check that the grid, the normalization and the TV integral are
# all wired correctly.

# In[1]:

import numpy as np

from lcbvm import build_limit, build_posterior, compare, constraint_set_from_config, get_model


# A two-dimensional model with correlated noise, no constraints.

# In[2]:

cov = np.array([[1.0, 0.3], [0.3, 0.5]])
model = get_model("gaussian-location", {"dim": 2, "cov": cov.tolist()}, [0.5, -1.0])
cs = constraint_set_from_config({"shape": "none"}, 2)

for n in (16, 256, 4096):
    post = build_posterior(model, cs, model.dataset(n, seed=0))
    law = build_limit(post.regime, post.frame, post.y_n)
    res = compare(post, law)
    print(f"n={n:5d}  regime={post.regime}  TV={res.tv:.2e}  (error estimate {res.error_estimate:.1e})")


# The same holds on a half-space with the truth on its boundary: the limit is a
# Gaussian conditioned on the support cone, and the cone equals the rescaled
# set exactly.

# In[3]:

model = get_model("gaussian-location", {"dim": 2}, [0.0, 0.0])
cs = constraint_set_from_config({"shape": "halfspace", "normal": [1, 0]}, 2)
post = build_posterior(model, cs, model.dataset(256, seed=3))
law = build_limit(post.regime, post.frame, post.y_n)
print(post.regime, "TV", compare(post, law).tv)
