# %% [markdown]
# # Comparing diagrams
#
# The q-Wasserstein distance matches points of two diagrams, letting any
# point fall onto the diagonal instead.  The bottleneck distance is the
# q -> infinity limit.

# %%
import numpy as np

from roitopo.distance import WassersteinParams, bottleneck_distance, wasserstein_distance

X = np.array([[0.0, 1.0]])
Y = np.array([[0.0, 2.0]])

# %% [markdown]
# Direct matching costs 1 in the L-infinity ground metric; sending both
# points to the diagonal costs 0.5 and 1.  For q = 2 the direct match wins,
# for the bottleneck distance the diagonal route wins when Y is far enough.

# %%
print(wasserstein_distance(X, Y, WassersteinParams(q=2)))
print(bottleneck_distance(X, [[0.0, 3.0]]))

# %% [markdown]
# Essential classes carry an infinite death.  They are dropped by default,
# or capped at the filtration threshold.

# %%
from roitopo.homology import PersistenceDiagram

a = PersistenceDiagram(0, [[0, 1], [0, np.inf]], threshold=3.0)
b = PersistenceDiagram(0, [[0, 1]], threshold=3.0)
print(wasserstein_distance(a, b))
print(wasserstein_distance(a, b, WassersteinParams(q=2, essential_policy="cap_at_threshold")))

# %% [markdown]
# Distances between noisy sinusoids grow with the difference in period.

# %%
from roitopo.embed import sliding_window_embed
from roitopo.homology import FiltrationParams, compute_persistence

rng = np.random.default_rng(1)
t = np.arange(140)


def h1(period):
    s = np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi)) + 0.2 * rng.normal(size=t.size)
    return compute_persistence(sliding_window_embed(s), FiltrationParams(1))[1]


ref = h1(20)
for period in (20, 25, 35, 50):
    print(period, round(wasserstein_distance(ref, h1(period)), 4))
