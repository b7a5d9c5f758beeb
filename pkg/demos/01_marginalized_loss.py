"""The loss that makes coarse labels trainable.

Standard cross-entropy credits only the true class.  When classes are grouped
into clusters, the marginalized variant credits the *summed* probability of
the true class's cluster, so the model is rewarded for getting the group
right before it can tell group members apart.  Two limits anchor it:

  * every class in its own cluster  -> exactly softmax cross-entropy
  * every class in one cluster      -> exactly zero (nothing to learn)
"""

import numpy as np

from coarse2fine import curriculum as cu
from coarse2fine import netcore as nc

rng = np.random.default_rng(0)
logits = rng.normal(0.0, 2.0, size=(4, 6))
labels = np.array([0, 2, 4, 5])

# cluster map: classes {0,1,2} form cluster 0, {3,4,5} form cluster 1
halves = np.array([0, 0, 0, 1, 1, 1])
singletons = np.arange(6)
one_cluster = np.zeros(6, dtype=int)

ce, _ = nc.softmax_cross_entropy(logits, labels)
m_single, _ = cu.marginalized_cross_entropy(logits, labels, singletons)
m_halves, _ = cu.marginalized_cross_entropy(logits, labels, halves)
m_one, grad_one = cu.marginalized_cross_entropy(logits, labels, one_cluster)

print(f"softmax cross-entropy          : {ce:.6f}")
print(f"marginalized, singleton map    : {m_single:.6f}   (== CE, diff "
      f"{abs(ce - m_single):.2e})")
print(f"marginalized, two halves       : {m_halves:.6f}   (easier task, "
      "smaller loss)")
print(f"marginalized, everything merged: {m_one:.6f}   (max |grad| "
      f"{np.abs(grad_one).max():.1f})")

assert m_halves <= m_single
assert m_one == 0.0

# The curriculum uses the same idea through label transforms: relabel each
# sample with its cluster id and the coarse task becomes an ordinary
# classification problem over fewer classes.
coarse_labels = cu.transform_labels(labels, [[0, 1, 2], [3, 4, 5]])
print(f"\nfine labels  {labels.tolist()}")
print(f"coarse labels {coarse_labels.tolist()}  (cluster ids)")
