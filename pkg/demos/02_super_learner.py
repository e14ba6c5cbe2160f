"""Super Learner: cross-validated convex combination of candidate learners."""

import warnings

import numpy as np

from mtpshift import default_library, ensemble_predict, fit_super_learner
from mtpshift.learners import REGRESSION

rng = np.random.default_rng(0)
n = 600
X = rng.uniform(-2, 2, (n, 2))
y = np.sin(2 * X[:, 0]) + 0.5 * X[:, 1] + 0.3 * rng.standard_normal(n)

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    model = fit_super_learner(X, y, default_library(REGRESSION), V=5, seed=1)

print(f"{'learner':<10} {'cv risk':>9} {'weight':>7}")
for name, w in zip(model.names, model.weights):
    print(f"{name:<10} {model.cv_risks[name]:9.4f} {w:7.3f}")
print(f"{'ensemble':<10} {model.ensemble_cv_risk:9.4f}")

X_new = np.array([[0.0, 0.0], [np.pi / 4, 1.0]])
print("predictions at", X_new.tolist(), "->", np.round(ensemble_predict(model, X_new), 3))
