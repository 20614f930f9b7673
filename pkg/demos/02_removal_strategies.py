"""How the feature-removal rule changes what attributions mean.

Two stories on a 3-feature linear model with a correlated feature pair:

1. With a zero baseline, recoding a binary feature (flipping which category
   is zero) changes its attribution even though the model is unchanged; a
   mean baseline is invariant to the recoding.
2. A feature the model never uses (zero coefficient) gets zero credit under
   marginal removal but substantial credit under Gaussian-conditional
   removal when it is correlated with a used feature.
"""

import numpy as np

import shaplab as sl

# --- story 1: the meaning of zero ------------------------------------------
# f(x) = 10*x0 + 10*x1 + 10*x2 with x2 a binary category
beta = np.array([10.0, 10.0, 10.0])
model_a = sl.LinearModel(beta, 0.0)
x_e_a = np.array([1.0, 2.0, 0.0])  # category encoded as 0

# recode the category: new feature x2' = 1 - x2, fold the shift into beta0
model_b = sl.LinearModel(np.array([10.0, 10.0, -10.0]), 10.0)
x_e_b = np.array([1.0, 2.0, 1.0])
assert model_a.predict(x_e_a) == model_b.predict(x_e_b)

zero = np.zeros((1, 3))
att_a = sl.linear_shap(model_a, x_e_a, zero)
att_b = sl.linear_shap(model_b, x_e_b, zero)
print("zero baseline, category feature attribution:")
print(f"  encoding A: phi2 = {att_a.phi[2]:+.1f}   encoding B: phi2 = {att_b.phi[2]:+.1f}")

mean_a = np.array([[0.5, 1.0, 0.5]])  # population means under encoding A
mean_b = np.array([[0.5, 1.0, 0.5]])  # x2' = 1 - x2 has mean 1 - 0.5 = 0.5
att_a = sl.linear_shap(model_a, x_e_a, mean_a)
att_b = sl.linear_shap(model_b, x_e_b, mean_b)
print("mean baseline, category feature attribution:")
print(f"  encoding A: phi2 = {att_a.phi[2]:+.1f}   encoding B: phi2 = {att_b.phi[2]:+.1f}")

# --- story 2: marginal vs conditional on correlated features ----------------
beta = np.array([1.0, 1.0, 0.0])  # feature 2 unused by the model
model = sl.LinearModel(beta, 0.0)
sigma = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.99], [0.0, 0.99, 1.0]])
dist = sl.GaussianDistribution(np.zeros(3), sigma)
x_e = np.ones(3)

marginal = sl.linear_shap(model, x_e, np.zeros((1, 3)))
_, explain = sl.correlated_linear_shap(model, dist)
conditional = explain(x_e)

print("\nunused-but-correlated feature (x2, corr 0.99 with x1):")
print(f"  marginal:    {np.round(marginal.phi, 3)}")
print(f"  conditional: {np.round(conditional.phi, 3)}")
print("marginal reads the model's functional form; conditional spreads credit")
print("across statistically indistinguishable features.")
