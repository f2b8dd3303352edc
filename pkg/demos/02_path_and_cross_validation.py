"""The penalty path, the strong rule and cross-validation.

The solver walks a geometric grid of penalties from lambda_max (where only
the intercepts survive) down to a small fraction of it.  Each solve is warm
started from the previous one, and the sequential strong rule skips
predictors that are unlikely to enter; a KKT sweep re-admits any that were
wrongly skipped.  K-fold cross-validation on the unsmoothed check loss then
picks the penalty.

Run:  python demos/02_path_and_cross_validation.py
"""
import numpy as np

from gqlasso.design import AugmentedView
from gqlasso.path import build_path, cross_validate
from gqlasso.simulate import SimScenario, generate

taus = (0.1, 0.5, 0.9)
data = generate(SimScenario(n=300, p=12, error_kind="t2", seed=3))
view = AugmentedView(data, len(taus))

path = build_path(view, taus, m=40)
print(f"lambda_max = {path.lambda_max:.4f}")
print(" step   lambda   screened-in  re-entries  active groups")
for t in range(0, path.lambdas.size, 4):
    fit = path.fits[t]
    active = int(np.sum(np.any(fit.coefficients[1:] != 0, axis=1)))
    print(f" {t:4d}  {path.lambdas[t]:7.4f}  {path.screened[t]:11d}  {path.reentries[t]:10d}  {active:13d}")
print("every solve converged:", path.all_converged)
print()

cv = cross_validate(data, taus, folds=5, m=40)
best = cv.index_min
print(f"CV picks lambda = {cv.lambda_min:.4f} (grid index {best})")
lo = max(best - 3, 0)
for i in range(lo, min(best + 4, cv.lambda_grid.size)):
    mark = "  <- minimum" if i == best else ""
    print(f"  lambda {cv.lambda_grid[i]:.4f}  mean loss {cv.mean_cv_loss[i]:.4f} "
          f"(se {cv.se_cv_loss[i]:.4f}){mark}")
