"""Backpropagation against central finite differences.

Random models and documents are drawn; points where a ReLU input is within
1e-3 of the kink or a tree logit is saturated are skipped.

Run: python demos/02_gradient_check.py
"""
import numpy as np

from nadetopic.model import joint_nll
from nadetopic.trainer import compute_gradients
from nadetopic.verify import finite_diff, gradcheck, random_case, relative_error

report = gradcheck(trials=50, hidden=6, J=12, classes=4, seed=0)
print(f"{report.tested} of {report.attempted} cases tested, {report.skipped} skipped")
for block, err in report.max_rel_error.items():
    print(f"  {block}: max relative error {err:.2e}")

# %% A single case in detail
params, doc = random_case(np.random.default_rng(7), hidden=4, J=8, classes=3)
disc, gen, total = joint_nll(params, doc, lam=0.5)
print(f"\ndocument with {doc.D} visual and {doc.L} annotation tokens: "
      f"disc={disc:.4f} gen={gen:.4f} total={total:.4f}")
grads, _ = compute_gradients(params, doc, 0.5)
numeric = finite_diff(params, doc, 0.5)
print("dL/dc backprop:", np.round(grads.c, 6))
print("dL/dc numeric: ", np.round(numeric.c, 6))
print("relative error:", relative_error(grads.c, numeric.c))
