"""Backpropagation through the unrolled filters against finite differences.

Builds a small two-layer model of each kind, compares the reverse-mode
gradient of the cross-entropy with central differences, then shows that a
deliberately wrong gradient is caught.

    python demos/gradient_check.py
"""

from shiftnets.models import model_backward
from shiftnets.training import gradient_check_suite

results = gradient_check_suite(layers=(2,), orders=(3,), instances=5)
for r in results:
    print(f"{r['kind']:>5} {r['activation']:>5}  worst relative error {r['worst_rel_error']:.2e}")


def flipped(model, s, cache, g):
    return -model_backward(model, s, cache, g)


bad = gradient_check_suite(kinds=("rsn",), layers=(1,), orders=(2,), instances=1,
                           activations=("tanh",), grad_fn=flipped)
print("sign-flipped gradient:", f"{bad[0]['worst_rel_error']:.2f}")
