"""A tour of the tape: forward values, reverse-mode gradients, and the
finite-difference audit that keeps the adjoints honest."""

import numpy as np

import triadic.autodiff as ad

# Build a loss by running ordinary numpy-ish code against a tape.  Every
# op records itself; backward() replays the records in reverse.
tape = ad.Tape()
x = tape.leaf(np.array([1.0, 2.0, 3.0]))
w = tape.leaf(np.array([[0.5, 0.0, -0.5], [1.0, 1.0, 1.0]]))

h = ad.nonlinearity(ad.matvec(w, x), "tanh")
loss = ad.sq_l2_norm(h)
print("loss value:", float(loss.value))

grads = tape.backward(loss)
print("d loss / d x:", grads[x.id])
print("d loss / d w:\n", grads[w.id])

# The same computation as a closure, handed to the checker.  grad_check
# perturbs every coordinate with central differences and compares.
def build_loss(tape, leaves):
    h = ad.nonlinearity(ad.matvec(leaves["w"], leaves["x"]), "tanh")
    return ad.sq_l2_norm(h)

params = {"x": np.array([1.0, 2.0, 3.0]),
          "w": np.array([[0.5, 0.0, -0.5], [1.0, 1.0, 1.0]])}
report = ad.grad_check(build_loss, params)
print(f"gradient audit: pass={report['pass']} "
      f"max relative error {report['max_rel_error']:.2e}")

# To show the audit has teeth, deliberately corrupt one adjoint.  Inside
# the context manager the tanh backward rule has the wrong sign, and the
# checker notices immediately.
with ad.inject_tanh_adjoint_bug():
    report = ad.grad_check(build_loss, params)
print(f"with a sabotaged tanh adjoint: pass={report['pass']} "
      f"max relative error {report['max_rel_error']:.2e}")
