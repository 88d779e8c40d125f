"""Bayesian updating on the Bloch ball after measuring X.

Three priors are compared.  On the y axis every state has <X> = 0, so
the data carry no information and the posterior equals the prior.  On
the whole ball the posterior peak sits between the prior's center and
the observed mean.

Run with ``python demos/bloch_posterior.py [out.csv]``.
"""

import sys

from gibbsfit import qubit_posterior

XBAR, N = 0.4, 100

for mode in ("y-axis", "x-axis", "full-ball"):
    post = qubit_posterior(mode, xbar=XBAR, N=N)
    x, y, z = post.mode()
    tv = post.total_variation(post.prior)
    print(f"{mode:9s}  mode = ({x:+.4f}, {y:+.4f}, {z:+.4f})  TV(prior, posterior) = {tv:.3g}")

# With many more copies the data overwhelm the prior.
sharp = qubit_posterior("x-axis", xbar=XBAR, N=10**5)
print(f"x-axis, N = 1e5: mode {sharp.mode()[0]:.4f}")

# The quantum Sanov exponent also sees the off-axis components, so on the
# y axis it is not flat.
sanov = qubit_posterior("y-axis", xbar=XBAR, N=N, likelihood="sanov")
print(f"y-axis with the Sanov exponent: TV(prior, posterior) = {sanov.total_variation(sanov.prior):.3g}")

if len(sys.argv) > 1:
    qubit_posterior("full-ball", xbar=XBAR, N=N, resolution=41).to_csv(sys.argv[1])
    print(f"wrote {sys.argv[1]}")
