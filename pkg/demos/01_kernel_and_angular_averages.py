"""Collision kernels and their angular averages.

Builds the isotropic hard-sphere kernel and a family of power-singular
kernels, prints the angular-average table a_k against the Beta-function
closed form, and fits the large-k decay exponent, which tracks the
angular decay rate (d-1-alpha)/2.
"""

import numpy as np

from boltzkit.kernel import (KernelSpec, ak_closed_form, compute_ak,
                             fit_ak_exponent, hard_sphere, normalize_kernel)


def main():
    ker = hard_sphere(3)
    print("hard sphere d=3: a_k vs closed form 2/(k+1)")
    for k in (0.5, 1, 2, 5, 10, 25, 50):
        a = compute_ak(ker, float(k))
        c = ak_closed_form(ker, float(k))
        print(f"  k={k:>4}: quadrature {a:.12f}  closed {c:.12f}  "
              f"rel err {abs(a - c) / c:.2e}")

    print("\nfitted large-k exponent vs -(d-1-alpha)/2")
    for alpha in (0.0, 0.5, 1.0, 1.5):
        spec = KernelSpec(dimension=3, beta=1.0, profile="power_singular",
                          alpha=alpha)
        model = normalize_kernel(spec)
        slope = fit_ak_exponent(model, (50, 400))
        target = -(3 - 1 - alpha) / 2.0
        print(f"  alpha={alpha}: fitted {slope:+.4f}  target {target:+.4f}")


if __name__ == "__main__":
    main()
