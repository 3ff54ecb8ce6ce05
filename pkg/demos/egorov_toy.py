"""Constant-coefficient reduction for the toy model i Op((1 + |u|^2)(i xi)^2) u."""
from parabnf.harness import egorov_demo

for r in (0.005, 0.01, 0.02):
    out = egorov_demo(r, N=16, n_iters=2)
    print(f"r = {r:<6g} m_b = {out['m_b']:.6e}  closed form = {out['closed_form']:.6e}  "
          f"variance {out['variance'][0]:.2e} -> {out['variance'][-1]:.2e}")
