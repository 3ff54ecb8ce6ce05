"""Norm growth of the raw and transformed NLS flows; writes CSV series per amplitude.

Takes about a minute.  Plot h_s_norm against t from the CSV files.
"""
import numpy as np

from parabnf.egorov_bnf import bnf_pipeline
from parabnf.harness import energy_constant, export, simulate
from parabnf.models import nls_system
from parabnf.torus import random_field

system = nls_system(N=64)
tr, transformed = bnf_pipeline(system, 1, K=12)
base = random_field(64, np.random.default_rng(0), decay=6.0, s=4, r=1.0).coeffs

for r in (0.05, 0.025):
    raw = simulate(system, r * base, 20.0, 1e-2, record_every=10)
    new = simulate(transformed, tr.forward(r * base), 20.0, 1e-2, record_every=10)
    export(raw, "csv", f"raw_r{r}.csv")
    export(new, "csv", f"bnf_r{r}.csv")
    growth = np.max(np.abs(raw.h_s_norm / raw.h_s_norm[0] - 1))
    print(f"r = {r}: max relative H^4 change {growth:.2e}, energy constant {energy_constant(new):.3e}")
