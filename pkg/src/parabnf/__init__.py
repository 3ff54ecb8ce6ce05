"""Para-differential calculus on the torus and Birkhoff normal forms for quasi-linear Hamiltonian PDEs."""
from .torus import FourierField, random_field, sobolev_norm
from .quantization import ParaOp, op_bw, op_standard, block_op_bw
from .calculus import compose, poisson, smoothing_order
from .egorov_bnf import (FrequencySpec, HomogeneousTensor, BnfTransform, bnf_pipeline,
                         check_nonresonance, homological_smoothing_step, homological_symbol_step,
                         resonant_project)
from .models import benjamin_ono_system, beam_system, nls_system

__version__ = "0.1.0"

__all__ = ["FourierField", "random_field", "sobolev_norm", "ParaOp", "op_bw", "op_standard", "block_op_bw",
           "compose", "poisson", "smoothing_order", "FrequencySpec", "HomogeneousTensor", "BnfTransform",
           "bnf_pipeline", "check_nonresonance", "homological_smoothing_step", "homological_symbol_step",
           "resonant_project", "benjamin_ono_system", "beam_system", "nls_system"]
