"""Infinite-order kernel neural operator library.

Kronecker-structured resolvent operators on a latent grid, a learnable
multi-scale product kernel, a desk-scale operator network with analytic
gradients, synthetic PDE datasets with independent oracles, and a CLI
benchmark/verification harness.
"""

__version__ = "0.1.0"
