"""Heat-kernel semigroups, large deviations and entropic transport on discrete
metric measure spaces.

``HEATLDP_THREADS`` caps the BLAS/OpenMP thread count when set before numpy
is first imported.
"""

import os as _os

if _os.environ.get("HEATLDP_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["HEATLDP_THREADS"])

from heatldp.mmspace import (
    DiscreteSpace,
    SpaceError,
    build_space,
    dist_to_set,
    lipschitz_constant,
    local_slope,
)
from heatldp.heat import (
    Generator,
    HeatOperator,
    KernelMatrix,
    apply_heat,
    assemble_generator,
    circle_kernel_oracle,
    heat_kernel_matrix,
    spectral_decomposition,
    validate_kernel,
)

__version__ = "0.1.0"

__all__ = [
    "DiscreteSpace",
    "Generator",
    "HeatOperator",
    "KernelMatrix",
    "SpaceError",
    "apply_heat",
    "assemble_generator",
    "build_space",
    "circle_kernel_oracle",
    "dist_to_set",
    "heat_kernel_matrix",
    "lipschitz_constant",
    "local_slope",
    "spectral_decomposition",
    "validate_kernel",
]
