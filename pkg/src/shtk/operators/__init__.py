"""Kernels, discrete operators, commutators, maximal functions and kernel checks."""

from .apply import (DiscreteOperator, OperatorError, adjoint_apply, apply,
                    bind, binomial, commutator, commutator_matrix,
                    enlargement_constant, grand_maximal, local_grand_maximal,
                    maximal, truncated_maximal)
from .bessel import (BesselError, QuadratureError, bessel_heat_kernel,
                     bessel_i, bessel_i_asymptotic, bessel_i_reduced,
                     bessel_i_series, bessel_ive, bessel_riesz_kernel_1d,
                     bessel_riesz_kernel_hd, bracket, riesz_principal_constant)
from .checks import (companion_ball, kernel_smoothness_check, nondegeneracy_check,
                     sample_scales, size_certificate, volume_table)
from .kernels import (Kernel, KernelError, Profile, cauchy_kernel,
                      cauchy_szego_constant, cauchy_szego_kernel,
                      hilbert_kernel, make_kernel, parse_profile,
                      szego_branch_flags, szego_kernel, szego_volume)
