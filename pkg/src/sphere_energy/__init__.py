"""Multivariate geometric energies on spheres.

Kernels are powers of the parallelepiped volume V and the simplex volume A
of k input points; energies are their averages over discrete configurations
or integrals against probability measures.
"""
from ._accel import get_backend, set_backend, use_backend
from .energy import (EnergyEstimate, closed_form_max, discrete_energy, energy_integral,
                     jensen_bound, two_input_phase_report)
from .gegenbauer import (GegenbauerSeries, eval_gegenbauer, expand_in_gegenbauer,
                         maclaurin_sign_test, schoenberg_pd_test)
from .geomcore import (GramBundle, Point, PointConfig, face_functional, gram,
                       volume_parallelepiped, volume_simplex, volume_simplex_edge_form)
from .kernels import (MultiKernel, PotentialSlice, kernel_A_pow, kernel_frame, kernel_log,
                      kernel_V_pow, lift_kernel, slice_kernel, symmetrize)
from .measures import (DiscreteMeasure, Mixture, MomentReport, UniformSphere, lift_psi,
                       make_named_measure, moments, project_pi, sample)
from .optimizer import (AscentConfig, AscentResult, gradient, local_max_certificate,
                        maximize_discrete, psd_empirical)
from .sdp import (PsdCoefficientMatrix, YIndex, eval_Q, eval_Q_geometric, eval_S, eval_Y,
                  g_weighted_kernel, identity_check, trace_kernel)
from .specs import parse_kernel

__version__ = "0.1.0"
