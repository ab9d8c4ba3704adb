"""Heat-kernel measurement of KPZ scaling exponents on a random conformal lattice.

Sample log-correlated Gaussian fields, build Wick-ordered chaos measures and
the covariant lattice Laplacian they induce, and measure how deterministic
fractals scale under the random metric -- comparing against the closed-form
quadratic relation between Euclidean and quantum exponents.
"""

from .gff import (FieldSample, coincident_variance, read_field,
                  sample_boundary_gff, sample_bulk_gff, write_field)
from .fractals import (FractalMask, boundary_cantor, box_counting_dimension,
                       cantor_dust, export_mask, full_domain, sierpinski_carpet)
from .heat import (HeatState, McEvolution, MetricLaplacian, build_operator,
                   equilibrium_average, evolve_exact, evolve_mc,
                   fractal_average, fractal_average_mc, resolvent_power)
from .kpz import (KpzContext, fixed_point, forward_kpz, gamma_from_c,
                  inverse_kpz, predicted_singularity, replica_exponent,
                  wick_pair_exponent)
from .lattice import BoundaryLattice, TorusLattice
from .measures import (ChaosParameters, QuantumMeasure, build_measure,
                       quantum_box_counting, restrict_to_mask)
from .scaling import (MellinResult, NoPlateauError, ScalingEstimate,
                      ScalingSeries, difference_series, fit_power_law,
                      geometric_times, local_slopes, mellin_transform)
from .experiments import (ExperimentConfig, ExperimentReport, emit_report,
                          run_experiment)

__version__ = "0.1.0"
