"""satiqc: robust H-infinity synthesis for saturated uncertain LFT plants.

A toolkit for mixed integral-quadratic-constraint controller synthesis:
multiplier construction and hard J-spectral factorization, loop-transformed
plant interconnection, scaled-bounded-real-lemma LMIs, and closed-loop
validation by simulation.
"""

__version__ = "0.1.0"

from .statespace import (StateSpace, SignatureMatrix, eigenvalues, is_hurwitz,
                         series, parallel, minimal_realization)
from .riccati import solve_are, are_residual
from .multipliers import (Multiplier, make_sector_multiplier, make_popov_multiplier,
                          make_zames_falb_multiplier, make_transformed_sector_multiplier,
                          impulse_response_l1_norm, default_zf_filter)
from .factorization import (FactoredIQC, TriangularFactor, UncertaintyBlock,
                            j_spectral_factorize, to_triangular,
                            proportional_sector_factor, make_uncertainty_iqc,
                            check_hard_iqc)
from .plant import (UncertaintyStructure, SaturatedLFTPlant, AugmentedPlant,
                    ClosedLoop, saturate, deadzone, loop_transform, attach_filters)
from .lmi import LmiProblem, AffExpr, bmat, he
from .synthesis import (SynthesisOptions, SynthesisResult, build_synthesis_lmi,
                        build_analysis_lmi, add_pole_region, build_antiwindup_lmi,
                        solve_synthesis, solve_analysis, solve_antiwindup,
                        analysis_certificate_margin)
from .simulate import (Scenario, SimTrace, simulate, empirical_l2_gain,
                       check_dissipation, sinusoid, step_signal)
from .config import ProblemConfig, ConfigError, load_config
