//! Lacunary matrix sequences on the torus: exact orbit arithmetic,
//! trigonometric polynomials, Hardy–Krause variation, resonance counting,
//! discrepancy, martingale approximants and limit-theorem experiments.

pub mod erf;
pub mod error;
pub mod exactnum;
pub mod lacunary;
pub mod fourier;
pub mod variation;
pub mod diophantine;
pub mod discrepancy;
pub mod martingale;
pub mod quad;
pub mod stochastics;

pub use error::{LacunaError, Result};
pub use exactnum::{frac_apply, required_bits, sample_uniform, DyadicPoint, IntMatrix, DEFAULT_GUARD_BITS};
pub use lacunary::{check_hadamard_gap, GapRatio, GapReport, LacunarySequence, NormKind, SequenceKind, Verdict};
pub use fourier::{box_indicator_coeffs, lacunary_expand, sigma2, sigma2_streaming, FourierPoly};
pub use variation::{coeff_decay_ratio, hk_lower, CenteredBox, Evaluable, VariationReport};
pub use diophantine::{count_all, count_at, growth_profile, DioCount};
pub use discrepancy::{kh_check, star_disc, DiscResult, PointSet};
pub use martingale::{build_schedule, Approximant, BlockSchedule, ScheduleParams};
pub use stochastics::{
    clt_experiment, erdos_fortet_cdf, ks_distance, lil_discrepancy, lil_paths, normal_cdf, simulate_sums,
    ExperimentReport, LimitLaw,
};
