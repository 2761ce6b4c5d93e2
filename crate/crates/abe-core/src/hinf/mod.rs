//! H-infinity norm computation and controller synthesis for discrete-time
//! systems.

mod norm;
mod riccati;
mod synth;

pub use norm::{bilinear_to_continuous, grid_peak, hinf_norm, FrequencyEvaluator, NORM_GRID};
pub use riccati::{dare_sda, DareSolution};
pub use synth::{hinf_synthesize, HinfProblem, HinfSolution, SynthesisCandidate};
