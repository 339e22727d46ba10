//! Finite populations, sampling designs, Hájek estimation and the CSV
//! exchange format.

pub mod estimation;
pub mod io;
pub mod population;
pub mod sample;
pub mod sampling;

pub use estimation::{design_diagnostics, hajek_distribution, kish_n_eff, DesignDiagnostics};
pub use population::{FinitePopulation, PsuKey};
pub use sample::{SampleDesign, SurveySample};
pub use sampling::{draw_sample, inclusion_probabilities, ups_systematic, DesignSpec};
