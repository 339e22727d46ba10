//! Simulation study: synthetic populations, survey draws and the SDRF versus
//! naive-forest benchmark.

pub mod dgp;
pub mod experiment;

pub use dgp::{
    apply_survey, calibrated_plan, generate_population, measure_of_size, true_conditional,
    PopulationConfig, SurveyPlan, TrueConditional,
};
pub use experiment::{run_experiment, ExperimentConfig, Method, MetricsReport};
