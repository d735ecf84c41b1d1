//! Monte Carlo harness: empirical size and power grids, the ACTG175
//! emulation, and CSV output.
//!
//! Replicates run in parallel, each on its own random substream, and results
//! are reduced in index order, so output never depends on the thread count.

pub mod data;
pub mod emulation;
pub mod experiments;
pub mod output;
pub mod scenario;

pub use data::{generate_two_sample_data, MomentSummary, NormalSampleSummary, TwoSampleSummary};
pub use emulation::{
    actg_arms, cd4_bounds, parse_emulation_config, run_emulation_actg, ActgArm, AgreementRow, EmulationConfig, Outcome,
};
pub use experiments::{run_cells, run_grids, run_power_curve, run_size_experiment, CellCounts};
pub use output::{read_csv, to_csv_bytes, write_csv, CsvRow, EmulationRow, RateRow};
pub use scenario::{load_grids, parse_grids, Clamping, Endpoint, ParamPair, ScenarioGrid};
