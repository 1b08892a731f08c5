//! Vulnerability value ranges: gradient screening, threshold search,
//! intersection over inputs, and bitflip mapping into vulnerability factors.

mod analysis;
mod bitmap;
mod config;
mod dump;
mod ranges;
mod screen;
mod search;

pub use analysis::{analyze, input_bounds, with_workers, AnalysisReport, AnalysisSummary, NeuronAnalysis, NeuronStats};
pub use bitmap::{bitflip_map, LayerTally, NeuronTally, VulnerabilityFactors};
pub use config::{AnalysisConfig, MAX_SEARCH_EVALS};
pub use dump::{
    format_f32, parse_f32, read_ranges, read_rows, write_bit_factors, write_layer_factors, write_neuron_factors,
    write_ranges, BitFactorRow, LayerFactorRow, NeuronFactorRow, RangeRecord,
};
pub use ranges::{
    classify_range_case, last_layer_ranges, neuron_ranges, Category, InputBounds, NeuronVulnerability, RangeCase,
    SideCase,
};
pub use screen::{decide, gradient_screen, Probe, ScreenDecision, ScreenResult};
pub use search::{search_threshold, SearchInterval, SearchOutcome, Sign, Threshold};
