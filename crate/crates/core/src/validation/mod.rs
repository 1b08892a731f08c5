//! Fault-injection campaigns that check computed ranges against observed
//! outcomes.

mod campaign;
mod dump;
mod metrics;

pub use campaign::{categorize_fault, run_campaign, CampaignResult, FaultRecord, Outcome, OutcomeCounts};
pub use dump::{read_campaign, write_campaign};
pub use metrics::{lvf_accuracy_correlation, spearman, validate, ValidationMetrics};
