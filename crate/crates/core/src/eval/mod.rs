//! Interaction logs, 5-core filtering, leave-one-out splits, full-ranking
//! metrics, the paired bootstrap, synthetic worlds and explanations.

mod bootstrap;
mod explain;
mod log;
mod metrics;
mod ranking;
pub mod synth;

pub use bootstrap::{marker, paired_bootstrap, DEFAULT_RESAMPLES};
pub use explain::{cosine, explain, Explanation, SharedFacet};
pub use log::{five_core_filter, k_core_filter, leave_one_out_split, Interaction, InteractionLog, Split, UserSplit};
pub use metrics::{hr_at_k, ndcg_at_k, rank_of, summarize, CutoffMetrics, DEFAULT_KS};
pub use ranking::{full_ranking_eval, rank_cases, HrNdcg, MetricReport, Scorer, StaticScorer};
pub use synth::{generate_synthetic, SyntheticConfig, SyntheticWorld};
