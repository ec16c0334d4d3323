//! Scoring and analysis of model predictions.

mod consistency;
mod curve;
mod recall;
mod score;
mod table;

pub use consistency::{consistency_split, majority_table, majority_vote, ConsistencySubsets, VSource, VoteError};
pub use curve::{pr_curve, CurveError, CurveReport, PrPoint};
pub use recall::{delta_recall, hard_metrics, HardMetrics, RecallError, RecallRow};
pub use score::{entailment_score, EntScore, ScoreError, ScoredPrediction};
pub use table::{conditional_table, ConditionalError, ConditionalRow, ConditionalTable, Conditioner, F_LOSE, F_WIN, V_OTHER, V_TRUE};
