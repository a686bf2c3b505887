//! Evaluation metrics and the CSV tables they are reported in.

mod plan;
mod report;
mod text;

pub use plan::{collision_rate, l2_at_horizons, mae_behavior, L2Protocol, PlanMetrics, HORIZONS};
pub use report::{write_mae_csv, write_plan_csv, write_text_csv, MaeRow, PlanRow, TextRow};
pub use text::{bleu, lcs_len, metric_tokens, modified_precision, rouge, Prf, Rouge, TextMetrics};
