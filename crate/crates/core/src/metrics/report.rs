//! Result tables as CSV.

use std::path::Path;

use super::{PlanMetrics, TextMetrics};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub arm: String,
    pub nav: bool,
    pub concat: bool,
    pub metrics: PlanMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextRow {
    pub arm: String,
    pub metrics: TextMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaeRow {
    pub method: String,
    pub mae_angle: f64,
    pub mae_speed: f64,
}

fn f(v: f64) -> String {
    format!("{v:.4}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_plan_csv(path: &Path, rows: &[PlanRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["arm", "nav", "concat", "L2_1s", "L2_2s", "L2_3s", "Col_1s", "Col_2s", "Col_3s"])?;
    for r in rows {
        let m = &r.metrics;
        let mut rec = vec![r.arm.clone(), r.nav.to_string(), r.concat.to_string()];
        rec.extend(m.l2.iter().chain(&m.collision).map(|v| f(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_text_csv(path: &Path, rows: &[TextRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["arm", "ROUGE_1", "ROUGE_2", "ROUGE_L", "BLEU_1", "BLEU_2", "BLEU_3"])?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.arm.clone(),
            f(m.rouge1.f1),
            f(m.rouge2.f1),
            f(m.rouge_l.f1),
            f(m.bleu[0]),
            f(m.bleu[1]),
            f(m.bleu[2]),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_mae_csv(path: &Path, rows: &[MaeRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method", "MAE_angle", "MAE_speed"])?;
    for r in rows {
        w.write_record([r.method.clone(), f(r.mae_angle), f(r.mae_speed)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
