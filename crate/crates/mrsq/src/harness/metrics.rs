//! Run telemetry: one JSON line per environment step, a CSV summary of
//! evaluation sweeps, and the fault record written when training aborts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::planner::PlanStats;

/// Raw per-term world-model losses, before objective weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub total: f64,
    pub dynamics: f64,
    pub reward: f64,
    pub terminal: f64,
    pub preactivation: f64,
}

/// Means over one evaluation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_return: f64,
    pub mean_length: f64,
}

/// Everything recorded at one environment step. Fields are absent rather
/// than null when the step produced nothing for them: warmup steps carry no
/// losses, and episode fields appear only on the step that ended one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_return: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_loss: Option<LossRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSummary>,
}

impl MetricRecord {
    pub fn at(step: u64) -> Self {
        MetricRecord {
            step,
            episode_return: None,
            episode_length: None,
            model_loss: None,
            value_loss: None,
            policy_loss: None,
            plan: None,
            eval: None,
        }
    }
}

/// Appends metric records as JSON lines, enforcing strictly increasing
/// steps so a resumed run cannot silently interleave with stale output.
pub struct MetricWriter {
    out: BufWriter<File>,
    last_step: Option<u64>,
}

impl MetricWriter {
    /// Opens `path` for writing, truncating any previous content. `resume_at`
    /// seeds the monotonicity check when the writer continues a run whose
    /// earlier steps live in another file.
    pub fn create(path: &Path, resume_at: Option<u64>) -> std::io::Result<Self> {
        Ok(MetricWriter { out: BufWriter::new(File::create(path)?), last_step: resume_at })
    }

    pub fn write(&mut self, record: &MetricRecord) -> std::io::Result<()> {
        if let Some(last) = self.last_step {
            assert!(
                record.step > last,
                "metric steps must increase: {} after {}",
                record.step,
                last
            );
        }
        self.last_step = Some(record.step);
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Writes the evaluation summary CSV: one row per sweep.
pub struct SummaryWriter {
    out: BufWriter<File>,
}

impl SummaryWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "step,mean_return,mean_length")?;
        Ok(SummaryWriter { out })
    }

    pub fn write(&mut self, step: u64, eval: &EvalSummary) -> std::io::Result<()> {
        writeln!(self.out, "{},{},{}", step, eval.mean_return, eval.mean_length)
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Written next to the metrics when training aborts on repeated non-finite
/// losses, so the failure is inspectable after the process is gone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    /// Step at which the abort triggered.
    pub step: u64,
    /// Consecutive steps that produced a non-finite loss.
    pub consecutive: u32,
    /// Which objective went non-finite at the aborting step.
    pub message: String,
}

impl FaultRecord {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("fault serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_fields_are_omitted_from_the_json_line() {
        let record = MetricRecord::at(17);
        let line = serde_json::to_string(&record).unwrap();
        assert_eq!(line, "{\"step\":17}");
    }

    #[test]
    fn records_round_trip_through_json() {
        let mut record = MetricRecord::at(12_000);
        record.value_loss = Some(0.125);
        record.model_loss = Some(LossRecord {
            total: 1.5,
            dynamics: 0.05,
            reward: 0.4,
            terminal: 0.01,
            preactivation: 2.0,
        });
        record.eval = Some(EvalSummary { mean_return: -133.7, mean_length: 200.0 });
        let line = serde_json::to_string(&record).unwrap();
        let back: MetricRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, record);
    }

    #[test]
    fn writer_rejects_non_increasing_steps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let mut writer = MetricWriter::create(&path, None).unwrap();
        writer.write(&MetricRecord::at(1)).unwrap();
        writer.write(&MetricRecord::at(2)).unwrap();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            writer.write(&MetricRecord::at(2)).unwrap();
        }));
        assert!(result.is_err());
    }

    #[test]
    fn resumed_writer_continues_the_step_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let mut writer = MetricWriter::create(&path, Some(100)).unwrap();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            writer.write(&MetricRecord::at(100)).unwrap();
        }));
        assert!(result.is_err());
    }

    #[test]
    fn summary_rows_print_floats_that_parse_back_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        let mut writer = SummaryWriter::create(&path).unwrap();
        let mean_return = -133.73205080756887;
        writer.write(5_000, &EvalSummary { mean_return, mean_length: 200.0 }).unwrap();
        writer.flush().unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,mean_return,mean_length"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "5000");
        assert_eq!(row[1].parse::<f64>().unwrap(), mean_return);
    }
}
