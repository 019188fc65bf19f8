//! Training metrics CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::Result;

pub const METRICS_HEADER: &str = "step,episodic_reward_mean,episodic_length_mean,episodic_cost_mean,success_rate_reachable,success_rate_unreachable,success_rate_nonexistent,loss_clip,loss_vf,entropy";

/// One evaluation-point row.
#[derive(Debug, Clone, Copy)]
pub struct MetricsRow {
    pub step: u64,
    pub episodic_reward_mean: f64,
    pub episodic_length_mean: f64,
    pub episodic_cost_mean: f64,
    pub success_rate_reachable: f64,
    pub success_rate_unreachable: f64,
    pub success_rate_nonexistent: f64,
    pub loss_clip: f64,
    pub loss_vf: f64,
    pub entropy: f64,
}

pub struct MetricsWriter {
    w: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{METRICS_HEADER}")?;
        Ok(Self { w })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(
            self.w,
            "{},{},{},{},{},{},{},{},{},{}",
            row.step,
            row.episodic_reward_mean,
            row.episodic_length_mean,
            row.episodic_cost_mean,
            row.success_rate_reachable,
            row.success_rate_unreachable,
            row.success_rate_nonexistent,
            row.loss_clip,
            row.loss_vf,
            row.entropy
        )?;
        self.w.flush()?;
        Ok(())
    }
}
