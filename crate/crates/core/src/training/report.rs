use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    /// Batch loss before the update.
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: serde_json::Value,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochSummary>,
}

impl TrainReport {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            config,
            steps: Vec::new(),
            epochs: Vec::new(),
        }
    }

    pub(crate) fn push_step(&mut self, record: StepRecord) {
        self.steps.push(record);
    }

    pub(crate) fn close_epoch(&mut self, epoch: usize) {
        let steps: Vec<&StepRecord> = self.steps.iter().filter(|s| s.epoch == epoch).collect();
        let n = steps.len();
        let mean_loss = if n == 0 {
            0.0
        } else {
            steps.iter().map(|s| s.loss).sum::<f64>() / n as f64
        };
        self.epochs.push(EpochSummary {
            epoch,
            steps: n,
            mean_loss,
            seconds: steps.iter().map(|s| s.seconds).sum(),
        });
    }

    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// `step\tepoch\tloss` lines. Losses print in shortest round-trip form,
    /// so identical runs give byte-identical files.
    pub fn write_loss_log(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(w, "step\tepoch\tloss").map_err(io)?;
        for s in &self.steps {
            writeln!(w, "{}\t{}\t{:?}", s.step, s.epoch, s.loss).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// One JSON object per step including wall-clock seconds.
    pub fn write_step_log(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        let io = |e| Error::io(path, e);
        for s in &self.steps {
            let line = serde_json::to_string(s).expect("step record serializes");
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let summary = serde_json::json!({
            "config": self.config,
            "n_steps": self.steps.len(),
            "epochs": self.epochs,
            "final_loss": self.steps.last().map(|s| s.loss),
        });
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}
