use std::io::Write;

use crate::quantize::Bin;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_metric: f64,
    pub val_loss: f64,
    pub val_metric: f64,
    pub seconds: f64,
}

/// Histogram of one quantized weight tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedHistogram {
    pub name: String,
    pub bins: Vec<Bin>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub test_metric: Option<f64>,
    pub histograms: Vec<NamedHistogram>,
}

pub const REPORT_HEADER: &str = "epoch,train_loss,train_metric,val_loss,val_metric,seconds";

impl TrainReport {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        for r in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.train_loss, r.train_metric, r.val_loss, r.val_metric, r.seconds
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }
}
