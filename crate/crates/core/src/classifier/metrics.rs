//! Confusion matrix and per-class precision / recall.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simworld::catalog::NUM_CLASSES;

/// Rows are true classes, columns predicted classes; index = class id - 1.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: u8,
    pub support: u64,
    pub predicted: u64,
    /// `None` when nothing was predicted as this class.
    pub precision: Option<f64>,
    /// `None` when the class has no samples.
    pub recall: Option<f64>,
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self {
            counts: vec![vec![0; NUM_CLASSES]; NUM_CLASSES],
        }
    }

    pub fn record(&mut self, truth: u8, predicted: u8) {
        self.counts[truth as usize - 1][predicted as usize - 1] += 1;
    }

    pub fn get(&self, truth: u8, predicted: u8) -> u64 {
        self.counts[truth as usize - 1][predicted as usize - 1]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.correct() as f64 / t as f64
        }
    }

    pub fn row_sum(&self, truth: u8) -> u64 {
        self.counts[truth as usize - 1].iter().sum()
    }

    pub fn col_sum(&self, predicted: u8) -> u64 {
        self.counts.iter().map(|r| r[predicted as usize - 1]).sum()
    }

    pub fn class_metrics(&self) -> Vec<ClassMetrics> {
        (1..=NUM_CLASSES as u8)
            .map(|c| {
                let tp = self.get(c, c) as f64;
                let support = self.row_sum(c);
                let predicted = self.col_sum(c);
                ClassMetrics {
                    class_id: c,
                    support,
                    predicted,
                    precision: (predicted > 0).then(|| tp / predicted as f64),
                    recall: (support > 0).then(|| tp / support as f64),
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.len() != NUM_CLASSES || self.counts.iter().any(|r| r.len() != NUM_CLASSES) {
            return Err(Error::InvalidParameter(format!(
                "confusion matrix must be {NUM_CLASSES}x{NUM_CLASSES}"
            )));
        }
        Ok(())
    }

    /// Classes that appear as a truth or a prediction.
    pub fn active_classes(&self) -> Vec<u8> {
        (1..=NUM_CLASSES as u8)
            .filter(|&c| self.row_sum(c) > 0 || self.col_sum(c) > 0)
            .collect()
    }

    /// Plain-text table over the active classes: one row per true label,
    /// one column per predicted label, then per-class precision and recall.
    pub fn to_text(&self) -> String {
        let classes = self.active_classes();
        let mut s = String::new();
        let _ = writeln!(s, "# confusion matrix (rows: true label, columns: predicted label)");
        let _ = write!(s, "{:>6}", "true");
        for c in &classes {
            let _ = write!(s, " {c:>5}");
        }
        let _ = writeln!(s, " {:>6}", "total");
        for &t in &classes {
            let _ = write!(s, "{t:>6}");
            for &p in &classes {
                let _ = write!(s, " {:>5}", self.get(t, p));
            }
            let _ = writeln!(s, " {:>6}", self.row_sum(t));
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>6} {:>9} {:>9} {:>7}", "label", "precision", "recall", "support");
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        for m in self.class_metrics().into_iter().filter(|m| classes.contains(&m.class_id)) {
            let _ = writeln!(
                s,
                "{:>6} {:>9} {:>9} {:>7}",
                m.class_id,
                fmt(m.precision),
                fmt(m.recall),
                m.support
            );
        }
        let _ = writeln!(
            s,
            "\naccuracy {:.4} ({}/{})",
            self.accuracy(),
            self.correct(),
            self.total()
        );
        s
    }
}
