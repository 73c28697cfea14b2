use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{RanError, Result};

/// A named series of `(iteration, value)` points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub name: String,
    pub points: Vec<(usize, f64)>,
}

impl Curve {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, iteration: usize, value: f64) {
        self.points.push((iteration, value));
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn first(&self) -> Option<f64> {
        self.points.first().map(|p| p.1)
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    /// Means of consecutive non-overlapping windows (the last may be shorter).
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        self.values()
            .chunks(window.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        writeln!(buf, "iteration,value").expect("write to memory");
        for (i, v) in &self.points {
            writeln!(buf, "{i},{v:?}").expect("write to memory");
        }
        std::fs::write(path, buf).map_err(|e| RanError::io(path, e))
    }
}
