use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform binning of a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    start: f64,
    end: f64,
    bins: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(end > start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "time grid needs bins > 0 and start < end (got {bins} bins over [{start}, {end}])"
            )));
        }
        Ok(Self { start, end, bins })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> usize {
        self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.bins == 0
    }

    pub fn width(&self) -> f64 {
        (self.end - self.start) / self.bins as f64
    }

    pub fn edge(&self, k: usize) -> f64 {
        if k == self.bins {
            self.end
        } else {
            self.start + k as f64 * self.width()
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins).map(|k| self.edge(k)).collect()
    }

    pub fn center(&self, k: usize) -> f64 {
        self.start + (k as f64 + 0.5) * self.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|k| self.center(k)).collect()
    }

    /// Bin holding `t`; the right edge belongs to the last bin.
    pub fn index(&self, t: f64) -> Option<usize> {
        if !(t >= self.start && t <= self.end) {
            return None;
        }
        let k = ((t - self.start) / self.width()) as usize;
        Some(k.min(self.bins - 1))
    }

    /// Same grid up to relative tolerance `tol` on the edges.
    pub fn matches(&self, other: &TimeGrid, tol: f64) -> bool {
        let scale = self.end.abs().max(self.start.abs()).max(f64::MIN_POSITIVE);
        self.bins == other.bins
            && (self.start - other.start).abs() <= tol * scale
            && (self.end - other.end).abs() <= tol * scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing() {
        let g = TimeGrid::new(0.0, 6.0, 240).unwrap();
        assert_eq!(g.width(), 0.025);
        assert_eq!(g.index(0.0), Some(0));
        assert_eq!(g.index(6.0), Some(239));
        assert_eq!(g.index(0.0251), Some(1));
        assert_eq!(g.index(-1e-9), None);
        assert_eq!(g.index(f64::NAN), None);
        assert_eq!(g.edges().len(), 241);
        assert!(TimeGrid::new(1.0, 1.0, 3).is_err());
    }
}
