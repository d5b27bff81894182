//! Confusion counts and accuracy measures for binary change maps.

use serde::{Deserialize, Serialize};

use crate::detect::ChangeMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    /// Changed pixels detected as changed.
    pub m_a: u64,
    /// Unchanged pixels detected as unchanged.
    pub m_c: u64,
    /// Pixels detected as changed.
    pub detected: u64,
    /// Pixels that truly changed.
    pub changed: u64,
    pub total: u64,
}

impl ConfusionCounts {
    pub fn false_alarms(&self) -> u64 {
        self.detected - self.m_a
    }

    pub fn misses(&self) -> u64 {
        self.changed - self.m_a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ra: f64,
    pub rp: f64,
    pub rr: f64,
    pub ka: f64,
    pub pe: f64,
}

impl MetricsReport {
    /// `Ra,Rp,Rr,Ka` in percent with two decimals.
    pub fn csv_line(&self) -> String {
        format!(
            "{:.2},{:.2},{:.2},{:.2}",
            100.0 * self.ra,
            100.0 * self.rp,
            100.0 * self.rr,
            100.0 * self.ka
        )
    }

    pub const CSV_HEADER: &'static str = "Ra,Rp,Rr,Ka";

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn confusion(pred: &ChangeMap, truth: &ChangeMap) -> Result<ConfusionCounts> {
    if pred.height() != truth.height() || pred.width() != truth.width() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.height(),
            pred.width(),
            truth.height(),
            truth.width()
        )));
    }
    let mut c = ConfusionCounts {
        total: pred.bits().len() as u64,
        ..Default::default()
    };
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        c.detected += p as u64;
        c.changed += t as u64;
        c.m_a += (p && t) as u64;
        c.m_c += (!p && !t) as u64;
    }
    Ok(c)
}

/// Accuracy, precision, recall (`m_a / M_c`), Cohen's kappa and its chance term.
pub fn compute_metrics(c: &ConfusionCounts) -> Result<MetricsReport> {
    if c.total == 0 {
        return Err(Error::InvalidArgument("metrics need at least one pixel".into()));
    }
    if c.m_a > c.detected.min(c.changed) || c.m_a + c.false_alarms() + c.misses() + c.m_c != c.total {
        return Err(Error::InvalidArgument(format!("inconsistent confusion counts {c:?}")));
    }
    let m = c.total as f64;
    let ra = (c.m_a + c.m_c) as f64 / m;
    let rp = match (c.detected, c.changed) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        (d, _) => c.m_a as f64 / d as f64,
    };
    let rr = if c.changed == 0 { 1.0 } else { c.m_a as f64 / c.changed as f64 };
    let (md, mc) = (c.detected as f64, c.changed as f64);
    let pe = (md * mc + (m - md) * (m - mc)) / (m * m);
    let ka = if pe == 1.0 { 0.0 } else { (ra - pe) / (1.0 - pe) };
    Ok(MetricsReport { ra, rp, rr, ka, pe })
}

pub fn evaluate(pred: &ChangeMap, truth: &ChangeMap) -> Result<MetricsReport> {
    compute_metrics(&confusion(pred, truth)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(bits: &[u8], w: usize) -> ChangeMap {
        ChangeMap::new(bits.len() / w, w, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn perfect_and_complement() {
        let t = map(&[1, 0, 0, 1, 1, 0], 3);
        let c = confusion(&t, &t).unwrap();
        assert_eq!((c.m_a, c.detected, c.misses()), (3, 3, 0));
        let r = compute_metrics(&c).unwrap();
        assert_eq!((r.ra, r.rp, r.rr, r.ka), (1.0, 1.0, 1.0, 1.0));
        let c = confusion(&t.complement(), &t).unwrap();
        assert_eq!((c.m_a, c.m_c), (0, 0));
    }

    #[test]
    fn all_change_against_half() {
        let c = ConfusionCounts { m_a: 50, m_c: 0, detected: 100, changed: 50, total: 100 };
        let r = compute_metrics(&c).unwrap();
        assert_eq!((r.ra, r.rp, r.rr, r.pe, r.ka), (0.5, 0.5, 1.0, 0.5, 0.0));
    }

    #[test]
    fn small_worked_case() {
        let c = ConfusionCounts { m_a: 1, m_c: 2, detected: 1, changed: 2, total: 4 };
        let r = compute_metrics(&c).unwrap();
        assert_eq!((r.ra, r.rp, r.rr, r.pe, r.ka), (0.75, 1.0, 0.5, 0.5, 0.5));
    }

    #[test]
    fn degenerate_conventions() {
        let empty = map(&[0, 0, 0, 0], 2);
        let r = evaluate(&empty, &empty).unwrap();
        assert_eq!((r.rp, r.rr, r.ka), (1.0, 1.0, 0.0));
        let truth = map(&[1, 0, 0, 0], 2);
        let r = evaluate(&empty, &truth).unwrap();
        assert_eq!((r.rp, r.rr), (0.0, 0.0));
        let bad = ConfusionCounts { m_a: 3, m_c: 0, detected: 1, changed: 3, total: 4 };
        assert!(compute_metrics(&bad).is_err());
        assert!(compute_metrics(&ConfusionCounts::default()).is_err());
        assert!(confusion(&empty, &map(&[0, 0, 0], 3)).is_err());
    }

    #[test]
    fn csv_formatting() {
        let r = MetricsReport { ra: 0.98634, rp: 0.5, rr: 1.0, ka: 0.76, pe: 0.3 };
        assert_eq!(r.csv_line(), "98.63,50.00,100.00,76.00");
    }
}
