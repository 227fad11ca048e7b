use serde::{Deserialize, Serialize};

/// One optimizer step, serialized as a JSONL line by callers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    /// Mean per-story character-selection coverage; present only on steps
    /// that close a coverage window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
}

/// Aggregate selection coverage over one window of steps. A story's coverage
/// is the fraction of its bank characters selected at least once while
/// decoding it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageReport {
    pub start_step: usize,
    pub end_step: usize,
    pub stories: usize,
    pub mean_coverage: f64,
}

/// Accumulates per-story coverage fractions between reports.
#[derive(Default)]
pub(crate) struct CoverageWindow {
    fractions: Vec<f64>,
    start_step: usize,
}

impl CoverageWindow {
    pub fn add(&mut self, bank_size: usize, selections: impl Iterator<Item = usize>) {
        if bank_size == 0 {
            return;
        }
        let mut seen = vec![false; bank_size];
        let mut any = false;
        for s in selections {
            any = true;
            if s < bank_size {
                seen[s] = true;
            }
        }
        // No selection events means the architecture does not select
        // (baseline decodes); such stories carry no coverage signal.
        if !any {
            return;
        }
        let hit = seen.iter().filter(|&&b| b).count();
        self.fractions.push(hit as f64 / bank_size as f64);
    }

    /// Closes the window at `end_step`; returns `None` when no story with a
    /// bank was decoded in it (e.g. baseline runs).
    pub fn close(&mut self, end_step: usize) -> Option<CoverageReport> {
        let start_step = self.start_step;
        self.start_step = end_step;
        if self.fractions.is_empty() {
            return None;
        }
        let stories = self.fractions.len();
        let mean = self.fractions.drain(..).sum::<f64>() / stories as f64;
        Some(CoverageReport { start_step: start_step + 1, end_step, stories, mean_coverage: mean })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_counts_distinct_selections() {
        let mut w = CoverageWindow::default();
        w.add(5, [0, 0, 2, 2, 2].into_iter());
        w.add(4, [0, 1, 2, 3].into_iter());
        let report = w.close(1000).unwrap();
        assert_eq!(report.stories, 2);
        assert!((report.mean_coverage - (0.4 + 1.0) / 2.0).abs() < 1e-12);
        assert_eq!(report.start_step, 1);
        assert_eq!(report.end_step, 1000);
    }

    #[test]
    fn empty_window_reports_nothing_and_advances() {
        let mut w = CoverageWindow::default();
        assert!(w.close(1000).is_none());
        w.add(2, [1].into_iter());
        let report = w.close(2000).unwrap();
        assert_eq!(report.start_step, 1001);
        assert!((report.mean_coverage - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stories_without_selection_events_are_ignored() {
        let mut w = CoverageWindow::default();
        w.add(5, std::iter::empty());
        assert!(w.close(10).is_none());
    }

    #[test]
    fn metrics_line_omits_absent_coverage() {
        let r = MetricsRecord { step: 3, loss: 1.5, lr: 1e-3, coverage: None };
        let line = serde_json::to_string(&r).unwrap();
        assert!(!line.contains("coverage"));
        let r = MetricsRecord { coverage: Some(0.75), ..r };
        assert!(serde_json::to_string(&r).unwrap().contains("\"coverage\":0.75"));
    }
}
