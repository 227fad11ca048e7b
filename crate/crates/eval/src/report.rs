//! The combined metric report, printable as a table or JSON.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dac_sac::DacSac;
use crate::distinct::Distinct;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct DistinctReport {
    pub value: f64,
    pub distinct: usize,
    pub total: usize,
    pub degenerate: bool,
}

impl From<Distinct> for DistinctReport {
    fn from(d: Distinct) -> Self {
        Self { value: d.value(), distinct: d.distinct, total: d.total, degenerate: d.degenerate }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpeakerReport {
    pub dac: f64,
    pub sac: f64,
    pub correct_probes: usize,
    pub total_probes: usize,
    pub fully_correct_stories: usize,
    pub total_stories: usize,
}

impl From<DacSac> for SpeakerReport {
    fn from(a: DacSac) -> Self {
        Self {
            dac: a.dac(),
            sac: a.sac(),
            correct_probes: a.correct_probes,
            total_probes: a.total_probes,
            fully_correct_stories: a.fully_correct_stories,
            total_stories: a.total_stories,
        }
    }
}

/// Every section is optional; a report carries whatever the run computed.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub turns_evaluated: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distinct2: Option<DistinctReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distinct3: Option<DistinctReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distinct4: Option<DistinctReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speaker: Option<SpeakerReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence_ratio: Option<f64>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>10}  {}", "metric", "value", "detail")?;
        if let Some(b) = self.bleu1 {
            let detail = self
                .turns_evaluated
                .map_or(String::new(), |n| format!("over {n} turns"));
            writeln!(f, "{:<12} {:>10.4}  {}", "BLEU-1", b, detail)?;
        }
        if let Some(b) = self.bleu2 {
            writeln!(f, "{:<12} {:>10.4}", "BLEU-2", b)?;
        }
        for (name, d) in [
            ("Distinct-2", self.distinct2),
            ("Distinct-3", self.distinct3),
            ("Distinct-4", self.distinct4),
        ] {
            if let Some(d) = d {
                let flag = if d.degenerate { " (degenerate)" } else { "" };
                writeln!(
                    f,
                    "{:<12} {:>10.4}  {}/{}{}",
                    name, d.value, d.distinct, d.total, flag
                )?;
            }
        }
        if let Some(s) = self.speaker {
            writeln!(
                f,
                "{:<12} {:>10.4}  {}/{} probes",
                "DAC", s.dac, s.correct_probes, s.total_probes
            )?;
            writeln!(
                f,
                "{:<12} {:>10.4}  {}/{} stories",
                "SAC", s.sac, s.fully_correct_stories, s.total_stories
            )?;
        }
        if let Some(c) = self.coherence_ratio {
            writeln!(f, "{:<12} {:>10.4}", "Coherence", c)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distinct::distinct_n;

    fn sample() -> MetricReport {
        MetricReport {
            bleu1: Some(0.75),
            bleu2: Some(0.62),
            turns_evaluated: Some(40),
            distinct2: Some(distinct_n(&[vec![1, 2, 1, 2]], 2).into()),
            speaker: Some(
                DacSac {
                    correct_probes: 4,
                    total_probes: 5,
                    fully_correct_stories: 1,
                    total_stories: 2,
                }
                .into(),
            ),
            coherence_ratio: Some(0.9),
            ..MetricReport::default()
        }
    }

    #[test]
    fn json_roundtrips_and_omits_missing_sections() {
        let r = sample();
        let json = r.to_json();
        assert!(json.contains("\"bleu1\""));
        assert!(!json.contains("distinct3"));
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn table_lists_each_present_metric_once() {
        let text = sample().to_string();
        for needle in ["BLEU-1", "BLEU-2", "Distinct-2", "DAC", "SAC", "Coherence", "4/5 probes"] {
            assert_eq!(text.matches(needle).count(), 1, "{needle} in:\n{text}");
        }
        assert!(!text.contains("Distinct-3"));
    }

    #[test]
    fn degenerate_distinct_is_flagged_in_the_table() {
        let r = MetricReport {
            distinct4: Some(distinct_n(&[vec![1]], 4).into()),
            ..MetricReport::default()
        };
        assert!(r.to_string().contains("(degenerate)"));
    }
}
