use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::Category;

/// Column order of the results table.
pub const TABLE_ORDER: [Category; 8] = [
    Category::C2I,
    Category::T2I,
    Category::TIE,
    Category::FU,
    Category::TBE,
    Category::TU,
    Category::VME,
    Category::DE,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

const FIELDS: [&str; 4] = ["fidelity", "consistency", "realism", "spatial"];

/// PASS iff fidelity ≥ 3, the mean of all four ≥ 3 and every score > 2.
/// Scores are (fidelity, consistency, realism, spatial) on a 1 to 5 scale.
pub fn verdict(scores: [f64; 4]) -> Result<Verdict, EvalError> {
    for (field, &value) in FIELDS.iter().zip(&scores) {
        if !(1.0..=5.0).contains(&value) {
            return Err(EvalError::ScoreRange { field, value });
        }
    }
    let mean = scores.iter().sum::<f64>() / 4.0;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if scores[0] >= 3.0 && mean >= 3.0 && min > 2.0 { Verdict::Pass } else { Verdict::Fail })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub fidelity: f64,
    pub consistency: f64,
    pub realism: f64,
    pub spatial: f64,
    pub verdict: Verdict,
}

impl ScoreCard {
    pub fn new(fidelity: f64, consistency: f64, realism: f64, spatial: f64) -> Result<Self, EvalError> {
        let verdict = verdict([fidelity, consistency, realism, spatial])?;
        Ok(Self { fidelity, consistency, realism, spatial, verdict })
    }
}

/// One line of a score file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub category: Category,
    pub fidelity: f64,
    pub consistency: f64,
    pub realism: f64,
    pub spatial: f64,
}

impl ScoreRecord {
    pub fn card(&self) -> Result<ScoreCard, EvalError> {
        ScoreCard::new(self.fidelity, self.consistency, self.realism, self.spatial)
    }
}

/// Parses JSON lines, skipping blank ones.
pub fn parse_score_lines(text: &str) -> Result<Vec<ScoreRecord>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Parse { line: i + 1, reason: e.to_string() }))
        .collect()
}

/// Rounds half away from zero at three decimals. The product is nudged by
/// a few ulps first so that ties written in decimal (0.4475) round as ties.
pub fn round3(x: f64) -> f64 {
    let y = x * 1000.0;
    let nudged = y + y.signum() * y.abs().max(1.0) * 4.0 * f64::EPSILON;
    nudged.round() / 1000.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregateMode {
    /// Unweighted mean of the category rates.
    #[default]
    CategoryMean,
    /// Passes over samples, pooled across categories.
    SampleWeighted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AggregateOptions {
    pub mode: AggregateMode,
    /// Leave empty categories out of the total instead of failing.
    pub allow_absent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub category: Category,
    /// Counts are unknown when the report was built from printed rates.
    pub passes: Option<usize>,
    pub samples: Option<usize>,
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub label: String,
    pub mode: AggregateMode,
    /// In table order.
    pub categories: Vec<CategoryResult>,
    /// Unrounded total.
    pub total: f64,
}

fn total_of(rows: &[CategoryResult], mode: AggregateMode) -> Result<f64, EvalError> {
    let present: Vec<&CategoryResult> = rows.iter().filter(|r| r.rate.is_some()).collect();
    if present.is_empty() {
        return Err(EvalError::NoSamples);
    }
    match mode {
        AggregateMode::CategoryMean => Ok(present.iter().filter_map(|r| r.rate).sum::<f64>() / present.len() as f64),
        AggregateMode::SampleWeighted => {
            let mut passes = 0;
            let mut samples = 0;
            for r in &present {
                match (r.passes, r.samples) {
                    (Some(p), Some(s)) => {
                        passes += p;
                        samples += s;
                    }
                    _ => return Err(EvalError::NoSamples),
                }
            }
            Ok(passes as f64 / samples as f64)
        }
    }
}

/// Per-category pass rates and their total over tagged verdicts.
pub fn aggregate(label: &str, samples: &[(Category, Verdict)], opts: AggregateOptions) -> Result<BenchReport, EvalError> {
    let mut rows = Vec::with_capacity(TABLE_ORDER.len());
    for c in TABLE_ORDER {
        let n = samples.iter().filter(|(k, _)| *k == c).count();
        let p = samples.iter().filter(|(k, v)| *k == c && *v == Verdict::Pass).count();
        if n == 0 && !opts.allow_absent {
            return Err(EvalError::EmptyCategory(c));
        }
        let rate = (n > 0).then(|| p as f64 / n as f64);
        rows.push(CategoryResult { category: c, passes: (n > 0).then_some(p), samples: (n > 0).then_some(n), rate });
    }
    let total = total_of(&rows, opts.mode)?;
    Ok(BenchReport { label: label.to_string(), mode: opts.mode, categories: rows, total })
}

impl BenchReport {
    /// Report from already-computed category rates (as printed in a table).
    pub fn from_rates(label: &str, rates: &[(Category, f64)], allow_absent: bool) -> Result<Self, EvalError> {
        let mut rows = Vec::with_capacity(TABLE_ORDER.len());
        for c in TABLE_ORDER {
            let rate = rates.iter().find(|(k, _)| *k == c).map(|(_, r)| *r);
            if rate.is_none() && !allow_absent {
                return Err(EvalError::EmptyCategory(c));
            }
            rows.push(CategoryResult { category: c, passes: None, samples: None, rate });
        }
        let total = total_of(&rows, AggregateMode::CategoryMean)?;
        Ok(Self { label: label.to_string(), mode: AggregateMode::CategoryMean, categories: rows, total })
    }

    pub fn total_rounded(&self) -> f64 {
        round3(self.total)
    }

    pub fn rate(&self, c: Category) -> Option<f64> {
        self.categories.iter().find(|r| r.category == c).and_then(|r| r.rate)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Aligned text table, one row per report, rates as `.ddd`.
    pub fn table(reports: &[BenchReport]) -> String {
        fn cell(x: Option<f64>) -> String {
            match x {
                None => "-".into(),
                Some(v) => {
                    let s = format!("{:.3}", round3(v));
                    s.strip_prefix('0').map(str::to_string).unwrap_or(s)
                }
            }
        }
        let width = reports.iter().map(|r| r.label.len()).chain([6]).max().unwrap_or(6);
        let mut out = format!("{:<width$}", "Method");
        for c in TABLE_ORDER {
            let _ = write!(out, " | {:>5}", c.as_str());
        }
        out.push_str(" | Total\n");
        for r in reports {
            let _ = write!(out, "{:<width$}", r.label);
            for c in TABLE_ORDER {
                let _ = write!(out, " | {:>5}", cell(r.rate(c)));
            }
            let _ = writeln!(out, " | {:>5}", cell(Some(r.total)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_rule() {
        assert_eq!(verdict([3.0, 3.0, 3.0, 3.0]).unwrap(), Verdict::Pass);
        assert_eq!(verdict([5.0, 5.0, 5.0, 2.0]).unwrap(), Verdict::Fail);
        assert_eq!(verdict([2.5, 5.0, 5.0, 5.0]).unwrap(), Verdict::Fail);
        assert_eq!(verdict([3.0, 2.1, 3.0, 3.9]).unwrap(), Verdict::Pass);
        assert!(matches!(verdict([3.0, 5.5, 3.0, 3.0]), Err(EvalError::ScoreRange { field: "consistency", .. })));
        assert!(verdict([f64::NAN, 3.0, 3.0, 3.0]).is_err());
    }

    #[test]
    fn rounding() {
        assert_eq!(round3(0.540125), 0.54);
        assert_eq!(round3(0.4475), 0.448);
        assert_eq!(round3(-0.0005), -0.001);
        assert_eq!(round3(0.0004999), 0.0);
    }

    #[test]
    fn aggregation_modes() {
        let mut s = vec![(Category::C2I, Verdict::Pass), (Category::C2I, Verdict::Pass), (Category::C2I, Verdict::Fail)];
        s.push((Category::DE, Verdict::Fail));
        assert_eq!(aggregate("x", &s, AggregateOptions::default()), Err(EvalError::EmptyCategory(Category::T2I)));
        let opts = AggregateOptions { allow_absent: true, ..Default::default() };
        let r = aggregate("x", &s, opts).unwrap();
        assert!((r.total - (2.0 / 3.0) / 2.0).abs() < 1e-15);
        let w = aggregate("x", &s, AggregateOptions { mode: AggregateMode::SampleWeighted, allow_absent: true }).unwrap();
        assert_eq!(w.total, 0.5);
        let one = aggregate("x", &[(Category::TU, Verdict::Pass)], opts).unwrap();
        assert_eq!(one.total, 1.0);
        assert_eq!(one.rate(Category::C2I), None);
    }

    #[test]
    fn table_shape() {
        let rates: Vec<(Category, f64)> = TABLE_ORDER.iter().map(|&c| (c, 0.5)).collect();
        let r = BenchReport::from_rates("Ours", &rates, false).unwrap();
        let t = BenchReport::table(&[r]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Method |   C2I |   T2I |   TIE |    FU"));
        assert!(lines[1].ends_with("|  .500"));
    }

    #[test]
    fn score_lines() {
        let text = "{\"id\":\"a\",\"category\":\"TIE\",\"fidelity\":4,\"consistency\":3,\"realism\":3,\"spatial\":3}\n\n";
        let recs = parse_score_lines(text).unwrap();
        assert_eq!(recs[0].card().unwrap().verdict, Verdict::Pass);
        assert!(matches!(parse_score_lines("{"), Err(EvalError::Parse { line: 1, .. })));
    }
}
