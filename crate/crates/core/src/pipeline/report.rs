use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::model::{Feature, FeatureId, Match};
use crate::synthbench::AlignmentMetrics;
use crate::MarkingClass;

/// Row of the per-class match table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchTableRow {
    pub class: MarkingClass,
    pub features: usize,
    pub matched: usize,
    pub matched_share: f64,
}

/// Content of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub v: u32,
    pub features: usize,
    pub matched: usize,
    pub matched_share: f64,
    pub match_table: Vec<MatchTableRow>,
    /// Ground-truth comparison; present when reference trajectories exist.
    pub alignment: Option<AlignmentMetrics>,
}

fn share(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Feature counts and matched shares per class, ordered by feature count
/// (largest first, ties by class).
pub fn match_table(features: &[Feature], matches: &[Match]) -> Vec<MatchTableRow> {
    let matched: BTreeSet<FeatureId> = matches.iter().map(|m| m.feature).collect();
    let mut counts: BTreeMap<MarkingClass, (usize, usize)> = BTreeMap::new();
    for f in features {
        let e = counts.entry(f.class()).or_default();
        e.0 += 1;
        if matched.contains(&f.id) {
            e.1 += 1;
        }
    }
    let mut rows: Vec<MatchTableRow> = counts
        .into_iter()
        .map(|(class, (n, m))| MatchTableRow {
            class,
            features: n,
            matched: m,
            matched_share: share(m, n),
        })
        .collect();
    rows.sort_by(|a, b| b.features.cmp(&a.features).then(a.class.cmp(&b.class)));
    rows
}

impl MetricsReport {
    pub fn new(features: &[Feature], matches: &[Match], alignment: Option<AlignmentMetrics>) -> Self {
        let match_table = match_table(features, matches);
        let n: usize = match_table.iter().map(|r| r.features).sum();
        let m: usize = match_table.iter().map(|r| r.matched).sum();
        Self {
            v: 1,
            features: n,
            matched: m,
            matched_share: share(m, n),
            match_table,
            alignment,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24} {:>9} {:>9} {:>8}", "class", "features", "matched", "share");
        for r in &self.match_table {
            let _ = writeln!(
                s,
                "{:<24} {:>9} {:>9} {:>7.1}%",
                r.class.as_str(),
                r.features,
                r.matched,
                100.0 * r.matched_share
            );
        }
        let _ = writeln!(
            s,
            "{:<24} {:>9} {:>9} {:>7.1}%",
            "total",
            self.features,
            self.matched,
            100.0 * self.matched_share
        );
        if let Some(a) = &self.alignment {
            let _ = writeln!(s);
            let _ = writeln!(s, "poses                    {}", a.poses);
            let _ = writeln!(s, "position rmse / max [m]  {:.4} / {:.4}", a.position_rmse, a.position_max);
            let _ = writeln!(
                s,
                "heading rmse / max [deg] {:.4} / {:.4}",
                a.heading_rmse.to_degrees(),
                a.heading_max.to_degrees()
            );
            let _ = writeln!(
                s,
                "aligned within {} m      {:.1} of {:.1} m ({:.2}%)",
                a.aligned_tolerance,
                a.aligned_length,
                a.total_length,
                100.0 * a.aligned_fraction
            );
            let _ = writeln!(s, "match precision          {:.4}", a.precision);
            let _ = writeln!(s, "match recall             {:.4}", a.recall);
        }
        s
    }
}
