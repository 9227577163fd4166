use crate::bugs::SeverityBin;
use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_decisions(decisions: &[bool], labels: &[bool]) -> Result<Self> {
        if decisions.len() != labels.len() {
            return Err(invalid("decisions and labels differ in length"));
        }
        let mut c = Confusion::default();
        for (&d, &l) in decisions.iter().zip(labels) {
            match (d, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    /// TP / P; `None` without positives.
    pub fn tpr(&self) -> Option<f64> {
        (self.positives() > 0).then(|| self.tp as f64 / self.positives() as f64)
    }

    /// FP / N; `None` without negatives.
    pub fn fpr(&self) -> Option<f64> {
        (self.negatives() > 0).then(|| self.fp as f64 / self.negatives() as f64)
    }

    /// TP / (TP + FP); not applicable when nothing was flagged.
    pub fn precision(&self) -> Option<f64> {
        (self.tp + self.fp > 0).then(|| self.tp as f64 / (self.tp + self.fp) as f64)
    }
}

/// Probability that a random positive outscores a random negative, ties ½,
/// computed from average ranks. `None` unless both classes are present.
pub fn rank_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let p = labels.iter().filter(|l| **l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 || scores.len() != labels.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    Some((rank_sum - (p * (p + 1)) as f64 / 2.0) / (p * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRate {
    pub detected: usize,
    pub total: usize,
}

impl BinRate {
    pub fn tpr(&self) -> Option<f64> {
        (self.total > 0).then(|| self.detected as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub auc: Option<f64>,
    pub per_severity: BTreeMap<SeverityBin, BinRate>,
}

/// One evaluated design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub flagged: bool,
    pub score: f64,
    pub label: bool,
    /// Severity of the injected bug; `None` for bug-free designs.
    pub severity: Option<SeverityBin>,
}

pub fn metrics(outcomes: &[Outcome]) -> MetricsReport {
    let decisions: Vec<bool> = outcomes.iter().map(|o| o.flagged).collect();
    let labels: Vec<bool> = outcomes.iter().map(|o| o.label).collect();
    let scores: Vec<f64> = outcomes.iter().map(|o| o.score).collect();
    let confusion = Confusion::from_decisions(&decisions, &labels).expect("aligned");
    let mut per_severity: BTreeMap<SeverityBin, BinRate> =
        SeverityBin::ALL.iter().map(|b| (*b, BinRate { detected: 0, total: 0 })).collect();
    for o in outcomes.iter().filter(|o| o.label) {
        if let Some(bin) = o.severity {
            let e = per_severity.get_mut(&bin).unwrap();
            e.total += 1;
            e.detected += usize::from(o.flagged);
        }
    }
    MetricsReport {
        tpr: confusion.tpr(),
        fpr: confusion.fpr(),
        precision: confusion.precision(),
        auc: rank_auc(&scores, &labels),
        confusion,
        per_severity,
    }
}

impl MetricsReport {
    /// Pooled TPR over the given severity bins.
    pub fn tpr_over(&self, bins: &[SeverityBin]) -> Option<f64> {
        let (d, t) = bins.iter().filter_map(|b| self.per_severity.get(b)).fold((0, 0), |a, r| (a.0 + r.detected, a.1 + r.total));
        (t > 0).then(|| d as f64 / t as f64)
    }

    pub fn summary_line(&self) -> String {
        let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        let bins: Vec<String> =
            self.per_severity.iter().map(|(b, r)| format!("{}={}({}/{})", b, f(r.tpr()), r.detected, r.total)).collect();
        format!(
            "TPR={} FPR={} precision={} AUC={} TP={} FP={} FN={} TN={} {}",
            f(self.tpr),
            f(self.fpr),
            f(self.precision),
            f(self.auc),
            self.confusion.tp,
            self.confusion.fp,
            self.confusion.fn_,
            self.confusion.tn,
            bins.join(" ")
        )
    }
}

/// (FPR, TPR) points obtained by sweeping a threshold over every distinct score.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64)> {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let p = labels.iter().filter(|l| **l).count().max(1) as f64;
    let n = labels.iter().filter(|l| !**l).count().max(1) as f64;
    let mut pts = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **l && **s >= t).count() as f64;
        let fp = scores.iter().zip(labels).filter(|(s, l)| !**l && **s >= t).count() as f64;
        pts.push((fp / n, tp / p));
    }
    pts
}
