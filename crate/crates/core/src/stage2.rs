//! Rule-based classification of inference-error vectors.

use crate::error::{invalid, Error, Result};
use crate::stage1::ErrorVector;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULT_ETA: f64 = 15.0;
pub const DEFAULT_LAMBDA: f64 = 5.0;
pub const MAX_FPR: f64 = 0.25;
pub const DENOMINATOR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub mu_plus: Vec<f64>,
    pub sigma_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    pub sigma_minus: Vec<f64>,
    pub alpha: f64,
    pub eta: f64,
    pub lambda: f64,
}

impl DetectionStats {
    pub fn probes(&self) -> usize {
        self.mu_plus.len()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| invalid(e.to_string()))?;
        Ok(std::fs::write(path, text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.display().to_string(), msg: e.to_string() })
    }
}

fn mean_std(rows: &[&[f64]], j: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Population mean and standard deviation per probe and class.
/// `true` labels mark bugged designs.
pub fn fit_stats(labeled: &[(ErrorVector, bool)]) -> Result<DetectionStats> {
    let pos: Vec<&[f64]> = labeled.iter().filter(|(_, l)| *l).map(|(v, _)| v.deltas.as_slice()).collect();
    let neg: Vec<&[f64]> = labeled.iter().filter(|(_, l)| !*l).map(|(v, _)| v.deltas.as_slice()).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(invalid("stage-2 statistics need both bugged and bug-free examples"));
    }
    let p = pos[0].len();
    if pos.iter().chain(&neg).any(|r| r.len() != p) {
        return Err(invalid("error vectors differ in length"));
    }
    let (mut mu_plus, mut sigma_plus, mut mu_minus, mut sigma_minus) = (vec![], vec![], vec![], vec![]);
    for j in 0..p {
        let (m, s) = mean_std(&pos, j);
        mu_plus.push(m);
        sigma_plus.push(s);
        let (m, s) = mean_std(&neg, j);
        mu_minus.push(m);
        sigma_minus.push(s);
    }
    Ok(DetectionStats { mu_plus, sigma_plus, mu_minus, sigma_minus, alpha: 0.0, eta: DEFAULT_ETA, lambda: DEFAULT_LAMBDA })
}

/// γ⁺ᵢ = Δ′ᵢ / (μ⁺ᵢ + ασ⁺ᵢ) and γ⁻ᵢ likewise, denominators floored at 1e-9.
pub fn gammas(delta: &[f64], stats: &DetectionStats) -> Result<(Vec<f64>, Vec<f64>)> {
    if delta.len() != stats.probes() {
        return Err(Error::LengthMismatch { left: delta.len(), right: stats.probes() });
    }
    let ratio = |d: f64, mu: f64, sd: f64| d / (mu + stats.alpha * sd).max(DENOMINATOR_FLOOR);
    let plus = (0..delta.len()).map(|i| ratio(delta[i], stats.mu_plus[i], stats.sigma_plus[i])).collect();
    let minus = (0..delta.len()).map(|i| ratio(delta[i], stats.mu_minus[i], stats.sigma_minus[i])).collect();
    Ok((plus, minus))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Bug,
    BugFree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub design: String,
    pub bug: Option<String>,
    pub decision: Decision,
    /// 1 or 2; `None` when bug-free.
    pub fired_rule: Option<u8>,
    /// max(max γ⁺ / η, mean γ⁻ / λ); the rules fire exactly when this exceeds 1.
    pub score: f64,
    pub gamma_plus: Vec<f64>,
    pub gamma_minus: Vec<f64>,
}

/// Rule 1: max γ⁺ > η. Rule 2: mean γ⁻ > λ. Otherwise bug-free.
pub fn classify(gamma_plus: &[f64], gamma_minus: &[f64], eta: f64, lambda: f64) -> (Decision, Option<u8>, f64) {
    let max_plus = gamma_plus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_minus = gamma_minus.iter().sum::<f64>() / gamma_minus.len().max(1) as f64;
    let rule = if max_plus > eta {
        Some(1)
    } else if mean_minus > lambda {
        Some(2)
    } else {
        None
    };
    let score = (max_plus / eta).max(mean_minus / lambda);
    (if rule.is_some() { Decision::Bug } else { Decision::BugFree }, rule, score)
}

pub fn detect(ev: &ErrorVector, stats: &DetectionStats) -> Result<Verdict> {
    let (gp, gm) = gammas(&ev.deltas, stats)?;
    let (decision, fired_rule, score) = classify(&gp, &gm, stats.eta, stats.lambda);
    Ok(Verdict { design: ev.design.clone(), bug: ev.bug.clone(), decision, fired_rule, score, gamma_plus: gp, gamma_minus: gm })
}

/// `lo, lo + step, …` up to `hi` inclusive, built by multiplication to avoid drift.
pub fn alpha_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if step <= 0.0 || hi < lo {
        return vec![lo];
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

pub fn default_alpha_grid() -> Vec<f64> {
    alpha_grid(0.0, 5.0, 0.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaChoice {
    pub alpha: f64,
    pub tpr: f64,
    pub fpr: f64,
    /// False when no grid value met the FPR bound and the fallback was used.
    pub feasible: bool,
}

/// Fits statistics on `labeled` and picks α from `grid`: maximum TPR with
/// FPR ≤ 0.25, smallest α on ties. Without a feasible α, minimum FPR then
/// maximum TPR.
pub fn train_alpha(labeled: &[(ErrorVector, bool)], grid: &[f64], eta: f64, lambda: f64) -> Result<(DetectionStats, AlphaChoice)> {
    if grid.is_empty() {
        return Err(invalid("empty alpha grid"));
    }
    let mut stats = fit_stats(labeled)?;
    stats.eta = eta;
    stats.lambda = lambda;
    let p = labeled.iter().filter(|(_, l)| *l).count() as f64;
    let n = labeled.len() as f64 - p;
    let mut rates = Vec::with_capacity(grid.len());
    for &alpha in grid {
        stats.alpha = alpha;
        let (mut tp, mut fp) = (0usize, 0usize);
        for (ev, label) in labeled {
            if detect(ev, &stats)?.decision == Decision::Bug {
                if *label {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        rates.push((alpha, tp as f64 / p, fp as f64 / n));
    }
    let pick = |feasible: bool, better: &dyn Fn(&(f64, f64, f64), &(f64, f64, f64)) -> bool| {
        let mut best: Option<(f64, f64, f64)> = None;
        for r in rates.iter().filter(|r| !feasible || r.2 <= MAX_FPR) {
            if best.as_ref().is_none_or(|b| better(r, b) || (!better(b, r) && r.0 < b.0)) {
                best = Some(*r);
            }
        }
        best
    };
    let choice = match pick(true, &|a, b| a.1 > b.1) {
        Some((alpha, tpr, fpr)) => AlphaChoice { alpha, tpr, fpr, feasible: true },
        None => {
            let (alpha, tpr, fpr) = pick(false, &|a, b| a.2 < b.2 || (a.2 == b.2 && a.1 > b.1)).unwrap();
            log::warn!("no alpha meets FPR <= {MAX_FPR}; falling back to alpha = {alpha} (FPR {fpr:.3})");
            AlphaChoice { alpha, tpr, fpr, feasible: false }
        }
    };
    stats.alpha = choice.alpha;
    Ok((stats, choice))
}

pub fn verdict_table(verdicts: &[Verdict]) -> String {
    let mut out = String::from("design,bug,decision,fired_rule,score\n");
    for v in verdicts {
        out.push_str(&format!(
            "{},{},{},{},{:.9}\n",
            v.design,
            v.bug.as_deref().unwrap_or("none"),
            if v.decision == Decision::Bug { "Bug" } else { "BugFree" },
            v.fired_rule.map_or("none".to_string(), |r| r.to_string()),
            v.score
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(d: &[f64]) -> ErrorVector {
        ErrorVector { design: "x".into(), bug: None, deltas: d.to_vec() }
    }

    #[test]
    fn two_point_stats() {
        let s = fit_stats(&[(ev(&[2.0]), true), (ev(&[4.0]), true), (ev(&[1.0]), false)]).unwrap();
        assert_eq!((s.mu_plus[0], s.sigma_plus[0]), (3.0, 1.0));
        assert_eq!((s.mu_minus[0], s.sigma_minus[0]), (1.0, 0.0));
        assert!(fit_stats(&[(ev(&[2.0]), true)]).is_err());
    }

    #[test]
    fn gamma_substitution() {
        let s = DetectionStats {
            mu_plus: vec![4.0],
            sigma_plus: vec![2.0],
            mu_minus: vec![0.0],
            sigma_minus: vec![0.0],
            alpha: 1.0,
            eta: 15.0,
            lambda: 5.0,
        };
        let (gp, gm) = gammas(&[10.0], &s).unwrap();
        assert!((gp[0] - 10.0 / 6.0).abs() < 1e-15);
        assert_eq!(gm[0], 10.0 / DENOMINATOR_FLOOR);
        let (gp, gm) = gammas(&[0.0], &s).unwrap();
        assert_eq!((gp[0], gm[0]), (0.0, 0.0));
    }

    #[test]
    fn rule_examples() {
        assert_eq!(classify(&[16.0], &[0.1], 15.0, 5.0).1, Some(1));
        assert_eq!(classify(&[3.0], &[6.0], 15.0, 5.0).1, Some(2));
        assert_eq!(classify(&[3.0], &[1.0], 15.0, 5.0).0, Decision::BugFree);
    }

    #[test]
    fn grid_is_exact() {
        let g = default_alpha_grid();
        assert_eq!(g.len(), 51);
        assert_eq!(g[10], 1.0);
        assert_eq!(*g.last().unwrap(), 5.0);
    }
}
