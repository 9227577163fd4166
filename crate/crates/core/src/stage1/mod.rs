//! Per-probe IPC regression and the area-between-curves inference error.

pub mod gbt;
pub mod lasso;
pub mod mlp;

use crate::error::{invalid, Error, Result};
use crate::sim::CounterTrace;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub const MODEL_FORMAT: &str = "perfprobe-model/1";

/// One regression sample: a window of counter values plus design parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub design: String,
    pub counter_values: Vec<f64>,
    pub static_params: Vec<f64>,
    pub target_ipc: f64,
}

impl FeatureRow {
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.counter_values.len() + self.static_params.len());
        f.extend_from_slice(&self.counter_values);
        f.extend_from_slice(&self.static_params);
        f
    }
}

/// Sliding-window rows for one trace: `steps - w + 1` rows, row `i` predicts
/// step `i + w - 1` from steps `i ..= i + w - 1`.
pub fn trace_rows(
    trace: &CounterTrace,
    counters: &[String],
    static_params: &[f64],
    window: usize,
    include_static: bool,
) -> Result<Vec<FeatureRow>> {
    if window == 0 {
        return Err(invalid("window must be at least 1"));
    }
    if window > trace.steps.len() {
        return Err(invalid(format!(
            "window {window} exceeds the {} steps of {}/{}",
            trace.steps.len(),
            trace.design,
            trace.workload_id
        )));
    }
    let cols: Vec<usize> = counters
        .iter()
        .map(|c| {
            trace
                .counter_names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| invalid(format!("trace {}/{} lacks counter {c}", trace.design, trace.workload_id)))
        })
        .collect::<Result<_>>()?;
    Ok((0..=trace.steps.len() - window)
        .map(|i| FeatureRow {
            design: trace.design.clone(),
            counter_values: trace.steps[i..i + window]
                .iter()
                .flat_map(|s| cols.iter().map(move |&c| s.values[c]))
                .collect(),
            static_params: if include_static { static_params.to_vec() } else { Vec::new() },
            target_ipc: trace.steps[i + window - 1].ipc,
        })
        .collect())
}

/// Rows for one probe across designs. `designs` pairs each trace with its
/// static design parameters.
pub fn build_dataset(
    traces: &[(&CounterTrace, Vec<f64>)],
    counters: &[String],
    window: usize,
    include_static: bool,
) -> Result<Vec<FeatureRow>> {
    let mut rows = Vec::new();
    for (t, statics) in traces {
        rows.extend(trace_rows(t, counters, statics, window, include_static)?);
    }
    Ok(rows)
}

/// Per-feature standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale = (0..d)
            .map(|j| {
                let sd = (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(d: usize) -> Self {
        Self { mean: vec![0.0; d], scale: vec![1.0; d] }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Engine {
    Lasso(lasso::LassoParams),
    Mlp(mlp::MlpParams),
    Gbt(gbt::GbtParams),
}

impl Engine {
    pub fn name(&self) -> String {
        match self {
            Engine::Lasso(_) => "lasso".into(),
            Engine::Mlp(_) => "mlp".into(),
            Engine::Gbt(p) => format!("gbt-{}", p.trees),
        }
    }
}

impl Default for Engine {
    fn default() -> Self {
        Engine::Gbt(gbt::GbtParams::default())
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    /// `lasso`, `mlp`, `gbt` or `gbt-<trees>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "lasso" => Ok(Engine::Lasso(Default::default())),
            "mlp" => Ok(Engine::Mlp(Default::default())),
            "gbt" => Ok(Engine::Gbt(Default::default())),
            _ => lower
                .strip_prefix("gbt-")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n > 0)
                .map(|trees| Engine::Gbt(gbt::GbtParams { trees, ..Default::default() }))
                .ok_or_else(|| Error::Config(format!("unknown engine '{s}' (expected lasso, mlp, gbt or gbt-N)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EngineModel {
    Linear(lasso::LinearModel),
    Mlp { net: mlp::Mlp, target_mean: f64, target_scale: f64 },
    Gbt(gbt::GbtModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Sweeps, epochs or trees actually used.
    pub iterations: usize,
    pub val_loss: f64,
    pub activation: Option<String>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub format: String,
    pub probe_id: String,
    pub engine: String,
    pub counters: Vec<String>,
    pub window: usize,
    pub include_static: bool,
    pub feature_width: usize,
    pub scaler: Scaler,
    pub model: EngineModel,
    pub meta: TrainingMeta,
}

fn split_xy(rows: &[FeatureRow]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (rows.iter().map(FeatureRow::features).collect(), rows.iter().map(|r| r.target_ipc).collect())
}

/// Settings that shape the rows a model consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    pub probe_id: String,
    pub counters: Vec<String>,
    pub window: usize,
    pub include_static: bool,
}

pub fn train(engine: &Engine, shape: &ModelShape, train_rows: &[FeatureRow], val_rows: &[FeatureRow]) -> Result<ProbeModel> {
    if train_rows.is_empty() {
        return Err(Error::Training(format!("probe {}: empty training set", shape.probe_id)));
    }
    let train_designs: std::collections::BTreeSet<&str> = train_rows.iter().map(|r| r.design.as_str()).collect();
    if let Some(r) = val_rows.iter().find(|r| train_designs.contains(r.design.as_str())) {
        return Err(Error::Training(format!("design {} appears in both training and validation rows", r.design)));
    }
    let (x, y) = split_xy(train_rows);
    let (vx, vy) = split_xy(val_rows);
    let width = x[0].len();
    if x.iter().chain(&vx).any(|r| r.len() != width) {
        return Err(Error::Training(format!("probe {}: ragged feature rows", shape.probe_id)));
    }
    let val = (!vx.is_empty()).then_some(());
    let nonfinite = |what: &str| Error::Training(format!("probe {}: non-finite {what}", shape.probe_id));

    let (scaler, model, meta) = match engine {
        Engine::Lasso(p) => {
            let scaler = Scaler::fit(&x);
            let xs: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
            let vxs: Vec<Vec<f64>> = vx.iter().map(|r| scaler.apply(r)).collect();
            let (m, loss, path) = lasso::fit(&xs, &y, val.map(|_| (vxs.as_slice(), vy.as_slice())), p);
            if !loss.is_finite() {
                return Err(nonfinite("lasso loss"));
            }
            let meta = TrainingMeta { iterations: path.len(), val_loss: loss, activation: None, lambda: Some(m.lambda) };
            (scaler, EngineModel::Linear(m), meta)
        }
        Engine::Mlp(p) => {
            let scaler = Scaler::fit(&x);
            let xs: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
            let vxs: Vec<Vec<f64>> = vx.iter().map(|r| scaler.apply(r)).collect();
            let ts = Scaler::fit(&y.iter().map(|v| vec![*v]).collect::<Vec<_>>());
            let (tm, tsd) = (ts.mean[0], ts.scale[0]);
            let yn: Vec<f64> = y.iter().map(|v| (v - tm) / tsd).collect();
            let vyn: Vec<f64> = vy.iter().map(|v| (v - tm) / tsd).collect();
            let fit = mlp::fit(&xs, &yn, val.map(|_| (vxs.as_slice(), vyn.as_slice())), p)
                .ok_or_else(|| nonfinite("mlp loss"))?;
            let meta = TrainingMeta {
                iterations: fit.epochs,
                val_loss: fit.val_loss * tsd * tsd,
                activation: Some(mlp::ACTIVATION.to_string()),
                lambda: None,
            };
            (scaler, EngineModel::Mlp { net: fit.model, target_mean: tm, target_scale: tsd }, meta)
        }
        Engine::Gbt(p) => {
            let fit = gbt::fit(&x, &y, val.map(|_| (vx.as_slice(), vy.as_slice())), p);
            let trees = fit.model.trees.len();
            let loss = if fit.val_loss.is_empty() { fit.train_loss[trees] } else { fit.val_loss[trees] };
            if !loss.is_finite() {
                return Err(nonfinite("gbt loss"));
            }
            let meta = TrainingMeta { iterations: trees, val_loss: loss, activation: None, lambda: None };
            (Scaler::identity(width), EngineModel::Gbt(fit.model), meta)
        }
    };
    Ok(ProbeModel {
        format: MODEL_FORMAT.to_string(),
        probe_id: shape.probe_id.clone(),
        engine: engine.name(),
        counters: shape.counters.clone(),
        window: shape.window,
        include_static: shape.include_static,
        feature_width: width,
        scaler,
        model,
        meta,
    })
}

impl ProbeModel {
    pub fn predict_one(&self, features: &[f64]) -> f64 {
        match &self.model {
            EngineModel::Linear(m) => m.predict(&self.scaler.apply(features)),
            EngineModel::Mlp { net, target_mean, target_scale } => {
                net.predict(&self.scaler.apply(features)) * target_scale + target_mean
            }
            EngineModel::Gbt(m) => m.predict(features),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| invalid(e.to_string()))?;
        Ok(std::fs::write(path, text)?)
    }

    pub fn read(path: &Path) -> Result<ProbeModel> {
        let text = std::fs::read_to_string(path)?;
        let parse = |msg: String| Error::Parse { path: path.display().to_string(), msg };
        let m: ProbeModel = serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?;
        if m.format != MODEL_FORMAT {
            return Err(parse(format!("model format '{}' is not {MODEL_FORMAT}", m.format)));
        }
        Ok(m)
    }
}

pub fn infer(model: &ProbeModel, rows: &[FeatureRow]) -> Result<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let f = r.features();
            if f.len() != model.feature_width {
                return Err(Error::LengthMismatch { left: f.len(), right: model.feature_width });
            }
            let p = model.predict_one(&f);
            if p.is_finite() {
                Ok(p)
            } else {
                Err(Error::Training(format!("probe {}: non-finite prediction", model.probe_id)))
            }
        })
        .collect()
}

/// ½ Σ_{j≥2} (|e_j| + |e_{j−1}|): interior steps weigh 1, the two ends ½.
pub fn inference_error(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch { left: y.len(), right: y_hat.len() });
    }
    if y.len() < 2 {
        return Err(invalid("inference error needs at least two steps"));
    }
    let e: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).collect();
    Ok(e.windows(2).map(|p| 0.5 * (p[0] + p[1])).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorVector {
    pub design: String,
    pub bug: Option<String>,
    pub deltas: Vec<f64>,
}

/// Δ for one probe on one design trace.
pub fn probe_error(model: &ProbeModel, trace: &CounterTrace, static_params: &[f64]) -> Result<f64> {
    let rows = trace_rows(trace, &model.counters, static_params, model.window, model.include_static)?;
    let pred = infer(model, &rows)?;
    let y: Vec<f64> = rows.iter().map(|r| r.target_ipc).collect();
    inference_error(&y, &pred)
}

/// `traces[i]` must be the design's trace for `models[i]`'s probe.
pub fn error_vector(models: &[ProbeModel], traces: &[&CounterTrace], static_params: &[f64]) -> Result<ErrorVector> {
    if traces.len() != models.len() {
        return Err(invalid(format!("{} traces for {} probe models", traces.len(), models.len())));
    }
    let first = traces.first().ok_or_else(|| invalid("no probes"))?;
    let deltas = models
        .iter()
        .zip(traces)
        .map(|(m, t)| {
            if t.workload_id != m.probe_id {
                return Err(invalid(format!("missing trace for probe {} (got {})", m.probe_id, t.workload_id)));
            }
            probe_error(m, t, static_params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorVector { design: first.design.clone(), bug: first.bug.clone(), deltas })
}

pub fn error_table(vectors: &[ErrorVector], probe_ids: &[String]) -> String {
    let mut out = String::from("design,bug,probe_id,delta\n");
    for v in vectors {
        for (p, d) in probe_ids.iter().zip(&v.deltas) {
            out.push_str(&format!("{},{},{},{:.12e}\n", v.design, v.bug.as_deref().unwrap_or("none"), p, d));
        }
    }
    out
}

pub fn parse_error_table(text: &str) -> Result<(Vec<ErrorVector>, Vec<String>)> {
    let mut vectors: Vec<ErrorVector> = Vec::new();
    let mut probes: Vec<String> = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Parse { path: "error table".into(), msg: format!("line {}: expected 4 fields", ln + 1) });
        }
        let delta: f64 =
            f[3].parse().map_err(|_| Error::Parse { path: "error table".into(), msg: format!("line {}: bad delta", ln + 1) })?;
        let bug = (f[1] != "none").then(|| f[1].to_string());
        match vectors.last_mut() {
            Some(v) if v.design == f[0] && v.bug == bug => v.deltas.push(delta),
            _ => vectors.push(ErrorVector { design: f[0].to_string(), bug, deltas: vec![delta] }),
        }
        if vectors.len() == 1 {
            probes.push(f[2].to_string());
        }
    }
    if vectors.iter().any(|v| v.deltas.len() != probes.len()) {
        return Err(Error::Parse { path: "error table".into(), msg: "ragged error vectors".into() });
    }
    Ok((vectors, probes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::CounterSample;

    fn trace(steps: usize) -> CounterTrace {
        CounterTrace {
            design: "d".into(),
            workload_id: "p".into(),
            bug: None,
            step_cycles: 100,
            counter_names: vec!["a".into(), "b".into()],
            steps: (0..steps)
                .map(|i| CounterSample { cycles: 100, ipc: 1.0 + i as f64 * 0.1, values: vec![i as f64, 2.0 * i as f64] })
                .collect(),
        }
    }

    #[test]
    fn window_row_counts() {
        let t = trace(10);
        let c = vec!["a".to_string(), "b".to_string()];
        assert_eq!(trace_rows(&t, &c, &[1.0], 1, true).unwrap().len(), 10);
        let rows = trace_rows(&t, &c, &[1.0], 3, false).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[0].features().len(), 6);
        assert_eq!(rows[0].counter_values, vec![0.0, 0.0, 1.0, 2.0, 2.0, 4.0]);
        assert!((rows[0].target_ipc - 1.2).abs() < 1e-12);
        assert!(trace_rows(&t, &c, &[], 11, false).is_err());
    }

    #[test]
    fn error_examples() {
        assert_eq!(inference_error(&[2.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(inference_error(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(inference_error(&[0.3, 0.9, 0.1], &[0.3, 0.9, 0.1]).unwrap(), 0.0);
        assert!(inference_error(&[1.0], &[1.0]).is_err());
        assert!(inference_error(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn engine_names_parse() {
        assert_eq!("GBT-150".parse::<Engine>().unwrap().name(), "gbt-150");
        assert_eq!("lasso".parse::<Engine>().unwrap().name(), "lasso");
        assert!("cnn".parse::<Engine>().is_err());
        assert!("gbt-0".parse::<Engine>().is_err());
    }

    #[test]
    fn error_table_round_trip() {
        let v = vec![
            ErrorVector { design: "A".into(), bug: None, deltas: vec![0.5, 1.25] },
            ErrorVector { design: "A".into(), bug: Some("f01".into()), deltas: vec![2.0, 3.0] },
        ];
        let probes = vec!["p0".to_string(), "p1".to_string()];
        let (back, ids) = parse_error_table(&error_table(&v, &probes)).unwrap();
        assert_eq!(back, v);
        assert_eq!(ids, probes);
    }
}
