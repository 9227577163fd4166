//! SimPoint-style probe extraction: basic-block vectors, k-means clustering,
//! and representative interval slicing.

use crate::error::{invalid, Error, Result};
use crate::sim::Workload;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const DEFAULT_K: usize = 19;
pub const KMEANS_MAX_ITERS: usize = 100;

/// Row-normalized basic-block execution counts, one row per full interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BbvMatrix {
    pub interval_len: usize,
    pub vectors: Vec<Vec<f64>>,
}

impl BbvMatrix {
    pub fn rows(&self) -> usize {
        self.vectors.len()
    }
}

pub fn profile_bbv(workload: &Workload, interval_len: usize) -> Result<BbvMatrix> {
    if interval_len == 0 {
        return Err(invalid("interval length must be positive"));
    }
    if interval_len > workload.len() {
        return Err(invalid(format!(
            "interval length {interval_len} exceeds workload length {}",
            workload.len()
        )));
    }
    let blocks = workload.block_count();
    let vectors = workload
        .basic_block_ids
        .chunks_exact(interval_len)
        .map(|chunk| {
            let mut row = vec![0.0; blocks];
            for &b in chunk {
                row[b as usize] += 1.0;
            }
            let n = chunk.len() as f64;
            row.iter_mut().for_each(|v| *v /= n);
            row
        })
        .collect();
    Ok(BbvMatrix { interval_len, vectors })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimPoint {
    pub interval_index: usize,
    pub weight: f64,
}

/// Full k-means outcome, kept for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_history: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = dist2(row, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. Seeding stops early when
/// every remaining row coincides with a chosen centroid.
pub fn kmeans(rows: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering> {
    if rows.is_empty() {
        return Err(invalid("empty BBV matrix"));
    }
    if k == 0 || k > rows.len() {
        return Err(invalid(format!("k = {k} must be in 1..={}", rows.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![rows[rng.gen_range(0..rows.len())].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| dist2(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut pick = rows.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        // Fall back to the farthest row if rounding left us on a zero-distance row.
        if d2[pick] <= 0.0 {
            pick = (0..rows.len()).max_by(|&a, &b| d2[a].total_cmp(&d2[b]).then(b.cmp(&a))).unwrap();
        }
        centroids.push(rows[pick].clone());
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(dist2(r, centroids.last().unwrap()));
        }
    }

    let dims = rows[0].len();
    let mut assignment = vec![usize::MAX; rows.len()];
    let mut wcss_history = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        let mut wcss = 0.0;
        for (i, r) in rows.iter().enumerate() {
            let (c, d) = nearest(r, &centroids);
            wcss += d;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        wcss_history.push(wcss);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dims]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (r, &c) in rows.iter().zip(&assignment) {
            counts[c] += 1;
            sums[c].iter_mut().zip(r).for_each(|(s, v)| *s += v);
        }
        for (c, cen) in centroids.iter_mut().enumerate() {
            // An emptied cluster keeps its old centroid.
            if counts[c] > 0 {
                *cen = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    Ok(Clustering { assignment, centroids, wcss_history })
}

/// One representative interval per non-empty cluster (the row nearest its
/// centroid, lowest index on ties) weighted by cluster population.
pub fn cluster_simpoints(bbv: &BbvMatrix, k: usize, seed: u64) -> Result<Vec<SimPoint>> {
    let cl = kmeans(&bbv.vectors, k, seed)?;
    let n = bbv.rows() as f64;
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in cl.assignment.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    let mut out: Vec<SimPoint> = members
        .into_iter()
        .map(|(c, idx)| {
            let rep = *idx
                .iter()
                .min_by(|&&a, &&b| {
                    dist2(&bbv.vectors[a], &cl.centroids[c])
                        .total_cmp(&dist2(&bbv.vectors[b], &cl.centroids[c]))
                        .then(a.cmp(&b))
                })
                .unwrap();
            SimPoint { interval_index: rep, weight: idx.len() as f64 / n }
        })
        .collect();
    out.sort_by_key(|s| s.interval_index);
    Ok(out)
}

/// A microbenchmark slice plus the counters chosen for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub id: String,
    pub source_workload: String,
    pub interval_index: usize,
    pub interval_len: usize,
    pub weight: f64,
    pub instructions: Workload,
    pub selected_counters: Vec<String>,
}

impl Probe {
    pub fn record(&self) -> ProbeRecord {
        ProbeRecord {
            id: self.id.clone(),
            source_workload: self.source_workload.clone(),
            interval_index: self.interval_index,
            interval_len: self.interval_len,
            weight: self.weight,
        }
    }
}

pub fn probe_id(workload: &str, interval_index: usize) -> String {
    format!("{workload}.i{interval_index:04}")
}

pub fn extract_probes(workload: &Workload, interval_len: usize, simpoints: &[SimPoint]) -> Result<Vec<Probe>> {
    if interval_len == 0 {
        return Err(invalid("interval length must be positive"));
    }
    let intervals = workload.len() / interval_len;
    simpoints
        .iter()
        .map(|sp| {
            if sp.interval_index >= intervals {
                return Err(invalid(format!(
                    "interval {} out of range for {} ({} intervals)",
                    sp.interval_index, workload.id, intervals
                )));
            }
            let id = probe_id(&workload.id, sp.interval_index);
            Ok(Probe {
                instructions: workload.slice(id.clone(), sp.interval_index * interval_len, interval_len),
                id,
                source_workload: workload.id.clone(),
                interval_index: sp.interval_index,
                interval_len,
                weight: sp.weight,
                selected_counters: Vec::new(),
            })
        })
        .collect()
}

/// Manifest entry; the slice itself is recovered from the source workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeRecord {
    pub id: String,
    pub source_workload: String,
    pub interval_index: usize,
    pub interval_len: usize,
    pub weight: f64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    probe: Vec<ProbeRecord>,
}

pub fn write_manifest(records: &[ProbeRecord], path: &Path) -> Result<()> {
    let text = toml::to_string(&Manifest { probe: records.to_vec() }).map_err(|e| invalid(e.to_string()))?;
    Ok(std::fs::write(path, text)?)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ProbeRecord>> {
    let text = std::fs::read_to_string(path)?;
    let m: Manifest =
        toml::from_str(&text).map_err(|e| Error::Parse { path: path.display().to_string(), msg: e.to_string() })?;
    Ok(m.probe)
}

/// Rebuilds probes from manifest records against their source workloads.
pub fn probes_from_records(records: &[ProbeRecord], workloads: &[Workload]) -> Result<Vec<Probe>> {
    records
        .iter()
        .map(|r| {
            let w = workloads
                .iter()
                .find(|w| w.id == r.source_workload)
                .ok_or_else(|| invalid(format!("probe {} references unknown workload {}", r.id, r.source_workload)))?;
            let sp = SimPoint { interval_index: r.interval_index, weight: r.weight };
            let mut p = extract_probes(w, r.interval_len, &[sp])?.remove(0);
            p.id = r.id.clone();
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{AbstractInstruction, Opcode};

    fn blocks_workload(ids: &[u32]) -> Workload {
        let instructions = ids
            .iter()
            .enumerate()
            .map(|(i, _)| AbstractInstruction::alu(Opcode::Add, 4 * i as u32, [None, None], Some(1)))
            .collect();
        Workload { id: "w".into(), instructions, basic_block_ids: ids.to_vec() }
    }

    #[test]
    fn single_block_rows_are_one_hot() {
        let w = blocks_workload(&[0; 40]);
        let bbv = profile_bbv(&w, 10).unwrap();
        assert_eq!(bbv.rows(), 4);
        assert!(bbv.vectors.iter().all(|r| r == &vec![1.0]));
    }

    #[test]
    fn alternating_blocks_alternate_rows() {
        let ids: Vec<u32> = (0..60).map(|i| ((i / 10) % 2) as u32).collect();
        let bbv = profile_bbv(&blocks_workload(&ids), 10).unwrap();
        for (i, r) in bbv.vectors.iter().enumerate() {
            let expect = if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
            assert_eq!(r, &expect);
        }
    }

    #[test]
    fn zero_interval_and_oversized_rejected() {
        let w = blocks_workload(&[0; 10]);
        assert!(profile_bbv(&w, 0).is_err());
        assert!(profile_bbv(&w, 11).is_err());
    }

    #[test]
    fn identical_rows_collapse() {
        let bbv = BbvMatrix { interval_len: 1, vectors: vec![vec![0.5, 0.5]; 12] };
        let sp = cluster_simpoints(&bbv, 4, 3).unwrap();
        assert_eq!(sp.len(), 1);
        assert_eq!(sp[0].weight, 1.0);
    }

    #[test]
    fn separated_groups_weighted_by_population() {
        let mut rows = vec![vec![1.0, 0.0, 0.0]; 7];
        rows.extend(vec![vec![0.0, 0.0, 1.0]; 3]);
        let bbv = BbvMatrix { interval_len: 1, vectors: rows };
        for seed in 0..10 {
            let sp = cluster_simpoints(&bbv, 2, seed).unwrap();
            let mut w: Vec<f64> = sp.iter().map(|s| s.weight).collect();
            w.sort_by(f64::total_cmp);
            assert_eq!(w, vec![0.3, 0.7]);
        }
    }

    #[test]
    fn empty_matrix_rejected() {
        let bbv = BbvMatrix { interval_len: 1, vectors: vec![] };
        assert!(cluster_simpoints(&bbv, 1, 0).is_err());
    }

    #[test]
    fn first_interval_probe_slice() {
        let ids: Vec<u32> = (0..30).map(|i| (i / 7) as u32).collect();
        let w = blocks_workload(&ids);
        let p = extract_probes(&w, 10, &[SimPoint { interval_index: 0, weight: 1.0 }]).unwrap();
        assert_eq!(p[0].instructions.instructions, w.instructions[..10]);
        assert!(extract_probes(&w, 10, &[SimPoint { interval_index: 3, weight: 1.0 }]).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let ids: Vec<u32> = (0..30).map(|i| (i / 7) as u32).collect();
        let w = blocks_workload(&ids);
        let sps = [SimPoint { interval_index: 1, weight: 0.25 }, SimPoint { interval_index: 2, weight: 0.75 }];
        let probes = extract_probes(&w, 10, &sps).unwrap();
        let dir = std::env::temp_dir().join(format!("perfprobe-manifest-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("probes.toml");
        let records: Vec<_> = probes.iter().map(Probe::record).collect();
        write_manifest(&records, &path).unwrap();
        let back = probes_from_records(&read_manifest(&path).unwrap(), &[w]).unwrap();
        assert_eq!(back, probes);
        std::fs::remove_dir_all(dir).ok();
    }
}
