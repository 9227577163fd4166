//! Synthetic, phase-structured instruction streams.
//!
//! A workload is built from a handful of static loop bodies. Each body is a
//! short sequence of basic blocks with its own dependence density, memory
//! pattern and branch behaviour. The dynamic stream visits bodies one after
//! another and iterates each visit many times, so the stream has distinct
//! program phases that basic-block-vector clustering can recover.

use crate::error::{Error, Result};
use crate::sim::config::LINE_BYTES;
use crate::sim::isa::{AbstractInstruction, Opcode, ARCH_REGS};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadProfile {
    pub name: String,
    pub instructions: usize,
    pub opcode_weights: BTreeMap<Opcode, f64>,
    /// Distinct static loop bodies the stream alternates between.
    pub loop_bodies: usize,
    /// Inclusive range of instructions per loop body.
    pub body_len: (usize, usize),
    /// Inclusive range of iterations per phase visit.
    pub iterations: (usize, usize),
    pub memory_footprint: u64,
    /// Probability that a conditional forward branch is taken.
    pub branch_taken_bias: f64,
    /// Probability that a source operand reads a recently written register.
    pub dependency_density: f64,
}

impl WorkloadProfile {
    pub fn uniform(name: &str, instructions: usize, weights: &[(Opcode, f64)]) -> Self {
        Self {
            name: name.to_string(),
            instructions,
            opcode_weights: weights.iter().copied().collect(),
            loop_bodies: 4,
            body_len: (64, 256),
            iterations: (40, 160),
            memory_footprint: 256 * 1024,
            branch_taken_bias: 0.5,
            dependency_density: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.instructions == 0 {
            return Err(Error::Profile("instruction count must be positive".into()));
        }
        if self.opcode_weights.values().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Profile("opcode weights must be finite and non-negative".into()));
        }
        if self.opcode_weights.values().sum::<f64>() <= 0.0 {
            return Err(Error::Profile("opcode weights must sum to a positive value".into()));
        }
        if self.loop_bodies == 0 || self.body_len.0 == 0 || self.body_len.0 > self.body_len.1 {
            return Err(Error::Profile("invalid loop body structure".into()));
        }
        if self.iterations.0 == 0 || self.iterations.0 > self.iterations.1 {
            return Err(Error::Profile("invalid iteration range".into()));
        }
        if self.memory_footprint < LINE_BYTES {
            return Err(Error::Profile("memory footprint below one cache line".into()));
        }
        if !(0.0..=1.0).contains(&self.branch_taken_bias) || !(0.0..=1.0).contains(&self.dependency_density) {
            return Err(Error::Profile("probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub id: String,
    pub instructions: Vec<AbstractInstruction>,
    pub basic_block_ids: Vec<u32>,
}

impl Workload {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn block_count(&self) -> usize {
        self.basic_block_ids.iter().max().map_or(0, |&m| m as usize + 1)
    }

    /// A sub-range of the stream as its own workload.
    pub fn slice(&self, id: String, start: usize, len: usize) -> Workload {
        Workload {
            id,
            instructions: self.instructions[start..start + len].to_vec(),
            basic_block_ids: self.basic_block_ids[start..start + len].to_vec(),
        }
    }
}

const HOT_BYTES: u64 = 8 * 1024;

#[derive(Debug, Clone, Copy)]
enum MemPattern {
    Stride { stride: u64 },
    Random,
    /// Address depends on the previous load of this instruction.
    Chase,
}

#[derive(Debug, Clone, Copy)]
enum BranchBehavior {
    Loop,
    Biased(f64),
    Periodic(u32),
    Indirect { targets: u32 },
}

#[derive(Debug, Clone)]
struct StaticInst {
    inst: AbstractInstruction,
    block: u32,
    mem: Option<MemPattern>,
    branch: Option<BranchBehavior>,
    base: u64,
    region: u64,
}

struct Body {
    insts: Vec<StaticInst>,
}

/// Largest-remainder apportionment of `total` slots to the weights.
fn apportion(weights: &[(Opcode, f64)], total: usize) -> Vec<(Opcode, usize)> {
    let sum: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut counts: Vec<(Opcode, usize, f64)> = weights
        .iter()
        .map(|&(op, w)| {
            let exact = w / sum * total as f64;
            (op, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = counts.iter().map(|c| c.1).sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].2.total_cmp(&counts[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(total - assigned) {
        counts[i].1 += 1;
    }
    counts.into_iter().map(|(op, n, _)| (op, n)).collect()
}

fn build_body(
    profile: &WorkloadProfile,
    weights: &[(Opcode, f64)],
    body_index: usize,
    first_block: u32,
    rng: &mut ChaCha8Rng,
) -> Body {
    let len = rng.gen_range(profile.body_len.0..=profile.body_len.1);
    let counts = apportion(weights, len);
    let n_branches = counts.iter().find(|(op, _)| *op == Opcode::Branch).map_or(0, |c| c.1);
    let mut others: Vec<Opcode> = counts
        .iter()
        .filter(|(op, _)| *op != Opcode::Branch)
        .flat_map(|&(op, n)| std::iter::repeat_n(op, n))
        .collect();
    others.shuffle(rng);

    // Split the non-branch instructions into `n_branches` blocks, each closed
    // by a branch; the final branch is the loop back-edge.
    let mut layout: Vec<Opcode> = Vec::with_capacity(len);
    if n_branches == 0 {
        layout = others;
    } else {
        let mut cuts: Vec<usize> = (0..n_branches - 1).map(|_| rng.gen_range(0..=others.len())).collect();
        cuts.sort_unstable();
        cuts.push(others.len());
        let mut start = 0;
        for cut in cuts {
            layout.extend_from_slice(&others[start..cut]);
            layout.push(Opcode::Branch);
            start = cut;
        }
    }

    // Per-body character.
    let density = (profile.dependency_density + rng.gen_range(-0.25..0.25)).clamp(0.05, 0.95);
    let mean_distance = rng.gen_range(1.0..8.0f64);
    let max_footprint = profile.memory_footprint.max(4096);
    let footprint = {
        let lo = 4096f64.ln();
        let hi = (max_footprint as f64).ln();
        let f = if hi > lo { rng.gen_range(lo..=hi).exp() } else { max_footprint as f64 };
        (f as u64).next_power_of_two().min(max_footprint.next_power_of_two())
    };
    let random_mem = rng.gen_range(0.0..0.25f64);
    let chase_mem = rng.gen_range(0.0..0.06f64);
    let unpredictable = rng.gen_range(0.0..0.15f64);
    let far_branches = rng.gen_range(0.0..0.5f64);
    let body_base_pc = 0x0040_0000u32 + (body_index as u32) * 0x0004_0000;
    let region_base = 0x1000_0000u64 + (body_index as u64) * (1 << 28);

    let mut recent: Vec<u8> = Vec::new();
    let mut insts = Vec::with_capacity(layout.len());
    let mut block = first_block;
    let body_bytes = layout.len() as i32 * 4;
    for (i, &op) in layout.iter().enumerate() {
        let pc = body_base_pc + 4 * i as u32;
        let pick_src = |rng: &mut ChaCha8Rng| -> u8 {
            if !recent.is_empty() && rng.gen_bool(density) {
                let d = ((-rng.gen::<f64>().max(1e-12).ln()) * mean_distance) as usize;
                recent[recent.len() - 1 - d.min(recent.len() - 1)]
            } else {
                rng.gen_range(0..ARCH_REGS as u8)
            }
        };
        let srcs = match op {
            Opcode::Mov | Opcode::Load => [Some(pick_src(rng)), None],
            Opcode::Branch => [Some(pick_src(rng)), None],
            _ => [Some(pick_src(rng)), Some(pick_src(rng))],
        };
        let dst = op.writes_register().then(|| rng.gen_range(0..ARCH_REGS as u8));
        if let Some(d) = dst {
            recent.push(d);
        }
        let mut inst = AbstractInstruction::alu(op, pc, srcs, dst);
        let mut mem = None;
        let mut branch = None;
        match op {
            Opcode::Load | Opcode::Store => {
                let roll: f64 = rng.gen();
                mem = Some(if op == Opcode::Load && roll < chase_mem {
                    MemPattern::Chase
                } else if roll < chase_mem + random_mem {
                    MemPattern::Random
                } else {
                    MemPattern::Stride { stride: *[4u64, 8, 8, 8, 16, 64].choose(rng).unwrap() }
                });
                inst.mem_addr = Some(region_base);
            }
            Opcode::Branch => {
                let last = i + 1 == layout.len();
                let behavior = if last {
                    BranchBehavior::Loop
                } else if rng.gen_bool(0.05) {
                    BranchBehavior::Indirect { targets: rng.gen_range(1..=4) }
                } else if rng.gen_bool(unpredictable) {
                    BranchBehavior::Biased(0.5)
                } else if rng.gen_bool(0.3) {
                    BranchBehavior::Periodic(rng.gen_range(2..=8))
                } else {
                    let p = if rng.gen_bool(profile.branch_taken_bias) { 0.99 } else { 0.01 };
                    BranchBehavior::Biased(p)
                };
                let offset = if last {
                    -body_bytes
                } else if rng.gen_bool(far_branches) {
                    rng.gen_range(256..4096) & !3
                } else {
                    rng.gen_range(8..256) & !3
                };
                inst.branch_target_offset = Some(offset);
                inst.indirect = matches!(behavior, BranchBehavior::Indirect { .. });
                branch = Some(behavior);
            }
            _ => {}
        }
        insts.push(StaticInst { inst, block, mem, branch, base: region_base, region: footprint });
        if op == Opcode::Branch {
            block += 1;
        }
    }
    Body { insts }
}

/// Deterministic synthetic workload for `(seed, profile)`.
pub fn generate_workload(seed: u64, profile: &WorkloadProfile) -> Result<Workload> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<(Opcode, f64)> =
        profile.opcode_weights.iter().filter(|(_, w)| **w > 0.0).map(|(o, w)| (*o, *w)).collect();

    let mut bodies = Vec::with_capacity(profile.loop_bodies);
    let mut next_block = 0u32;
    for b in 0..profile.loop_bodies {
        let body = build_body(profile, &weights, b, next_block, &mut rng);
        next_block = body.insts.last().map_or(next_block, |s| {
            s.block + u32::from(s.inst.opcode == Opcode::Branch)
        });
        // A body without branches is a single open block.
        if body.insts.last().is_some_and(|s| s.inst.opcode != Opcode::Branch) {
            next_block += 1;
        }
        bodies.push(body);
    }

    let mut instructions = Vec::with_capacity(profile.instructions);
    let mut block_ids = Vec::with_capacity(profile.instructions);
    // Per static memory instruction: running offset for strides and chases.
    let mut cursors: Vec<Vec<u64>> = bodies.iter().map(|b| vec![0; b.insts.len()]).collect();
    let mut periodic: Vec<Vec<u32>> = bodies.iter().map(|b| vec![0; b.insts.len()]).collect();

    'outer: loop {
        let b = rng.gen_range(0..bodies.len());
        let iters = rng.gen_range(profile.iterations.0..=profile.iterations.1);
        let body = &bodies[b];
        for it in 0..iters {
            for (k, s) in body.insts.iter().enumerate() {
                if instructions.len() == profile.instructions {
                    break 'outer;
                }
                let mut inst = s.inst.clone();
                if let Some(pattern) = s.mem {
                    let cur = &mut cursors[b][k];
                    let offset = match pattern {
                        MemPattern::Stride { stride } => {
                            *cur = (*cur + stride) % s.region;
                            *cur
                        }
                        // Most random accesses land in a small hot subset of the region.
                        MemPattern::Random => {
                            let span = if rng.gen_bool(0.85) { s.region.min(HOT_BYTES) } else { s.region };
                            rng.gen_range(0..span) & !7
                        }
                        MemPattern::Chase => {
                            *cur = (cur.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407)
                                >> 11)
                                % s.region.min(4 * HOT_BYTES)
                                & !7;
                            *cur
                        }
                    };
                    inst.mem_addr = Some(s.base + offset);
                }
                if let Some(behavior) = s.branch {
                    inst.branch_taken = match behavior {
                        BranchBehavior::Loop => it + 1 < iters,
                        BranchBehavior::Biased(p) => rng.gen_bool(p),
                        BranchBehavior::Periodic(n) => {
                            let c = &mut periodic[b][k];
                            *c = (*c + 1) % n;
                            *c == 0
                        }
                        BranchBehavior::Indirect { targets } => {
                            let t = rng.gen_range(0..targets) as i32;
                            inst.branch_target_offset = Some(s.inst.branch_target_offset.unwrap() + 64 * t);
                            true
                        }
                    };
                }
                instructions.push(inst);
                block_ids.push(s.block);
            }
        }
    }
    Ok(Workload { id: profile.name.clone(), instructions, basic_block_ids: block_ids })
}

/// The ten-workload default suite, each with a distinct opcode mix.
pub fn default_profiles(instructions: usize) -> Vec<WorkloadProfile> {
    use Opcode::*;
    let mk = |name: &str, mix: &[(Opcode, f64)], bodies: usize, footprint: u64, bias: f64, dep: f64| {
        WorkloadProfile {
            name: name.to_string(),
            instructions,
            opcode_weights: mix.iter().copied().collect(),
            loop_bodies: bodies,
            body_len: (96, 320),
            iterations: (30, 140),
            memory_footprint: footprint,
            branch_taken_bias: bias,
            dependency_density: dep,
        }
    };
    let kb = 1024;
    vec![
        mk("interp", &[(Add, 0.22), (Sub, 0.06), (Xor, 0.04), (Mov, 0.14), (Mul, 0.02), (Load, 0.24), (Store, 0.12), (Branch, 0.16)], 7, 64 * kb, 0.6, 0.55),
        mk("compress", &[(Add, 0.20), (Sub, 0.08), (Xor, 0.10), (Mov, 0.10), (Mul, 0.01), (Load, 0.26), (Store, 0.10), (Branch, 0.15)], 8, 128 * kb, 0.4, 0.6),
        mk("compiler", &[(Add, 0.18), (Sub, 0.07), (Xor, 0.05), (Mov, 0.16), (Mul, 0.01), (Div, 0.003), (Load, 0.25), (Store, 0.12), (Branch, 0.18)], 9, 256 * kb, 0.5, 0.5),
        mk("pointer", &[(Add, 0.20), (Sub, 0.05), (Mov, 0.12), (Load, 0.33), (Store, 0.09), (Branch, 0.21)], 6, 1024 * kb, 0.5, 0.7),
        mk("lattice", &[(Add, 0.12), (Sub, 0.03), (Mov, 0.06), (FpAdd, 0.20), (FpMul, 0.20), (Load, 0.25), (Store, 0.09), (Branch, 0.05)], 6, 512 * kb, 0.8, 0.45),
        mk("stencil", &[(Add, 0.10), (Sub, 0.02), (Mov, 0.05), (FpAdd, 0.22), (FpMul, 0.18), (Div, 0.01), (Load, 0.28), (Store, 0.10), (Branch, 0.04)], 7, 256 * kb, 0.85, 0.4),
        mk("nbody", &[(Add, 0.10), (Sub, 0.04), (Mov, 0.04), (FpAdd, 0.24), (FpMul, 0.26), (Div, 0.02), (Load, 0.20), (Store, 0.04), (Branch, 0.06)], 5, 32 * kb, 0.8, 0.6),
        mk("simplex", &[(Add, 0.14), (Sub, 0.05), (Xor, 0.02), (Mov, 0.08), (FpAdd, 0.14), (FpMul, 0.10), (Div, 0.005), (Load, 0.28), (Store, 0.08), (Branch, 0.10)], 8, 512 * kb, 0.6, 0.5),
        mk("search", &[(Add, 0.18), (Sub, 0.10), (Xor, 0.08), (Mov, 0.12), (Mul, 0.02), (Load, 0.22), (Store, 0.09), (Branch, 0.19)], 8, 32 * kb, 0.45, 0.45),
        mk("bitops", &[(Add, 0.16), (Sub, 0.06), (Xor, 0.18), (Mov, 0.10), (Mul, 0.04), (Load, 0.20), (Store, 0.10), (Branch, 0.16)], 6, 32 * kb, 0.55, 0.5),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frac(w: &Workload, op: Opcode) -> f64 {
        w.instructions.iter().filter(|i| i.opcode == op).count() as f64 / w.len() as f64
    }

    #[test]
    fn deterministic() {
        let p = default_profiles(20_000).remove(2);
        assert_eq!(generate_workload(7, &p).unwrap(), generate_workload(7, &p).unwrap());
        assert_ne!(generate_workload(7, &p).unwrap(), generate_workload(8, &p).unwrap());
    }

    #[test]
    fn degenerate_mix() {
        let p = WorkloadProfile::uniform("adds", 10, &[(Opcode::Add, 1.0)]);
        let w = generate_workload(1, &p).unwrap();
        assert_eq!(w.len(), 10);
        assert!(w.instructions.iter().all(|i| i.opcode == Opcode::Add));
    }

    #[test]
    fn mix_matches_weights() {
        let p = WorkloadProfile::uniform("ax", 1_000_000, &[(Opcode::Add, 0.5), (Opcode::Xor, 0.5)]);
        let w = generate_workload(3, &p).unwrap();
        let x = frac(&w, Opcode::Xor);
        assert!((0.48..=0.52).contains(&x), "{x}");
    }

    #[test]
    fn default_profiles_mix_within_two_percent() {
        for p in default_profiles(120_000) {
            let w = generate_workload(11, &p).unwrap();
            let total: f64 = p.opcode_weights.values().sum();
            for (op, wt) in &p.opcode_weights {
                let got = frac(&w, *op);
                assert!((got - wt / total).abs() <= 0.02, "{} {op}: {got} vs {wt}", p.name);
            }
        }
    }

    #[test]
    fn instructions_valid_and_blocks_end_at_branches() {
        let p = default_profiles(50_000).remove(0);
        let w = generate_workload(5, &p).unwrap();
        for i in &w.instructions {
            i.validate().unwrap();
        }
        for k in 1..w.len() {
            if w.basic_block_ids[k] != w.basic_block_ids[k - 1] {
                assert_eq!(w.instructions[k - 1].opcode, Opcode::Branch, "block change without branch at {k}");
            }
        }
    }

    #[test]
    fn rejects_bad_profiles() {
        let p = WorkloadProfile::uniform("z", 0, &[(Opcode::Add, 1.0)]);
        assert!(generate_workload(0, &p).is_err());
        let p = WorkloadProfile::uniform("z", 10, &[(Opcode::Add, 0.0)]);
        assert!(generate_workload(0, &p).is_err());
        let p = WorkloadProfile::uniform("z", 10, &[]);
        assert!(generate_workload(0, &p).is_err());
    }
}
