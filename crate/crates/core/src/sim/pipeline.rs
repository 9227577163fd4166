//! Out-of-order core model solved as per-instruction event times.
//!
//! Fetch, dispatch and commit are in order and `pipeline_width` wide. Issue
//! is out of order across ports and in order within a port; each instruction
//! is steered to a port at dispatch. IQ, ROB and register capacity bound
//! dispatch through the issue and commit times of older instructions. Fetch
//! follows the correct path only; a misprediction blocks fetch until the
//! branch resolves plus a fixed refill penalty, and the idle fetch slots are
//! reported as wrong-path fetches. Cache lookups, predictor updates, register
//! assignment and all bug-induced latency adders are resolved in program
//! order, which keeps them independent of timing.

use crate::bugs::{instantiate_bug, BugSpec, HookSet, Window};
use crate::error::{Error, Result};
use crate::sim::cache::{line_of, Cache};
use crate::sim::config::MicroarchConfig;
use crate::sim::isa::{AbstractInstruction, FuKind, Opcode, ARCH_REGS};
use crate::sim::predictor::BranchPredictor;
use crate::sim::trace::{CounterSample, CounterTrace, COUNTER_NAMES};
use crate::sim::workload::Workload;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

const NONE: u32 = u32::MAX;

// Raw counter slots, matching COUNTER_NAMES order.
mod slot {
    pub const FETCHED: usize = 0;
    pub const WRONG_PATH: usize = 1;
    pub const FETCH_STALL: usize = 2;
    pub const DISPATCHED: usize = 3;
    pub const ISSUED: usize = 4;
    pub const COMMITTED: usize = 5;
    pub const BRANCH_FRACTION: usize = 6;
    pub const BRANCHES: usize = 7;
    pub const TAKEN: usize = 8;
    pub const MISPREDICTS: usize = 9;
    pub const MISPREDICT_RATE: usize = 10;
    pub const INDIRECT: usize = 11;
    pub const INDIRECT_CORRECT: usize = 12;
    pub const L1_ACC: usize = 13;
    pub const L1_MISS: usize = 14;
    pub const L2_ACC: usize = 15;
    pub const L2_MISS: usize = 16;
    pub const L3_ACC: usize = 17;
    pub const L3_MISS: usize = 18;
    pub const DRAM: usize = 19;
    pub const PREFETCH: usize = 20;
    pub const LOADS: usize = 21;
    pub const STORES: usize = 22;
    pub const ALU_OPS: usize = 23;
    pub const MUL_OPS: usize = 24;
    pub const DIV_OPS: usize = 25;
    pub const FP_OPS: usize = 26;
    pub const IQ_FULL: usize = 27;
    pub const ROB_FULL: usize = 28;
    pub const REG_FULL: usize = 29;
    pub const DISPATCH_STALL: usize = 30;
    pub const SERIAL_STALL: usize = 31;
    pub const REG_WRITES: usize = 32;
    pub const MAX_COMMIT: usize = 33;
    pub const ZERO_COMMIT: usize = 34;
    pub const ZERO_ISSUE: usize = 35;
    pub const IQ_OCC: usize = 36;
    pub const ROB_OCC: usize = 37;
    pub const PORT0: usize = 38;
    pub const COUNT: usize = 46;
}

struct StrideEntry {
    pc: u32,
    last: u64,
    stride: i64,
    confidence: u8,
}

struct Memory {
    l1: Cache,
    l2: Cache,
    l3: Option<Cache>,
    dram_latency: u32,
    l2_extra: u32,
    stride_table: Vec<StrideEntry>,
}

impl Memory {
    fn new(cfg: &MicroarchConfig, l2_extra: u32) -> Self {
        Self {
            l1: Cache::new(&cfg.l1),
            l2: Cache::new(&cfg.l2),
            l3: cfg.l3.as_ref().map(Cache::new),
            dram_latency: cfg.dram_latency,
            l2_extra,
            stride_table: (0..64).map(|_| StrideEntry { pc: NONE, last: 0, stride: 0, confidence: 0 }).collect(),
        }
    }

    /// Program-order access; returns the access latency.
    fn access(&mut self, addr: u64, raw: &mut [f64; slot::COUNT]) -> u32 {
        let line = line_of(addr);
        raw[slot::L1_ACC] += 1.0;
        let mut lat = self.l1.latency;
        if self.l1.access(line) {
            return lat;
        }
        raw[slot::L1_MISS] += 1.0;
        raw[slot::L2_ACC] += 1.0;
        lat += self.l2.latency + self.l2_extra;
        if self.l2.access(line) {
            return lat;
        }
        raw[slot::L2_MISS] += 1.0;
        if let Some(l3) = self.l3.as_mut() {
            raw[slot::L3_ACC] += 1.0;
            lat += l3.latency;
            if l3.access(line) {
                return lat;
            }
            raw[slot::L3_MISS] += 1.0;
        }
        raw[slot::DRAM] += 1.0;
        lat + self.dram_latency
    }

    /// Stride prefetcher stub: a confirmed per-PC stride pulls the line four
    /// strides ahead into L1 and L2.
    fn train_prefetch(&mut self, pc: u32, addr: u64, raw: &mut [f64; slot::COUNT]) {
        let e = &mut self.stride_table[(pc as usize >> 2) % 64];
        if e.pc != pc {
            *e = StrideEntry { pc, last: addr, stride: 0, confidence: 0 };
            return;
        }
        let stride = addr as i64 - e.last as i64;
        if stride != 0 && stride == e.stride {
            e.confidence = (e.confidence + 1).min(3);
        } else {
            e.confidence = 0;
            e.stride = stride;
        }
        e.last = addr;
        if e.confidence >= 2 {
            let target = (addr as i64 + 4 * e.stride).max(0) as u64;
            let line = line_of(target);
            if line != line_of(addr) && !self.l1.contains(line) {
                raw[slot::PREFETCH] += 1.0;
                self.l2.access(line);
                self.l1.access(line);
            }
        }
    }
}

fn finish_sample(cycles: u64, raw: &[f64; slot::COUNT]) -> CounterSample {
    let span = cycles.max(1) as f64;
    let mut values = vec![0.0; COUNTER_NAMES.len()];
    for (i, v) in values.iter_mut().enumerate() {
        *v = match i {
            slot::BRANCH_FRACTION => {
                if raw[slot::COMMITTED] > 0.0 {
                    raw[slot::BRANCHES] / raw[slot::COMMITTED]
                } else {
                    0.0
                }
            }
            slot::MISPREDICT_RATE => {
                if raw[slot::BRANCHES] > 0.0 {
                    raw[slot::MISPREDICTS] / raw[slot::BRANCHES]
                } else {
                    0.0
                }
            }
            slot::INDIRECT_CORRECT => {
                if raw[slot::INDIRECT] > 0.0 {
                    raw[slot::INDIRECT_CORRECT] / raw[slot::INDIRECT]
                } else {
                    1.0
                }
            }
            slot::IQ_OCC | slot::ROB_OCC => raw[i] / span,
            _ => raw[i] * 1000.0 / span,
        };
    }
    CounterSample { cycles, ipc: raw[slot::COMMITTED] / span, values }
}

/// Runs `workload` on `cfg`, sampling counters every `step_cycles` cycles.
pub fn simulate(
    workload: &Workload,
    cfg: &MicroarchConfig,
    bug: Option<&BugSpec>,
    step_cycles: u64,
) -> Result<CounterTrace> {
    simulate_warm(workload, &[], cfg, bug, step_cycles)
}

/// Like [`simulate`], after functionally warming caches, prefetcher and branch
/// predictor with `warmup`. Warming takes no cycles and touches no counter.
pub fn simulate_warm(
    workload: &Workload,
    warmup: &[AbstractInstruction],
    cfg: &MicroarchConfig,
    bug: Option<&BugSpec>,
    step_cycles: u64,
) -> Result<CounterTrace> {
    if workload.is_empty() {
        return Err(Error::Invalid("workload is empty".into()));
    }
    if step_cycles == 0 {
        return Err(Error::Invalid("step_cycles must be at least 1".into()));
    }
    cfg.validate()?;
    let mut hooks = match bug {
        Some(spec) => instantiate_bug(spec, cfg.phys_regs)?,
        None => HookSet::none(),
    };
    let mut core = Core::new(cfg, &hooks);
    core.warm(warmup);
    let mut log = EventLog::new(step_cycles);
    core.run(&workload.instructions, &mut hooks, &mut log);
    Ok(CounterTrace {
        design: cfg.name.clone(),
        workload_id: workload.id.clone(),
        bug: bug.map(|b| b.name.clone()),
        step_cycles,
        counter_names: COUNTER_NAMES.iter().map(|s| s.to_string()).collect(),
        steps: log.finish(cfg.pipeline_width as usize),
    })
}

/// Counter events keyed by the cycle they happen in.
struct EventLog {
    step_cycles: u64,
    steps: Vec<[f64; slot::COUNT]>,
    commits: Vec<u16>,
    issues: Vec<u16>,
    ports: Vec<u8>,
    /// Difference arrays for counters that accrue once per cycle over an interval.
    spans: Vec<(usize, Vec<i32>)>,
    total_cycles: u64,
}

const SPAN_SLOTS: [usize; 9] = [
    slot::FETCH_STALL,
    slot::WRONG_PATH,
    slot::DISPATCH_STALL,
    slot::IQ_FULL,
    slot::ROB_FULL,
    slot::REG_FULL,
    slot::SERIAL_STALL,
    slot::IQ_OCC,
    slot::ROB_OCC,
];

impl EventLog {
    fn new(step_cycles: u64) -> Self {
        Self {
            step_cycles,
            steps: Vec::new(),
            commits: Vec::new(),
            issues: Vec::new(),
            ports: Vec::new(),
            spans: SPAN_SLOTS.iter().map(|&s| (s, Vec::new())).collect(),
            total_cycles: 0,
        }
    }

    fn add(&mut self, cycle: u64, s: usize, v: f64) {
        let idx = (cycle / self.step_cycles) as usize;
        if idx >= self.steps.len() {
            self.steps.resize(idx + 1, [0.0; slot::COUNT]);
        }
        self.steps[idx][s] += v;
    }

    /// Adds `per_cycle` to slot `s` for every cycle in `[from, to)`.
    fn span(&mut self, s: usize, from: u64, to: u64, per_cycle: i32) {
        if to <= from {
            return;
        }
        let k = SPAN_SLOTS.iter().position(|&x| x == s).expect("span slot");
        let diff = &mut self.spans[k].1;
        if diff.len() <= to as usize {
            diff.resize(to as usize + 1, 0);
        }
        diff[from as usize] += per_cycle;
        diff[to as usize] -= per_cycle;
    }

    fn bump(v: &mut Vec<u16>, cycle: u64) {
        let c = cycle as usize;
        if c >= v.len() {
            v.resize(c + 1, 0);
        }
        v[c] += 1;
    }

    fn port_busy(&mut self, port: usize, from: u64, to: u64) {
        if self.ports.len() < to as usize {
            self.ports.resize(to as usize, 0);
        }
        for c in from..to {
            self.ports[c as usize] |= 1 << port;
        }
    }

    fn finish(mut self, width: usize) -> Vec<CounterSample> {
        let total = self.total_cycles;
        let spans = std::mem::take(&mut self.spans);
        for (s, diff) in spans {
            let mut run = 0i64;
            for (c, d) in diff.iter().enumerate().take(total as usize) {
                run += *d as i64;
                if run != 0 {
                    self.add(c as u64, s, run as f64);
                }
            }
        }
        for c in 0..total {
            let ci = c as usize;
            let commits = self.commits.get(ci).copied().unwrap_or(0) as usize;
            if commits == 0 {
                self.add(c, slot::ZERO_COMMIT, 1.0);
            } else if commits == width {
                self.add(c, slot::MAX_COMMIT, 1.0);
            }
            if self.issues.get(ci).copied().unwrap_or(0) == 0 {
                self.add(c, slot::ZERO_ISSUE, 1.0);
            }
            let mut busy = self.ports.get(ci).copied().unwrap_or(0);
            while busy != 0 {
                let p = busy.trailing_zeros() as usize;
                self.add(c, slot::PORT0 + p, 1.0);
                busy &= busy - 1;
            }
        }
        let s = self.step_cycles;
        let full = (total / s) as usize;
        let tail = total % s;
        self.steps.resize(full + 1, [0.0; slot::COUNT]);
        let mut out: Vec<(u64, [f64; slot::COUNT])> = self.steps[..full].iter().map(|r| (s, *r)).collect();
        if tail > 0 {
            let last = self.steps[full];
            // A short tail (< 10% of a step) folds into the previous step.
            if tail * 10 >= s || out.is_empty() {
                out.push((tail, last));
            } else {
                let prev = out.last_mut().expect("non-empty");
                prev.0 += tail;
                for (a, b) in prev.1.iter_mut().zip(last.iter()) {
                    *a += b;
                }
            }
        }
        out.iter().map(|(cycles, raw)| finish_sample(*cycles, raw)).collect()
    }
}

/// The `k` largest values pushed so far, with the smallest of them on top.
struct TopK {
    k: usize,
    heap: BinaryHeap<Reverse<u64>>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self { k, heap: BinaryHeap::with_capacity(k + 1) }
    }

    fn push(&mut self, v: u64) {
        if self.k == 0 {
            return;
        }
        if self.heap.len() < self.k {
            self.heap.push(Reverse(v));
        } else if v > self.heap.peek().expect("full").0 {
            self.heap.pop();
            self.heap.push(Reverse(v));
        }
    }

    /// The k-th largest value, once k values have been seen.
    fn kth(&self) -> Option<u64> {
        (self.k > 0 && self.heap.len() == self.k).then(|| self.heap.peek().expect("full").0)
    }
}

/// Cycle bound that an IQ or ROB pressure bug places on dispatch.
enum Pressure {
    /// Never fewer than N slots free.
    Never,
    /// Always fewer than N slots free.
    Always,
    /// Fewer than N slots free before this cycle.
    Until(u64),
}

struct Core<'a> {
    cfg: &'a MicroarchConfig,
    width: usize,
    port_masks: Vec<u8>,
    latency: [u32; 8],
    mem: Memory,
    predictor: BranchPredictor,
}

impl<'a> Core<'a> {
    fn new(cfg: &'a MicroarchConfig, hooks: &HookSet) -> Self {
        let mut latency = [1u32; 8];
        for k in FuKind::ALL {
            latency[k as usize] = cfg.latency(k);
        }
        Self {
            cfg,
            width: cfg.pipeline_width as usize,
            port_masks: cfg.port_masks(),
            latency,
            mem: Memory::new(cfg, hooks.l2_extra_latency()),
            predictor: BranchPredictor::new(cfg.branch_predictor_entries as usize, hooks.predictor_lost_entries()),
        }
    }

    fn warm(&mut self, warmup: &[AbstractInstruction]) {
        let mut scratch = [0.0; slot::COUNT];
        for inst in warmup {
            match inst.opcode {
                Opcode::Load => {
                    let addr = inst.mem_addr.unwrap_or(0);
                    self.mem.access(addr, &mut scratch);
                    self.mem.train_prefetch(inst.pc, addr, &mut scratch);
                }
                Opcode::Store => {
                    self.mem.access(inst.mem_addr.unwrap_or(0), &mut scratch);
                }
                Opcode::Branch => {
                    let offset = inst.branch_target_offset.unwrap_or(0);
                    self.predictor.predict_and_update(inst.pc, inst.branch_taken, inst.indirect, offset as i64);
                }
                _ => {}
            }
        }
    }

    /// Schedules every instruction in program order. Each event time is a
    /// maximum of older event times plus non-negative latencies, so no added
    /// delay can make any later event earlier.
    fn run(&mut self, insts: &[AbstractInstruction], hooks: &mut HookSet, log: &mut EventLog) {
        let n = insts.len();
        let cfg = self.cfg;
        let w = self.width;
        let depth = cfg.frontend_depth as u64;
        let rob = cfg.rob_size as usize;
        let iq = cfg.iq_size as usize;
        let fetch_capacity = w * (cfg.frontend_depth as usize + 2);
        let ports = self.port_masks.len();

        let mut fetch = vec![0u64; n];
        let mut dispatch = vec![0u64; n];
        let mut issue = vec![0u64; n];
        let mut commit = vec![0u64; n];

        // Rename: registers are handed out FIFO and return at commit in
        // program order, so the k-th allocation reuses the register released
        // by the (k - initial free)-th writer.
        let phys = cfg.phys_regs as usize;
        let initial_free = phys - ARCH_REGS;
        let reserved = (hooks.register_reduction() as usize).min(initial_free - 1);
        let usable = initial_free - reserved;
        let mut free_list: VecDeque<u32> = (ARCH_REGS as u32..cfg.phys_regs).collect();
        let mut rename: [u32; ARCH_REGS] = std::array::from_fn(|a| a as u32);
        let mut writers: Vec<usize> = Vec::new();
        let mut phys_ready = vec![0u64; phys];
        let mut phys_estimate = vec![0u64; phys];
        let mut phys_producer: Vec<Option<Opcode>> = vec![None; phys];

        let mut iq_window = TopK::new(iq);
        let pressure = hooks.dispatch_pressure();
        let mut iq_pressure = match pressure {
            Some((Window::Iq, n_free, _)) => TopK::new((iq + 1).saturating_sub(n_free as usize)),
            _ => TopK::new(0),
        };

        let mut port_free = vec![0u64; ports];
        let mut port_estimate = vec![0u64; ports];
        let mut fetch_floor = 0u64;
        let mut last_serial: Option<u64> = None;
        let mut max_issue = 0u64;
        let mut exclusive_windows: VecDeque<(usize, u64, u64)> = VecDeque::new();
        let mut pending_serial: Option<usize> = None;

        for (i, inst) in insts.iter().enumerate() {
            let op = inst.opcode;

            // Fetch.
            let mut f = fetch_floor;
            if i >= w {
                f = f.max(fetch[i - w] + 1);
            }
            if i >= fetch_capacity {
                f = f.max(dispatch[i - fetch_capacity]);
            }
            fetch[i] = f;
            log.add(f, slot::FETCHED, 1.0);
            fetch_floor = f;
            let mut mispredicted = false;
            let mut indirect_ok = true;
            let mut long_delay = 0;
            if op == Opcode::Branch {
                let offset = inst.branch_target_offset.unwrap_or(0);
                let (dir_ok, target_ok) =
                    self.predictor.predict_and_update(inst.pc, inst.branch_taken, inst.indirect, offset as i64);
                indirect_ok = target_ok;
                mispredicted = !(dir_ok && target_ok);
                if !mispredicted {
                    long_delay = hooks.long_branch_delay(offset) as u64;
                    if long_delay > 0 {
                        fetch_floor = f + 1 + long_delay;
                        if i + 1 < n {
                            log.span(slot::FETCH_STALL, f + 1, fetch_floor, 1);
                        }
                    } else if inst.branch_taken {
                        fetch_floor = f + 1;
                    }
                }
            }

            // Dispatch.
            let ready = f + depth;
            let mut natural = ready;
            let mut head_from = ready;
            if i > 0 {
                natural = natural.max(dispatch[i - 1]);
                head_from = head_from.max(dispatch[i - 1] + 1);
            }
            if i >= w {
                natural = natural.max(dispatch[i - w] + 1);
            }
            let rob_bound = if i >= rob { commit[i - rob] } else { 0 };
            let iq_bound = iq_window.kth().unwrap_or(0);
            let writes = inst.dst_reg.is_some();
            let reg_bound = if writes && writers.len() >= usable { commit[writers[writers.len() - usable]] } else { 0 };
            natural = natural.max(rob_bound).max(iq_bound).max(reg_bound);
            let mut d = natural;
            let mut bug_bound = 0;
            if let Some((window, n_free, t)) = pressure {
                // Held once per dispatch group of `w` instructions.
                if i % w == 0 && t > 0 {
                    let state = match window {
                        Window::Iq => {
                            if iq_pressure.k == 0 {
                                Pressure::Always
                            } else {
                                iq_pressure.kth().map_or(Pressure::Never, Pressure::Until)
                            }
                        }
                        Window::Rob => {
                            let k = (rob + 1).saturating_sub(n_free as usize);
                            if k == 0 {
                                Pressure::Always
                            } else if i >= k {
                                Pressure::Until(commit[i - k])
                            } else {
                                Pressure::Never
                            }
                        }
                    };
                    let seen = match state {
                        Pressure::Never => None,
                        Pressure::Always => Some(natural),
                        Pressure::Until(q) if q > 0 => Some(natural.min(q - 1)),
                        Pressure::Until(_) => None,
                    };
                    if let Some(c) = seen {
                        bug_bound = c + t as u64;
                        d = d.max(bug_bound);
                    }
                }
            }
            dispatch[i] = d;
            log.add(d, slot::DISPATCHED, 1.0);
            log.span(slot::DISPATCH_STALL, head_from, d, 1);
            let mut c = head_from;
            for (bound, s) in [(bug_bound, None), (rob_bound, Some(slot::ROB_FULL)), (iq_bound, Some(slot::IQ_FULL)), (reg_bound, Some(slot::REG_FULL))] {
                let end = bound.min(d);
                if end > c {
                    if let Some(s) = s {
                        log.span(s, c, end, 1);
                    }
                    c = end;
                }
            }
            if let Some(x) = pending_serial.take() {
                log.span(slot::SERIAL_STALL, dispatch[x].max(d) + 1, issue[x], 1);
            }

            // Rename and operand latency, resolved in program order.
            let mut srcs = [NONE; 2];
            let mut producers = [None; 2];
            for (k, r) in inst.src_regs.iter().enumerate() {
                if let Some(r) = r {
                    let p = rename[*r as usize];
                    srcs[k] = p;
                    producers[k] = phys_producer[p as usize];
                }
            }
            let mut raw = [0.0; slot::COUNT];
            let (mut lat, base) = match op {
                Opcode::Load => {
                    let addr = inst.mem_addr.unwrap_or(0);
                    let l = self.mem.access(addr, &mut raw);
                    self.mem.train_prefetch(inst.pc, addr, &mut raw);
                    let extra = if raw[slot::L2_ACC] > 0.0 { self.mem.l2_extra } else { 0 };
                    (l, l - extra)
                }
                Opcode::Store => {
                    let addr = inst.mem_addr.unwrap_or(0);
                    self.mem.access(addr, &mut raw);
                    let l = self.latency[FuKind::Store as usize];
                    (l + hooks.store_delay(line_of(addr)), l)
                }
                _ => {
                    let l = self.latency[op.fu_kind() as usize];
                    (l, l)
                }
            };
            for (s, v) in raw.iter().enumerate() {
                if *v != 0.0 {
                    log.add(d, s, *v);
                }
            }
            lat += hooks.dependence_delay(op, producers);
            let mut used_regs = [NONE; 3];
            used_regs[..2].copy_from_slice(&srcs);
            let mut dst = NONE;
            if writes {
                dst = free_list.pop_front().expect("free list never drains");
                let arch = inst.dst_reg.unwrap() as usize;
                free_list.push_back(rename[arch]);
                rename[arch] = dst;
                phys_producer[dst as usize] = Some(op);
                used_regs[2] = dst;
                lat += hooks.register_write_delay(dst);
                writers.push(i);
            }
            lat += hooks.register_use_delay(op, &used_regs);
            let lat = lat.max(1) as u64;
            let base = base.max(1) as u64;

            // Port steering from bug-free latency estimates, independent of
            // actual timing; each port then issues in order.
            let kind = op.fu_kind();
            let operands_estimate = srcs.iter().filter(|&&p| p != NONE).map(|&p| phys_estimate[p as usize]).max().unwrap_or(0);
            let earliest = operands_estimate.max((i / w) as u64 + depth + 1);
            let mut port = usize::MAX;
            let mut best = u64::MAX;
            for (p, &mask) in self.port_masks.iter().enumerate() {
                if mask & kind.bit() != 0 {
                    let at = earliest.max(port_estimate[p]);
                    if at < best {
                        best = at;
                        port = p;
                    }
                }
            }
            port_estimate[port] = best + if kind.pipelined() { 1 } else { base };
            if dst != NONE {
                phys_estimate[dst as usize] = best + base;
            }

            // Issue.
            let mut at = (d + 1).max(port_free[port]);
            for &p in &srcs {
                if p != NONE {
                    at = at.max(phys_ready[p as usize]);
                }
            }
            if let Some(s) = last_serial {
                at = at.max(s + 1);
            }
            if hooks.only_if_oldest(op) {
                at = at.max(max_issue);
            }
            while exclusive_windows.front().is_some_and(|&(x, _, _)| i - x > rob + iq) {
                exclusive_windows.pop_front();
            }
            let mut moved = true;
            while moved {
                moved = false;
                for &(_, from, to) in &exclusive_windows {
                    if at >= from && at <= to {
                        at = to + 1;
                        moved = true;
                    }
                }
            }
            if hooks.exclusive_if_oldest(op) {
                let oldest_from = (d + 1).max(if i > 0 { max_issue + 1 } else { 0 });
                if oldest_from <= at {
                    exclusive_windows.push_back((i, oldest_from, at));
                }
            }
            issue[i] = at;
            if hooks.serializing(op) {
                last_serial = Some(at);
                pending_serial = Some(i);
            }
            max_issue = max_issue.max(at);
            iq_window.push(at);
            iq_pressure.push(at);
            let busy = if kind.pipelined() { 1 } else { lat };
            port_free[port] = at + busy;
            log.port_busy(port, at, at + busy);
            EventLog::bump(&mut log.issues, at);
            log.add(at, slot::ISSUED, 1.0);
            let class_slot = match kind {
                FuKind::Alu | FuKind::Branch => Some(slot::ALU_OPS),
                FuKind::IntMul => Some(slot::MUL_OPS),
                FuKind::Divider => Some(slot::DIV_OPS),
                FuKind::Fp | FuKind::FpMul => Some(slot::FP_OPS),
                FuKind::Load | FuKind::Store => None,
            };
            if let Some(s) = class_slot {
                log.add(at, s, 1.0);
            }
            let done = at + lat;
            if dst != NONE {
                phys_ready[dst as usize] = done;
                log.add(at, slot::REG_WRITES, 1.0);
            }

            // Commit.
            let mut r = done;
            if i > 0 {
                r = r.max(commit[i - 1]);
            }
            if i >= w {
                r = r.max(commit[i - w] + 1);
            }
            commit[i] = r;
            EventLog::bump(&mut log.commits, r);
            log.add(r, slot::COMMITTED, 1.0);
            match op {
                Opcode::Branch => {
                    log.add(r, slot::BRANCHES, 1.0);
                    if inst.branch_taken {
                        log.add(r, slot::TAKEN, 1.0);
                    }
                    if mispredicted {
                        log.add(r, slot::MISPREDICTS, 1.0);
                    }
                    if inst.indirect {
                        log.add(r, slot::INDIRECT, 1.0);
                        if indirect_ok {
                            log.add(r, slot::INDIRECT_CORRECT, 1.0);
                        }
                    }
                }
                Opcode::Load => log.add(r, slot::LOADS, 1.0),
                Opcode::Store => log.add(r, slot::STORES, 1.0),
                _ => {}
            }
            log.span(slot::IQ_OCC, d, at, 1);
            log.span(slot::ROB_OCC, d, r, 1);

            if mispredicted {
                let resume = done + (cfg.mispredict_penalty + hooks.mispredict_delay()) as u64;
                fetch_floor = resume.max(f + 1);
                if i + 1 < n {
                    log.span(slot::FETCH_STALL, f + 1, fetch_floor, 1);
                    log.span(slot::WRONG_PATH, f + 1, at.max(f + 1), w as i32);
                    for c in f + 1..at.max(f + 1) {
                        log.add(c, slot::FETCHED, w as f64);
                    }
                }
            }
            let _ = long_delay;
        }
        log.total_cycles = commit[n - 1] + 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::{preset, CacheLevel};
    use crate::sim::isa::AbstractInstruction;
    use crate::sim::trace::overall_ipc;
    use crate::sim::workload::{default_profiles, generate_workload};
    use std::collections::BTreeMap;

    pub(crate) fn ideal_config(width: u32) -> MicroarchConfig {
        let mut lat = BTreeMap::new();
        for k in FuKind::ALL {
            lat.insert(k, 1);
        }
        MicroarchConfig {
            name: "ideal".into(),
            clock_ghz: 1.0,
            pipeline_width: width,
            rob_size: 64,
            iq_size: 32,
            l1: CacheLevel::new(32 * 1024, 8, 1),
            l2: CacheLevel::new(256 * 1024, 8, 1),
            l3: None,
            fu_latencies: lat,
            ports: (0..width.max(1)).map(|_| FuKind::ALL.to_vec()).collect(),
            phys_regs: 128,
            branch_predictor_entries: 1024,
            dram_latency: 1,
            mispredict_penalty: 0,
            frontend_depth: 1,
        }
    }

    fn add_stream(n: usize) -> Workload {
        let instructions =
            (0..n).map(|i| AbstractInstruction::alu(Opcode::Add, 4 * i as u32, [None, None], Some((i % 8) as u8))).collect();
        Workload { id: "adds".into(), instructions, basic_block_ids: vec![0; n] }
    }

    #[test]
    fn hazard_free_stream_reaches_width() {
        let w = add_stream(20_000);
        let t = simulate(&w, &ideal_config(2), None, 1000).unwrap();
        for s in &t.steps[1..t.steps.len() - 1] {
            assert!((s.ipc - 2.0).abs() < 1e-12, "{}", s.ipc);
        }
        assert!((t.committed() - 20_000.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic_and_conserving() {
        let wl = generate_workload(3, &default_profiles(30_000)[1]).unwrap();
        let cfg = preset("skylake").unwrap();
        let a = simulate(&wl, &cfg, None, 500).unwrap();
        let b = simulate(&wl, &cfg, None, 500).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert!((a.committed() - 30_000.0).abs() < 1e-6);
        let min_cycles = (30_000f64 / cfg.pipeline_width as f64).ceil() as u64;
        assert!(a.total_cycles() >= min_cycles);
        for s in &a.steps {
            assert!(s.ipc <= cfg.pipeline_width as f64 + 1e-12);
        }
        assert!(overall_ipc(&a) > 0.0);
    }

    #[test]
    fn short_tail_folds_into_previous_step() {
        let w = add_stream(2_010);
        let t = simulate(&w, &ideal_config(2), None, 500).unwrap();
        // ~1007 cycles: two full steps and a tail of 7 cycles folded into the second.
        assert_eq!(t.steps.len(), 2);
        assert_eq!(t.total_cycles(), t.steps[0].cycles + t.steps[1].cycles);
        assert!(t.steps[1].cycles > 500);
    }

    #[test]
    fn serialize_add_slows_add_stream() {
        let w = add_stream(5_000);
        let cfg = ideal_config(2);
        let base = simulate(&w, &cfg, None, 1000).unwrap();
        let bug = BugSpec::new("ser-add", 1).x(Opcode::Add);
        let slow = simulate(&w, &cfg, Some(&bug), 1000).unwrap();
        assert!(slow.total_cycles() > base.total_cycles());
    }

    #[test]
    fn rejects_empty_and_zero_step() {
        let w = Workload { id: "e".into(), instructions: vec![], basic_block_ids: vec![] };
        assert!(simulate(&w, &ideal_config(2), None, 10).is_err());
        assert!(simulate(&add_stream(10), &ideal_config(2), None, 0).is_err());
    }
}
