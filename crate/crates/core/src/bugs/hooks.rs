//! Simulator hooks for a single injected bug.
//!
//! The pipeline calls every hook at its event point; only the hooks of the
//! active family do anything, the rest return neutral values.

use crate::bugs::spec::BugSpec;
use crate::error::{Error, Result};
use crate::sim::isa::Opcode;
use std::collections::HashMap;

#[derive(Debug, Clone)]
enum Active {
    None,
    Serialize(Opcode),
    OnlyIfOldest(Opcode),
    ExclusiveIfOldest(Opcode),
    DependsOn { x: Opcode, y: Opcode, t: u32 },
    IqSlots { n: u32, t: u32 },
    RobSlots { n: u32, t: u32 },
    Mispredict(u32),
    LineStores { n: u32, t: u32, counts: HashMap<u64, u32> },
    RegWrites { n: u32, t: u32, once_every: bool, counts: Vec<u32> },
    L2Latency(u32),
    FewerRegs(u32),
    LongBranch { n: u32, t: u32 },
    RegUse { x: Opcode, reg: u32, t: u32 },
    PredictorLoss(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Iq,
    Rob,
}

/// Hooks attached to one simulation run. Never shared between runs.
#[derive(Debug, Clone)]
pub struct HookSet {
    active: Active,
}

impl HookSet {
    pub fn none() -> Self {
        Self { active: Active::None }
    }

    pub fn family(&self) -> Option<u8> {
        Some(match self.active {
            Active::None => return None,
            Active::Serialize(_) => 1,
            Active::OnlyIfOldest(_) => 2,
            Active::ExclusiveIfOldest(_) => 3,
            Active::DependsOn { .. } => 4,
            Active::IqSlots { .. } => 5,
            Active::RobSlots { .. } => 6,
            Active::Mispredict(_) => 7,
            Active::LineStores { .. } => 8,
            Active::RegWrites { .. } => 9,
            Active::L2Latency(_) => 10,
            Active::FewerRegs(_) => 11,
            Active::LongBranch { .. } => 12,
            Active::RegUse { .. } => 13,
            Active::PredictorLoss(_) => 14,
        })
    }

    /// Family 1: younger instructions wait until this one has issued.
    #[inline]
    pub fn serializing(&self, op: Opcode) -> bool {
        matches!(self.active, Active::Serialize(x) if x == op)
    }

    /// Family 2.
    #[inline]
    pub fn only_if_oldest(&self, op: Opcode) -> bool {
        matches!(self.active, Active::OnlyIfOldest(x) if x == op)
    }

    /// Family 3.
    #[inline]
    pub fn exclusive_if_oldest(&self, op: Opcode) -> bool {
        matches!(self.active, Active::ExclusiveIfOldest(x) if x == op)
    }

    /// Family 4: extra execution latency when `op` consumes a value produced by Y.
    #[inline]
    pub fn dependence_delay(&self, op: Opcode, producers: [Option<Opcode>; 2]) -> u32 {
        match self.active {
            Active::DependsOn { x, y, t } if x == op && producers.contains(&Some(y)) => t,
            _ => 0,
        }
    }

    /// Families 5 and 6: the watched window, N and T. Dispatch is held for T
    /// cycles once fewer than N of its slots are free.
    #[inline]
    pub fn dispatch_pressure(&self) -> Option<(Window, u32, u32)> {
        match self.active {
            Active::IqSlots { n, t } => Some((Window::Iq, n, t)),
            Active::RobSlots { n, t } => Some((Window::Rob, n, t)),
            _ => None,
        }
    }

    /// Family 7: extra redirect penalty on a misprediction.
    #[inline]
    pub fn mispredict_delay(&self) -> u32 {
        match self.active {
            Active::Mispredict(t) => t,
            _ => 0,
        }
    }

    /// Family 8: called once per executed store, in program order.
    pub fn store_delay(&mut self, line: u64) -> u32 {
        match &mut self.active {
            Active::LineStores { n, t, counts } => {
                let c = counts.entry(line).or_insert(0);
                let delayed = *c >= *n;
                *c = c.saturating_add(1);
                if delayed {
                    *t
                } else {
                    0
                }
            }
            _ => 0,
        }
    }

    /// Family 9: called once per register write, in program order.
    pub fn register_write_delay(&mut self, phys: u32) -> u32 {
        match &mut self.active {
            Active::RegWrites { n, t, once_every, counts } => {
                let idx = phys as usize;
                if idx >= counts.len() {
                    counts.resize(idx + 1, 0);
                }
                let c = &mut counts[idx];
                *c = c.saturating_add(1);
                let hit = if *once_every { *c % *n == 0 } else { *c > *n };
                if hit {
                    *t
                } else {
                    0
                }
            }
            _ => 0,
        }
    }

    /// Family 10.
    #[inline]
    pub fn l2_extra_latency(&self) -> u32 {
        match self.active {
            Active::L2Latency(t) => t,
            _ => 0,
        }
    }

    /// Family 11: rename registers withheld from the free list.
    #[inline]
    pub fn register_reduction(&self) -> u32 {
        match self.active {
            Active::FewerRegs(n) => n,
            _ => 0,
        }
    }

    /// Family 12: front-end stall after fetching a branch with |offset| > N.
    #[inline]
    pub fn long_branch_delay(&self, offset: i32) -> u32 {
        match self.active {
            Active::LongBranch { n, t } if offset.unsigned_abs() > n => t,
            _ => 0,
        }
    }

    /// Family 13: extra latency when X reads or writes physical register R.
    #[inline]
    pub fn register_use_delay(&self, op: Opcode, regs: &[u32]) -> u32 {
        match self.active {
            Active::RegUse { x, reg, t } if x == op && regs.contains(&reg) => t,
            _ => 0,
        }
    }

    /// Family 14.
    #[inline]
    pub fn predictor_lost_entries(&self) -> usize {
        match self.active {
            Active::PredictorLoss(n) => n as usize,
            _ => 0,
        }
    }
}

/// Builds the hook set for a validated spec. `phys_regs` bounds family 13's register id.
pub fn instantiate_bug(spec: &BugSpec, phys_regs: u32) -> Result<HookSet> {
    spec.validate()?;
    let x = spec.x_opcode.unwrap_or(Opcode::Add);
    let y = spec.y_opcode.unwrap_or(Opcode::Add);
    let n = spec.n.unwrap_or(0);
    let t = spec.t_delay.unwrap_or(0);
    let active = match spec.family {
        1 => Active::Serialize(x),
        2 => Active::OnlyIfOldest(x),
        3 => Active::ExclusiveIfOldest(x),
        4 => Active::DependsOn { x, y, t },
        5 => Active::IqSlots { n, t },
        6 => Active::RobSlots { n, t },
        7 => Active::Mispredict(t),
        8 => Active::LineStores { n, t, counts: HashMap::new() },
        9 => Active::RegWrites { n, t, once_every: spec.once_every_n, counts: Vec::new() },
        10 => Active::L2Latency(t),
        11 => Active::FewerRegs(n),
        12 => Active::LongBranch { n, t },
        13 => {
            let reg = spec.register.unwrap_or(0);
            if reg >= phys_regs {
                return Err(Error::Bug {
                    name: spec.name.clone(),
                    reason: format!("register {reg} outside the {phys_regs} physical registers"),
                });
            }
            Active::RegUse { x, reg, t }
        }
        14 => Active::PredictorLoss(n),
        _ => unreachable!("validated"),
    };
    Ok(HookSet { active })
}
