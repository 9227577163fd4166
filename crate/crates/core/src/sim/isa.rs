//! Abstract instruction set used by the synthetic workloads.
//!
//! Values are never computed; an instruction only carries what the timing
//! model needs: dependence structure, a memory address, and branch outcome.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Number of architectural registers visible to workloads.
pub const ARCH_REGS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Opcode {
    Add,
    Sub,
    Xor,
    Mov,
    Mul,
    Div,
    FpAdd,
    FpMul,
    Load,
    Store,
    Branch,
}

impl Opcode {
    pub const ALL: [Opcode; 11] = [
        Opcode::Add,
        Opcode::Sub,
        Opcode::Xor,
        Opcode::Mov,
        Opcode::Mul,
        Opcode::Div,
        Opcode::FpAdd,
        Opcode::FpMul,
        Opcode::Load,
        Opcode::Store,
        Opcode::Branch,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Xor => "XOR",
            Opcode::Mov => "MOV",
            Opcode::Mul => "MUL",
            Opcode::Div => "DIV",
            Opcode::FpAdd => "FP_ADD",
            Opcode::FpMul => "FP_MUL",
            Opcode::Load => "LOAD",
            Opcode::Store => "STORE",
            Opcode::Branch => "BRANCH",
        }
    }

    pub fn fu_kind(self) -> FuKind {
        match self {
            Opcode::Add | Opcode::Sub | Opcode::Xor | Opcode::Mov => FuKind::Alu,
            Opcode::Mul => FuKind::IntMul,
            Opcode::Div => FuKind::Divider,
            Opcode::FpAdd => FuKind::Fp,
            Opcode::FpMul => FuKind::FpMul,
            Opcode::Load => FuKind::Load,
            Opcode::Store => FuKind::Store,
            Opcode::Branch => FuKind::Branch,
        }
    }

    pub fn writes_register(self) -> bool {
        !matches!(self, Opcode::Store | Opcode::Branch)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Opcode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Opcode::ALL
            .iter()
            .copied()
            .find(|op| op.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown opcode `{s}`"))
    }
}

/// Functional-unit kinds a port can host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuKind {
    Alu,
    IntMul,
    Divider,
    Fp,
    FpMul,
    Load,
    Store,
    Branch,
}

impl FuKind {
    pub const ALL: [FuKind; 8] = [
        FuKind::Alu,
        FuKind::IntMul,
        FuKind::Divider,
        FuKind::Fp,
        FuKind::FpMul,
        FuKind::Load,
        FuKind::Store,
        FuKind::Branch,
    ];

    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }

    /// Unpipelined units block their port for the full latency.
    pub fn pipelined(self) -> bool {
        !matches!(self, FuKind::Divider)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractInstruction {
    pub opcode: Opcode,
    /// Static address, used to index predictors and to size branches.
    pub pc: u32,
    pub src_regs: [Option<u8>; 2],
    pub dst_reg: Option<u8>,
    pub mem_addr: Option<u64>,
    pub branch_target_offset: Option<i32>,
    pub branch_taken: bool,
    /// Indirect branches are predicted through the target buffer.
    pub indirect: bool,
}

impl AbstractInstruction {
    pub fn alu(opcode: Opcode, pc: u32, srcs: [Option<u8>; 2], dst: Option<u8>) -> Self {
        Self {
            opcode,
            pc,
            src_regs: srcs,
            dst_reg: dst,
            mem_addr: None,
            branch_target_offset: None,
            branch_taken: false,
            indirect: false,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let regs_ok = self
            .src_regs
            .iter()
            .chain(std::iter::once(&self.dst_reg))
            .flatten()
            .all(|&r| (r as usize) < ARCH_REGS);
        if !regs_ok {
            return Err(format!("register id out of range at pc {:#x}", self.pc));
        }
        match self.opcode {
            Opcode::Load | Opcode::Store if self.mem_addr.is_none() => {
                Err(format!("{} without address at pc {:#x}", self.opcode, self.pc))
            }
            Opcode::Branch if self.branch_target_offset.is_none() => {
                Err(format!("branch without target at pc {:#x}", self.pc))
            }
            _ => Ok(()),
        }
    }
}
