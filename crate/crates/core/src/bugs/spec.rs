use crate::error::{Error, Result};
use crate::sim::isa::Opcode;
use serde::{Deserialize, Serialize};

pub const FAMILY_COUNT: u8 = 14;

/// Short human-readable name of each family, indexed by family id − 1.
pub const FAMILY_NAMES: [&str; 14] = [
    "serialize X",
    "issue X only if oldest",
    "if X is oldest, issue only X",
    "if X depends on Y, delay T",
    "if fewer than N IQ slots free, delay T",
    "if fewer than N ROB slots free, delay T",
    "if mispredicted branch, delay T",
    "if N stores to a cache line, delay T",
    "after N writes to a register, delay T",
    "L2 latency increased by T",
    "available registers reduced by N",
    "if branch longer than N bytes, delay T",
    "if X uses register R, delay T",
    "predictor table reduced by N entries",
];

/// One injectable performance bug.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BugSpec {
    pub name: String,
    pub family: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_opcode: Option<Opcode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_opcode: Option<Opcode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_delay: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub register: Option<u32>,
    /// Family 9 only: delay once every N writes instead of every write after the N-th.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub once_every_n: bool,
}

impl BugSpec {
    pub fn new(name: impl Into<String>, family: u8) -> Self {
        Self {
            name: name.into(),
            family,
            x_opcode: None,
            y_opcode: None,
            n: None,
            t_delay: None,
            register: None,
            once_every_n: false,
        }
    }

    pub fn x(mut self, op: Opcode) -> Self {
        self.x_opcode = Some(op);
        self
    }

    pub fn y(mut self, op: Opcode) -> Self {
        self.y_opcode = Some(op);
        self
    }

    pub fn n(mut self, n: u32) -> Self {
        self.n = Some(n);
        self
    }

    pub fn t(mut self, t: u32) -> Self {
        self.t_delay = Some(t);
        self
    }

    pub fn reg(mut self, r: u32) -> Self {
        self.register = Some(r);
        self
    }

    pub fn every(mut self) -> Self {
        self.once_every_n = true;
        self
    }

    /// Whether the family carries a delay parameter T.
    pub fn has_delay(&self) -> bool {
        matches!(self.family, 4..=10 | 12 | 13)
    }

    pub fn family_name(&self) -> &'static str {
        FAMILY_NAMES.get(self.family.wrapping_sub(1) as usize).copied().unwrap_or("unknown")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::Bug { name: self.name.clone(), reason });
        if !(1..=FAMILY_COUNT).contains(&self.family) {
            return fail(format!("unknown family id {}", self.family));
        }
        let (x, y, n, t, r) = match self.family {
            1..=3 => (true, false, false, false, false),
            4 => (true, true, false, true, false),
            5 | 6 | 8 | 9 | 12 => (false, false, true, true, false),
            7 | 10 => (false, false, false, true, false),
            11 | 14 => (false, false, true, false, false),
            13 => (true, false, false, true, true),
            _ => unreachable!(),
        };
        for (needed, present, what) in [
            (x, self.x_opcode.is_some(), "opcode X"),
            (y, self.y_opcode.is_some(), "opcode Y"),
            (n, self.n.is_some(), "count N"),
            (t, self.t_delay.is_some(), "delay T"),
            (r, self.register.is_some(), "register R"),
        ] {
            if needed && !present {
                return fail(format!("family {} requires {what}", self.family));
            }
        }
        if self.once_every_n && self.family != 9 {
            return fail("once_every_n applies to family 9 only".into());
        }
        if self.family == 9 && self.once_every_n && self.n == Some(0) {
            return fail("once-every-N variant needs N >= 1".into());
        }
        Ok(())
    }

    /// Copy with the delay parameter replaced.
    pub fn with_delay(&self, t: u32) -> BugSpec {
        BugSpec { t_delay: Some(t), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn required_parameters_enforced() {
        assert!(BugSpec::new("a", 4).x(Opcode::Add).y(Opcode::Sub).validate().is_err());
        assert!(BugSpec::new("a", 4).x(Opcode::Add).y(Opcode::Sub).t(5).validate().is_ok());
        assert!(BugSpec::new("b", 10).validate().is_err());
        assert!(BugSpec::new("b", 10).t(3).validate().is_ok());
        assert!(BugSpec::new("c", 11).n(4).validate().is_ok());
        assert!(BugSpec::new("d", 13).x(Opcode::Mov).t(10).validate().is_err());
    }

    #[test]
    fn unknown_family_rejected() {
        assert!(BugSpec::new("z", 0).validate().is_err());
        assert!(BugSpec::new("z", 15).validate().is_err());
    }

    #[test]
    fn every_flag_only_for_family_nine() {
        assert!(BugSpec::new("e", 8).n(5).t(10).every().validate().is_err());
        assert!(BugSpec::new("e", 9).n(5).t(10).every().validate().is_ok());
    }
}
