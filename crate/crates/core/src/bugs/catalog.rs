use crate::bugs::spec::BugSpec;
use crate::error::{Error, Result};
use crate::sim::isa::Opcode;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// The shipped catalog: at least three named variants per family, in a fixed order.
///
/// Parameter grids: opcodes ADD/XOR/SUB/MOV for the opcode-keyed families,
/// T in {10, 25, 50} for dependence delays, N in {2, 5, 10} free slots with
/// T = 10 for the occupancy families, T in {10, 20, 50} for mispredictions,
/// N = 5 with T in {10, 15, 20} for the store/write-count families, +5/+10/+15
/// L2 cycles, 8/16/32 withheld registers, 512/1024/2048-byte branches, and
/// 256/512/768 lost predictor entries.
pub fn default_catalog() -> Vec<BugSpec> {
    use Opcode::*;
    let mut c = Vec::new();
    for op in [Add, Xor, Sub] {
        c.push(BugSpec::new(format!("f01-serialize-{}", op.name().to_lowercase()), 1).x(op));
    }
    for op in [Add, Xor, Mov] {
        c.push(BugSpec::new(format!("f02-only-oldest-{}", op.name().to_lowercase()), 2).x(op));
    }
    for op in [Add, Xor, Mov] {
        c.push(BugSpec::new(format!("f03-oldest-exclusive-{}", op.name().to_lowercase()), 3).x(op));
    }
    for t in [10, 25, 50] {
        c.push(BugSpec::new(format!("f04-add-after-sub-t{t}"), 4).x(Add).y(Sub).t(t));
    }
    for n in [2, 5, 10] {
        c.push(BugSpec::new(format!("f05-iq-free-lt{n}-t10"), 5).n(n).t(10));
    }
    for n in [2, 5, 10] {
        c.push(BugSpec::new(format!("f06-rob-free-lt{n}-t10"), 6).n(n).t(10));
    }
    for t in [10, 20, 50] {
        c.push(BugSpec::new(format!("f07-mispredict-t{t}"), 7).t(t));
    }
    for t in [10, 15, 20] {
        c.push(BugSpec::new(format!("f08-line-stores-n5-t{t}"), 8).n(5).t(t));
    }
    for t in [10, 15, 20] {
        c.push(BugSpec::new(format!("f09-reg-writes-after-n5-t{t}"), 9).n(5).t(t));
    }
    for t in [10, 15, 20] {
        c.push(BugSpec::new(format!("f09-reg-writes-every-n5-t{t}"), 9).n(5).t(t).every());
    }
    for t in [5, 10, 15] {
        c.push(BugSpec::new(format!("f10-l2-latency-t{t}"), 10).t(t));
    }
    for n in [8, 16, 32] {
        c.push(BugSpec::new(format!("f11-fewer-regs-n{n}"), 11).n(n));
    }
    for n in [512, 1024, 2048] {
        c.push(BugSpec::new(format!("f12-long-branch-n{n}-t10"), 12).n(n).t(10));
    }
    for op in [Add, Mov, Sub] {
        c.push(BugSpec::new(format!("f13-{}-uses-r0-t10", op.name().to_lowercase()), 13).x(op).reg(0).t(10));
    }
    for n in [256, 512, 768] {
        c.push(BugSpec::new(format!("f14-predictor-loss-n{n}"), 14).n(n));
    }
    c
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    bug: Vec<BugSpec>,
}

pub fn catalog_to_string(specs: &[BugSpec]) -> String {
    toml::to_string(&CatalogFile { bug: specs.to_vec() }).expect("catalog serializes")
}

pub fn catalog_from_str(text: &str, origin: &str) -> Result<Vec<BugSpec>> {
    let file: CatalogFile =
        toml::from_str(text).map_err(|e| Error::Parse { path: origin.to_string(), msg: e.to_string() })?;
    for spec in &file.bug {
        spec.validate()?;
    }
    Ok(file.bug)
}

pub fn write_catalog(specs: &[BugSpec], path: &Path) -> Result<()> {
    Ok(std::fs::write(path, catalog_to_string(specs))?)
}

pub fn read_catalog(path: &Path) -> Result<Vec<BugSpec>> {
    let text = std::fs::read_to_string(path)?;
    catalog_from_str(&text, &path.display().to_string())
}
