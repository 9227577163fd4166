/// Gshare direction predictor plus a direct-mapped target buffer for
/// indirect branches.
#[derive(Debug, Clone)]
pub struct BranchPredictor {
    counters: Vec<u8>,
    history: u64,
    history_bits: u32,
    /// Effective number of entries reachable by the index function.
    effective: usize,
    targets: Vec<i64>,
}

impl BranchPredictor {
    /// `lost_entries` shrinks the reachable part of the table (index aliasing).
    pub fn new(entries: usize, lost_entries: usize) -> Self {
        let entries = entries.max(1);
        let effective = entries.saturating_sub(lost_entries).max(1);
        Self {
            counters: vec![1; entries],
            history: 0,
            history_bits: entries.next_power_of_two().trailing_zeros(),
            effective,
            targets: vec![i64::MIN; entries],
        }
    }

    fn index(&self, pc: u32) -> usize {
        let mask = (1u64 << self.history_bits) - 1;
        let raw = (((pc >> 2) as u64) ^ (self.history & mask)) as usize;
        raw % self.effective
    }

    /// Predicts and trains on the ground-truth outcome. Returns
    /// `(direction_correct, target_correct)`.
    pub fn predict_and_update(&mut self, pc: u32, taken: bool, indirect: bool, target: i64) -> (bool, bool) {
        let idx = self.index(pc);
        let ctr = &mut self.counters[idx];
        let predicted = *ctr >= 2;
        if taken {
            *ctr = (*ctr + 1).min(3);
        } else {
            *ctr = ctr.saturating_sub(1);
        }
        self.history = (self.history << 1) | taken as u64;
        let mut target_ok = true;
        if indirect {
            let slot = (pc as usize >> 2) % self.targets.len();
            target_ok = self.targets[slot] == target;
            self.targets[slot] = target;
        }
        let dir_ok = if indirect { true } else { predicted == taken };
        (dir_ok, target_ok)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_always_taken() {
        let mut bp = BranchPredictor::new(1024, 0);
        let mut wrong = 0;
        for _ in 0..200 {
            let (d, _) = bp.predict_and_update(0x400, true, false, 16);
            wrong += !d as u32;
        }
        assert!(wrong < 20, "{wrong}");
    }

    #[test]
    fn indirect_target_repeat_hits() {
        let mut bp = BranchPredictor::new(64, 0);
        assert!(!bp.predict_and_update(0x10, true, true, 40).1);
        assert!(bp.predict_and_update(0x10, true, true, 40).1);
        assert!(!bp.predict_and_update(0x10, true, true, 80).1);
    }
}
