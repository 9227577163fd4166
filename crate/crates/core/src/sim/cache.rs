use crate::sim::config::{CacheLevel, LINE_BYTES};

/// Set-associative cache with true LRU replacement. Only tags are modelled.
#[derive(Debug, Clone)]
pub struct Cache {
    sets: u64,
    ways: usize,
    /// `line + 1` per way, 0 = invalid.
    tags: Vec<u64>,
    stamps: Vec<u64>,
    clock: u64,
    pub latency: u32,
}

impl Cache {
    pub fn new(level: &CacheLevel) -> Self {
        let sets = level.sets();
        let ways = level.associativity as usize;
        let n = sets as usize * ways;
        Self { sets, ways, tags: vec![0; n], stamps: vec![0; n], clock: 0, latency: level.latency_cycles }
    }

    fn range(&self, line: u64) -> std::ops::Range<usize> {
        let set = (line % self.sets) as usize;
        set * self.ways..(set + 1) * self.ways
    }

    /// Looks up `line`, filling it on a miss. Returns true on a hit.
    pub fn access(&mut self, line: u64) -> bool {
        self.clock += 1;
        let r = self.range(line);
        let tag = line + 1;
        let mut victim = r.start;
        for i in r {
            if self.tags[i] == tag {
                self.stamps[i] = self.clock;
                return true;
            }
            if self.stamps[i] < self.stamps[victim] {
                victim = i;
            }
        }
        self.tags[victim] = tag;
        self.stamps[victim] = self.clock;
        false
    }

    pub fn contains(&self, line: u64) -> bool {
        let tag = line + 1;
        self.range(line).any(|i| self.tags[i] == tag)
    }
}

pub fn line_of(addr: u64) -> u64 {
    addr / LINE_BYTES
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lru_eviction_in_one_set() {
        // 2 sets x 2 ways.
        let mut c = Cache::new(&CacheLevel::new(4 * LINE_BYTES, 2, 1));
        assert!(!c.access(0));
        assert!(!c.access(2));
        assert!(c.access(0));
        assert!(!c.access(4)); // evicts 2
        assert!(c.contains(0));
        assert!(!c.contains(2));
        assert!(!c.access(1)); // other set unaffected
        assert!(c.contains(4));
    }
}
