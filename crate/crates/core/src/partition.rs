//! Exhaustive set-partition search via restricted-growth assignment.

/// Largest ground set enumerated.
pub const PARTITION_CAP: usize = 14;

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionSearch {
    pub best: f64,
    /// Block masks of a minimizing partition.
    pub blocks: Vec<u32>,
    pub partitions: u64,
}

/// Minimum of `sum_B cost(B)` over partitions of `{0..n}` into at most `k`
/// nonempty blocks. Block costs are memoized by bitmask, so `cost` is called
/// at most once per subset.
pub fn min_partition_cost(n: usize, k: usize, mut cost: impl FnMut(u32) -> f64) -> PartitionSearch {
    assert!(n <= PARTITION_CAP && k >= 1);
    if n == 0 {
        return PartitionSearch { best: 0.0, blocks: vec![], partitions: 1 };
    }
    let mut memo = vec![f64::NAN; 1usize << n];
    let mut state = Search {
        n,
        k,
        blocks: Vec::with_capacity(k),
        best: PartitionSearch { best: f64::INFINITY, blocks: vec![], partitions: 0 },
    };
    let mut eval = |mask: u32| {
        let m = &mut memo[mask as usize];
        if m.is_nan() {
            *m = cost(mask);
        }
        *m
    };
    state.rec(0, &mut eval);
    state.best
}

struct Search {
    n: usize,
    k: usize,
    blocks: Vec<u32>,
    best: PartitionSearch,
}

impl Search {
    fn rec(&mut self, i: usize, eval: &mut impl FnMut(u32) -> f64) {
        if i == self.n {
            self.best.partitions += 1;
            let total: f64 = self.blocks.iter().map(|&b| eval(b)).sum();
            if total < self.best.best {
                self.best.best = total;
                self.best.blocks = self.blocks.clone();
            }
            return;
        }
        for b in 0..self.blocks.len() {
            self.blocks[b] |= 1 << i;
            self.rec(i + 1, eval);
            self.blocks[b] &= !(1 << i);
        }
        if self.blocks.len() < self.k {
            self.blocks.push(1 << i);
            self.rec(i + 1, eval);
            self.blocks.pop();
        }
    }
}

/// Indices set in `mask`, ascending.
pub fn members(mask: u32) -> impl Iterator<Item = usize> {
    (0..32).filter(move |i| mask >> i & 1 == 1)
}
