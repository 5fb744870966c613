//! Count-Min compression of d stacked sketch blocks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedCtx;

/// `ceil(2 ln(2d / delta))`.
pub fn rows_for(d: usize, delta: f64) -> usize {
    ((2.0 * (2.0 * d as f64 / delta).ln()).ceil() as usize).max(1)
}

/// `ceil(10 / eps^p)`.
pub fn buckets_for(eps: f64, p: f64) -> usize {
    ((10.0 / eps.powf(p)).ceil() as usize).max(1)
}

/// One hash function per row, `h_r(j) = PRF(seed, r, j) mod B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketHash {
    pub rows: usize,
    pub buckets: usize,
    pub seed: SeedCtx,
}

impl BucketHash {
    pub fn new(rows: usize, buckets: usize, seed: SeedCtx) -> Result<Self> {
        if rows == 0 || buckets == 0 {
            return Err(Error::Domain("count-min needs at least one row and one bucket".into()));
        }
        Ok(BucketHash { rows, buckets, seed })
    }

    #[inline]
    pub fn bucket(&self, row: usize, j: usize) -> usize {
        (self.seed.word(row as u64, j as u64) % self.buckets as u64) as usize
    }

    /// Exact collision noise scale `(sum_{j' != j, same bucket} v_j'^p)^{1/p}` per row.
    pub fn collision_errors(&self, j: usize, scales: &[f64], p: f64) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let b = self.bucket(r, j);
                let mass: f64 = scales
                    .iter()
                    .enumerate()
                    .filter(|&(jj, _)| jj != j && self.bucket(r, jj) == b)
                    .map(|(_, v)| v.abs().powf(p))
                    .sum();
                mass.powf(1.0 / p)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyBlock {
    pub values: Vec<f64>,
    /// Noise scale; `None` when the true block scales are not known.
    pub err: Option<f64>,
    pub row: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountMinTable {
    pub hash: BucketHash,
    pub block_len: usize,
    pub cells: Vec<f64>,
}

impl CountMinTable {
    pub fn zeros(hash: BucketHash, block_len: usize) -> Self {
        CountMinTable { hash, block_len, cells: vec![0.0; hash.rows * hash.buckets * block_len] }
    }

    pub fn from_cells(hash: BucketHash, block_len: usize, cells: Vec<f64>) -> Result<Self> {
        let expected = hash.rows * hash.buckets * block_len;
        if cells.len() != expected {
            return Err(Error::LengthMismatch { expected, found: cells.len() });
        }
        Ok(CountMinTable { hash, block_len, cells })
    }

    pub fn compress(blocks: &[Vec<f64>], rows: usize, buckets: usize, seed: SeedCtx) -> Result<Self> {
        let m = blocks.first().map_or(0, |b| b.len());
        let hash = BucketHash::new(rows, buckets, seed)?;
        let mut table = CountMinTable::zeros(hash, m);
        for (j, b) in blocks.iter().enumerate() {
            table.add_block(j, b)?;
        }
        Ok(table)
    }

    /// Linear update: block j is added into its bucket in every row.
    pub fn add_block(&mut self, j: usize, block: &[f64]) -> Result<()> {
        if block.len() != self.block_len {
            return Err(Error::LengthMismatch { expected: self.block_len, found: block.len() });
        }
        add_block_into(&self.hash, self.block_len, &mut self.cells, j, block);
        Ok(())
    }

    pub fn cell(&self, row: usize, bucket: usize) -> &[f64] {
        let off = (row * self.hash.buckets + bucket) * self.block_len;
        &self.cells[off..off + self.block_len]
    }

    pub fn add(&mut self, other: &CountMinTable) -> Result<()> {
        if self.hash != other.hash || self.block_len != other.block_len {
            return Err(Error::ConfigMismatch);
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a += b;
        }
        Ok(())
    }

    pub fn recover(&self, j: usize) -> Vec<NoisyBlock> {
        (0..self.hash.rows)
            .map(|r| NoisyBlock {
                values: self.cell(r, self.hash.bucket(r, j)).to_vec(),
                err: None,
                row: r,
            })
            .collect()
    }

    /// Recovery with the exact noise scale filled in from known block scales.
    pub fn recover_with_scales(&self, j: usize, scales: &[f64], p: f64) -> Vec<NoisyBlock> {
        let errs = self.hash.collision_errors(j, scales, p);
        self.recover(j)
            .into_iter()
            .zip(errs)
            .map(|(mut nb, e)| {
                nb.err = Some(e);
                nb
            })
            .collect()
    }
}

/// Adds `block` for coordinate `j` into a flat `rows x buckets x m` cell array.
#[inline]
pub fn add_block_into(hash: &BucketHash, m: usize, cells: &mut [f64], j: usize, block: &[f64]) {
    for r in 0..hash.rows {
        let off = (r * hash.buckets + hash.bucket(r, j)) * m;
        for (c, v) in cells[off..off + m].iter_mut().zip(block) {
            *c += v;
        }
    }
}
