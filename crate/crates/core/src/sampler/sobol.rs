//! Sobol low-discrepancy sequence with Joe–Kuo direction numbers.
//!
//! Points are produced in Gray-code order with 32-bit direction numbers. The
//! origin (sequence position 0) is skipped, so index 0 is the all-½ point.

use super::joe_kuo::JOE_KUO;
use crate::error::{Error, Result};

const BITS: usize = 32;

/// Largest supported dimension.
pub const MAX_DIMENSION: usize = JOE_KUO.len() + 1;

#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIMENSION {
            return Err(Error::SequenceExhausted(format!(
                "dimension {dim} outside 1..={MAX_DIMENSION}"
            )));
        }
        let mut directions = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (b, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - b);
        }
        directions.push(first);
        for &(s, a, m) in JOE_KUO.iter().take(dim - 1) {
            let s = s as usize;
            let mut v = [0u32; BITS];
            for b in 0..s.min(BITS) {
                v[b] = m[b] << (BITS - 1 - b);
            }
            for b in s..BITS {
                let mut x = v[b - s] ^ (v[b - s] >> s);
                for k in 1..s {
                    if (a >> (s - 1 - k)) & 1 == 1 {
                        x ^= v[b - k];
                    }
                }
                v[b] = x;
            }
            directions.push(v);
        }
        Ok(Sobol { directions })
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Point at `index` (0-based, origin skipped), each coordinate in (0, 1).
    pub fn point(&self, index: u64) -> Result<Vec<f64>> {
        let pos = index
            .checked_add(1)
            .filter(|p| *p < (1u64 << BITS))
            .ok_or_else(|| Error::SequenceExhausted(format!("index {index} beyond 2^32 - 2")))?;
        let gray = pos ^ (pos >> 1);
        let scale = 1.0 / (1u64 << BITS) as f64;
        Ok(self
            .directions
            .iter()
            .map(|v| {
                let mut x = 0u32;
                let mut g = gray;
                let mut b = 0;
                while g != 0 {
                    if g & 1 == 1 {
                        x ^= v[b];
                    }
                    g >>= 1;
                    b += 1;
                }
                x as f64 * scale
            })
            .collect())
    }
}

/// Sobol point of dimension `N(N−1)/2` laid out as the strict lower triangle
/// of an `N×N` matrix, row by row: `(2,1), (3,1), (3,2), (4,1), …`.
pub fn sobol_triangular(n: usize, index: u64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("triangle of order {n}")));
    }
    Sobol::new(n * (n - 1) / 2)?.point(index)
}
