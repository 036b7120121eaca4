//! Pools of normalized dephasing rate matrices.
//!
//! Candidates are strict lower triangles drawn from a Sobol sequence, screened
//! for complete positivity ([`cp`]) and normalized so that their entries sum
//! to one. Entries are used directly as rates `γ_kl`, indexed by Hamiltonian
//! eigenvector and scaled by the perturbation strength at use time.

pub mod cp;
mod joe_kuo;
pub mod sobol;

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::DephasingRates;
use crate::error::{Error, Result};

pub use cp::{cp_admissible, CpScreen};
pub use sobol::{sobol_triangular, Sobol};

/// One normalized dephasing process `Γ̄` (strict lower triangle, row by row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingOperator {
    pub mu: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub gamma_lower: Vec<f64>,
}

impl DephasingOperator {
    pub fn rates(&self) -> DephasingRates {
        DephasingRates::from_lower(self.n, &self.gamma_lower)
            .expect("pool operators are validated on construction")
    }

    /// `Σ_{k>l} |Γ̄_kl|`, equal to one for a normalized operator.
    pub fn l1_norm(&self) -> f64 {
        self.gamma_lower.iter().map(|g| g.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub pool_target: usize,
    pub batch_size: usize,
    /// First Sobol index examined.
    pub sequence_offset: u64,
    pub cp: CpScreen,
    /// Abort when the running acceptance rate drops below this.
    pub min_acceptance_rate: f64,
}

impl SamplerConfig {
    pub fn new(n: usize, pool_target: usize) -> Self {
        SamplerConfig {
            n,
            pool_target,
            batch_size: 4096,
            sequence_offset: 0,
            cp: CpScreen::default(),
            min_acceptance_rate: 1e-3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n * (self.n - 1) / 2 > sobol::MAX_DIMENSION {
            return Err(Error::InvalidInput(format!("sampler dimension N = {}", self.n)));
        }
        if self.pool_target == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("pool target and batch size must be positive".into()));
        }
        if !(self.min_acceptance_rate >= 0.0 && self.min_acceptance_rate <= 1.0) {
            return Err(Error::InvalidInput("acceptance floor outside [0, 1]".into()));
        }
        if self.cp.probe_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidInput("probe times must be finite and ≥ 0".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub candidates: u64,
    pub zero_sum: u64,
    pub cp_rejected: u64,
    pub accepted: u64,
}

impl RejectionStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.accepted as f64 / self.candidates as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DephasingPool {
    pub config: SamplerConfig,
    pub operators: Vec<DephasingOperator>,
    pub stats: RejectionStats,
}

enum Verdict {
    ZeroSum,
    Rejected,
    Accepted(Vec<f64>),
}

fn screen(sobol: &Sobol, n: usize, index: u64, cp: &CpScreen) -> Result<Verdict> {
    let raw = sobol.point(index)?;
    let total: f64 = raw.iter().map(|g| g.abs()).sum();
    if total == 0.0 {
        return Ok(Verdict::ZeroSum);
    }
    let normalized: Vec<f64> = raw.iter().map(|g| g / total).collect();
    let rates = DephasingRates::from_lower(n, &normalized)?;
    Ok(if cp.admits(&rates) {
        Verdict::Accepted(normalized)
    } else {
        Verdict::Rejected
    })
}

/// Screens Sobol candidates in order until `pool_target` are accepted.
///
/// Candidates within a batch are screened in parallel; accepted operators are
/// appended in sequence order, so the pool does not depend on thread count.
pub fn generate_pool(cfg: &SamplerConfig) -> Result<DephasingPool> {
    cfg.validate()?;
    let n = cfg.n;
    let sobol = Sobol::new(n * (n - 1) / 2)?;
    let mut stats = RejectionStats::default();
    let mut operators = Vec::with_capacity(cfg.pool_target);
    let mut next = cfg.sequence_offset;

    while operators.len() < cfg.pool_target {
        let batch: Vec<u64> = (next..next + cfg.batch_size as u64).collect();
        next += cfg.batch_size as u64;
        let verdicts: Vec<Verdict> = batch
            .par_iter()
            .map(|&i| screen(&sobol, n, i, &cfg.cp))
            .collect::<Result<_>>()?;
        for v in verdicts {
            if operators.len() == cfg.pool_target {
                break;
            }
            stats.candidates += 1;
            match v {
                Verdict::ZeroSum => stats.zero_sum += 1,
                Verdict::Rejected => stats.cp_rejected += 1,
                Verdict::Accepted(gamma_lower) => {
                    stats.accepted += 1;
                    operators.push(DephasingOperator {
                        mu: operators.len() + 1,
                        n,
                        gamma_lower,
                    });
                }
            }
        }
        if operators.len() < cfg.pool_target && stats.acceptance_rate() < cfg.min_acceptance_rate {
            return Err(Error::AcceptanceTooLow {
                rate: stats.acceptance_rate(),
                floor: cfg.min_acceptance_rate,
                candidates: stats.candidates,
            });
        }
    }
    Ok(DephasingPool {
        config: cfg.clone(),
        operators,
        stats,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolHeader {
    format: String,
    config: SamplerConfig,
    config_hash: String,
    stats: RejectionStats,
}

const POOL_FORMAT: &str = "ringsens-dephasing-pool/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: PoolHeader,
}

/// A fixed subset of a pool used for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDraw {
    pub pool_hash: String,
    pub seed: u64,
    /// Positions in the pool, ascending.
    pub positions: Vec<usize>,
    #[serde(skip)]
    pub operators: Vec<DephasingOperator>,
}

impl DephasingPool {
    pub fn config_hash(&self) -> String {
        self.config.hash()
    }

    /// JSON lines: a header with config and hash, then one operator per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = HeaderLine {
            header: PoolHeader {
                format: POOL_FORMAT.into(),
                config: self.config.clone(),
                config_hash: self.config_hash(),
                stats: self.stats,
            },
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for op in &self.operators {
            serde_json::to_writer(&mut w, op)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a pool and re-checks every operator against the recorded screen.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty pool file".into()))??;
        let HeaderLine { header } = serde_json::from_str(&first)?;
        if header.format != POOL_FORMAT {
            return Err(Error::InvalidInput(format!("unknown pool format {}", header.format)));
        }
        if header.config.hash() != header.config_hash {
            return Err(Error::InvalidInput("pool config hash mismatch".into()));
        }
        let mut operators = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let op: DephasingOperator = serde_json::from_str(&line)?;
            if op.n != header.config.n {
                return Err(Error::InvalidInput(format!("operator {} has N = {}", op.mu, op.n)));
            }
            let rates = DephasingRates::from_lower(op.n, &op.gamma_lower)?;
            if (op.l1_norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("operator {} is not normalized", op.mu)));
            }
            if !header.config.cp.admits(&rates) {
                return Err(Error::InvalidInput(format!("operator {} fails the CP screen", op.mu)));
            }
            operators.push(op);
        }
        Ok(DephasingPool {
            config: header.config,
            operators,
            stats: header.stats,
        })
    }

    /// `count` distinct operators chosen by `seed`, kept in pool order.
    pub fn draw(&self, count: usize, seed: u64) -> Result<PoolDraw> {
        if count > self.operators.len() {
            return Err(Error::InsufficientPopulation {
                requested: count,
                available: self.operators.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut positions = rand::seq::index::sample(&mut rng, self.operators.len(), count).into_vec();
        positions.sort_unstable();
        Ok(PoolDraw {
            pool_hash: self.config_hash(),
            seed,
            operators: positions.iter().map(|&p| self.operators[p].clone()).collect(),
            positions,
        })
    }
}

impl PoolDraw {
    pub fn rates(&self) -> Vec<DephasingRates> {
        self.operators.iter().map(DephasingOperator::rates).collect()
    }

    /// Re-attaches operators after deserialization.
    pub fn resolve(&mut self, pool: &DephasingPool) -> Result<()> {
        if pool.config_hash() != self.pool_hash {
            return Err(Error::InvalidInput("draw refers to a different pool".into()));
        }
        self.operators = self
            .positions
            .iter()
            .map(|&p| {
                pool.operators.get(p).cloned().ok_or(Error::InsufficientPopulation {
                    requested: p + 1,
                    available: pool.operators.len(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }
}
