//! Campaign configuration (JSON, versioned schema, unknown keys rejected).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ringsens_core::ring::RingSpec;
use ringsens_core::sampler::{CpScreen, SamplerConfig};
use ringsens_core::sensitivity::PerturbationGrid;
use ringsens_core::stats::{DEFAULT_ALPHA, PAIR_TOL};
use ringsens_core::synthesis::{default_candidates, Bounds, Budget, ObjectiveSpec, Transfer};

use crate::error::{CliError, Result};
use crate::io::{read_json, sha256_bytes};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub schema_version: u32,
    /// Root of every random stream in the campaign.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub transfers: Vec<Transfer>,
    pub objectives: Vec<ObjectiveSpec>,
    pub budget: Budget,
    #[serde(default)]
    pub bounds: Bounds,
    pub selection: Selection,
    pub sampler: SamplerSection,
    #[serde(default)]
    pub grid: GridSection,
    /// Significance level of the trend tests.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_pair_tolerance")]
    pub pair_tolerance: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_pair_tolerance() -> f64 {
    PAIR_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    /// Controllers kept per cell.
    pub top: usize,
    /// Size of the best-objective pre-filter; defaults to 1.5 × `top`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
}

impl Selection {
    pub fn candidates(&self) -> usize {
        self.candidates.unwrap_or_else(|| default_candidates(self.top))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    /// Accepted operators generated per ring size.
    pub pool_target: usize,
    /// Operators drawn for the dephasing objective and for each scan.
    pub draw: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub sequence_offset: u64,
    #[serde(default)]
    pub cp: CpScreen,
    #[serde(default = "default_floor")]
    pub min_acceptance_rate: f64,
}

fn default_batch() -> usize {
    4096
}

fn default_floor() -> f64 {
    1e-3
}

impl SamplerSection {
    pub fn for_ring(&self, n: usize) -> SamplerConfig {
        SamplerConfig {
            n,
            pool_target: self.pool_target,
            batch_size: self.batch_size,
            sequence_offset: self.sequence_offset,
            cp: self.cp.clone(),
            min_acceptance_rate: self.min_acceptance_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_bins")]
    pub heatmap_bins: usize,
}

fn default_points() -> usize {
    1001
}

fn default_bins() -> usize {
    200
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            points: default_points(),
            heatmap_bins: default_bins(),
        }
    }
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: CampaignConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.transfers.is_empty() || self.objectives.is_empty() {
            return bad("at least one transfer and one objective are required".into());
        }
        let mut labels = BTreeSet::new();
        for t in &self.transfers {
            RingSpec::new(t.n, t.coupling, vec![0.0; t.n], 1.0, t.in_node, t.out_node)?;
            if !labels.insert(t.label()) {
                return bad(format!("transfer {} listed twice", t.label()));
            }
        }
        let mut names = BTreeSet::new();
        for o in &self.objectives {
            o.validate()?;
            if !names.insert(o.name()) {
                return bad(format!("objective {} listed twice", o.name()));
            }
            if let ObjectiveSpec::Dephasing { count } = o {
                if *count != self.sampler.draw {
                    return bad(format!(
                        "dephasing objective count {count} differs from sampler.draw {}",
                        self.sampler.draw
                    ));
                }
            }
        }
        self.bounds.validate()?;
        if self.budget.restarts == 0 || self.budget.max_iterations == 0 {
            return bad("budget must be positive".into());
        }
        let sel = &self.selection;
        if sel.top == 0 || sel.top > self.budget.restarts {
            return bad(format!("selection.top = {} must lie in 1..={}", sel.top, self.budget.restarts));
        }
        if sel.candidates() < sel.top {
            return bad("selection.candidates must be at least selection.top".into());
        }
        if self.sampler.draw == 0 || self.sampler.draw > self.sampler.pool_target {
            return bad(format!(
                "sampler.draw = {} must lie in 1..=pool_target ({})",
                self.sampler.draw, self.sampler.pool_target
            ));
        }
        PerturbationGrid::uniform(self.grid.points)?;
        if self.grid.heatmap_bins < 2 {
            return bad("grid.heatmap_bins must be at least 2".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} outside (0, 1)", self.alpha));
        }
        if !(self.pair_tolerance > 0.0 && self.pair_tolerance < 0.5) {
            return bad(format!("pair_tolerance = {} outside (0, 0.5)", self.pair_tolerance));
        }
        Ok(())
    }

    /// Ring sizes in ascending order.
    pub fn ring_sizes(&self) -> Vec<usize> {
        self.transfers.iter().map(|t| t.n).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Canonical JSON without the output directory.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        serde_json::to_string_pretty(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        sha256_bytes(self.canonical_json().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal() -> &'static str {
        r#"{
            "schema_version": 1,
            "seed": 7,
            "transfers": [{"N": 3, "in": 1, "out": 2}],
            "objectives": [{"kind": "fidelity"}],
            "budget": {"restarts": 16, "max_iterations": 100},
            "selection": {"top": 10},
            "sampler": {"pool_target": 200, "draw": 100},
            "grid": {"points": 101, "heatmap_bins": 32}
        }"#
    }

    #[test]
    fn minimal_config_validates() {
        let cfg: CampaignConfig = serde_json::from_str(minimal()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.selection.candidates(), 15);
        assert_eq!(cfg.alpha, 0.02);
        assert_eq!(cfg.bounds, Bounds::default());
    }

    #[test]
    fn unknown_keys_and_missing_seed_are_rejected() {
        let extra = minimal().replacen("\"seed\": 7,", "\"seed\": 7, \"sede\": 1,", 1);
        assert!(serde_json::from_str::<CampaignConfig>(&extra).is_err());
        let no_seed = minimal().replacen("\"seed\": 7,", "", 1);
        assert!(serde_json::from_str::<CampaignConfig>(&no_seed).is_err());
        let nested = minimal().replacen("\"top\": 10", "\"top\": 10, \"k\": 3", 1);
        assert!(serde_json::from_str::<CampaignConfig>(&nested).is_err());
    }

    #[test]
    fn semantic_checks() {
        let base: CampaignConfig = serde_json::from_str(minimal()).unwrap();
        let mut c = base.clone();
        c.schema_version = 2;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.objectives.push(ObjectiveSpec::Dephasing { count: 50 });
        assert!(c.validate().is_err());
        c.objectives[1] = ObjectiveSpec::Dephasing { count: 100 };
        c.validate().unwrap();
        let mut c = base.clone();
        c.selection.top = 17;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.transfers[0].out_node = 1;
        assert!(c.validate().is_err());
        let mut c = base;
        c.output_dir = Some("elsewhere".into());
        assert_eq!(c.hash(), serde_json::from_str::<CampaignConfig>(minimal()).unwrap().hash());
    }
}
