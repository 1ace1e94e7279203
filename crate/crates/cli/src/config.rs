//! Inventory configuration file format: either cost curves given explicitly
//! or the benchmark defaults, with iid or AR demand.

use crate::{CliError, GenInventoryArgs};
use mspduals::instances::{DemandMode, InventoryConfig};
use mspduals::sensitivity::DemandProcessSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryFileConfig {
    pub horizon: usize,
    pub branching: usize,
    /// Explicit cost curves; omitted fields fall back to the benchmark
    /// curves a_t = 1.5 + cos(pi t / 6), g = 2.8, h = 0.2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_costs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backorder_costs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holding_costs: Option<Vec<f64>>,
    pub x0: f64,
    pub seed: u64,
    pub demand: DemandFileConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum DemandFileConfig {
    Iid,
    Ar { phi: f64, mu: f64, sigma2: f64, d0: f64 },
}

impl InventoryFileConfig {
    pub fn from_args(args: &GenInventoryArgs) -> Result<Self, CliError> {
        let demand = match args.demand.as_str() {
            "iid" => DemandFileConfig::Iid,
            "ar" => DemandFileConfig::Ar {
                phi: args.phi,
                mu: args.mu,
                sigma2: args.sigma2,
                d0: args.d0,
            },
            other => {
                return Err(CliError::Usage(format!(
                    "--demand must be iid or ar, got {other}"
                )))
            }
        };
        Ok(Self {
            horizon: args.horizon,
            branching: args.branching,
            order_costs: None,
            backorder_costs: None,
            holding_costs: None,
            x0: args.x0,
            seed: args.seed,
            demand,
        })
    }

    pub fn ar_spec(&self) -> Option<DemandProcessSpec> {
        match self.demand {
            DemandFileConfig::Ar {
                phi,
                mu,
                sigma2,
                d0,
            } => Some(DemandProcessSpec {
                phi,
                mu,
                sigma2,
                d0,
                horizon: self.horizon,
            }),
            DemandFileConfig::Iid => None,
        }
    }

    pub fn with_phi(&self, phi: f64) -> Self {
        let mut out = self.clone();
        if let DemandFileConfig::Ar { phi: p, .. } = &mut out.demand {
            *p = phi;
        }
        out
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        let mut out = self.clone();
        if let DemandFileConfig::Ar { mu: m, .. } = &mut out.demand {
            *m = mu;
        }
        out
    }

    pub fn to_inventory_config(&self) -> Result<InventoryConfig, CliError> {
        if self.horizon == 0 || self.branching == 0 {
            return Err(CliError::Usage(
                "horizon and branching must be positive".into(),
            ));
        }
        let mut cfg = InventoryConfig::benchmark(self.horizon, self.branching, self.seed);
        cfg.x0 = self.x0;
        if let Some(a) = &self.order_costs {
            cfg.order_costs = a.clone();
        }
        if let Some(g) = &self.backorder_costs {
            cfg.backorder_costs = g.clone();
        }
        if let Some(h) = &self.holding_costs {
            cfg.holding_costs = h.clone();
        }
        cfg.demand = match self.ar_spec() {
            Some(spec) => DemandMode::Ar(spec),
            None => DemandMode::SampledIid,
        };
        Ok(cfg)
    }
}

pub fn load_inventory_config(path: &Path) -> Result<InventoryFileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad inventory config {}: {e}", path.display())))
}
