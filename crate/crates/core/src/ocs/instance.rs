use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CustomerEvent, NetworkSpec, RadialNetwork};
use crate::belief::Context;
use crate::Result;

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomerSpec {
    pub id: usize,
    pub d: f64,
    pub r: f64,
    #[serde(default = "yes")]
    pub participates: bool,
}

/// One selection instance as stored on disk (per-unit values).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub customers: Vec<CustomerSpec>,
    pub budget: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Events in file order, with empty contexts.
    pub fn events(&self) -> Result<Vec<CustomerEvent>> {
        self.customers
            .iter()
            .map(|c| {
                let ev = CustomerEvent {
                    customer_id: c.id,
                    d: c.d,
                    r: c.r,
                    participates: c.participates,
                    ctx: Context::new(Vec::new()),
                };
                ev.validate().map(|_| ev)
            })
            .collect()
    }

    pub fn network(&self) -> Result<Option<RadialNetwork>> {
        self.network.clone().map(RadialNetwork::new).transpose()
    }
}
