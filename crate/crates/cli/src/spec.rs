//! Run specification files.

use std::path::{Path, PathBuf};

use drsel_core::ocs::{NetworkSpec, RadialNetwork};
use drsel_core::sim::{Objective, Policy, SimConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEEDS_ENV: &str = "DRSEL_SEEDS";
pub const OUT_DIR_ENV: &str = "DRSEL_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Budget,
    Target,
    TargetOneSided,
    BudgetNetwork,
}

impl ObjectiveKind {
    pub fn is_target(self) -> bool {
        matches!(self, ObjectiveKind::Target | ObjectiveKind::TargetOneSided)
    }
}

/// JSON run description. `sim` and `sim_file` are alternatives; relative
/// paths resolve against the spec file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_file: Option<PathBuf>,
    pub policies: Vec<String>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_objective")]
    pub objective: ObjectiveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_file: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_objective() -> ObjectiveKind {
    ObjectiveKind::Budget
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A spec with its references resolved.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub spec: RunSpec,
    pub sim: SimConfig,
    pub policies: Vec<Policy>,
    pub objective: Objective,
}

/// 1-based line of the first occurrence of `needle`, if any.
fn line_of(text: &str, needle: &str) -> Option<usize> {
    text.find(needle).map(|pos| text[..pos].matches('\n').count() + 1)
}

fn located(origin: &str, text: &str, needle: &str, msg: String) -> CliError {
    match line_of(text, needle) {
        Some(line) => CliError::Config(format!("{origin}:{line}: {msg}")),
        None => CliError::Config(format!("{origin}: {msg}")),
    }
}

fn json_error(origin: &str, e: serde_json::Error) -> CliError {
    if e.line() > 0 {
        CliError::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column()))
    } else {
        CliError::Config(format!("{origin}: {e}"))
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl RunSpec {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| json_error(origin, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    /// Load, apply environment overrides and resolve references.
    pub fn load(path: &Path) -> Result<Resolved, CliError> {
        let text = read(path)?;
        let origin = path.display().to_string();
        let mut spec = RunSpec::parse(&text, &origin)?;
        spec.apply_env()?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.resolve(&text, &origin, base)
    }

    /// `DRSEL_SEEDS` (comma-separated) and `DRSEL_OUT_DIR` replace the
    /// spec's seeds and output directory.
    pub fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(seeds) = std::env::var(SEEDS_ENV) {
            self.seeds = seeds
                .split(',')
                .map(|s| s.trim().parse::<u64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Config(format!("{SEEDS_ENV}={seeds:?}: {e}")))?;
        }
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            self.out_dir = PathBuf::from(dir);
        }
        Ok(())
    }

    pub fn resolve(mut self, text: &str, origin: &str, base: &Path) -> Result<Resolved, CliError> {
        if self.policies.is_empty() {
            return Err(located(origin, text, "\"policies\"", "policies: need at least one policy".into()));
        }
        let mut policies = Vec::with_capacity(self.policies.len());
        for (k, name) in self.policies.iter().enumerate() {
            let p = name.parse::<Policy>().map_err(|_| {
                located(
                    origin,
                    text,
                    &format!("\"{name}\""),
                    format!("policies[{k}]: unknown policy {name:?} (expected ols, ucb, random or oracle)"),
                )
            })?;
            if policies.contains(&p) {
                return Err(located(origin, text, "\"policies\"", format!("policies: {name:?} listed twice")));
            }
            policies.push(p);
        }
        if self.seeds.is_empty() {
            return Err(located(origin, text, "\"seeds\"", "seeds: need at least one seed".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(located(origin, text, "\"seeds\"", "seeds: duplicate seed".into()));
        }

        // (config, its source text, where the config sits in that text)
        let (sim, sim_text, sim_origin, inline) = match (&self.sim, &self.sim_file) {
            (Some(_), Some(_)) => {
                return Err(located(origin, text, "\"sim_file\"", "give either sim or sim_file, not both".into()))
            }
            (None, None) => return Err(CliError::Config(format!("{origin}: missing sim or sim_file"))),
            (Some(sim), None) => (sim.clone(), text.to_string(), origin.to_string(), true),
            (None, Some(file)) => {
                let path = base.join(file);
                let sim_text = read(&path)?;
                let sim_origin = path.display().to_string();
                let sim = serde_json::from_str(&sim_text).map_err(|e| json_error(&sim_origin, e))?;
                (sim, sim_text, sim_origin, false)
            }
        };
        sim.validate()
            .map_err(|e| CliError::Config(format!("{sim_origin}: sim: {e}")))?;
        let raw: serde_json::Value = serde_json::from_str(&sim_text).map_err(|e| json_error(&sim_origin, e))?;
        let sim_obj = if inline { &raw["sim"] } else { &raw };
        if self.objective.is_target() && sim_obj.get("target").is_none() {
            return Err(CliError::Config(format!(
                "{sim_origin}: objective {:?} needs a \"target\" range in the sim config",
                self.objective
            )));
        }

        let objective = match self.objective {
            ObjectiveKind::Budget => Objective::Budget,
            ObjectiveKind::Target => Objective::Target,
            ObjectiveKind::TargetOneSided => Objective::TargetOneSided,
            ObjectiveKind::BudgetNetwork => {
                let file = self.network_file.as_ref().ok_or_else(|| {
                    located(origin, text, "\"objective\"", "objective budget_network needs network_file".into())
                })?;
                let path = base.join(file);
                let net_text = read(&path)?;
                let net_origin = path.display().to_string();
                let net_spec: NetworkSpec = serde_json::from_str(&net_text).map_err(|e| json_error(&net_origin, e))?;
                let net = RadialNetwork::new(net_spec).map_err(|e| CliError::Config(format!("{net_origin}: {e}")))?;
                if net.n_customers() != sim.n_customers {
                    return Err(CliError::Config(format!(
                        "{net_origin}: network has {} customers, sim has {}",
                        net.n_customers(),
                        sim.n_customers
                    )));
                }
                Objective::BudgetNetwork(net.into())
            }
        };
        if self.out_dir.is_relative() && std::env::var_os(OUT_DIR_ENV).is_none() {
            self.out_dir = base.join(&self.out_dir);
        }
        Ok(Resolved {
            spec: self,
            sim,
            policies,
            objective,
        })
    }
}
