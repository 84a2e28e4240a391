use std::fs;
use std::path::{Path, PathBuf};

use mvcp_core::graphs::{build_tree, TreeSpec};
use mvcp_core::model::parse_infections;
use mvcp_core::{DeathProfile, Error, GraphState, MvcpConfig, VertexId};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Experiment settings. Every field may come from a TOML file or a flag;
/// flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_events: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fills every unset field of `self` from `base`.
    pub fn or(self, base: ExperimentConfig) -> Self {
        Self {
            tree: self.tree.or(base.tree),
            graph: self.graph.or(base.graph),
            init: self.init.or(base.init),
            init_file: self.init_file.or(base.init_file),
            lambda: self.lambda.or(base.lambda),
            phi: self.phi.or(base.phi),
            seed: self.seed.or(base.seed),
            replicas: self.replicas.or(base.replicas),
            horizon: self.horizon.or(base.horizon),
            max_events: self.max_events.or(base.max_events),
            rho: self.rho.or(base.rho),
            d: self.d.or(base.d),
            depths: self.depths.or(base.depths),
            lambdas: self.lambdas.or(base.lambdas),
        }
    }

    pub fn profile(&self) -> Result<DeathProfile, CliError> {
        let phi = self.phi.clone().ok_or_else(|| missing("phi"))?;
        Ok(DeathProfile::new(phi)?)
    }

    pub fn model(&self) -> Result<MvcpConfig, CliError> {
        let lambda = self.lambda.ok_or_else(|| missing("lambda"))?;
        Ok(MvcpConfig::new(lambda, self.profile()?)?)
    }

    /// Graph with the initial infections applied.
    pub fn initial_state(&self, profile: &DeathProfile) -> Result<GraphState, CliError> {
        let mut g = match (&self.tree, &self.graph) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either a tree or a graph file, not both".into())),
            (Some(t), None) => build_tree(&t.parse::<TreeSpec>()?)?,
            (None, Some(path)) => GraphState::parse_edge_list(&read(path)?)?,
            (None, None) => return Err(missing("tree or graph")),
        };
        let infections = match (&self.init, &self.init_file) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either init or init_file, not both".into())),
            (Some(s), None) => parse_init(s)?,
            (None, Some(path)) => parse_infections(&read(path)?)?,
            (None, None) => return Err(missing("init or init_file")),
        };
        g.seed_infections(&infections, profile)?;
        Ok(g)
    }
}

fn missing(what: &str) -> CliError {
    CliError::Config(format!("missing setting: {what}"))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

/// `root:k` or a comma-separated list of `vertex:count`.
pub fn parse_init(s: &str) -> Result<Vec<(VertexId, u32)>, CliError> {
    let bad = |item: &str| CliError::Config(format!("bad infection entry {item:?}; expected vertex:count or root:count"));
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|item| {
            let (v, c) = item.split_once(':').ok_or_else(|| bad(item))?;
            let v = if v == "root" { 0 } else { v.parse().map_err(|_| bad(item))? };
            Ok((v, c.parse().map_err(|_| bad(item))?))
        })
        .collect()
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Invariant(msg) => CliError::Internal(msg),
            other => CliError::Config(other.to_string()),
        }
    }
}
