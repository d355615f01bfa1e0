//! Benchmark domains. Each builder returns the enumerable model and its task graph.

mod hdg;
mod taxi;
mod two_rooms;

pub use hdg::{build_hdg, HdgConfig, HdgLayout};
pub use taxi::{build_taxi, square, TaxiConfig, TaxiLayout, TaxiVars, DELIVERED, IN_TAXI, LANDMARK_NAMES};
pub use two_rooms::{build_two_rooms, TwoRoomsConfig, TwoRoomsLayout};

use serde::de::DeserializeOwned;

use crate::mdp::{MdpError, TabularModel};
use crate::taskgraph::{GraphError, MaxqGraph};

/// Names accepted by [`build_env`].
pub const ENV_NAMES: [&str; 5] = ["taxi", "taxi-fickle", "taxi-fuel", "hdg", "two-rooms"];

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown environment `{0}`")]
    Unknown(String),
    #[error("cannot read overrides: {0}")]
    Overrides(String),
    #[error(transparent)]
    Model(#[from] MdpError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A built domain.
#[derive(Debug, Clone)]
pub struct Env {
    pub name: String,
    pub model: TabularModel,
    pub graph: MaxqGraph,
}

fn with_overrides<C: DeserializeOwned>(text: &str) -> Result<C, EnvError> {
    toml::from_str(text).map_err(|e| EnvError::Overrides(e.to_string()))
}

/// Builds a registered domain; `overrides` is TOML for its config (may be empty).
pub fn build_env(name: &str, overrides: &str) -> Result<Env, EnvError> {
    let (model, graph) = match name {
        "taxi" => build_taxi(&with_overrides(overrides)?)?,
        "taxi-fickle" => {
            let mut cfg: TaxiConfig = with_overrides(overrides)?;
            cfg.fickle = true;
            build_taxi(&cfg)?
        }
        "taxi-fuel" => {
            let mut cfg: TaxiConfig = with_overrides(overrides)?;
            cfg.fuel = true;
            build_taxi(&cfg)?
        }
        "hdg" => build_hdg(&with_overrides(overrides)?)?,
        "two-rooms" => build_two_rooms(&with_overrides(overrides)?)?,
        other => return Err(EnvError::Unknown(other.into())),
    };
    Ok(Env { name: name.into(), model, graph })
}

pub(crate) fn manhattan(a: [usize; 2], b: [usize; 2]) -> usize {
    a[0].abs_diff(b[0]) + a[1].abs_diff(b[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_every_name() {
        for name in ENV_NAMES {
            let env = build_env(name, "").unwrap();
            assert_eq!(env.model.space(), env.graph.space());
        }
        assert!(matches!(build_env("maze", ""), Err(EnvError::Unknown(_))));
    }

    #[test]
    fn overrides_are_applied() {
        let env = build_env("taxi-fuel", "fuel_capacity = 10\ninitial_fuel = [3, 9]").unwrap();
        let fuel = env.model.space().var_index("fuel").unwrap();
        assert_eq!(env.model.space().card(fuel), 11);
        assert!(build_env("taxi", "no_such_field = 1").is_err());
    }
}
