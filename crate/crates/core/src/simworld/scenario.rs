//! Scenario files.
//!
//! A scenario is TOML text: a seed, the bowl, what goes into it, and the
//! grasp, dataset and episode parameters. Everything but `objects` has
//! defaults.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grasp::GraspParams;
use super::world::{Bowl, ObjectCount};
use crate::classifier::dataset::DatasetParams;
use crate::error::{Error, Result};
use crate::fsm::EpisodeParams;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_version")]
    pub scenario_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bowl: Bowl,
    pub objects: Vec<ObjectCount>,
    #[serde(default)]
    pub grasp: GraspParams,
    #[serde(default)]
    pub dataset: DatasetParams,
    #[serde(default)]
    pub episode: EpisodeParams,
}

fn default_version() -> u32 {
    SCENARIO_VERSION
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.scenario_version != SCENARIO_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported scenario_version {}",
                self.scenario_version
            )));
        }
        self.bowl.validate()?;
        self.grasp.validate()?;
        self.dataset.validate()?;
        self.episode.validate()?;
        for c in &self.objects {
            if !(1..=20).contains(&c.class) {
                return Err(Error::InvalidParameter(format!(
                    "object class {} outside 1..=20",
                    c.class
                )));
            }
            match c.shape {
                Some(s) => s.validate()?,
                None => {
                    super::catalog::shape(c.class).expect("catalogue covers 1..=20");
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Scenario =
            toml::from_str(s).map_err(|e| Error::InvalidParameter(format!("scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sc: Scenario = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    /// Physical classes present in the bowl, ascending.
    pub fn classes(&self) -> Vec<u8> {
        self.objects
            .iter()
            .filter(|c| c.count > 0)
            .map(|c| c.class)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn object_count(&self) -> usize {
        self.objects.iter().map(|c| c.count).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let sc = Scenario::from_toml_str(
            r#"
            seed = 3
            [[objects]]
            class = 12
            count = 1
            "#,
        )
        .unwrap();
        assert_eq!(sc.bowl, Bowl::default());
        assert_eq!(sc.classes(), vec![12]);
        let back = Scenario::from_toml_str(&sc.to_toml_string()).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn rejects_bad_class_and_unknown_keys() {
        assert!(Scenario::from_toml_str("[[objects]]\nclass = 21\ncount = 1\n").is_err());
        assert!(Scenario::from_toml_str("colour = 1\n[[objects]]\nclass = 2\ncount = 1\n").is_err());
    }

    #[test]
    fn shape_override_is_validated() {
        let bad = r#"
            [[objects]]
            class = 12
            count = 1
            shape = { sphere = { r = 40.0 } }
        "#;
        assert!(Scenario::from_toml_str(bad).is_err());
    }
}
