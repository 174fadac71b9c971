//! Loading inputs and fingerprinting them.

use std::path::Path;

use anyhow::{bail, Context, Result};
use tactsort::controller::ControllerParams;
use tactsort::formats::config_hash;
use tactsort::kinematics::GripperModel;
use tactsort::simworld::Scenario;

use crate::{Common, WorldArgs};

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    if !path.is_file() {
        bail!("scenario file not found: {}", path.display());
    }
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

pub fn load_gripper(path: Option<&Path>) -> Result<GripperModel> {
    let model = match path {
        Some(p) => {
            if !p.is_file() {
                bail!("gripper model not found: {}", p.display());
            }
            GripperModel::load(p).with_context(|| format!("loading gripper model {}", p.display()))?
        }
        None => GripperModel::default(),
    };
    model.validate()?;
    Ok(model)
}

pub fn load_controller(path: Option<&Path>, model: &GripperModel) -> Result<ControllerParams> {
    let params = match path {
        Some(p) => {
            if !p.is_file() {
                bail!("controller config not found: {}", p.display());
            }
            ControllerParams::load(p).with_context(|| format!("loading controller config {}", p.display()))?
        }
        None => ControllerParams::default(),
    };
    params.validate(model)?;
    Ok(params)
}

/// Scenario, gripper and seed for a world-building command.
pub struct World {
    pub scenario: Scenario,
    pub gripper: GripperModel,
    pub seed: u64,
}

impl World {
    pub fn load(args: &WorldArgs) -> Result<Self> {
        let scenario = load_scenario(&args.scenario)?;
        let gripper = load_gripper(args.gripper_model.as_deref())?;
        let seed = args.seed.unwrap_or(scenario.seed);
        Ok(Self { scenario, gripper, seed })
    }

    /// Hash parts describing this world. Inputs are re-serialised from the
    /// parsed values, so comments and defaults spelled out or left implicit
    /// do not change the hash.
    pub fn hash_parts(&self) -> Vec<(&'static str, String)> {
        vec![
            ("scenario", self.scenario.to_toml_string()),
            ("gripper", self.gripper.to_toml_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

pub fn hash(command: &str, parts: &[(&'static str, String)]) -> String {
    let mut all: Vec<(&str, &str)> = vec![("command", command)];
    all.extend(parts.iter().map(|(k, v)| (*k, v.as_str())));
    config_hash(&all)
}

pub fn pool(common: &Common) -> Result<rayon::ThreadPool> {
    let n = common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        bail!("--workers must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .context("building worker pool")
}

pub fn workers(common: &Common) -> usize {
    common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}
