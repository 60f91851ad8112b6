//! Bundled instance files.

use crate::dae::{DaeSystem, TrajectoryFixture};
use crate::error::Result;
use crate::format::{parse_dae, parse_fixture};

pub struct Instance {
    pub name: &'static str,
    pub text: &'static str,
    pub trajectory: Option<&'static str>,
}

impl Instance {
    pub fn system(&self) -> Result<DaeSystem> {
        parse_dae(self.text)
    }

    pub fn fixture(&self) -> Result<Option<TrajectoryFixture>> {
        let Some(src) = self.trajectory else { return Ok(None) };
        let sys = self.system()?;
        parse_fixture(src, sys.params()).map(Some)
    }
}

macro_rules! instance {
    ($name:literal) => {
        Instance { name: $name, text: include_str!(concat!("../instances/", $name, ".dae")), trajectory: None }
    };
    ($name:literal, traj) => {
        Instance {
            name: $name,
            text: include_str!(concat!("../instances/", $name, ".dae")),
            trajectory: Some(include_str!(concat!("../instances/", $name, ".traj"))),
        }
    };
}

pub const INTRO: Instance = instance!("intro", traj);
pub const LC_FAILURE: Instance = instance!("lcfail", traj);
pub const EXAMPLE_1: Instance = instance!("example1");
pub const EXAMPLE_2: Instance = instance!("example2");
pub const PENDULUM: Instance = instance!("pendulum");
pub const ROBOT_ARM: Instance = instance!("robot_arm");
pub const TRANSISTOR: Instance = instance!("transistor");
pub const RING_MODULATOR: Instance = instance!("ring_modulator");

pub const ALL: [Instance; 8] = [INTRO, LC_FAILURE, EXAMPLE_1, EXAMPLE_2, PENDULUM, ROBOT_ARM, TRANSISTOR, RING_MODULATOR];

/// The four circuit and mechanics benchmarks run by `bench`.
pub const SUITE: [Instance; 4] = [PENDULUM, ROBOT_ARM, TRANSISTOR, RING_MODULATOR];

pub fn by_name(name: &str) -> Option<&'static Instance> {
    ALL.iter().find(|i| i.name == name)
}
