use serde::{Deserialize, Serialize};

use crate::model::Sample;

/// Which finite-difference scheme produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Landau transform onto `[0, 1]`.
    #[serde(rename = "ff")]
    FrontFixing,
    /// Fixed physical grid with a fractional front cell.
    #[serde(rename = "ft")]
    FrontTracking,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::FrontFixing => "ff",
            Method::FrontTracking => "ft",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ff" | "front-fixing" => Ok(Method::FrontFixing),
            "ft" | "front-tracking" => Ok(Method::FrontTracking),
            other => Err(format!("unknown method `{other}` (expected ff or ft)")),
        }
    }
}

/// Whether a solver keeps every time level or only the endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    #[default]
    EveryLevel,
    Endpoints,
}

/// Front position sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontTrajectory {
    /// Time between consecutive entries.
    pub dt: f64,
    pub values: Vec<f64>,
}

impl FrontTrajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |n| n as f64 * self.dt)
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("trajectory has at least the initial level")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Front-tracking steps where a negative front increment was clamped to zero.
    pub clamped_retreats: usize,
    /// Front-tracking epsilon rebases.
    pub rebases: usize,
    /// Front-tracking nodes activated.
    pub nodes_added: usize,
}

/// Value a front-tracking node held when a rebase removed it from the stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroppedNode {
    pub step: usize,
    pub index: usize,
    pub value: f64,
}

/// Output of one solver run for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationResult {
    pub method: Method,
    pub sample: Sample,
    /// Spatial step: 1/M in z for front-fixing, H0/M in r for front-tracking.
    pub h: f64,
    pub k: f64,
    pub steps: usize,
    /// Final population on the active nodes.
    pub profile: Vec<f64>,
    /// Physical radius of each profile entry.
    pub radii: Vec<f64>,
    pub front: FrontTrajectory,
    /// `max_j u_j` at the same levels as `front`.
    pub max_population: Vec<f64>,
    /// Origin plus interior nodes plus the front point.
    pub node_count: usize,
    pub diagnostics: Diagnostics,
    pub dropped_nodes: Vec<DroppedNode>,
}

impl RealizationResult {
    pub fn final_front(&self) -> f64 {
        self.front.last()
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.k
    }
}

/// Pushes level `n` into a trajectory according to the recording policy.
pub(crate) fn record_level(
    recording: Recording,
    n: usize,
    total: usize,
    front: f64,
    max_pop: f64,
    fronts: &mut Vec<f64>,
    maxima: &mut Vec<f64>,
) {
    let keep = match recording {
        Recording::EveryLevel => true,
        Recording::Endpoints => n == 0 || n == total,
    };
    if keep {
        fronts.push(front);
        maxima.push(max_pop);
    }
}

pub(crate) fn trajectory_dt(recording: Recording, k: f64, steps: usize) -> f64 {
    match recording {
        Recording::EveryLevel => k,
        Recording::Endpoints => k * steps as f64,
    }
}
