//! Deterministic synthetic radar scenes with ground-truth instances, tracks
//! and offsets, plus a segmentation corruption model standing in for a
//! learned backbone.

mod corrupt;
mod scenarios;

pub use corrupt::{corrupt_sequence, corrupt_segmentation, CorruptionRates};
pub use scenarios::{scenario_library, SCENARIO_NAMES};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotatedScan, RadarPoint, RadarScan, SegmentedScan, Semantic, Vec2};

/// One simulated moving agent. The agent exists for scans `birth..death` and
/// starts at `position` on its birth scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSpec {
    pub position: Vec2,
    /// m/s.
    pub velocity: Vec2,
    /// Heading change in rad/s.
    pub turn_rate: f64,
    /// Full side lengths of the axis-aligned scatter rectangle, m.
    pub extent: Vec2,
    pub mean_points: f64,
    /// Emit exactly `round(mean_points)` points instead of a Poisson count.
    pub fixed_count: bool,
    pub rcs_mean: f64,
    pub rcs_std: f64,
    pub birth: u32,
    pub death: u32,
    /// Scan windows `[start, end)` in which the agent emits no points.
    pub hidden: Vec<(u32, u32)>,
}

impl Default for AgentSpec {
    fn default() -> Self {
        Self {
            position: Vec2::new(10.0, 0.0),
            velocity: Vec2::new(2.0, 0.0),
            turn_rate: 0.0,
            extent: Vec2::new(4.0, 2.0),
            mean_points: 5.0,
            fixed_count: false,
            rcs_mean: 5.0,
            rcs_std: 2.0,
            birth: 0,
            death: u32::MAX,
            hidden: Vec::new(),
        }
    }
}

impl AgentSpec {
    fn alive(&self, k: u32) -> bool {
        k >= self.birth && k < self.death
    }

    fn visible(&self, k: u32) -> bool {
        self.alive(k) && !self.hidden.iter().any(|&(a, b)| k >= a && k < b)
    }
}

/// A static object (parked car, pole) emitting a cluster of static points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticObject {
    pub position: Vec2,
    pub extent: Vec2,
    pub mean_points: f64,
    pub rcs_mean: f64,
    pub rcs_std: f64,
}

impl Default for StaticObject {
    fn default() -> Self {
        Self {
            position: Vec2::ZERO,
            extent: Vec2::new(3.0, 1.5),
            mean_points: 4.0,
            rcs_mean: -5.0,
            rcs_std: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub agents: Vec<AgentSpec>,
    pub structures: Vec<StaticObject>,
    pub scans: u32,
    /// Seconds per scan.
    pub dt: f64,
    /// Mean number of static clutter points per scan.
    pub clutter_rate: f64,
    /// Isotropic position noise std, m.
    pub position_noise: f64,
    /// Doppler noise std, m/s.
    pub doppler_noise: f64,
    /// Probability that an individual agent point is lost.
    pub dropout: f64,
    /// Probability that an agent is missed entirely in a scan.
    pub miss_rate: f64,
    /// Clutter area `[x_min, x_max, y_min, y_max]`.
    pub region: [f64; 4],
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            agents: vec![AgentSpec::default()],
            structures: Vec::new(),
            scans: 20,
            dt: 0.5,
            clutter_rate: 0.0,
            position_noise: 0.0,
            doppler_noise: 0.0,
            dropout: 0.0,
            miss_rate: 0.0,
            region: [-50.0, 50.0, -50.0, 50.0],
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        for (name, p) in [("dropout", self.dropout), ("miss_rate", self.miss_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        for (i, o) in self.structures.iter().enumerate() {
            let finite = o.position.is_finite() && o.rcs_mean.is_finite();
            if !finite || !(o.mean_points >= 0.0 && o.rcs_std >= 0.0 && o.extent.x >= 0.0 && o.extent.y >= 0.0) {
                return bad(format!("structure {i}: invalid parameters"));
            }
        }
        for (name, v) in [
            ("clutter_rate", self.clutter_rate),
            ("position_noise", self.position_noise),
            ("doppler_noise", self.doppler_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        let [x0, x1, y0, y1] = self.region;
        if !(x0 < x1 && y0 < y1) {
            return bad("region must be non-empty".into());
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.death <= a.birth {
                return bad(format!("agent {i}: death must come after birth"));
            }
            if !(a.mean_points >= 0.0 && a.mean_points.is_finite()) {
                return bad(format!("agent {i}: point count must be non-negative"));
            }
            if !(a.rcs_std >= 0.0) || !(a.extent.x >= 0.0 && a.extent.y >= 0.0) {
                return bad(format!("agent {i}: negative spread"));
            }
            if !a.position.is_finite() || !a.velocity.is_finite() || !a.turn_rate.is_finite() {
                return bad(format!("agent {i}: non-finite kinematics"));
            }
        }
        Ok(())
    }
}

/// Agent centers per scan (`None` outside the agent's lifetime).
pub fn agent_trajectory(agent: &AgentSpec, scans: u32, dt: f64) -> Vec<Option<Vec2>> {
    let mut out = Vec::with_capacity(scans as usize);
    let mut pos = agent.position;
    let mut vel = agent.velocity;
    let (s, c) = (agent.turn_rate * dt).sin_cos();
    for k in 0..scans {
        if agent.alive(k) {
            out.push(Some(pos));
            pos += vel * dt;
            vel = Vec2::new(c * vel.x - s * vel.y, s * vel.x + c * vel.y);
        } else {
            out.push(None);
        }
    }
    out
}

/// Agent velocity (m/s) per scan, aligned with [`agent_trajectory`].
fn agent_velocities(agent: &AgentSpec, scans: u32, dt: f64) -> Vec<Vec2> {
    let (s, c) = (agent.turn_rate * dt).sin_cos();
    let mut vel = agent.velocity;
    let mut out = Vec::with_capacity(scans as usize);
    for k in 0..scans {
        out.push(vel);
        if agent.alive(k) {
            vel = Vec2::new(c * vel.x - s * vel.y, s * vel.x + c * vel.y);
        }
    }
    out
}

fn poisson<R: Rng>(rate: f64, rng: &mut R) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as usize
}

fn gaussian<R: Rng>(std: f64, rng: &mut R) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).expect("finite std").sample(rng)
}

/// Radial speed of a point moving with `vel` at `pos`, positive when receding
/// from the sensor at the origin.
pub fn radial_speed(pos: Vec2, vel: Vec2) -> f64 {
    let r = pos.norm();
    if r == 0.0 {
        0.0
    } else {
        vel.dot(pos) / r
    }
}

/// Simulates a full sequence. Instance and track IDs of agent `i` are `i + 1`;
/// clutter is static with ID 0. Standard offsets point to the mean of the
/// instance's points, temporal offsets to that mean in the next scan, or to
/// the kinematic center when the agent is alive but unseen there. Agents with
/// no next scan get a zero temporal offset.
pub fn generate_sequence(config: &ScenarioConfig) -> Result<Vec<AnnotatedScan>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let trajectories: Vec<Vec<Option<Vec2>>> = config
        .agents
        .iter()
        .map(|a| agent_trajectory(a, config.scans, config.dt))
        .collect();
    let velocities: Vec<Vec<Vec2>> = config
        .agents
        .iter()
        .map(|a| agent_velocities(a, config.scans, config.dt))
        .collect();

    // points and owner (agent index + 1, or 0) per scan
    let mut raw: Vec<(Vec<RadarPoint>, Vec<u32>)> = Vec::with_capacity(config.scans as usize);
    for k in 0..config.scans {
        let mut points = Vec::new();
        let mut owner = Vec::new();
        for (i, agent) in config.agents.iter().enumerate() {
            let Some(center) = trajectories[i][k as usize] else {
                continue;
            };
            let count = if agent.fixed_count {
                agent.mean_points.round() as usize
            } else {
                poisson(agent.mean_points, &mut rng)
            };
            // drawn even for visible agents so the stream does not depend on
            // which agents happen to be missed
            let missed = rng.random::<f64>() < config.miss_rate;
            let doppler = radial_speed(center, velocities[i][k as usize]);
            for _ in 0..count {
                let jitter = Vec2::new(
                    (rng.random::<f64>() - 0.5) * agent.extent.x + gaussian(config.position_noise, &mut rng),
                    (rng.random::<f64>() - 0.5) * agent.extent.y + gaussian(config.position_noise, &mut rng),
                );
                let p = center + jitter;
                let v = doppler + gaussian(config.doppler_noise, &mut rng);
                let rcs = agent.rcs_mean + gaussian(agent.rcs_std, &mut rng);
                let lost = rng.random::<f64>() < config.dropout;
                if agent.visible(k) && !missed && !lost {
                    points.push(RadarPoint::new(p.x, p.y, v, rcs));
                    owner.push(i as u32 + 1);
                }
            }
        }
        for o in &config.structures {
            for _ in 0..poisson(o.mean_points, &mut rng) {
                let x = o.position.x + (rng.random::<f64>() - 0.5) * o.extent.x + gaussian(config.position_noise, &mut rng);
                let y = o.position.y + (rng.random::<f64>() - 0.5) * o.extent.y + gaussian(config.position_noise, &mut rng);
                let v = gaussian(config.doppler_noise, &mut rng);
                let rcs = o.rcs_mean + gaussian(o.rcs_std, &mut rng);
                points.push(RadarPoint::new(x, y, v, rcs));
                owner.push(0);
            }
        }
        let [x0, x1, y0, y1] = config.region;
        for _ in 0..poisson(config.clutter_rate, &mut rng) {
            let x = rng.random_range(x0..x1);
            let y = rng.random_range(y0..y1);
            let v = gaussian(config.doppler_noise, &mut rng);
            let rcs = -5.0 + gaussian(4.0, &mut rng);
            points.push(RadarPoint::new(x, y, v, rcs));
            owner.push(0);
        }
        raw.push((points, owner));
    }

    let observed_center = |k: usize, id: u32| -> Option<Vec2> {
        let (points, owner) = &raw[k];
        let members: Vec<Vec2> = points
            .iter()
            .zip(owner)
            .filter(|(_, &o)| o == id)
            .map(|(p, _)| p.position())
            .collect();
        (!members.is_empty()).then(|| members.iter().fold(Vec2::ZERO, |a, &p| a + p) / members.len() as f64)
    };

    let mut out = Vec::with_capacity(raw.len());
    for (k, (points, owner)) in raw.iter().enumerate() {
        let n = points.len();
        let mut offsets = vec![Vec2::ZERO; n];
        let mut temporal = vec![Vec2::ZERO; n];
        let mut centers = std::collections::BTreeMap::new();
        for &id in owner.iter().filter(|&&o| o > 0) {
            centers.entry(id).or_insert_with(|| {
                let now = observed_center(k, id).expect("owner has points");
                let next = if k + 1 < raw.len() {
                    observed_center(k + 1, id).or(trajectories[id as usize - 1][k + 1])
                } else {
                    None
                };
                (now, next)
            });
        }
        for i in 0..n {
            if owner[i] == 0 {
                continue;
            }
            let (now, next) = centers[&owner[i]];
            let p = points[i].position();
            offsets[i] = now - p;
            temporal[i] = next.map_or(Vec2::ZERO, |c| c - p);
        }
        let semantics = owner
            .iter()
            .map(|&o| if o > 0 { Semantic::Moving } else { Semantic::Static })
            .collect();
        let segmented = SegmentedScan::new(
            RadarScan::new(config.name.clone(), k as u32, points.clone()),
            semantics,
            owner.clone(),
            offsets,
            temporal,
        )?;
        out.push(AnnotatedScan {
            segmented,
            track_ids: owner.clone(),
        });
    }
    Ok(out)
}
