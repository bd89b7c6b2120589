use crate::error::{Error, Result};
use crate::model::Vec2;

use super::{AgentSpec, ScenarioConfig, StaticObject};

pub const SCENARIO_NAMES: [&str; 6] = ["single", "parallel", "crossing", "occlusion", "single_point", "spawn_despawn"];

/// Canned scenario configurations, addressable by name from the CLI.
pub fn scenario_library(name: &str, seed: u64) -> Result<ScenarioConfig> {
    let base = ScenarioConfig {
        name: name.to_string(),
        seed,
        ..Default::default()
    };
    let config = match name {
        "single" => ScenarioConfig {
            agents: vec![AgentSpec::default()],
            ..base
        },
        "parallel" => ScenarioConfig {
            agents: [-25.0, 0.0, 25.0]
                .iter()
                .enumerate()
                .map(|(i, &y)| AgentSpec {
                    position: Vec2::new(5.0 + 3.0 * i as f64, y),
                    velocity: Vec2::new(3.0, 0.0),
                    rcs_mean: 2.0 + 3.0 * i as f64,
                    ..Default::default()
                })
                .collect(),
            scans: 30,
            ..base
        },
        // Two agents crossing the point (20, 20) two seconds apart; their
        // closest approach is sqrt(50) m, while the first one is unseen.
        // Parked objects line both roads 7 m off the lane.
        "crossing" => ScenarioConfig {
            agents: vec![
                AgentSpec {
                    position: Vec2::new(-17.5, 20.0),
                    velocity: Vec2::new(5.0, 0.0),
                    mean_points: 6.0,
                    rcs_mean: 10.0,
                    rcs_std: 1.5,
                    hidden: vec![(16, 19)],
                    ..Default::default()
                },
                AgentSpec {
                    position: Vec2::new(20.0, -27.5),
                    velocity: Vec2::new(0.0, 5.0),
                    mean_points: 6.0,
                    rcs_mean: 5.0,
                    rcs_std: 1.5,
                    ..Default::default()
                },
            ],
            structures: [(-10.0, 27.0), (0.0, 13.0), (8.0, 27.0), (36.0, 13.0), (46.0, 27.0)]
                .into_iter()
                .chain([(13.0, -20.0), (27.0, -8.0), (13.0, 2.0), (27.0, 36.0), (13.0, 44.0)])
                .map(|(x, y)| StaticObject {
                    position: Vec2::new(x, y),
                    ..Default::default()
                })
                .collect(),
            scans: 30,
            clutter_rate: 5.0,
            position_noise: 0.1,
            doppler_noise: 0.1,
            dropout: 0.05,
            miss_rate: 0.1,
            ..base
        },
        "occlusion" => ScenarioConfig {
            agents: vec![AgentSpec {
                position: Vec2::new(10.0, 5.0),
                velocity: Vec2::new(2.0, 0.0),
                mean_points: 6.0,
                fixed_count: true,
                hidden: vec![(8, 11)],
                ..Default::default()
            }],
            scans: 30,
            ..base
        },
        // One point per agent per scan; the third agent circles the sensor,
        // so its Doppler is zero while it covers 12 m per scan.
        "single_point" => ScenarioConfig {
            agents: vec![
                AgentSpec {
                    position: Vec2::new(10.0, 10.0),
                    velocity: Vec2::new(3.0, 3.0),
                    ..single_point_agent()
                },
                AgentSpec {
                    position: Vec2::new(-15.0, 0.0),
                    velocity: Vec2::new(-4.0, 0.0),
                    ..single_point_agent()
                },
                AgentSpec {
                    position: Vec2::new(0.0, -30.0),
                    velocity: Vec2::new(24.0, 0.0),
                    turn_rate: 0.8,
                    ..single_point_agent()
                },
            ],
            scans: 20,
            ..base
        },
        "spawn_despawn" => ScenarioConfig {
            agents: vec![
                AgentSpec {
                    position: Vec2::new(10.0, 0.0),
                    death: 12,
                    ..Default::default()
                },
                AgentSpec {
                    position: Vec2::new(-10.0, 20.0),
                    velocity: Vec2::new(0.0, -2.0),
                    birth: 5,
                    death: 25,
                    ..Default::default()
                },
                AgentSpec {
                    position: Vec2::new(30.0, -20.0),
                    velocity: Vec2::new(-2.0, 1.0),
                    birth: 15,
                    ..Default::default()
                },
            ],
            scans: 30,
            ..base
        },
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    config.validate()?;
    Ok(config)
}

fn single_point_agent() -> AgentSpec {
    AgentSpec {
        extent: Vec2::ZERO,
        mean_points: 1.0,
        fixed_count: true,
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{agent_trajectory, generate_sequence};

    #[test]
    fn every_name_resolves() {
        for name in SCENARIO_NAMES {
            let c = scenario_library(name, 1).unwrap();
            assert_eq!(c.name, name);
            generate_sequence(&c).unwrap();
        }
        assert!(matches!(scenario_library("nope", 0), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn single_is_one_noise_free_agent() {
        let c = scenario_library("single", 0).unwrap();
        assert_eq!(c.agents.len(), 1);
        assert_eq!(c.scans, 20);
        assert_eq!((c.position_noise, c.doppler_noise, c.clutter_rate, c.dropout), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn single_point_emits_one_point_per_agent() {
        let c = scenario_library("single_point", 3).unwrap();
        for s in generate_sequence(&c).unwrap() {
            assert_eq!(s.segmented.len(), c.agents.len());
            let mut ids = s.track_ids.clone();
            ids.sort();
            assert_eq!(ids, vec![1, 2, 3]);
        }
    }

    #[test]
    fn crossing_closest_approach_is_in_the_similarity_band() {
        let c = scenario_library("crossing", 0).unwrap();
        let a = agent_trajectory(&c.agents[0], c.scans, c.dt);
        let b = agent_trajectory(&c.agents[1], c.scans, c.dt);
        let min = a
            .iter()
            .zip(&b)
            .filter_map(|(p, q)| Some(((*p)? - (*q)?).norm()))
            .fold(f64::INFINITY, f64::min);
        assert!(min > 5.0 && min <= 10.0, "min distance {min}");
        // the hidden window covers the closest approach
        let k = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (p.unwrap() - q.unwrap()).norm())
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap()
            .0 as u32;
        assert!(c.agents[0].hidden.iter().any(|&(s, e)| k >= s && k < e));
    }
}
