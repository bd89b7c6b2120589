//! Canned experiments on simulated scenarios: training the learned gate,
//! association ablations and baseline comparisons. Shared by the CLI and the
//! acceptance tests.

use serde::{Deserialize, Serialize};

use crate::association::run_tracker;
use crate::baselines::{run_baseline, BaselineParams};
use crate::error::Result;
use crate::metrics::{evaluate, MetricReport, ScanLabels, SequenceLabels};
use crate::model::{AnnotatedScan, SegmentedScan, TrackerConfig};
use crate::nets::{similarity_pairs, train_similarity, TrackerNets, TrainConfig, TrainReport};
use crate::simulator::{corrupt_sequence, generate_sequence, scenario_library, CorruptionRates};

/// Ground truth of one simulated sequence and the corrupted segmentation the
/// trackers see.
#[derive(Clone, Debug)]
pub struct Trial {
    pub gt: Vec<AnnotatedScan>,
    pub input: Vec<SegmentedScan>,
}

impl Trial {
    pub fn new(scenario: &str, seed: u64, rates: &CorruptionRates) -> Result<Self> {
        let gt = generate_sequence(&scenario_library(scenario, seed)?)?;
        let input = corrupt_sequence(&gt, rates, seed ^ 0xC0FF_EE00)?
            .into_iter()
            .map(|s| s.segmented)
            .collect();
        Ok(Self { gt, input })
    }

    /// Scores per-point track IDs against the ground truth.
    pub fn score(&self, ids: &[Vec<u32>]) -> Result<MetricReport> {
        let pred = SequenceLabels {
            scans: self
                .input
                .iter()
                .zip(ids)
                .map(|(s, i)| ScanLabels::new(s.semantics.clone(), i.clone()))
                .collect::<Result<_>>()?,
        };
        evaluate(&[pred], &[SequenceLabels::from_annotated(&self.gt)])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    /// Evaluation seeds.
    pub seeds: Vec<u64>,
    /// Seeds of the ground-truth sequences used to train the similarity gate.
    pub train_seeds: Vec<u64>,
    pub corruption: CorruptionRates,
    pub train: TrainConfig,
    pub tracker: TrackerConfig,
    pub baseline: BaselineParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset("crossing")
    }
}

impl ExperimentConfig {
    /// Default setup per scenario. Training and evaluation seeds never overlap.
    pub fn preset(scenario: &str) -> Self {
        let corruption = match scenario {
            "crossing" => CorruptionRates {
                flip: 0.01,
                offset_noise: 0.1,
                ghost: 0.3,
                ghost_radius: 2.0,
                ..Default::default()
            },
            "single_point" => CorruptionRates::default(),
            _ => CorruptionRates {
                flip: 0.01,
                split: 0.1,
                offset_noise: 0.2,
                ..Default::default()
            },
        };
        Self {
            scenario: scenario.to_string(),
            seeds: (0..10).collect(),
            train_seeds: (1000..1008).collect(),
            corruption,
            train: TrainConfig {
                steps: 300,
                batch_size: 8,
                lr: 2e-3,
                center_jitter: 8.0,
                ..Default::default()
            },
            tracker: TrackerConfig {
                d1: 16,
                d2: 32,
                ..Default::default()
            },
            baseline: BaselineParams::default(),
        }
    }

    pub fn trials(&self) -> Result<Vec<Trial>> {
        self.seeds
            .iter()
            .map(|&s| Trial::new(&self.scenario, s, &self.corruption))
            .collect()
    }
}

/// Trains the instance network and similarity head on ground-truth sequences
/// of the configured scenario.
pub fn train_gate(cfg: &ExperimentConfig) -> Result<(TrackerNets, TrainReport)> {
    let sequences = cfg
        .train_seeds
        .iter()
        .map(|&s| generate_sequence(&scenario_library(&cfg.scenario, s)?))
        .collect::<Result<Vec<_>>>()?;
    let pairs = similarity_pairs(&sequences, &cfg.train);
    let mut nets = TrackerNets::new(&cfg.tracker);
    let report = train_similarity(&mut nets, &pairs, &cfg.train)?;
    Ok((nets, report))
}

/// One tracker variant evaluated over every seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub variant: String,
    pub s_assoc: f64,
    pub lstq: f64,
    pub num_switches: usize,
    pub per_seed_s_assoc: Vec<f64>,
}

impl ExperimentRow {
    fn from_reports(variant: &str, reports: &[MetricReport]) -> Self {
        let n = reports.len().max(1) as f64;
        Self {
            variant: variant.to_string(),
            s_assoc: reports.iter().map(|r| r.s_assoc).sum::<f64>() / n,
            lstq: reports.iter().map(|r| r.lstq).sum::<f64>() / n,
            num_switches: reports.iter().map(|r| r.num_switches).sum(),
            per_seed_s_assoc: reports.iter().map(|r| r.s_assoc).collect(),
        }
    }
}

fn run_variant(trials: &[Trial], variant: &str, config: &TrackerConfig, nets: Option<&TrackerNets>) -> Result<ExperimentRow> {
    let reports = trials
        .iter()
        .map(|t| t.score(&run_tracker(&t.input, config, nets)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentRow::from_reports(variant, &reports))
}

/// Geometric-only versus similarity-gated association, each with and without
/// temporal-offset propagation. The gated rows need `nets`.
pub fn ablation(cfg: &ExperimentConfig, nets: Option<&TrackerNets>) -> Result<Vec<ExperimentRow>> {
    let trials = cfg.trials()?;
    let mut rows = Vec::new();
    for (gate, temporal, name) in [
        (false, true, "geometric"),
        (true, true, "combined"),
        (false, false, "geometric_raw_centers"),
        (true, false, "combined_raw_centers"),
    ] {
        if gate && nets.is_none() {
            continue;
        }
        let config = TrackerConfig {
            use_similarity: gate,
            use_temporal_offset: temporal,
            ..cfg.tracker.clone()
        };
        rows.push(run_variant(&trials, name, &config, nets)?);
    }
    Ok(rows)
}

/// Both baselines and the tracker (gated when `nets` is given).
pub fn compare_baselines(cfg: &ExperimentConfig, nets: Option<&TrackerNets>) -> Result<Vec<ExperimentRow>> {
    let trials = cfg.trials()?;
    let dt = scenario_library(&cfg.scenario, 0)?.dt;
    let params = BaselineParams { dt, ..cfg.baseline.clone() };
    let mut rows = Vec::new();
    for name in ["kalman_iou", "center_doppler"] {
        let reports = trials
            .iter()
            .map(|t| t.score(&run_baseline(name, &t.input, &cfg.tracker, &params)?))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ExperimentRow::from_reports(name, &reports));
    }
    let config = TrackerConfig {
        use_similarity: nets.is_some(),
        ..cfg.tracker.clone()
    };
    rows.push(run_variant(&trials, "ours", &config, nets)?);
    Ok(rows)
}

/// Plain-text table of experiment rows.
pub fn format_table(rows: &[ExperimentRow]) -> String {
    let mut out = format!("{:<24} {:>8} {:>8} {:>9}\n", "variant", "S_assoc", "LSTQ", "switches");
    for r in rows {
        out.push_str(&format!(
            "{:<24} {:>8.4} {:>8.4} {:>9}\n",
            r.variant, r.s_assoc, r.lstq, r.num_switches
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_single_scenario_scores_perfectly() {
        let trial = Trial::new("single", 0, &CorruptionRates::default()).unwrap();
        let ids = run_tracker(&trial.input, &TrackerConfig::geometric_only(), None).unwrap();
        let r = trial.score(&ids).unwrap();
        assert_eq!(r.s_assoc, 1.0);
        assert_eq!(r.lstq, 1.0);
    }

    #[test]
    fn ablation_without_nets_has_geometric_rows_only() {
        let cfg = ExperimentConfig {
            seeds: vec![0, 1],
            ..ExperimentConfig::preset("parallel")
        };
        let rows = ablation(&cfg, None).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
        assert_eq!(names, ["geometric", "geometric_raw_centers"]);
        assert!(format_table(&rows).contains("geometric_raw_centers"));
        assert_eq!(rows[0].per_seed_s_assoc.len(), 2);
    }

    #[test]
    fn presets_round_trip_through_json() {
        let cfg = ExperimentConfig::preset("occlusion");
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    }
}
