use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use radar_tracker::baselines::{run_baseline, BaselineParams};
use radar_tracker::experiments::{ablation, compare_baselines, format_table, train_gate, ExperimentConfig};
use radar_tracker::io::{read_sequences, write_records, write_sequences, Header, ScanRecord, Sequence};
use radar_tracker::metrics::{evaluate, ScanLabels, SequenceLabels};
use radar_tracker::model::{AnnotatedScan, SegmentedScan, TrackerConfig};
use radar_tracker::nets::{offset_samples, similarity_pairs, train_offsets, train_similarity, TrackerNets, TrainConfig};
use radar_tracker::simulator::{corrupt_sequence, generate_sequence, scenario_library, CorruptionRates};
use radar_tracker::verify::gradient_suite;
use radar_tracker::Error;
use serde_json::json;

use crate::{Command, TrackerArgs};

/// 2 for invalid input or configuration, 3 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidConfig(_)
                | Error::Parse { .. }
                | Error::Invariant(_)
                | Error::UnknownScenario(_)
                | Error::Shape { .. }
                | Error::NonMonotoneTime { .. }
                | Error::Json(_) => 2,
                _ => 3,
            };
        }
        if cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    3
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { scenario, seed, out } => simulate(&scenario, seed, &out),
        Command::Corrupt {
            input,
            out,
            seed,
            rates,
            flip,
            split,
            merge,
            merge_radius,
            offset_noise,
            ghost,
            ghost_radius,
        } => {
            let mut r: CorruptionRates = match rates {
                Some(p) => read_json(&p)?,
                None => CorruptionRates::default(),
            };
            let overrides = [
                (&mut r.flip, flip),
                (&mut r.split, split),
                (&mut r.merge, merge),
                (&mut r.merge_radius, merge_radius),
                (&mut r.offset_noise, offset_noise),
                (&mut r.ghost, ghost),
                (&mut r.ghost_radius, ghost_radius),
            ];
            for (field, value) in overrides {
                if let Some(v) = value {
                    *field = v;
                }
            }
            corrupt(&input, &out, seed, &r)
        }
        Command::Train {
            input,
            out,
            tracker,
            steps,
            batch_size,
            lr,
            center_jitter,
        } => {
            let config = tracker.resolve()?;
            let mut train = TrainConfig {
                seed: config.seed,
                ..Default::default()
            };
            if let Some(v) = steps {
                train.steps = v;
            }
            if let Some(v) = batch_size {
                train.batch_size = v;
            }
            if let Some(v) = lr {
                train.lr = v;
            }
            if let Some(v) = center_jitter {
                train.center_jitter = v;
            }
            train_cmd(&input, &out, &config, &train)
        }
        Command::Track {
            input,
            out,
            checkpoint,
            predict_offsets,
            tracker,
        } => {
            let config = tracker.resolve()?;
            track(&input, &out, checkpoint.as_deref(), predict_offsets, &config)
        }
        Command::Baseline {
            name,
            input,
            out,
            dt,
            tracker,
        } => {
            let config = tracker.resolve()?;
            let params = BaselineParams {
                dt,
                ..Default::default()
            };
            baseline(&name, &input, &out, &config, &params)
        }
        Command::Eval { pred, gt } => eval(&pred, &gt),
        Command::Gradcheck { seed, seeds, tolerance } => gradcheck(seed, seeds, tolerance),
        Command::Ablate {
            scenario,
            seeds,
            seed,
            baselines,
            json,
        } => {
            scenario_library(&scenario, 0)?;
            let mut cfg = ExperimentConfig::preset(&scenario);
            if let Some(n) = seeds {
                cfg.seeds = (seed..seed + n).collect();
            }
            ablate(&cfg, baselines, json)
        }
    }
}

impl TrackerArgs {
    fn resolve(&self) -> Result<TrackerConfig> {
        let mut c: TrackerConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => TrackerConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.t_d1 {
            c.t_d1 = v;
        }
        if let Some(v) = self.t_d2 {
            c.t_d2 = v;
        }
        if let Some(v) = self.t_c {
            c.t_c = v;
        }
        if let Some(v) = self.retention {
            c.retention = v;
        }
        if self.geometric {
            c.use_similarity = false;
        }
        if self.no_temporal_offset {
            c.use_temporal_offset = false;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Prints a line to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_input(path: &Path) -> Result<Vec<Sequence>> {
    read_sequences(path).with_context(|| format!("reading {}", path.display()))
}

fn check_distinct(input: &Path, out: &Path) -> Result<()> {
    let same = match (input.canonicalize(), out.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => input == out,
    };
    if same {
        return Err(Error::InvalidConfig(format!("output {} would overwrite the input", out.display())).into());
    }
    Ok(())
}

fn write_output(path: &Path, header: &Header, records: &[ScanRecord]) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_records(std::io::BufWriter::new(file), Some(header), records)?;
    Ok(())
}

fn simulate(scenario: &str, seed: u64, out: &Path) -> Result<()> {
    let cfg = scenario_library(scenario, seed)?;
    let scans = generate_sequence(&cfg)?;
    let header = Header::new("simulate", &cfg)?;
    let seq = Sequence {
        id: cfg.name.clone(),
        scans,
    };
    write_sequences(out, Some(&header), &[seq]).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn corrupt(input: &Path, out: &Path, seed: u64, rates: &CorruptionRates) -> Result<()> {
    check_distinct(input, out)?;
    rates.validate()?;
    let mut seqs = read_input(input)?;
    for (k, seq) in seqs.iter_mut().enumerate() {
        seq.scans = corrupt_sequence(&seq.scans, rates, seed.wrapping_add(k as u64))?;
    }
    let header = Header::new("corrupt", &json!({ "seed": seed, "rates": rates }))?;
    write_sequences(out, Some(&header), &seqs).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn train_cmd(input: &Path, out: &Path, config: &TrackerConfig, train: &TrainConfig) -> Result<()> {
    let seqs: Vec<Vec<AnnotatedScan>> = read_input(input)?.into_iter().map(|s| s.scans).collect();
    let mut nets = TrackerNets::new(config);
    let samples = offset_samples(&seqs);
    let off = train_offsets(&mut nets.offset, &samples, train).context("training offset heads")?;
    let pairs = similarity_pairs(&seqs, train);
    let sim = train_similarity(&mut nets, &pairs, train).context("training similarity head")?;
    nets.save(out).with_context(|| format!("writing {}", out.display()))?;
    let window = (train.steps / 10).max(1);
    let (o0, o1) = off.head_tail(window);
    let (s0, s1) = sim.head_tail(window);
    eprintln!("offset loss {o0:.4} -> {o1:.4}, similarity loss {s0:.4} -> {s1:.4}");
    Ok(())
}

fn track(
    input: &Path,
    out: &Path,
    checkpoint: Option<&Path>,
    predict_offsets: bool,
    config: &TrackerConfig,
) -> Result<()> {
    check_distinct(input, out)?;
    let nets = match checkpoint {
        Some(p) => Some(TrackerNets::load(config, p).with_context(|| format!("loading {}", p.display()))?),
        None if config.use_similarity => {
            return Err(Error::InvalidConfig("similarity gating needs --checkpoint (or pass --geometric)".into()).into())
        }
        None if predict_offsets => return Err(Error::InvalidConfig("--predict-offsets needs --checkpoint".into()).into()),
        None => None,
    };
    let mut records = Vec::new();
    for seq in read_input(input)? {
        let mut scans = seq.segmented();
        if predict_offsets {
            let head = &nets.as_ref().expect("checked above").offset;
            scans = scans.iter().map(|s| head.predict(s)).collect::<radar_tracker::Result<_>>()?;
        }
        let ids = radar_tracker::association::run_tracker(&scans, config, nets.as_ref())
            .with_context(|| format!("tracking sequence {:?}", seq.id))?;
        records.extend(scans.iter().zip(&ids).map(|(s, i)| ScanRecord::from_prediction(s, i)));
    }
    let header = Header::new(
        "track",
        &json!({
            "tracker": config,
            "checkpoint": checkpoint.map(|p| p.display().to_string()),
            "predict_offsets": predict_offsets,
        }),
    )?;
    write_output(out, &header, &records)
}

fn baseline(name: &str, input: &Path, out: &Path, config: &TrackerConfig, params: &BaselineParams) -> Result<()> {
    check_distinct(input, out)?;
    let mut records = Vec::new();
    for seq in read_input(input)? {
        let scans: Vec<SegmentedScan> = seq.segmented();
        let ids = run_baseline(name, &scans, config, params)?;
        records.extend(scans.iter().zip(&ids).map(|(s, i)| ScanRecord::from_prediction(s, i)));
    }
    let header = Header::new("baseline", &json!({ "name": name, "params": params, "tracker": config }))?;
    write_output(out, &header, &records)
}

fn labels(seq: &Sequence) -> Result<SequenceLabels> {
    let scans = seq
        .scans
        .iter()
        .map(|s| ScanLabels::new(s.segmented.semantics.clone(), s.track_ids.clone()))
        .collect::<radar_tracker::Result<_>>()?;
    Ok(SequenceLabels { scans })
}

fn eval(pred: &Path, gt: &Path) -> Result<()> {
    let pred = read_input(pred)?;
    let gt = read_input(gt)?;
    let ids = |s: &[Sequence]| s.iter().map(|q| q.id.clone()).collect::<Vec<_>>();
    if ids(&pred) != ids(&gt) {
        return Err(Error::Invariant(format!(
            "prediction sequences {:?} differ from ground truth {:?}",
            ids(&pred),
            ids(&gt)
        ))
        .into());
    }
    for (p, g) in pred.iter().zip(&gt) {
        let ts = |s: &Sequence| s.scans.iter().map(|a| a.t()).collect::<Vec<_>>();
        if ts(p) != ts(g) {
            return Err(Error::Invariant(format!("sequence {:?}: scan indices differ", p.id)).into());
        }
    }
    let p = pred.iter().map(labels).collect::<Result<Vec<_>>>()?;
    let g = gt.iter().map(labels).collect::<Result<Vec<_>>>()?;
    let report = evaluate(&p, &g)?;
    emit(&serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn gradcheck(seed: u64, seeds: u64, tolerance: f64) -> Result<()> {
    let mut worst: f64 = 0.0;
    for s in seed..seed + seeds {
        for case in gradient_suite(s)? {
            let r = &case.report;
            emit(&format!(
                "seed {s:>3} {:<28} rel {:.3e} abs {:.3e} ({} coords)",
                case.name, r.max_rel_error, r.max_abs_error, r.checked
            ))?;
            worst = worst.max(r.max_rel_error);
        }
    }
    if !(worst <= tolerance) {
        bail!("largest relative error {worst:.3e} exceeds {tolerance:.1e}");
    }
    emit(&format!("all gradients within {tolerance:.1e} (worst {worst:.3e})"))?;
    Ok(())
}

fn ablate(cfg: &ExperimentConfig, baselines: bool, as_json: bool) -> Result<()> {
    let (nets, report) = train_gate(cfg)?;
    let (l0, l1) = report.head_tail(20);
    eprintln!("gate training loss {l0:.4} -> {l1:.4}");
    let mut rows = ablation(cfg, Some(&nets))?;
    if baselines {
        rows.extend(compare_baselines(cfg, Some(&nets))?);
    }
    if as_json {
        emit(&serde_json::to_string_pretty(&rows)?)
    } else {
        emit(format_table(&rows).trim_end())
    }
}
