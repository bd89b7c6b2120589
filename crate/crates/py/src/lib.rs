//! Python bindings. Scans cross the boundary as plain lists; configs as JSON
//! strings or keyword overrides.

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use radar_tracker::association::{self, TrackerState};
use radar_tracker::baselines::{run_baseline as run_baseline_rs, BaselineParams};
use radar_tracker::io;
use radar_tracker::metrics::{evaluate as evaluate_rs, ScanLabels, SequenceLabels};
use radar_tracker::model::{self, AnnotatedScan, RadarPoint, RadarScan, Semantic, Vec2};
use radar_tracker::nets::{self, TrackerNets, TrainConfig};
use radar_tracker::simulator::{self, CorruptionRates};
use radar_tracker::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::InvalidConfig(_)
        | Error::Parse { .. }
        | Error::Invariant(_)
        | Error::UnknownScenario(_)
        | Error::Shape { .. }
        | Error::NonMonotoneTime { .. }
        | Error::Empty(_)
        | Error::Json(_) => PyValueError::new_err(err.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for radar_tracker::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Serializes `value` after applying keyword overrides through JSON, so that
/// unknown keys are rejected exactly as in config files.
fn with_overrides<T>(value: &T, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<T>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let mut json = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(kw) = kwargs {
        let obj = json.as_object_mut().expect("configs serialize to objects");
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            let v = if let Ok(b) = v.extract::<bool>() {
                serde_json::Value::from(b)
            } else if let Ok(i) = v.extract::<i64>() {
                serde_json::Value::from(i)
            } else {
                serde_json::Value::from(v.extract::<f64>()?)
            };
            obj.insert(key, v);
        }
    }
    serde_json::from_value(json).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Tracker thresholds, widths and association switches.
#[pyclass(name = "TrackerConfig", from_py_object)]
#[derive(Clone)]
pub struct PyTrackerConfig {
    inner: model::TrackerConfig,
}

#[pymethods]
impl PyTrackerConfig {
    /// Defaults overridden by keyword arguments, e.g. `TrackerConfig(t_d1=4.0)`.
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner: model::TrackerConfig = with_overrides(&model::TrackerConfig::default(), kwargs)?;
        inner.validate().py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: model::TrackerConfig =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().py()?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    fn fingerprint(&self) -> PyResult<String> {
        io::fingerprint(&self.inner).py()
    }

    #[getter]
    fn t_d1(&self) -> f64 {
        self.inner.t_d1
    }

    #[getter]
    fn t_d2(&self) -> f64 {
        self.inner.t_d2
    }

    #[getter]
    fn t_c(&self) -> f64 {
        self.inner.t_c
    }

    #[getter]
    fn retention(&self) -> u32 {
        self.inner.retention
    }

    #[getter]
    fn use_similarity(&self) -> bool {
        self.inner.use_similarity
    }

    #[getter]
    fn use_temporal_offset(&self) -> bool {
        self.inner.use_temporal_offset
    }

    fn __repr__(&self) -> String {
        format!("TrackerConfig({})", self.to_json())
    }
}

/// One segmented radar scan.
#[pyclass(name = "Scan", from_py_object)]
#[derive(Clone)]
pub struct PyScan {
    inner: model::SegmentedScan,
}

fn vecs(v: Option<Vec<(f64, f64)>>, n: usize) -> Vec<Vec2> {
    v.map(|v| v.into_iter().map(|(x, y)| Vec2::new(x, y)).collect())
        .unwrap_or_else(|| vec![Vec2::ZERO; n])
}

#[pymethods]
impl PyScan {
    /// `points` holds `(x, y, v, rcs)` rows; `semantics` is 1 for moving and 0
    /// for static. Offsets default to zero.
    #[new]
    #[pyo3(signature = (sequence_id, t, points, semantics, instance_ids, offsets=None, temporal_offsets=None))]
    fn new(
        sequence_id: String,
        t: u32,
        points: Vec<(f64, f64, f64, f64)>,
        semantics: Vec<u8>,
        instance_ids: Vec<u32>,
        offsets: Option<Vec<(f64, f64)>>,
        temporal_offsets: Option<Vec<(f64, f64)>>,
    ) -> PyResult<Self> {
        let n = points.len();
        let sem = semantics
            .iter()
            .map(|&f| Semantic::from_flag(f).ok_or_else(|| PyValueError::new_err(format!("semantic flag {f} is not 0 or 1"))))
            .collect::<PyResult<Vec<_>>>()?;
        let pts = points.into_iter().map(|(x, y, v, rcs)| RadarPoint::new(x, y, v, rcs)).collect();
        let inner = model::SegmentedScan::new(
            RadarScan::new(sequence_id, t, pts),
            sem,
            instance_ids,
            vecs(offsets, n),
            vecs(temporal_offsets, n),
        )
        .py()?;
        Ok(Self { inner })
    }

    #[getter]
    fn sequence_id(&self) -> String {
        self.inner.scan.sequence_id.clone()
    }

    #[getter]
    fn t(&self) -> u32 {
        self.inner.scan.t
    }

    #[getter]
    fn points(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner.scan.points.iter().map(|p| (p.x, p.y, p.v, p.rcs)).collect()
    }

    #[getter]
    fn semantics(&self) -> Vec<u8> {
        self.inner.semantics.iter().map(|s| s.flag()).collect()
    }

    #[getter]
    fn instance_ids(&self) -> Vec<u32> {
        self.inner.instance_ids.clone()
    }

    #[getter]
    fn offsets(&self) -> Vec<(f64, f64)> {
        self.inner.offsets.iter().map(|o| (o.x, o.y)).collect()
    }

    #[getter]
    fn temporal_offsets(&self) -> Vec<(f64, f64)> {
        self.inner.temporal_offsets.iter().map(|o| (o.x, o.y)).collect()
    }

    /// Moving instances as `(instance_id, center, point_indices)`.
    fn instances(&self) -> Vec<(u32, (f64, f64), Vec<usize>)> {
        model::extract_moving_instances(&self.inner)
            .into_iter()
            .map(|d| (d.instance_id, (d.center.x, d.center.y), d.point_indices))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Scan(seq={:?}, t={}, points={})", self.inner.scan.sequence_id, self.inner.scan.t, self.inner.len())
    }
}

/// A sequence of scans with per-point ground-truth track IDs.
#[pyclass(name = "Sequence", from_py_object)]
#[derive(Clone)]
pub struct PySequence {
    inner: io::Sequence,
}

#[pymethods]
impl PySequence {
    #[new]
    fn new(scans: Vec<PyScan>, track_ids: Vec<Vec<u32>>) -> PyResult<Self> {
        if scans.len() != track_ids.len() {
            return Err(PyValueError::new_err("one track ID list per scan is required"));
        }
        let id = scans.first().map(|s| s.inner.scan.sequence_id.clone()).unwrap_or_default();
        let scans = scans
            .into_iter()
            .zip(track_ids)
            .map(|(s, ids)| {
                if ids.len() != s.inner.len() {
                    return Err(PyValueError::new_err("track IDs must match the number of points"));
                }
                Ok(AnnotatedScan {
                    segmented: s.inner,
                    track_ids: ids,
                })
            })
            .collect::<PyResult<_>>()?;
        Ok(Self {
            inner: io::Sequence { id, scans },
        })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn scans(&self) -> Vec<PyScan> {
        self.inner.segmented().into_iter().map(|inner| PyScan { inner }).collect()
    }

    #[getter]
    fn track_ids(&self) -> Vec<Vec<u32>> {
        self.inner.scans.iter().map(|s| s.track_ids.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.scans.len()
    }
}

/// Offset heads, instance network and similarity head.
#[pyclass(name = "TrackerNets")]
pub struct PyTrackerNets {
    inner: TrackerNets,
}

#[pymethods]
impl PyTrackerNets {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<&PyTrackerConfig>) -> Self {
        let c = config.map(|c| c.inner.clone()).unwrap_or_default();
        Self {
            inner: TrackerNets::new(&c),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (path, config=None))]
    fn load(path: &str, config: Option<&PyTrackerConfig>) -> PyResult<Self> {
        let c = config.map(|c| c.inner.clone()).unwrap_or_default();
        Ok(Self {
            inner: TrackerNets::load(&c, path).py()?,
        })
    }

    fn save(&mut self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    /// Fits the offset heads and the similarity gate on ground-truth
    /// sequences. Keyword arguments override the training config. Returns the
    /// final `(offset_loss, similarity_loss)`.
    #[pyo3(signature = (sequences, **kwargs))]
    fn train(&mut self, sequences: Vec<PySequence>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<(f64, f64)> {
        let cfg: TrainConfig = with_overrides(&TrainConfig::default(), kwargs)?;
        let seqs: Vec<Vec<AnnotatedScan>> = sequences.into_iter().map(|s| s.inner.scans).collect();
        let off = nets::train_offsets(&mut self.inner.offset, &nets::offset_samples(&seqs), &cfg).py()?;
        let sim = nets::train_similarity(&mut self.inner, &nets::similarity_pairs(&seqs, &cfg), &cfg).py()?;
        let last = |l: &[f64]| l.last().copied().unwrap_or(f64::NAN);
        Ok((last(&off.losses), last(&sim.losses)))
    }

    /// Replaces both offset fields of `scan` with the heads' predictions.
    fn predict_offsets(&self, scan: &PyScan) -> PyResult<PyScan> {
        Ok(PyScan {
            inner: self.inner.offset.predict(&scan.inner).py()?,
        })
    }
}

/// Online tracker; feed scans in order.
#[pyclass(name = "Tracker")]
pub struct PyTracker {
    inner: TrackerState,
}

#[pymethods]
impl PyTracker {
    #[new]
    #[pyo3(signature = (config=None, nets=None))]
    fn new(config: Option<&PyTrackerConfig>, nets: Option<&PyTrackerNets>) -> PyResult<Self> {
        let mut c = config.map(|c| c.inner.clone()).unwrap_or_default();
        if config.is_none() && nets.is_none() {
            c.use_similarity = false;
        }
        Ok(Self {
            inner: TrackerState::new(c, nets.map(|n| n.inner.clone())).py()?,
        })
    }

    /// Per-point track IDs for one scan; 0 marks static points.
    fn step(&mut self, scan: &PyScan) -> PyResult<Vec<u32>> {
        self.inner.step(&scan.inner).py()
    }
}

/// Runs the tracker over a whole sequence of scans.
#[pyfunction]
#[pyo3(signature = (scans, config=None, nets=None))]
fn track(scans: Vec<PyScan>, config: Option<&PyTrackerConfig>, nets: Option<&PyTrackerNets>) -> PyResult<Vec<Vec<u32>>> {
    let mut c = config.map(|c| c.inner.clone()).unwrap_or_default();
    if config.is_none() && nets.is_none() {
        c.use_similarity = false;
    }
    let scans: Vec<_> = scans.into_iter().map(|s| s.inner).collect();
    association::run_tracker(&scans, &c, nets.map(|n| &n.inner)).py()
}

/// Reference trackers: `"center_doppler"` or `"kalman_iou"`.
#[pyfunction]
#[pyo3(signature = (name, scans, dt=0.5))]
fn run_baseline(name: &str, scans: Vec<PyScan>, dt: f64) -> PyResult<Vec<Vec<u32>>> {
    let scans: Vec<_> = scans.into_iter().map(|s| s.inner).collect();
    let params = BaselineParams { dt, ..Default::default() };
    run_baseline_rs(name, &scans, &model::TrackerConfig::default(), &params).py()
}

/// Simulates a named scenario.
#[pyfunction]
#[pyo3(signature = (scenario, seed=0))]
fn simulate(scenario: &str, seed: u64) -> PyResult<PySequence> {
    let cfg = simulator::scenario_library(scenario, seed).py()?;
    let scans = simulator::generate_sequence(&cfg).py()?;
    Ok(PySequence {
        inner: io::Sequence { id: cfg.name, scans },
    })
}

#[pyfunction]
fn scenario_names() -> Vec<&'static str> {
    simulator::SCENARIO_NAMES.to_vec()
}

/// Applies the segmentation error model; rates are keyword arguments.
#[pyfunction]
#[pyo3(signature = (sequence, seed=0, **rates))]
fn corrupt(sequence: &PySequence, seed: u64, rates: Option<&Bound<'_, PyDict>>) -> PyResult<PySequence> {
    let rates: CorruptionRates = with_overrides(&CorruptionRates::default(), rates)?;
    let scans = simulator::corrupt_sequence(&sequence.inner.scans, &rates, seed).py()?;
    Ok(PySequence {
        inner: io::Sequence {
            id: sequence.inner.id.clone(),
            scans,
        },
    })
}

/// Scores predicted per-point IDs on `scans` against a ground-truth sequence.
/// Returns a dict with `lstq`, `s_assoc`, `s_cls`, `iou_mov`, `num_switches`
/// and track counts.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    scans: Vec<PyScan>,
    track_ids: Vec<Vec<u32>>,
    gt: &PySequence,
) -> PyResult<Bound<'py, PyDict>> {
    if scans.len() != track_ids.len() {
        return Err(PyValueError::new_err("one track ID list per scan is required"));
    }
    let pred = SequenceLabels {
        scans: scans
            .into_iter()
            .zip(track_ids)
            .map(|(s, ids)| ScanLabels::new(s.inner.semantics, ids))
            .collect::<radar_tracker::Result<_>>()
            .py()?,
    };
    let r = evaluate_rs(&[pred], &[SequenceLabels::from_annotated(&gt.inner.scans)]).py()?;
    let d = PyDict::new(py);
    d.set_item("lstq", r.lstq)?;
    d.set_item("s_assoc", r.s_assoc)?;
    d.set_item("s_cls", r.s_cls)?;
    d.set_item("iou_mov", r.iou_mov)?;
    d.set_item("num_switches", r.num_switches)?;
    d.set_item("num_tracks_pred", r.num_tracks_pred)?;
    d.set_item("num_tracks_gt", r.num_tracks_gt)?;
    Ok(d)
}

/// Minimum-cost assignment of a rectangular cost matrix as `(row, col)` pairs.
#[pyfunction]
fn hungarian(cost: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize)>> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("cost rows must have equal length"));
    }
    let m = Array2::from_shape_vec((rows, cols), cost.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(PyValueError::new_err("cost entries must be finite"));
    }
    Ok(association::hungarian(&m, None))
}

/// Cluster label per point; `None` marks noise.
#[pyfunction]
#[pyo3(signature = (points, eps, min_pts=1))]
fn dbscan(points: Vec<(f64, f64)>, eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let pts: Vec<Vec2> = points.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
    association::dbscan(&pts, eps, min_pts)
}

#[pyfunction]
fn read_sequences(path: &str) -> PyResult<Vec<PySequence>> {
    Ok(io::read_sequences(path).py()?.into_iter().map(|inner| PySequence { inner }).collect())
}

#[pyfunction]
fn write_sequences(path: &str, sequences: Vec<PySequence>) -> PyResult<()> {
    let seqs: Vec<_> = sequences.into_iter().map(|s| s.inner).collect();
    io::write_sequences(path, None, &seqs).py()
}

#[pymodule]
fn radar_tracker_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrackerConfig>()?;
    m.add_class::<PyScan>()?;
    m.add_class::<PySequence>()?;
    m.add_class::<PyTrackerNets>()?;
    m.add_class::<PyTracker>()?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(run_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_names, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(dbscan, m)?)?;
    m.add_function(wrap_pyfunction!(read_sequences, m)?)?;
    m.add_function(wrap_pyfunction!(write_sequences, m)?)?;
    Ok(())
}
