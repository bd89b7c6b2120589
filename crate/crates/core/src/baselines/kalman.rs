use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use ndarray::Array2;

use super::center::association_from;
use super::{per_point_ids, BaselineParams};
use crate::association::hungarian;
use crate::error::Result;
use crate::model::{extract_moving_instances, SegmentedScan, TrackerConfig, Vec2};

/// Axis-aligned box `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Vec2,
    pub max: Vec2,
}

impl BoundingBox {
    /// Tight hull of the given points; a single point gives a degenerate box.
    pub fn hull(points: impl IntoIterator<Item = Vec2>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        Some(it.fold(Self { min: first, max: first }, |b, p| Self {
            min: Vec2::new(b.min.x.min(p.x), b.min.y.min(p.y)),
            max: Vec2::new(b.max.x.max(p.x), b.max.y.max(p.y)),
        }))
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) / 2.0
    }

    pub fn size(&self) -> Vec2 {
        self.max - self.min
    }

    pub fn area(&self) -> f64 {
        let s = self.size();
        s.x * s.y
    }

    pub fn centered_at(&self, c: Vec2) -> Self {
        let h = self.size() / 2.0;
        Self { min: c - h, max: c + h }
    }
}

/// Intersection over union; zero whenever either box has zero area.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a.area() <= 0.0 || b.area() <= 0.0 {
        return 0.0;
    }
    let w = (a.max.x.min(b.max.x) - a.min.x.max(b.min.x)).max(0.0);
    let h = (a.max.y.min(b.max.y) - a.min.y.max(b.min.y)).max(0.0);
    let inter = w * h;
    inter / (a.area() + b.area() - inter)
}

/// Constant-velocity track with state `(x, y, vx, vy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanTrack {
    pub track_id: u32,
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    /// Last observed box; its size travels with the state.
    pub bbox: BoundingBox,
    pub misses: u32,
}

impl KalmanTrack {
    pub fn new(track_id: u32, bbox: BoundingBox, params: &BaselineParams) -> Self {
        let c = bbox.center();
        let r2 = params.measurement_noise.powi(2).max(1e-6);
        let v2 = params.initial_velocity_std.powi(2);
        Self {
            track_id,
            state: Vector4::new(c.x, c.y, 0.0, 0.0),
            covariance: Matrix4::from_diagonal(&Vector4::new(r2, r2, v2, v2)),
            bbox,
            misses: 0,
        }
    }

    pub fn predict(&mut self, dt: f64, process_noise: f64) {
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let g = Matrix4x2::new(dt * dt / 2.0, 0.0, 0.0, dt * dt / 2.0, dt, 0.0, 0.0, dt);
        let q = g * g.transpose() * process_noise.powi(2);
        self.state = f * self.state;
        self.covariance = f * self.covariance * f.transpose() + q;
        self.symmetrize();
    }

    /// Joseph-form position update.
    pub fn update(&mut self, z: Vec2, measurement_noise: f64) {
        let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        let r = Matrix2::identity() * measurement_noise.powi(2).max(1e-6);
        let s = h * self.covariance * h.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            return;
        };
        let k = self.covariance * h.transpose() * s_inv;
        let innovation = Vector2::new(z.x, z.y) - h * self.state;
        self.state += k * innovation;
        let a = Matrix4::identity() - k * h;
        self.covariance = a * self.covariance * a.transpose() + k * r * k.transpose();
        self.symmetrize();
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.state[0], self.state[1])
    }

    pub fn predicted_box(&self) -> BoundingBox {
        self.bbox.centered_at(self.position())
    }

    fn symmetrize(&mut self) {
        self.covariance = (self.covariance + self.covariance.transpose()) / 2.0;
    }
}

/// Kalman tracker associating predicted boxes to instance boxes with cost
/// `1 - IoU`. Pairs below `min_iou` are never matched, so single-point
/// instances open a new track on every scan.
pub fn kalman_iou_tracker(
    scans: &[SegmentedScan],
    config: &TrackerConfig,
    params: &BaselineParams,
) -> Result<Vec<Vec<u32>>> {
    params.validate()?;
    config.validate()?;
    let mut tracks: Vec<KalmanTrack> = Vec::new();
    let mut next_id = 1;
    let mut last_t: Option<u32> = None;
    let mut out = Vec::with_capacity(scans.len());
    for scan in scans {
        let gap = last_t.map_or(1, |p| scan.scan.t.saturating_sub(p).max(1));
        last_t = Some(scan.scan.t);
        for tr in &mut tracks {
            tr.predict(params.dt * gap as f64, params.process_noise);
        }
        let detections = extract_moving_instances(scan);
        let boxes: Vec<BoundingBox> = detections
            .iter()
            .map(|d| {
                BoundingBox::hull(d.point_indices.iter().map(|&i| scan.scan.points[i].position()))
                    .expect("instances are non-empty")
            })
            .collect();
        let shape = (tracks.len(), boxes.len());
        let iou = Array2::from_shape_fn(shape, |(i, j)| box_iou(&tracks[i].predicted_box(), &boxes[j]));
        let cost = iou.mapv(|v| 1.0 - v);
        let forbidden = iou.mapv(|v| !(v >= params.min_iou) || v == 0.0);
        let assoc = association_from(hungarian(&cost, Some(&forbidden)), shape);

        let mut ids = vec![0; boxes.len()];
        for &(ti, di) in &assoc.matches {
            let tr = &mut tracks[ti];
            tr.update(boxes[di].center(), params.measurement_noise);
            tr.bbox = boxes[di];
            tr.misses = 0;
            ids[di] = tr.track_id;
        }
        for &ti in &assoc.unmatched_tracks {
            tracks[ti].misses += 1;
        }
        tracks.retain(|t| t.misses <= config.retention);
        for &di in &assoc.unmatched_detections {
            tracks.push(KalmanTrack::new(next_id, boxes[di], params));
            ids[di] = next_id;
            next_id += 1;
        }
        let members: Vec<Vec<usize>> = detections.iter().map(|d| d.point_indices.clone()).collect();
        out.push(per_point_ids(scan.len(), &members, &ids));
    }
    Ok(out)
}
