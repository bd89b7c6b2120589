use ndarray::Array2;
use rand::Rng;

use super::mlp::{Mlp, MlpCache};
use crate::error::{shape_err, Result};
use crate::model::{SegmentedScan, Vec2};
use crate::nn::{Dense, Mode, Module, Tensor};

/// Width of the per-point offset input: `[x, y, rcs, v]` followed by `[x, y]`.
pub const OFFSET_INPUT_DIM: usize = 6;

/// Two independent regression heads: `O` to the current instance center and
/// `O^temp` to the instance center in the next scan.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetHead {
    pub standard: Mlp,
    pub temporal: Mlp,
}

#[derive(Clone, Debug)]
pub struct OffsetCache {
    standard: MlpCache,
    temporal: MlpCache,
}

pub fn offset_input(scan: &SegmentedScan, indices: &[usize]) -> Array2<f64> {
    let mut x = Array2::zeros((indices.len(), OFFSET_INPUT_DIM));
    for (row, &i) in indices.iter().enumerate() {
        let p = &scan.scan.points[i];
        let f = p.features();
        for c in 0..4 {
            x[[row, c]] = f[c];
        }
        x[[row, 4]] = p.x;
        x[[row, 5]] = p.y;
    }
    x
}

impl OffsetHead {
    pub fn new<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        Self {
            standard: Mlp::new(OFFSET_INPUT_DIM, hidden, 2, true, rng),
            temporal: Mlp::new(OFFSET_INPUT_DIM, hidden, 2, true, rng),
        }
    }

    /// Zeroes both output layers so every prediction starts at `(0, 0)`.
    pub fn zero_output(&mut self) {
        let hidden = self.standard.second.in_dim();
        self.standard.second = Dense::zeros(hidden, 2);
        self.temporal.second = Dense::zeros(hidden, 2);
    }

    fn check(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != OFFSET_INPUT_DIM {
            return Err(shape_err("offset_forward", OFFSET_INPUT_DIM, x.ncols()));
        }
        Ok(())
    }

    /// Returns `(O, O^temp)`, each `n × 2`.
    pub fn infer(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check(x)?;
        Ok((self.standard.infer(x)?, self.temporal.infer(x)?))
    }

    pub fn forward(
        &mut self,
        x: &Array2<f64>,
        mode: Mode,
    ) -> Result<((Array2<f64>, Array2<f64>), OffsetCache)> {
        self.check(x)?;
        let (o, standard) = self.standard.forward(x, mode)?;
        let (ot, temporal) = self.temporal.forward(x, mode)?;
        Ok(((o, ot), OffsetCache { standard, temporal }))
    }

    pub fn backward(&mut self, cache: &OffsetCache, d_o: &Array2<f64>, d_ot: &Array2<f64>) -> Result<()> {
        self.standard.backward(&cache.standard, d_o)?;
        self.temporal.backward(&cache.temporal, d_ot)?;
        Ok(())
    }

    /// Replaces both offset fields of every point with the heads' predictions.
    pub fn predict(&self, scan: &SegmentedScan) -> Result<SegmentedScan> {
        let all: Vec<usize> = (0..scan.len()).collect();
        let mut out = scan.clone();
        if all.is_empty() {
            return Ok(out);
        }
        let (o, ot) = self.infer(&offset_input(scan, &all))?;
        for i in all {
            out.offsets[i] = Vec2::new(o[[i, 0]], o[[i, 1]]);
            out.temporal_offsets[i] = Vec2::new(ot[[i, 0]], ot[[i, 1]]);
        }
        Ok(out)
    }
}

impl Module for OffsetHead {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(Tensor<'_>)) {
        self.standard.visit(&format!("{prefix}.standard"), f);
        self.temporal.visit(&format!("{prefix}.temporal"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RadarPoint, RadarScan, Semantic};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zeroed_output_predicts_no_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut head = OffsetHead::new(16, &mut rng);
        head.zero_output();
        let x = Array2::from_shape_fn((5, OFFSET_INPUT_DIM), |(i, j)| (i * j) as f64 - 2.0);
        let (o, ot) = head.infer(&x).unwrap();
        assert!(o.iter().chain(ot.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn input_rows_repeat_coordinates() {
        let scan = SegmentedScan::all_static(RadarScan::new(
            "s",
            0,
            vec![RadarPoint::new(1.0, 2.0, 3.0, 4.0), RadarPoint::new(-1.0, 0.5, 0.0, 9.0)],
        ));
        let x = offset_input(&scan, &[1]);
        assert_eq!(x.row(0).to_vec(), vec![-1.0, 0.5, 9.0, 0.0, -1.0, 0.5]);
    }

    #[test]
    fn heads_do_not_share_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let head = OffsetHead::new(8, &mut rng);
        assert_ne!(head.standard, head.temporal);
    }

    #[test]
    fn predict_overwrites_offsets_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let head = OffsetHead::new(8, &mut rng);
        let scan = SegmentedScan::new(
            RadarScan::new("s", 4, vec![RadarPoint::new(1.0, 1.0, 0.0, 0.0), RadarPoint::new(2.0, 1.0, 0.0, 0.0)]),
            vec![Semantic::Moving, Semantic::Static],
            vec![1, 0],
            vec![Vec2::ZERO; 2],
            vec![Vec2::ZERO; 2],
        )
        .unwrap();
        let out = head.predict(&scan).unwrap();
        assert_eq!(out.scan, scan.scan);
        assert_eq!(out.instance_ids, scan.instance_ids);
        let (o, ot) = head.infer(&offset_input(&scan, &[0, 1])).unwrap();
        assert_eq!(out.offsets[1], Vec2::new(o[[1, 0]], o[[1, 1]]));
        assert_eq!(out.temporal_offsets[0], Vec2::new(ot[[0, 0]], ot[[0, 1]]));
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let head = OffsetHead::new(8, &mut rng);
        assert!(head.infer(&Array2::zeros((3, 4))).is_err());
    }
}
