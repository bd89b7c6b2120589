//! Finite-difference verification of every hand-written backward pass.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::model::Vec2;
use crate::nets::{
    AttentiveInstanceNet, InstanceBatch, Mlp, Neighborhood, OffsetHead, PairSample, SimilarityHead,
    SimilarityModel, TransformerBlock,
};
use crate::nn::{
    bce_loss, flat_grads, flat_params, gradcheck, offset_l1_loss_masked, set_flat_params, zero_grad,
    BatchNorm1d, Dense, GradCheckReport, Mode, Module,
};

/// Finite-difference step used by the suite.
pub const FD_STEP: f64 = 1e-4;

/// Smallest admissible |ReLU input| at a sampling point. Perturbing one
/// coordinate by the stencil width must not move any ReLU across its kink,
/// where a difference quotient averages two slopes.
pub const KINK_MARGIN: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCase {
    pub name: &'static str,
    pub report: GradCheckReport,
}

fn normal(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.sample(StandardNormal))
}

fn points(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Vec<Vec2> {
    (0..n)
        .map(|_| Vec2::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread)))
        .collect()
}

/// Moves every BN shift off zero. With `beta = 0` the self-relative rows of
/// a symmetric neighbourhood normalize to exactly zero and sit on the ReLU
/// kink, where central differences do not match the subgradient.
fn jitter_shifts(module: &mut dyn Module, rng: &mut ChaCha8Rng) {
    module.visit("", &mut |t| {
        if t.name.ends_with(".beta") {
            for v in t.value.iter_mut() {
                let d: f64 = rng.random_range(0.1..0.5);
                *v += if rng.random_bool(0.5) { d } else { -d };
            }
        }
    });
}

/// Distance of the closest ReLU input to zero for each `(mlp, input, mode)`.
fn kink_distance(mlps: &[(&Mlp, &Array2<f64>, Mode)]) -> Result<f64> {
    let mut min = f64::INFINITY;
    for (mlp, x, mode) in mlps {
        min = mlp.preactivations(x, *mode)?.iter().fold(min, |m, v| m.min(v.abs()));
    }
    Ok(min)
}

/// `c_a − c_b` for every pair, in the layout the similarity head uses.
fn center_pairs(ca: &[Vec2], cb: &[Vec2]) -> Array2<f64> {
    let mut r = Array2::zeros((ca.len() * cb.len(), 2));
    for (i, a) in ca.iter().enumerate() {
        for (j, b) in cb.iter().enumerate() {
            r[[i * cb.len() + j, 0]] = a.x - b.x;
            r[[i * cb.len() + j, 1]] = a.y - b.y;
        }
    }
    r
}

fn weighted(y: &Array2<f64>, g: &Array2<f64>) -> f64 {
    (y * g).sum()
}

/// Checks the gradient of `loss` with respect to the trainable parameters of
/// `module` followed by the entries of `input`. `loss` runs forward (and, if
/// asked, backward into the module) and returns the loss plus `dInput`.
fn check_module<M, F>(module: &mut M, input: &Array2<f64>, mut loss: F) -> Result<GradCheckReport>
where
    M: Module,
    F: FnMut(&mut M, &Array2<f64>, bool) -> Result<(f64, Array2<f64>)>,
{
    zero_grad(module);
    let (_, dx) = loss(module, input, true)?;
    let mut params = flat_params(module);
    let n_params = params.len();
    let mut analytic = flat_grads(module);
    params.extend(input.iter());
    analytic.extend(dx.iter());
    let mut x = input.clone();
    let mut failed = None;
    let report = gradcheck(&params, &analytic, FD_STEP, |p| {
        set_flat_params(module, &p[..n_params]);
        x.iter_mut().zip(&p[n_params..]).for_each(|(d, s)| *d = *s);
        match loss(module, &x, false) {
            Ok((l, _)) => l,
            Err(e) => {
                failed = Some(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = failed {
        return Err(e);
    }
    report
}

fn dense_case(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let mut layer = Dense::new(5, 3, rng);
    let x = normal(rng, (6, 5));
    let g = normal(rng, (6, 3));
    check_module(&mut layer, &x, |m, x, back| {
        let y = m.forward(x)?;
        let dx = if back { m.backward(x, &g)? } else { Array2::zeros(x.dim()) };
        Ok((weighted(&y, &g), dx))
    })
}

fn batchnorm_case(rng: &mut ChaCha8Rng, mode: Mode) -> Result<GradCheckReport> {
    let mut bn = BatchNorm1d::new(4);
    bn.gamma = Array1::from_shape_fn(4, |_| rng.random_range(0.5..1.5));
    bn.beta = Array1::from_shape_fn(4, |_| rng.random_range(-0.5..0.5));
    bn.running_mean = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
    bn.running_var = Array1::from_shape_fn(4, |_| rng.random_range(0.5..2.0));
    let x = normal(rng, (7, 4));
    let g = normal(rng, (7, 4));
    check_module(&mut bn, &x, |m, x, back| {
        let (y, cache) = m.forward(x, mode)?;
        let dx = if back { m.backward(&cache, &g)? } else { Array2::zeros(x.dim()) };
        Ok((weighted(&y, &g), dx))
    })
}

fn block_case(rng: &mut ChaCha8Rng, mode: Mode) -> Result<GradCheckReport> {
    let (mut block, nb) = loop {
        let mut block = TransformerBlock::new(3, 4, rng);
        jitter_shifts(&mut block, rng);
        let pts = points(rng, 7, 3.0);
        let nb = Neighborhood::within_groups(&pts, &[0..5, 5..7], 4);
        if kink_distance(&[(&block.position, &nb.relative, mode)])? >= KINK_MARGIN {
            break (block, nb);
        }
    };
    let x = normal(rng, (7, 3));
    let g = normal(rng, (7, 4));
    check_module(&mut block, &x, |m, x, back| {
        let (y, cache) = m.forward(&nb, x, mode)?;
        let dx = if back { m.backward(&nb, &cache, &g)? } else { Array2::zeros(x.dim()) };
        Ok((weighted(&y, &g), dx))
    })
}

fn small_batch(rng: &mut ChaCha8Rng, sizes: &[usize]) -> InstanceBatch {
    let total = sizes.iter().sum();
    let mut groups = Vec::new();
    let mut start = 0;
    for &s in sizes {
        groups.push(start..start + s);
        start += s;
    }
    let pts = points(rng, total, 4.0);
    let mut features = normal(rng, (total, 4));
    for (i, p) in pts.iter().enumerate() {
        features[[i, 0]] = p.x;
        features[[i, 1]] = p.y;
    }
    InstanceBatch {
        points: pts,
        features,
        groups,
    }
}

fn instance_kink_distance(net: &AttentiveInstanceNet, batch: &InstanceBatch) -> Result<f64> {
    let nb = Neighborhood::within_groups(&batch.points, &batch.groups, net.n_local);
    kink_distance(&[
        (&net.block1.position, &nb.relative, Mode::Train),
        (&net.block2.position, &nb.relative, Mode::Train),
    ])
}

fn instance_case(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let (mut net, batch) = loop {
        let mut net = AttentiveInstanceNet::new(4, 5, 6, 3, rng);
        net.input_scale = Array1::ones(4);
        jitter_shifts(&mut net, rng);
        let batch = small_batch(rng, &[4, 1, 3]);
        if instance_kink_distance(&net, &batch)? >= KINK_MARGIN {
            break (net, batch);
        }
    };
    let g = normal(rng, (3, 6));
    let empty = Array2::zeros((0, 0));
    check_module(&mut net, &empty, |m, _, back| {
        let (y, cache) = m.forward(&batch, Mode::Train)?;
        if back {
            m.backward(&cache, &g)?;
        }
        Ok((weighted(&y, &g), Array2::zeros((0, 0))))
    })
}

fn similarity_case(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let (mut head, ca, cb) = loop {
        let head = SimilarityHead::new(5, rng);
        let ca = points(rng, 3, 5.0);
        let cb = points(rng, 4, 5.0);
        if kink_distance(&[(&head.center, &center_pairs(&ca, &cb), Mode::Eval)])? >= KINK_MARGIN {
            break (head, ca, cb);
        }
    };
    let fa = normal(rng, (3, 5));
    let fb = normal(rng, (4, 5));
    let g = normal(rng, (3, 4));
    // both feature matrices stacked so one input covers both gradients
    let stacked = ndarray::concatenate(ndarray::Axis(0), &[fa.view(), fb.view()]).expect("equal widths");
    check_module(&mut head, &stacked, |m, x, back| {
        let (a, b) = (x.slice(ndarray::s![..3, ..]).to_owned(), x.slice(ndarray::s![3.., ..]).to_owned());
        let (s, cache) = m.forward(&a, &ca, &b, &cb)?;
        let dx = if back {
            let (da, db) = m.backward(&cache, &g)?;
            ndarray::concatenate(ndarray::Axis(0), &[da.view(), db.view()]).expect("equal widths")
        } else {
            Array2::zeros(x.dim())
        };
        Ok((weighted(&s, &g), dx))
    })
}

fn bce_case(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let pred = Array2::from_shape_fn((4, 5), |_| rng.random_range(0.05..0.95));
    let target = Array2::from_shape_fn((4, 5), |_| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
    let mask = Array2::from_shape_fn((4, 5), |(i, _)| i != 2);
    let (_, grad) = bce_loss(&pred, &target, &mask)?;
    let params: Vec<f64> = pred.iter().copied().collect();
    let analytic: Vec<f64> = grad.iter().copied().collect();
    gradcheck(&params, &analytic, FD_STEP, |p| {
        let x = Array2::from_shape_vec((4, 5), p.to_vec()).expect("shape");
        bce_loss(&x, &target, &mask).map_or(f64::NAN, |(l, _)| l)
    })
}

fn offset_loss_case(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let pts = normal(rng, (6, 2));
    let centers = normal(rng, (6, 2));
    // keep every residual well away from the |·| kink
    let o = Array2::from_shape_fn((6, 2), |(i, j)| {
        let r = centers[[i, j]] - pts[[i, j]];
        let delta: f64 = rng.random_range(0.1..1.0);
        r + if rng.random_bool(0.5) { delta } else { -delta }
    });
    let mask = vec![true, true, false, true, true, true];
    let (_, grad) = offset_l1_loss_masked(&o, &centers, &pts, &mask)?;
    let params: Vec<f64> = o.iter().copied().collect();
    let analytic: Vec<f64> = grad.iter().copied().collect();
    gradcheck(&params, &analytic, FD_STEP, |p| {
        let x = Array2::from_shape_vec((6, 2), p.to_vec()).expect("shape");
        offset_l1_loss_masked(&x, &centers, &pts, &mask).map_or(f64::NAN, |(l, _)| l)
    })
}

fn offset_head_case(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let (mut head, x) = loop {
        let mut head = OffsetHead::new(5, rng);
        jitter_shifts(&mut head, rng);
        let x = normal(rng, (8, crate::nets::OFFSET_INPUT_DIM));
        if kink_distance(&[(&head.standard, &x, Mode::Train), (&head.temporal, &x, Mode::Train)])? >= KINK_MARGIN {
            break (head, x);
        }
    };
    let g1 = normal(rng, (8, 2));
    let g2 = normal(rng, (8, 2));
    let empty = Array2::zeros((0, 0));
    check_module(&mut head, &empty, |m, _, back| {
        let ((o, ot), cache) = m.forward(&x, Mode::Train)?;
        if back {
            m.backward(&cache, &g1, &g2)?;
        }
        Ok((weighted(&o, &g1) + weighted(&ot, &g2), Array2::zeros((0, 0))))
    })
}

/// A `PairSample` with random geometry and a few true correspondences.
pub fn random_pair_sample(rng: &mut ChaCha8Rng) -> PairSample {
    let first = small_batch(rng, &[3, 2, 1]);
    let second = small_batch(rng, &[2, 3]);
    let centers = |b: &InstanceBatch| -> Vec<Vec2> {
        b.groups
            .iter()
            .map(|g| g.clone().fold(Vec2::ZERO, |acc, i| acc + b.points[i]) / g.len() as f64)
            .collect()
    };
    let mut target = Array2::zeros((3, 2));
    target[[0, 1]] = 1.0;
    target[[1, 0]] = 1.0;
    PairSample {
        first_centers: centers(&first),
        second_centers: centers(&second),
        first,
        second,
        target,
    }
}

fn similarity_loss_case(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let (mut instance, mut similarity, sample) = loop {
        let mut instance = AttentiveInstanceNet::new(4, 4, 5, 3, rng);
        instance.input_scale = Array1::ones(4);
        jitter_shifts(&mut instance, rng);
        let similarity = SimilarityHead::new(5, rng);
        let sample = random_pair_sample(rng);
        let margin = instance_kink_distance(&instance, &sample.first)?
            .min(instance_kink_distance(&instance, &sample.second)?)
            .min(kink_distance(&[(
                &similarity.center,
                &center_pairs(&sample.first_centers, &sample.second_centers),
                Mode::Eval,
            )])?);
        if margin >= KINK_MARGIN {
            break (instance, similarity, sample);
        }
    };
    let mut model = SimilarityModel {
        instance: &mut instance,
        similarity: &mut similarity,
    };
    let empty = Array2::zeros((0, 0));
    check_module(&mut model, &empty, |m, _, back| {
        // gradients from the probing calls are never read
        let _ = back;
        let loss = m.accumulate(&sample, 1.0)?;
        Ok((loss, Array2::zeros((0, 0))))
    })
}

/// Runs every case for one seed.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradientCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |name, r: Result<GradCheckReport>| -> Result<()> {
        out.push(GradientCase { name, report: r? });
        Ok(())
    };
    push("dense", dense_case(&mut rng))?;
    push("batchnorm_eval", batchnorm_case(&mut rng, Mode::Eval))?;
    push("batchnorm_train", batchnorm_case(&mut rng, Mode::Train))?;
    push("transformer_block_eval", block_case(&mut rng, Mode::Eval))?;
    push("transformer_block_train", block_case(&mut rng, Mode::Train))?;
    push("instance_aggregation", instance_case(&mut rng))?;
    push("similarity_head", similarity_case(&mut rng))?;
    push("bce_loss", bce_case(&mut rng))?;
    push("offset_l1_loss", offset_loss_case(&mut rng))?;
    push("offset_head", offset_head_case(&mut rng))?;
    push("similarity_bce_full", similarity_loss_case(&mut rng))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_for_a_few_seeds() {
        for seed in 0..3 {
            for case in gradient_suite(seed).unwrap() {
                assert!(
                    case.report.max_rel_error <= 1e-4,
                    "seed {seed} {}: {:?}",
                    case.name,
                    case.report
                );
                assert!(case.report.checked > 0, "{}", case.name);
            }
        }
    }
}

