//! Finite-difference gradient verification for every loss and every
//! model forward pass, at random non-degenerate points.

use piqa_core::autodiff::check::{gradient_check_error, ScalarExpr};
use piqa_core::autodiff::Scalar;
use piqa_core::losses::{
    fidelity_loss, huber_loss, merged_rank_loss, pair_label, patch_loss, ssi_loss, PairLabel,
};
use piqa_core::models::{Model, ModelKind};
use piqa_core::rng;
use rand_chacha::ChaCha8Rng;

const TOLERANCE: f64 = 1e-4;

/// Uniform draw avoiding clustered values, so finite-difference probes
/// never cross a median-reordering or branch boundary.
fn spread_values(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, min_gap: f64) -> Vec<f64> {
    loop {
        let values: Vec<f64> = (0..n).map(|_| rng::uniform(rng, lo, hi)).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let ok = sorted.windows(2).all(|w| w[1] - w[0] >= min_gap);
        if ok {
            return values;
        }
    }
}

struct SsiExpr {
    gt: Vec<Vec<f64>>,
    sizes: Vec<usize>,
}

impl ScalarExpr for SsiExpr {
    fn eval<S: Scalar>(&self, xs: &[S]) -> S {
        let mut pred_groups = Vec::new();
        let mut offset = 0;
        for &size in &self.sizes {
            pred_groups.push(xs[offset..offset + size].to_vec());
            offset += size;
        }
        let gt_groups: Vec<Vec<S>> = self
            .gt
            .iter()
            .map(|g| g.iter().map(|&v| xs[0].lift(v)).collect())
            .collect();
        ssi_loss(&pred_groups, &gt_groups).unwrap()
    }
}

struct MergedExpr {
    gt: Vec<f64>,
}

impl ScalarExpr for MergedExpr {
    fn eval<S: Scalar>(&self, xs: &[S]) -> S {
        let gt: Vec<S> = self.gt.iter().map(|&v| xs[0].lift(v)).collect();
        merged_rank_loss(xs, &gt).unwrap()
    }
}

struct FidelityExpr {
    label: PairLabel,
}

impl ScalarExpr for FidelityExpr {
    fn eval<S: Scalar>(&self, xs: &[S]) -> S {
        fidelity_loss(xs[0], xs[1], self.label)
    }
}

struct PatchExpr {
    gt: f64,
}

impl ScalarExpr for PatchExpr {
    fn eval<S: Scalar>(&self, xs: &[S]) -> S {
        patch_loss(xs, xs[0].lift(self.gt)).unwrap()
    }
}

struct HuberExpr {
    gt: Vec<f64>,
    delta: f64,
}

impl ScalarExpr for HuberExpr {
    fn eval<S: Scalar>(&self, xs: &[S]) -> S {
        let gt: Vec<S> = self.gt.iter().map(|&v| xs[0].lift(v)).collect();
        huber_loss(xs, &gt, self.delta).unwrap()
    }
}

struct ModelExpr<'a> {
    model: &'a Model,
    features: Vec<f64>,
    train_scene: Option<usize>,
}

impl ScalarExpr for ModelExpr<'_> {
    fn eval<S: Scalar>(&self, params: &[S]) -> S {
        self.model
            .forward(params, &self.features, self.train_scene)
            .unwrap()
    }
}

#[test]
fn ssi_loss_gradient() {
    let mut rng = rng::stream(100, "grad/ssi");
    for round in 0..20 {
        let sizes = vec![3 + round % 3, 4];
        let gt: Vec<Vec<f64>> = sizes
            .iter()
            .map(|&n| spread_values(&mut rng, n, -3.0, 3.0, 1e-2))
            .collect();
        let preds: Vec<f64> = sizes
            .iter()
            .flat_map(|&n| spread_values(&mut rng, n, -3.0, 3.0, 1e-2))
            .collect();
        let expr = SsiExpr { gt, sizes };
        let err = gradient_check_error(&expr, &preds);
        assert!(err < TOLERANCE, "round {round}: err {err}");
    }
}

#[test]
fn merged_rank_loss_gradient() {
    let mut rng = rng::stream(101, "grad/merged");
    for round in 0..20 {
        let n = 2 * (2 + round % 4);
        let gt = spread_values(&mut rng, n, -2.0, 2.0, 1e-2);
        let preds = spread_values(&mut rng, n, -2.0, 2.0, 1e-2);
        let expr = MergedExpr { gt };
        let err = gradient_check_error(&expr, &preds);
        assert!(err < TOLERANCE, "round {round}: err {err}");
    }
}

#[test]
fn fidelity_loss_gradient() {
    let mut rng = rng::stream(102, "grad/fidelity");
    for round in 0..20 {
        let x = rng::uniform(&mut rng, -2.0, 2.0);
        let y = rng::uniform(&mut rng, -2.0, 2.0);
        let label = pair_label(rng::uniform(&mut rng, 0.0, 1.0), 0.5);
        let err = gradient_check_error(&FidelityExpr { label }, &[x, y]);
        assert!(err < TOLERANCE, "round {round}: err {err}");
    }
}

#[test]
fn patch_loss_gradient() {
    let mut rng = rng::stream(103, "grad/patch");
    for round in 0..20 {
        let gt = rng::uniform(&mut rng, -2.0, 2.0);
        // Keep all patch predictions away from the absolute-value kink.
        let preds: Vec<f64> = (0..4)
            .map(|_| loop {
                let v = rng::uniform(&mut rng, -3.0, 3.0);
                if (v - gt).abs() > 1e-2 {
                    break v;
                }
            })
            .collect();
        let err = gradient_check_error(&PatchExpr { gt }, &preds);
        assert!(err < TOLERANCE, "round {round}: err {err}");
    }
}

#[test]
fn huber_loss_gradient() {
    let delta = 0.2;
    let mut rng = rng::stream(104, "grad/huber");
    for round in 0..20 {
        let gt: Vec<f64> = (0..5).map(|_| rng::uniform(&mut rng, -2.0, 2.0)).collect();
        // Keep residuals away from the quadratic/linear boundary.
        let preds: Vec<f64> = gt
            .iter()
            .map(|&g| loop {
                let v = rng::uniform(&mut rng, -3.0, 3.0);
                if ((v - g).abs() - delta).abs() > 1e-2 {
                    break v;
                }
            })
            .collect();
        let err = gradient_check_error(&HuberExpr { gt, delta }, &preds);
        assert!(err < TOLERANCE, "round {round}: err {err}");
    }
}

fn scene_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("scene_{i:03}")).collect()
}

fn model_gradient_case(kind: ModelKind, seed: u64, train_scene: Option<usize>) {
    let feature_dim = 6;
    let model = Model::new(kind, feature_dim, scene_names(3), seed).unwrap();
    let mut rng = rng::stream(seed, "grad/model-points");
    for round in 0..4 {
        let features: Vec<f64> = (0..feature_dim)
            .map(|_| rng::uniform(&mut rng, -1.0, 1.0))
            .collect();
        // Random parameter points near the init, not just the init itself.
        let params: Vec<f64> = model
            .params()
            .iter()
            .map(|&p| p + 0.05 * rng::standard_normal(&mut rng))
            .collect();
        let expr = ModelExpr {
            model: &model,
            features,
            train_scene,
        };
        let err = gradient_check_error(&expr, &params);
        assert!(err < TOLERANCE, "{kind:?} round {round}: err {err}");
    }
}

#[test]
fn hyper_forward_gradient() {
    model_gradient_case(ModelKind::Hyper, 201, None);
}

#[test]
fn sem_forward_gradient() {
    model_gradient_case(ModelKind::Sem, 202, None);
}

#[test]
fn fhiqa_forward_gradient() {
    model_gradient_case(ModelKind::Fhiqa, 203, None);
}

#[test]
fn monet_forward_gradient() {
    model_gradient_case(ModelKind::Monet, 204, None);
}

#[test]
fn gated_forward_gradient_both_modes() {
    model_gradient_case(ModelKind::Gated, 205, None);
    model_gradient_case(ModelKind::Gated, 206, Some(1));
}

// The composite check: loss(target_forward(content, hyper_generate(semantic)))
// differentiated through every parameter group at once.
struct CompositeExpr<'a> {
    model: &'a Model,
    features: Vec<Vec<f64>>,
    gt: Vec<f64>,
}

impl ScalarExpr for CompositeExpr<'_> {
    fn eval<S: Scalar>(&self, params: &[S]) -> S {
        let preds: Vec<S> = self
            .features
            .iter()
            .map(|f| self.model.forward(params, f, None).unwrap())
            .collect();
        let gts: Vec<S> = self.gt.iter().map(|&v| params[0].lift(v)).collect();
        ssi_loss(&[preds], &[gts]).unwrap()
    }
}

#[test]
fn hypernetwork_composite_loss_gradient() {
    let feature_dim = 6;
    let model = Model::new(ModelKind::Hyper, feature_dim, vec![], 300).unwrap();
    let mut rng = rng::stream(300, "grad/composite");
    let features: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..feature_dim).map(|_| rng::uniform(&mut rng, -1.0, 1.0)).collect())
        .collect();
    let gt = spread_values(&mut rng, 4, -2.0, 2.0, 1e-2);
    let expr = CompositeExpr {
        model: &model,
        features,
        gt,
    };
    let params = model.params().to_vec();
    let err = gradient_check_error(&expr, &params);
    assert!(err < TOLERANCE, "err {err}");
}
