mod common;

use common::{central_difference, moons_records, rel_err};
use intervalweib::laplace::{ggn_precision, Curvature, LaplacePosterior, LaplacePredictor, PredictiveConfig, PredictiveMode};
use intervalweib::nn::{forward, log_posterior, map_train, MlpSpec, ParamVector, TrainConfig};
use nalgebra::DMatrix;

const PRECISION: f64 = 1.0;

fn fitted_linear() -> (MlpSpec, ParamVector, intervalweib::dataset::IntervalDataset) {
    let ds = moons_records(200, 12);
    let spec = MlpSpec::linear(2);
    let cfg = TrainConfig {
        learning_rate: 0.05,
        batch_size: 200,
        epochs: 600,
        precision: PRECISION,
        ..Default::default()
    };
    let map = map_train(&spec, &ds, &cfg).unwrap().params;
    (spec, map, ds)
}

#[test]
fn ggn_equals_hessian_for_linear_predictors() {
    let (spec, map, ds) = fitted_linear();
    let phi = map.as_slice();
    let p = spec.n_params();
    let ggn = ggn_precision(&spec, phi, &ds, PRECISION, Curvature::Exact);
    let mut worst: f64 = 0.0;
    for j in 0..p {
        let mut grad_j = |q: &[f64]| -log_posterior(&spec, q, &ds, PRECISION).1[j];
        for i in 0..p {
            let fd = central_difference(&mut grad_j, phi, i, 1e-4);
            worst = worst.max(rel_err(ggn[(i, j)], fd));
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
    let post = LaplacePosterior::fit(&spec, &map, &ds, PRECISION).unwrap();
    assert_eq!(post.curvature, Curvature::Exact);
    let roundtrip = &post.covariance * &ggn;
    assert!((roundtrip - DMatrix::identity(p, p)).amax() < 1e-8);
}

fn predictor(post: &LaplacePosterior, mode: PredictiveMode, samples: usize) -> LaplacePredictor {
    let cfg = PredictiveConfig { samples, mode, seed: 77 };
    LaplacePredictor::new(post.clone(), &cfg).unwrap()
}

#[test]
fn glm_and_bnn_agree_per_sample_on_linear_specs() {
    let (spec, map, ds) = fitted_linear();
    let post = LaplacePosterior::fit(&spec, &map, &ds, PRECISION).unwrap();
    let glm = predictor(&post, PredictiveMode::Glm, 200);
    let bnn = predictor(&post, PredictiveMode::Bnn, 200);
    for r in ds.records().iter().step_by(7) {
        for (a, b) in glm.output_draws(&r.x).iter().zip(bnn.output_draws(&r.x)) {
            assert!((a.log_rate - b.log_rate).abs() < 1e-12);
            assert!((a.log_shape - b.log_shape).abs() < 1e-12);
        }
        let (pa, pb) = (
            glm.failure_probability(&r.x, r.t_agelt, r.t_age),
            bnn.failure_probability(&r.x, r.t_agelt, r.t_age),
        );
        for (a, b) in pa.draws.iter().zip(&pb.draws) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_covariance_collapses_to_map() {
    for spec in [MlpSpec::linear(2), MlpSpec::one_hidden(2, 4).unwrap()] {
        let map = ParamVector::init(&spec, 5);
        let p = spec.n_params();
        let post = LaplacePosterior::from_covariance(spec, map.clone(), DMatrix::zeros(p, p), PRECISION).unwrap();
        let x = [0.3, -1.1];
        let at_map = forward(&spec, map.as_slice(), &x);
        let map_mode = predictor(&post, PredictiveMode::Map, 1).failure_probability(&x, 1.0, 3.0).mean;
        for mode in [PredictiveMode::Glm, PredictiveMode::Bnn] {
            let pred = predictor(&post, mode, 25);
            for o in pred.output_draws(&x) {
                assert_eq!(o, at_map);
            }
            assert_eq!(pred.failure_probability(&x, 1.0, 3.0).mean, map_mode);
        }
    }
}
