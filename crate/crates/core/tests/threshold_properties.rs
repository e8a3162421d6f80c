//! Algebraic properties of the thresholding nonlinearities.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use walshnet_core::threshold::{smooth_threshold, soft_threshold, weighted_smooth_threshold};
use walshnet_core::{
    apply_threshold_tensor, Broadcast, Dims4, Factor, LayerConfig, Tensor4, ThresholdParams, WhtLayer,
};

proptest! {
    #[test]
    fn smooth_threshold_is_odd(x in -50.0f64..50.0, t in 0.0f64..10.0) {
        prop_assert_eq!(smooth_threshold(-x, t), -smooth_threshold(x, t));
    }

    #[test]
    fn shrinkage_bound(x in -50.0f64..50.0, t in 0.0f64..10.0) {
        let smooth = smooth_threshold(x, t).abs();
        let soft = soft_threshold(x, t).abs();
        prop_assert!(smooth <= soft);
        prop_assert!(soft <= x.abs());
    }

    #[test]
    fn dead_zone_is_exactly_zero(x in -5.0f64..5.0, v in 0.0f64..3.0, extra in 0.0f64..2.0) {
        let t = (v * x).abs() + extra;
        prop_assert_eq!(weighted_smooth_threshold(x, t, v).unwrap(), 0.0);
    }

    #[test]
    fn unit_weight_reduces_to_unweighted(x in -10.0f64..10.0, t in 0.0f64..5.0) {
        prop_assert_eq!(weighted_smooth_threshold(x, t, 1.0).unwrap(), smooth_threshold(x, t));
    }

    #[test]
    fn clamping_restores_nonnegative_weights(ws in prop::collection::vec(-3.0f64..3.0, 1..32)) {
        let mut p = ThresholdParams::<f64>::zeros(ws.len(), &[0], true);
        p.weights = Some(ws);
        p.enforce_constraints();
        prop_assert!(p.weights.unwrap().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn layer_results_do_not_depend_on_thread_count(seed in any::<u64>(), threads in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = WhtLayer::<f64>::new(LayerConfig::bwht_expand(6, 4, Factor::from_integer(2)), &mut rng).unwrap();
        let d = Dims4::new(7, 2, 3, 6);
        let x = Tensor4::from_fn(d, |b, i, j, c| ((b * 31 + i * 7 + j * 3 + c) as f64 * 0.37).sin());
        let g = Tensor4::filled(Dims4::new(7, 2, 3, 12), 0.5);
        let run = |n: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| {
                let (y, tape) = layer.forward(&x).unwrap();
                let (gx, gp) = layer.backward(&tape, &g).unwrap();
                (y, gx, gp)
            })
        };
        prop_assert_eq!(run(1), run(threads));
    }
}

#[test]
fn tensor_threshold_passes_dc_through() {
    let d = Dims4::new(1, 2, 2, 1);
    let x = Tensor4::<f64>::from_f64(d, &[3.0, -0.2, 0.9, -1.4]).unwrap();
    let p = ThresholdParams::zeros(4, &[0], false).with_uniform_threshold(0.5);
    let (y, _) = apply_threshold_tensor(&x, &p, Broadcast::SpatialAxes).unwrap();
    assert_eq!(y.data()[0], 3.0);
    assert_eq!(y.data()[1], 0.0);
    assert_eq!(y.data()[2], smooth_threshold(0.9, 0.5));
    assert_eq!(y.data()[3], smooth_threshold(-1.4, 0.5));
}
