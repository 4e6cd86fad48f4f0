mod common;

use common::gradcheck::{self, ALL, TOL};
use iris_core::tensor::ops::{conv2d_forward, Padding};
use iris_core::tensor::Tensor;
use proptest::prelude::*;

#[test]
fn every_layer_kind_matches_finite_differences() {
    for kind in ALL {
        let report = gradcheck::check(kind, 0xC0FFEE);
        assert!(report.checked >= 100, "{kind:?}: only {} values checked", report.checked);
        assert!(report.max_rel_err <= TOL, "{kind:?}: max relative error {:e}", report.max_rel_err);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn convolution_is_linear(seed in any::<u64>(), a in -2.0f32..2.0, b in -2.0f32..2.0) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::<f32>::random_uniform([1, 2, 7, 6], -1.0, 1.0, &mut rng);
        let y = Tensor::<f32>::random_uniform([1, 2, 7, 6], -1.0, 1.0, &mut rng);
        let w = Tensor::<f32>::random_uniform([3, 2, 3, 3], -1.0, 1.0, &mut rng);
        let lhs = conv2d_forward(&x.lin_comb(a, &y, b).unwrap(), &w, None, Padding::Same).unwrap();
        let cx = conv2d_forward(&x, &w, None, Padding::Same).unwrap();
        let cy = conv2d_forward(&y, &w, None, Padding::Same).unwrap();
        let rhs = cx.lin_comb(a, &cy, b).unwrap();
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            let scale = l.abs().max(r.abs()).max(1.0);
            prop_assert!((l - r).abs() / scale <= 1e-5, "{} vs {}", l, r);
        }
    }
}
