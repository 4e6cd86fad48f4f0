//! Invariant properties over random inputs.

use iris_core::calibration::{optimal_interval, DistanceInterval, IntervalOutcome};
use iris_core::codec::BitCode;
use iris_core::data::{decode_pgm, EyeSide, Manifest, ManifestRow};
use iris_core::eval::{d_prime, eer, ScoreSet};
use iris_core::localize::lms_circle_fit;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_code(rng: &mut ChaCha8Rng, planes: usize, rows: usize, cols: usize, mask_p: f64) -> BitCode {
    let mut c = BitCode::new(planes, rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            c.set_mask_bit(i, j, rng.random_bool(mask_p));
            for p in 0..planes {
                c.set_code_bit(p, i, j, rng.random_bool(0.5));
            }
        }
    }
    c
}

/// Bit-by-bit masked HD with `b` shifted by `k` columns, or `None` when the
/// joint mask is below 1 % of the grid.
fn unpacked_hd(a: &BitCode, b: &BitCode, k: i64) -> Option<f64> {
    let (planes, rows, cols) = a.dims();
    let (mut diff, mut valid) = (0usize, 0usize);
    for i in 0..rows {
        for j in 0..cols {
            let src = (j as i64 - k).rem_euclid(cols as i64) as usize;
            if !(a.mask_bit(i, j) && b.mask_bit(i, src)) {
                continue;
            }
            valid += 1;
            diff += (0..planes).filter(|&p| a.code_bit(p, i, j) != b.code_bit(p, i, src)).count();
        }
    }
    (valid >= (rows * cols).div_ceil(100)).then(|| diff as f64 / (planes * valid) as f64)
}

fn unpacked_min_hd(a: &BitCode, b: &BitCode, max_shift: usize) -> Option<f64> {
    (-(max_shift as i64)..=max_shift as i64).filter_map(|k| unpacked_hd(a, b, k)).reduce(f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hd_matches_unpacked_oracle(seed in any::<u64>(), cols in prop::sample::select(vec![64usize, 70, 128, 200]), shift in 0usize..5, mask_p in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_code(&mut rng, 3, 4, cols, mask_p);
        let b = random_code(&mut rng, 3, 4, cols, mask_p);
        match (a.hamming_distance(&b, shift), unpacked_min_hd(&a, &b, shift)) {
            (Ok(hd), Some(oracle)) => prop_assert_eq!(hd, oracle),
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "packed {:?} vs oracle {:?}", got, want),
        }
    }

    #[test]
    fn hd_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_code(&mut rng, 7, 8, 128, 0.8);
        let b = random_code(&mut rng, 7, 8, 128, 0.8);
        let ab = a.hamming_distance(&b, 0).unwrap();
        prop_assert_eq!(ab, b.hamming_distance(&a, 0).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(a.hamming_distance(&a, 0).unwrap(), 0.0);
    }

    #[test]
    fn rotation_is_recovered_by_shift_search(seed in any::<u64>(), k in -6i64..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_code(&mut rng, 7, 4, 128, 1.0);
        let r = a.rotate(k);
        prop_assert_eq!(a.hamming_distance(&r, k.unsigned_abs() as usize).unwrap(), 0.0);
        prop_assert_eq!(r.rotate(-k), a);
    }

    #[test]
    fn shrinking_the_mask_only_drops_bits(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_code(&mut rng, 2, 8, 64, 1.0);
        let b = random_code(&mut rng, 2, 8, 64, 1.0);
        let mut shrunk = a.clone();
        for _ in 0..100 {
            shrunk.set_mask_bit(rng.random_range(0..8), rng.random_range(0..64), false);
        }
        let (d_full, v_full) = a.masked_disagreement(&b).unwrap();
        let (d, v) = shrunk.masked_disagreement(&b).unwrap();
        prop_assert!(d <= d_full && v <= v_full);
        prop_assert_eq!(shrunk.hamming_distance(&b, 0).ok(), unpacked_hd(&shrunk, &b, 0));
    }

    #[test]
    fn d_prime_invariant_under_affine_maps_and_swap(
        mated in prop::collection::vec(0.0f64..1.0, 2..30),
        non in prop::collection::vec(0.0f64..1.0, 2..30),
        scale in 0.1f64..10.0,
        offset in -1.0f64..1.0,
    ) {
        let base = d_prime(&ScoreSet::new(mated.clone(), non.clone())).unwrap().value();
        let map = |v: &Vec<f64>| v.iter().map(|x| x * scale + offset).collect::<Vec<_>>();
        let mapped = d_prime(&ScoreSet::new(map(&mated), map(&non))).unwrap().value();
        let swapped = d_prime(&ScoreSet::new(non, mated)).unwrap().value();
        if base.is_finite() {
            prop_assert!((mapped - base).abs() <= 1e-6 * base.max(1.0));
            prop_assert!((swapped - base).abs() <= 1e-12 * base.max(1.0));
        }
    }

    #[test]
    fn eer_is_a_rate_and_order_free(
        mut mated in prop::collection::vec(0u8..20, 1..25),
        non in prop::collection::vec(0u8..20, 1..25),
    ) {
        let f = |v: &[u8]| v.iter().map(|&x| x as f64 / 20.0).collect::<Vec<_>>();
        let e = eer(&ScoreSet::new(f(&mated), f(&non))).unwrap().eer;
        prop_assert!((0.0..=1.0).contains(&e));
        mated.reverse();
        prop_assert_eq!(eer(&ScoreSet::new(f(&mated), f(&non))).unwrap().eer, e);
    }

    #[test]
    fn lms_fit_is_translation_and_scale_equivariant(
        cx in -50.0f64..50.0, cy in -50.0f64..50.0, r in 5.0f64..80.0,
        dx in -100.0f64..100.0, dy in -100.0f64..100.0, s in 0.25f64..4.0, seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|_| {
                let t = rng.random_range(0.0..std::f64::consts::TAU);
                let rr = r + rng.random_range(-1.0..1.0);
                (cx + rr * t.cos(), cy + rr * t.sin())
            })
            .collect();
        let base = lms_circle_fit(&pts).unwrap();
        let moved: Vec<_> = pts.iter().map(|&(x, y)| (s * x + dx, s * y + dy)).collect();
        let fit = lms_circle_fit(&moved).unwrap();
        let tol = 1e-6 * (1.0 + s * (r + cx.abs() + cy.abs()) + dx.abs() + dy.abs());
        prop_assert!((fit.x - (s * base.x + dx)).abs() < tol);
        prop_assert!((fit.y - (s * base.y + dy)).abs() < tol);
        prop_assert!((fit.r - s * base.r).abs() < tol);
    }

    #[test]
    fn optimal_interval_ignores_criterion_order(
        bounds in prop::collection::vec((prop::option::of(0.0f64..100.0), prop::option::of(0.0f64..100.0)), 1..6),
        rot in 0usize..6,
    ) {
        let criteria: Vec<DistanceInterval> = bounds
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let lo = a.unwrap_or(f64::NEG_INFINITY);
                let hi = b.unwrap_or(f64::INFINITY);
                DistanceInterval::new(lo.min(hi), lo.max(hi), format!("c{i}")).unwrap()
            })
            .collect();
        let mut rotated = criteria.clone();
        rotated.rotate_left(rot % criteria.len());
        let bounds_of = |o: IntervalOutcome| match o {
            IntervalOutcome::Feasible(i) => Some((i.lower_cm, i.upper_cm)),
            IntervalOutcome::Infeasible => None,
        };
        let a = bounds_of(optimal_interval(&criteria).unwrap());
        prop_assert_eq!(a, bounds_of(optimal_interval(&rotated).unwrap()));
        if let Some((lo, hi)) = a {
            for c in &criteria {
                prop_assert!(c.lower_cm <= lo && hi <= c.upper_cm);
            }
        }
    }

    #[test]
    fn splits_are_person_disjoint_and_complete(subjects in 1usize..40, per in 1usize..5, seed in any::<u64>()) {
        let rows = (0..subjects)
            .flat_map(|s| (0..per).map(move |k| ManifestRow {
                path: format!("s{s}_{k}.pgm"),
                subject_id: format!("s{s}"),
                eye_side: EyeSide::Right,
                distance_cm: None,
                session: None,
            }))
            .collect();
        let m = Manifest::from_rows(rows, ".").unwrap();
        let split = m.split(seed, (0.6, 0.2, 0.2)).unwrap();
        let parts = [&split.train, &split.val, &split.test];
        prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), m.len());
        for (i, a) in parts.iter().enumerate() {
            for b in &parts[i + 1..] {
                let sa = a.subjects();
                prop_assert!(b.subjects().iter().all(|s| !sa.contains(s)));
            }
        }
        prop_assert_eq!(m.split(seed, (0.6, 0.2, 0.2)).unwrap(), split);
    }
}

#[test]
fn mutated_pgm_headers_fail_cleanly() {
    let mut good = b"P5\n# comment\n12 8\n255\n".to_vec();
    good.extend((0..96).map(|i| i as u8));
    assert!(decode_pgm(&good).is_ok());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut errors = 0;
    for _ in 0..1000 {
        let mut bytes = good.clone();
        for _ in 0..rng.random_range(1..4) {
            let header_len = bytes.len().min(20);
            if header_len == 0 {
                break;
            }
            match rng.random_range(0..3) {
                0 => {
                    let i = rng.random_range(0..header_len);
                    bytes[i] = rng.random();
                }
                1 => {
                    let i = rng.random_range(0..header_len);
                    bytes.remove(i);
                }
                _ => {
                    let n = rng.random_range(0..header_len);
                    bytes.truncate(n);
                }
            }
        }
        match std::panic::catch_unwind(|| decode_pgm(&bytes)) {
            Ok(Ok(img)) => assert_eq!(img.as_raw().len(), img.width() * img.height()),
            Ok(Err(e)) => {
                assert!(!e.to_string().is_empty());
                errors += 1;
            }
            Err(_) => panic!("decoder panicked on {:?}", String::from_utf8_lossy(&bytes[..bytes.len().min(24)])),
        }
    }
    assert!(errors > 500, "only {errors} of 1000 mutations were rejected");
}
