use gesturebot_core::eigengesture::*;
use gesturebot_core::raster::BinFrame;
use gesturebot_core::{EigenModel32, EigenModel64};
use gesturebot_oracles as oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn templates(rng: &mut impl Rng, n: usize, w: usize, h: usize) -> Vec<GestureTemplate> {
    (0..n)
        .map(|i| GestureTemplate::new(i as u8, oracle::random_bin(rng, w, h, 0.5), format!("g{i}")).unwrap())
        .collect()
}

fn flip(rng: &mut impl Rng, b: &BinFrame, fraction: f64) -> BinFrame {
    let mut out = b.clone();
    let n = (fraction * (b.width() * b.height()) as f64).floor() as usize;
    for idx in rand::seq::index::sample(rng, b.width() * b.height(), n) {
        let (r, c) = (idx / b.width(), idx % b.width());
        out.set(r, c, !b.get(r, c));
    }
    out
}

fn images(ts: &[GestureTemplate]) -> Vec<BinFrame> {
    ts.iter().map(|t| t.image.clone()).collect()
}

fn sq_error(model: &EigenModel64, b: &BinFrame) -> f64 {
    let rec = model.reconstruct(b).unwrap();
    b.bits().iter().zip(&rec).map(|(&x, r)| (x as u8 as f64 - r).powi(2)).sum()
}

fn assert_matches_power_iteration(ts: &[GestureTemplate]) {
    let model = EigenModel64::train(ts, ts.len()).unwrap();
    let cov = oracle::covariance(&images(ts));
    let pairs = oracle::power_iteration(&cov, model.k(), 20_000);
    assert_eq!(model.k(), ts.len() - 1);
    for (i, (lambda, v)) in pairs.iter().enumerate() {
        let rel = (model.eigenvalues()[i] - lambda).abs() / lambda;
        assert!(rel < 1e-6, "eigenvalue {i}: {} vs {lambda}", model.eigenvalues()[i]);
        let align = oracle::dot(&model.components()[i], v).abs();
        assert!(align > 1.0 - 1e-6, "component {i} alignment {align}");
    }
}

#[test]
fn two_templates_single_component() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ts = templates(&mut rng, 2, 6, 5);
    assert_matches_power_iteration(&ts);
    // one direction, along the difference of the two images
    let model = EigenModel64::train(&ts, 4).unwrap();
    let h = oracle::hamming(&ts[0].image, &ts[1].image) as f64;
    let diff: Vec<f64> = ts[0]
        .image
        .bits()
        .iter()
        .zip(ts[1].image.bits())
        .map(|(&a, &b)| (a as u8 as f64 - b as u8 as f64) / h.sqrt())
        .collect();
    assert!((oracle::dot(&model.components()[0], &diff).abs() - 1.0).abs() < 1e-9);
    assert!((model.eigenvalues()[0] - h / 2.0).abs() < 1e-9);
}

#[test]
fn several_templates_match_power_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    assert_matches_power_iteration(&templates(&mut rng, 4, 6, 5));
}

#[test]
fn full_rank_distances_are_hamming() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ts = templates(&mut rng, 10, 60, 80);
    let model = EigenModel64::train(&ts, 64).unwrap();
    assert_eq!(model.k(), 9);
    assert!(model.orthonormality_residual() <= 1e-8);
    for (i, a) in ts.iter().enumerate() {
        for (j, b) in ts.iter().enumerate() {
            let d = {
                let (pa, pb) = (model.project(&a.image).unwrap(), model.project(&b.image).unwrap());
                pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
            };
            let h = (oracle::hamming(&a.image, &b.image) as f64).sqrt();
            assert!((d - h).abs() <= 1e-6, "{i},{j}: {d} vs {h}");
        }
        let c = model.classify(&a.image, 0).unwrap();
        assert_eq!(c.label, Some(a.label));
        assert!(c.distance <= 1e-6);
    }
    let min_h = (0..10)
        .flat_map(|i| (i + 1..10).map(move |j| (i, j)))
        .map(|(i, j)| oracle::hamming(&ts[i].image, &ts[j].image))
        .min()
        .unwrap();
    assert!((model.tau() - 0.5 * (min_h as f64).sqrt()).abs() <= 1e-6);
}

#[test]
fn nearest_neighbour_agrees_with_pixel_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ts = templates(&mut rng, 10, 60, 80);
    let model = EigenModel64::train(&ts, 64).unwrap();
    let imgs = images(&ts);
    for _ in 0..200 {
        let base = &imgs[rng.gen_range(0..10)];
        let fraction = rng.gen_range(0.0..0.6);
        let probe = flip(&mut rng, base, fraction);
        let (idx, _) = model.nearest(&probe).unwrap();
        let (want, best) = oracle::nearest(&imgs, &probe);
        let tied: Vec<usize> = (0..10).filter(|&i| oracle::hamming(&imgs[i], &probe) == best).collect();
        if tied.len() == 1 {
            assert_eq!(idx, want);
        } else {
            assert!(tied.contains(&idx));
        }
    }
}

#[test]
fn flipped_probe_keeps_label() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ts = templates(&mut rng, 10, 60, 80);
    let model = EigenModel64::train(&ts, 64).unwrap();
    for t in &ts {
        let probe = flip(&mut rng, &t.image, 0.02);
        let c = model.classify(&probe, 7).unwrap();
        assert_eq!(c.label, Some(t.label));
        assert_eq!(c.frame_seq, 7);
        assert_eq!(oracle::nearest(&images(&ts), &probe).0, t.label as usize);
    }
}

#[test]
fn reconstruction_error_non_increasing_in_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ts = templates(&mut rng, 8, 20, 15);
    let probes: Vec<BinFrame> = (0..20).map(|_| oracle::random_bin(&mut rng, 20, 15, 0.5)).collect();
    let errors: Vec<Vec<f64>> = (0..8)
        .map(|k| {
            let m = EigenModel64::train(&ts, k).unwrap();
            probes.iter().map(|p| sq_error(&m, p)).collect()
        })
        .collect();
    for pair in errors.windows(2) {
        for (a, b) in pair[0].iter().zip(&pair[1]) {
            assert!(b <= &(a + 1e-9));
        }
    }
    let full = EigenModel64::train(&ts, 7).unwrap();
    for t in &ts {
        assert!(sq_error(&full, &t.image) < 1e-12);
    }
}

#[test]
fn unknown_iff_beyond_tau() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ts = templates(&mut rng, 5, 12, 10);
    let model = EigenModel64::train(&ts, 8).unwrap();
    for _ in 0..200 {
        let probe = oracle::random_bin(&mut rng, 12, 10, 0.5);
        let (idx, d) = model.nearest(&probe).unwrap();
        let c = model.classify(&probe, 0).unwrap();
        assert_eq!(c.distance, d);
        assert_eq!(c.label, (d <= model.tau()).then_some(ts[idx].label));
    }
    let strict = model.clone().with_tau(0.0);
    assert_eq!(strict.classify(&ts[3].image, 0).unwrap().label, Some(3));
    let probe = flip(&mut rng, &ts[3].image, 0.05);
    assert_eq!(strict.classify(&probe, 0).unwrap().label, None);
}

#[test]
fn tau_override_and_duplicate_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ts = templates(&mut rng, 3, 8, 8);
    assert_eq!(EigenModel64::train_with_tau(&ts, 4, Some(2.5)).unwrap().tau(), 2.5);
    // a second template for label 0 does not shrink tau to its own spread
    let extra = GestureTemplate::new(0, flip(&mut rng, &ts[0].image, 0.1), "g0b").unwrap();
    ts.push(extra);
    let m = EigenModel64::train(&ts, 8).unwrap();
    let cross = [(0, 1), (0, 2), (1, 2), (3, 1), (3, 2)]
        .iter()
        .map(|&(i, j)| (oracle::hamming(&ts[i].image, &ts[j].image) as f64).sqrt())
        .fold(f64::INFINITY, f64::min);
    assert!((m.tau() - cross / 2.0).abs() < 1e-6);
    let single = vec![ts[0].clone()];
    let m1 = EigenModel64::train(&single, 8).unwrap();
    assert_eq!(m1.k(), 0);
    assert!(m1.tau().is_infinite());
    assert_eq!(m1.classify(&ts[1].image, 0).unwrap().label, Some(0));
}

#[test]
fn training_errors() {
    assert!(matches!(EigenModel64::train(&[], 4), Err(EigenError::EmptyTemplateSet)));
    let a = GestureTemplate::new(0, BinFrame::zeros(4, 4).unwrap(), "a").unwrap();
    let b = GestureTemplate::new(1, BinFrame::zeros(5, 4).unwrap(), "b").unwrap();
    assert!(EigenModel64::train(&[a.clone(), b], 4).is_err());
    assert!(GestureTemplate::new(255, BinFrame::zeros(4, 4).unwrap(), "x").is_err());
    let m = EigenModel64::train(&[a], 4).unwrap();
    assert!(m.classify(&BinFrame::zeros(3, 3).unwrap(), 0).is_err());
}

#[test]
fn single_precision_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ts = templates(&mut rng, 6, 30, 40);
    let m = EigenModel32::train(&ts, 16).unwrap();
    assert_eq!(m.k(), 5);
    assert!(m.orthonormality_residual() < 1e-4);
    for t in &ts {
        let c = m.classify(&t.image, 0).unwrap();
        assert_eq!(c.label, Some(t.label));
        assert!(c.distance < 1e-2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn basis_is_orthonormal_and_templates_self_match(seed in any::<u64>(), n in 1usize..9, k_max in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts = templates(&mut rng, n, 16, 12);
        let m = EigenModel64::train(&ts, k_max).unwrap();
        prop_assert!(m.k() <= k_max.min(n.saturating_sub(1)));
        prop_assert!(m.orthonormality_residual() <= 1e-8);
        prop_assert!(m.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        if m.k() == n - 1 {
            for (i, t) in ts.iter().enumerate() {
                let (idx, d) = m.nearest(&t.image).unwrap();
                prop_assert!(d <= 1e-6);
                // duplicates resolve to the first copy
                prop_assert!(idx <= i);
            }
        }
    }

    #[test]
    fn coords_match_projection(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts = templates(&mut rng, 5, 10, 10);
        let m = EigenModel64::train(&ts, 4).unwrap();
        for (t, c) in ts.iter().zip(m.coords()) {
            let p = m.project(&t.image).unwrap();
            prop_assert!(p.iter().zip(c).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }
}
