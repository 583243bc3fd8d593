use gesturebot_core::raster::BinFrame;
use gesturebot_core::segmenter::*;
use gesturebot_oracles as oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORIENTATIONS: [Orientation; 4] =
    [Orientation::ArmFromLeft, Orientation::ArmFromRight, Orientation::ArmFromTop, Orientation::ArmFromBottom];

/// Sparse noise plus a few solid rectangles.
fn blobby(rng: &mut impl Rng, w: usize, h: usize) -> BinFrame {
    let density = rng.gen_range(0.0..0.05);
    let mut b = oracle::random_bin(rng, w, h, density);
    for _ in 0..rng.gen_range(0..4) {
        let (r0, c0) = (rng.gen_range(0..h), rng.gen_range(0..w));
        let (r1, c1) = (rng.gen_range(r0..h), rng.gen_range(c0..w));
        for r in r0..=r1 {
            for c in c0..=c1 {
                b.set(r, c, true);
            }
        }
    }
    b
}

fn frame_strategy() -> impl Strategy<Value = BinFrame> {
    (any::<u64>(), 1usize..90, 1usize..90).prop_map(|(seed, w, h)| blobby(&mut ChaCha8Rng::seed_from_u64(seed), w, h))
}

fn as_tuple(b: RoiBox) -> (usize, usize, usize, usize) {
    (b.min_row, b.max_row, b.min_col, b.max_col)
}

#[test]
fn block_in_hundred_square() {
    let b = BinFrame::from_fn(100, 100, |r, c| (40..60).contains(&r) && (30..50).contains(&c)).unwrap();
    assert_eq!(roi_box(&b).map(as_tuple).ok(), oracle::roi_box(&b));
    assert_eq!(crop_roi(&b).unwrap(), BinFrame::ones(20, 20).unwrap());
}

#[test]
fn dumbbell_cut_at_bar() {
    // left lobe 0..20, bar 20..30 two rows tall, right lobe 30..60
    let b = BinFrame::from_fn(60, 40, |r, c| match c {
        0..20 => (10..30).contains(&r),
        20..30 => (19..21).contains(&r),
        _ => (5..35).contains(&r),
    })
    .unwrap();
    let hist = column_histogram(&b);
    assert_eq!(wrist_column(&hist), oracle::wrist_column(&hist));
    assert_eq!(wrist_column(&hist), Some(20));
    let hand = wrist_crop(&b, Orientation::ArmFromLeft).unwrap();
    assert_eq!(Some(hand.clone()), oracle::wrist_crop(&b, Orientation::ArmFromLeft));
    // the two-row bar clears the offset of 1, so it stays with the right lobe
    assert_eq!((hand.width(), hand.height()), (40, 30));
}

#[test]
fn resize_known_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = oracle::random_bin(&mut rng, 120, 100, 0.5);
    let out = resize_binary(&b, 60, 80).unwrap();
    assert_eq!(out, oracle::resize(&b, 60, 80));
    assert_eq!(out.get(0, 0), b.get(0, 1));
    assert_eq!(out.get(79, 59), b.get(99, 119));
    assert_eq!(resize_binary(&b, 0, 3), Err(SegmentError::InvalidSize));
}

#[test]
fn thousand_random_frames_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(1..120), rng.gen_range(1..120));
        let b = blobby(&mut rng, w, h);
        assert_eq!(column_histogram(&b), oracle::column_histogram(&b));
        assert_eq!(row_histogram(&b), oracle::row_histogram(&b));
        assert_eq!(crop_roi(&b).ok(), oracle::crop_roi(&b));
        if let Ok(roi) = crop_roi(&b) {
            for o in ORIENTATIONS {
                assert_eq!(wrist_crop(&roi, o).ok(), oracle::wrist_crop(&roi, o), "{o:?}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn histograms_sum_to_count(b in frame_strategy()) {
        let total = b.count_ones() as u32;
        prop_assert_eq!(column_histogram(&b).iter().sum::<u32>(), total);
        prop_assert_eq!(row_histogram(&b).iter().sum::<u32>(), total);
    }

    #[test]
    fn crop_is_idempotent(b in frame_strategy()) {
        if let Ok(once) = crop_roi(&b) {
            prop_assert_eq!(crop_roi(&once).unwrap(), once);
        }
    }

    #[test]
    fn crop_matches_oracle(b in frame_strategy()) {
        prop_assert_eq!(roi_box(&b).map(as_tuple).ok(), oracle::roi_box(&b));
    }

    #[test]
    fn wrist_column_matches_oracle(hist in proptest::collection::vec(0u32..20, 0..50)) {
        let cut = wrist_column(&hist);
        prop_assert_eq!(cut, oracle::wrist_column(&hist));
        if let Some(c) = cut {
            prop_assert!(c >= 1);
            let peak = hist.iter().rposition(|&v| v == *hist.iter().max().unwrap()).unwrap();
            prop_assert!(c < peak);
        }
    }

    #[test]
    fn resize_matches_formula(b in frame_strategy(), w in 1usize..100, h in 1usize..100) {
        prop_assert_eq!(resize_binary(&b, w, h).unwrap(), oracle::resize(&b, w, h));
    }

    #[test]
    fn orientations_are_reflections(b in frame_strategy()) {
        if let Ok(roi) = crop_roi(&b) {
            let left = wrist_crop(&roi, Orientation::ArmFromLeft).ok();
            let right = wrist_crop(&roi.flip_horizontal(), Orientation::ArmFromRight).ok();
            prop_assert_eq!(right.map(|x| x.flip_horizontal()), left.clone());
            let top = wrist_crop(&roi.transpose(), Orientation::ArmFromTop).ok();
            prop_assert_eq!(top.map(|x| x.transpose()), left);
        }
    }
}
