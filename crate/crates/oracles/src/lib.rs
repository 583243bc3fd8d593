//! Slow, obviously-correct reference implementations.
//!
//! Each function here recomputes a pipeline quantity from its definition
//! with plain loops over pixels, so the optimized code in `gesturebot-core`
//! can be checked against it. Nothing here is meant to be fast.

use gesturebot_core::raster::{BinFrame, GrayFrame};
use gesturebot_core::robot_sim::{ViewCell, World, GRID_SIDE, VIEW_SIDE};
use gesturebot_core::segmenter::Orientation;
use rand::Rng;

pub fn random_bin(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> BinFrame {
    BinFrame::from_fn(w, h, |_, _| rng.gen_bool(density)).unwrap()
}

pub fn random_gray(rng: &mut impl Rng, w: usize, h: usize) -> GrayFrame {
    GrayFrame::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
}

// raster

/// 3x3 mean with edge replication, floor division.
pub fn box_smooth(f: &GrayFrame) -> Vec<u8> {
    let (w, h) = (f.width() as i64, f.height() as i64);
    let mut out = Vec::with_capacity((w * h) as usize);
    for r in 0..h {
        for c in 0..w {
            let mut sum = 0u32;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let rr = (r + dr).clamp(0, h - 1) as usize;
                    let cc = (c + dc).clamp(0, w - 1) as usize;
                    sum += f.get(rr, cc) as u32;
                }
            }
            out.push((sum / 9) as u8);
        }
    }
    out
}

pub fn stretch(pixels: &[u8]) -> Vec<u8> {
    let lo = *pixels.iter().min().unwrap() as u32;
    let hi = *pixels.iter().max().unwrap() as u32;
    if lo == hi {
        return pixels.to_vec();
    }
    pixels.iter().map(|&p| ((p as u32 - lo) * 255 / (hi - lo)) as u8).collect()
}

pub fn preprocess(f: &GrayFrame) -> Vec<u8> {
    stretch(&box_smooth(f))
}

/// Exhaustive Otsu over all 256 cut points, classes `<= t` and `> t`.
/// Variances are compared by cross-multiplying in u128, which stays exact up
/// to 640x480 pixels.
pub fn otsu(pixels: &[u8]) -> Option<u8> {
    assert!(pixels.len() <= 640 * 480);
    let first = *pixels.first()?;
    if pixels.iter().all(|&p| p == first) {
        return None;
    }
    // between-class variance * n^2 = (s0*n - s*n0)^2 / (n0*n1)
    let n = pixels.len() as u128;
    let s: u128 = pixels.iter().map(|&p| p as u128).sum();
    let mut best: Option<(u8, u128, u128)> = None;
    for t in 0..=255u8 {
        let n0 = pixels.iter().filter(|&&p| p <= t).count() as u128;
        let s0: u128 = pixels.iter().filter(|&&p| p <= t).map(|&p| p as u128).sum();
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = (s0 * n).abs_diff(s * n0);
        let (num, den) = (d * d, n0 * n1);
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t, num, den));
        }
    }
    best.map(|(t, _, _)| t)
}

pub fn count_above(pixels: &[u8], t: u8) -> usize {
    pixels.iter().filter(|&&p| p > t).count()
}

/// Preprocess, Otsu, bright foreground. A uniform frame is all background.
pub fn binarize(f: &GrayFrame) -> BinFrame {
    let px = preprocess(f);
    let t = otsu(&px);
    BinFrame::from_fn(f.width(), f.height(), |r, c| t.is_some_and(|t| px[r * f.width() + c] > t)).unwrap()
}

// motion gate

pub fn mismatch_count(f1: &BinFrame, f2: &BinFrame, f3: &BinFrame) -> usize {
    let mut n = 0;
    for r in 0..f3.height() {
        for c in 0..f3.width() {
            let a = f1.get(r, c) ^ f3.get(r, c);
            let b = f2.get(r, c) ^ f3.get(r, c);
            if a || b {
                n += 1;
            }
        }
    }
    n
}

/// Replays the gate definition over a whole stream and returns the indices
/// (0-based) of the frames it selects.
pub fn gate_fires(frames: &[BinFrame], still_ratio: f64, required_run: u32) -> Vec<usize> {
    let mut fires = Vec::new();
    let mut run = 0u32;
    let mut armed = true;
    for i in 2..frames.len() {
        let n = mismatch_count(&frames[i - 2], &frames[i - 1], &frames[i]);
        let total = frames[i].width() * frames[i].height();
        if (n as f64) / (total as f64) < still_ratio {
            run += 1;
        } else {
            run = 0;
            armed = true;
        }
        if armed && run >= required_run {
            fires.push(i);
            armed = false;
        }
    }
    fires
}

// segmenter

pub fn column_histogram(b: &BinFrame) -> Vec<u32> {
    (0..b.width()).map(|c| (0..b.height()).filter(|&r| b.get(r, c)).count() as u32).collect()
}

pub fn row_histogram(b: &BinFrame) -> Vec<u32> {
    (0..b.height()).map(|r| (0..b.width()).filter(|&c| b.get(r, c)).count() as u32).collect()
}

/// Inclusive (min_row, max_row, min_col, max_col), or `None` when there is
/// no foreground or nothing clears the offsets.
pub fn roi_box(b: &BinFrame) -> Option<(usize, usize, usize, usize)> {
    if b.count_ones() == 0 {
        return None;
    }
    let (mut r0, mut r1, mut c0, mut c1) = (0, b.height() - 1, 0, b.width() - 1);
    loop {
        let sub = b.sub_image(r0, r1, c0, c1);
        let hor = (sub.width() / 100).max(1) as u32;
        let ver = (sub.height() / 100).max(1) as u32;
        let cols = column_histogram(&sub);
        let rows = row_histogram(&sub);
        let nc0 = (0..cols.len()).find(|&i| cols[i] > hor)?;
        let nc1 = (0..cols.len()).rev().find(|&i| cols[i] > hor)?;
        let nr0 = (0..rows.len()).find(|&i| rows[i] > ver)?;
        let nr1 = (0..rows.len()).rev().find(|&i| rows[i] > ver)?;
        let next = (r0 + nr0, r0 + nr1, c0 + nc0, c0 + nc1);
        if next == (r0, r1, c0, c1) {
            return Some(next);
        }
        (r0, r1, c0, c1) = next;
    }
}

pub fn crop_roi(b: &BinFrame) -> Option<BinFrame> {
    let (r0, r1, c0, c1) = roi_box(b)?;
    Some(b.sub_image(r0, r1, c0, c1))
}

/// Wrist cut for an arm entering from the left.
pub fn wrist_column(hist: &[u32]) -> Option<usize> {
    let mut peak = 0;
    for (i, &v) in hist.iter().enumerate() {
        if v >= hist[peak] {
            peak = i;
        }
    }
    if peak < 2 {
        return None;
    }
    let mut cut = 1;
    let (mut lo, mut hi) = (hist[1], hist[1]);
    for (i, &v) in hist.iter().enumerate().take(peak).skip(1) {
        if v < lo {
            lo = v;
            cut = i;
        }
        hi = hi.max(v);
    }
    (lo != hi).then_some(cut)
}

fn flip_vertical(b: &BinFrame) -> BinFrame {
    BinFrame::from_fn(b.width(), b.height(), |r, c| b.get(b.height() - 1 - r, c)).unwrap()
}

fn wrist_crop_left(b: &BinFrame) -> Option<BinFrame> {
    match wrist_column(&column_histogram(b)) {
        None => Some(b.clone()),
        Some(cut) => crop_roi(&b.sub_image(0, b.height() - 1, cut, b.width() - 1)),
    }
}

/// Wrist crop under each orientation, expressed through explicit image
/// reflections rather than the library's own transforms.
pub fn wrist_crop(b: &BinFrame, orient: Orientation) -> Option<BinFrame> {
    if b.count_ones() == 0 {
        return None;
    }
    let transpose = |x: &BinFrame| BinFrame::from_fn(x.height(), x.width(), |r, c| x.get(c, r)).unwrap();
    let mirror = |x: &BinFrame| BinFrame::from_fn(x.width(), x.height(), |r, c| x.get(r, x.width() - 1 - c)).unwrap();
    match orient {
        Orientation::ArmFromLeft => wrist_crop_left(b),
        Orientation::ArmFromRight => wrist_crop_left(&mirror(b)).map(|x| mirror(&x)),
        Orientation::ArmFromTop => wrist_crop_left(&transpose(b)).map(|x| transpose(&x)),
        Orientation::ArmFromBottom => {
            wrist_crop_left(&transpose(&flip_vertical(b))).map(|x| flip_vertical(&transpose(&x)))
        }
    }
}

/// Direct evaluation of the half-pixel nearest-neighbour formula.
pub fn resize(b: &BinFrame, out_w: usize, out_h: usize) -> BinFrame {
    let (in_w, in_h) = (b.width() as f64, b.height() as f64);
    BinFrame::from_fn(out_w, out_h, |r, c| {
        let sr = ((r as f64 + 0.5) * in_h / out_h as f64).floor() as usize;
        let sc = ((c as f64 + 0.5) * in_w / out_w as f64).floor() as usize;
        b.get(sr, sc)
    })
    .unwrap()
}

/// ROI crop, wrist removal for an arm from the left, then resize.
pub fn segment(b: &BinFrame, out_w: usize, out_h: usize) -> Option<BinFrame> {
    let roi = crop_roi(b)?;
    let hand = wrist_crop(&roi, Orientation::ArmFromLeft)?;
    Some(resize(&hand, out_w, out_h))
}

// eigengesture

pub fn hamming(a: &BinFrame, b: &BinFrame) -> usize {
    a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count()
}

/// Pixel-space 1-nearest-neighbour, lowest index on ties. Centering shifts
/// every vector by the same mean, so raw Hamming distance orders the same.
pub fn nearest(templates: &[BinFrame], probe: &BinFrame) -> (usize, usize) {
    let mut best = (0, usize::MAX);
    for (i, t) in templates.iter().enumerate() {
        let d = hamming(t, probe);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Dense sample covariance (divided by n - 1) of the vectorized images.
pub fn covariance(images: &[BinFrame]) -> Vec<Vec<f64>> {
    let n = images.len();
    let d = images[0].bits().len();
    let mut mean = vec![0.0; d];
    for im in images {
        for (m, &b) in mean.iter_mut().zip(im.bits()) {
            *m += b as u8 as f64 / n as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for im in images {
        let x: Vec<f64> = im.bits().iter().zip(&mean).map(|(&b, m)| b as u8 as f64 - m).collect();
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += x[i] * x[j] / (n - 1) as f64;
            }
        }
    }
    cov
}

/// Leading eigenpairs of a symmetric positive semi-definite matrix by power
/// iteration with deflation. Vectors are unit length with their largest
/// magnitude entry positive.
pub fn power_iteration(matrix: &[Vec<f64>], count: usize, iters: usize) -> Vec<(f64, Vec<f64>)> {
    let d = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut out = Vec::new();
    for k in 0..count {
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + ((i * 7 + k * 13) % 11) as f64 / 10.0).collect();
        let mut lambda = 0.0;
        for _ in 0..iters {
            let w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| a[i][j] * v[j]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            lambda = norm;
            v = w.iter().map(|x| x / norm).collect();
        }
        let mut idx = 0;
        for i in 1..d {
            if v[i].abs() > v[idx].abs() {
                idx = i;
            }
        }
        if v[idx] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..d {
            for j in 0..d {
                a[i][j] -= lambda * v[i] * v[j];
            }
        }
        out.push((lambda, v));
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// robot

/// Collision check by dense sampling along the segment at `cell_size / 16`.
pub fn segment_hits_obstacle(world: &World<f64>, from: (f64, f64), to: (f64, f64)) -> bool {
    let step = world.cell_size() / 16.0;
    let len = ((to.0 - from.0).powi(2) + (to.1 - from.1).powi(2)).sqrt();
    let n = (len / step).ceil().max(1.0) as usize;
    (0..=n).any(|i| {
        let t = i as f64 / n as f64;
        !world.is_free(from.0 + (to.0 - from.0) * t, from.1 + (to.1 - from.1) * t)
    })
}

/// The 9x9 view by direct lookup: row `i`, column `j` is grid cell
/// `(row - 4 + i, col - 4 + j)`.
pub fn view(world: &World<f64>, x: f64, y: f64) -> [[ViewCell; VIEW_SIDE]; VIEW_SIDE] {
    let (row, col) = world.cell_of(x, y).expect("robot inside the grid");
    let half = (VIEW_SIDE / 2) as i64;
    let mut v = [[ViewCell::Obstacle; VIEW_SIDE]; VIEW_SIDE];
    for (i, line) in v.iter_mut().enumerate() {
        for (j, cell) in line.iter_mut().enumerate() {
            let r = row as i64 - half + i as i64;
            let c = col as i64 - half + j as i64;
            let inside = r >= 0 && c >= 0 && r < GRID_SIDE as i64 && c < GRID_SIDE as i64;
            *cell = if i as i64 == half && j as i64 == half {
                ViewCell::RobotHere
            } else if inside && !world.occupied(r as usize, c as usize) {
                ViewCell::Free
            } else {
                ViewCell::Obstacle
            };
        }
    }
    v
}
