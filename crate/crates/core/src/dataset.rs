//! Deterministic synthetic gesture data.
//!
//! Each label is a parametric hand: a forearm band entering from the left,
//! a narrower wrist neck, an elliptical palm and a label-specific set of
//! fingers drawn as capsules radiating from the palm center. Templates are
//! the segmenter's output on a canonical rendering; probes are noisy,
//! rescaled and shifted copies of a template re-attached to an arm inside
//! a larger frame, so evaluation runs the whole segmentation path.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eigengesture::{GestureTemplate, TEMPLATE_HEIGHT, TEMPLATE_WIDTH};
use crate::raster::{BinFrame, GrayFrame, RasterError};
use crate::segmenter::{segment, Orientation, SegmentError};

/// Gesture shapes available to the generator.
pub const GESTURE_NAMES: [&str; 10] =
    ["fist", "point", "vee", "three", "four", "open", "thumb", "ell", "horns", "tilt"];

const THUMB: f64 = 70.0;

/// Finger directions in degrees from +x; positive angles point down the image.
fn finger_angles(label: usize) -> &'static [f64] {
    match label {
        0 => &[],
        1 => &[0.0],
        2 => &[-20.0, 20.0],
        3 => &[-25.0, 0.0, 25.0],
        4 => &[-36.0, -12.0, 12.0, 36.0],
        5 => &[-36.0, -12.0, 12.0, 36.0, THUMB],
        6 => &[THUMB],
        7 => &[0.0, THUMB],
        8 => &[-36.0, 36.0],
        _ => &[-40.0],
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(&'static str),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("segmenting label {label}: {source}")]
    Segment { label: u8, source: SegmentError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_labels: usize,
    pub variants_per_label: usize,
    /// At most 0.02.
    pub flip_fraction: f64,
    /// At most 0.05.
    pub max_shift_fraction: f64,
    /// At most 0.10.
    pub scale_jitter: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_labels: 10,
            variants_per_label: 100,
            flip_fraction: 0.02,
            max_shift_fraction: 0.05,
            scale_jitter: 0.10,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_labels == 0 || self.n_labels > GESTURE_NAMES.len() {
            return Err(DatasetError::InvalidSpec("n_labels must be 1..=10"));
        }
        if !(0.0..=0.02).contains(&self.flip_fraction) {
            return Err(DatasetError::InvalidSpec("flip_fraction must be in [0, 0.02]"));
        }
        if !(0.0..=0.05).contains(&self.max_shift_fraction) {
            return Err(DatasetError::InvalidSpec("max_shift_fraction must be in [0, 0.05]"));
        }
        if !(0.0..=0.10).contains(&self.scale_jitter) {
            return Err(DatasetError::InvalidSpec("scale_jitter must be in [0, 0.10]"));
        }
        Ok(())
    }
}

/// Geometry of one rendered hand, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandPose {
    pub label: usize,
    /// Pixels per hand unit.
    pub unit: f64,
    /// Palm center (x to the right, y down).
    pub center: (f64, f64),
}

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let t = ((wx * vx + wy * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

impl HandPose {
    /// Whether the point `(x, y)` lies on the hand or arm.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let u = self.unit;
        let (cx, cy) = self.center;
        let (dx, dy) = (x - cx, y - cy);
        // palm
        let (a, b) = (10.0 * u, 13.0 * u);
        if (dx / a).powi(2) + (dy / b).powi(2) <= 1.0 {
            return true;
        }
        // wrist neck widening toward the palm, then forearm out to the frame edge
        let neck_start = cx - 16.0 * u;
        if x >= neck_start && x <= cx && dy.abs() <= 4.0 * u + 0.5 * (x - neck_start) {
            return true;
        }
        if x < neck_start && dy.abs() <= 9.0 * u {
            return true;
        }
        let radius = 2.3 * u;
        let reach = 22.0 * u;
        finger_angles(self.label).iter().any(|deg| {
            let phi = deg.to_radians();
            let tip = (cx + reach * phi.cos(), cy + reach * phi.sin());
            dist_to_segment((x, y), (cx, cy), tip) <= radius
        })
    }

    pub fn render(&self, width: usize, height: usize) -> Result<BinFrame, RasterError> {
        BinFrame::from_fn(width, height, |r, c| self.contains(c as f64 + 0.5, r as f64 + 0.5))
    }
}

/// Canonical rendering used to derive templates.
pub fn canonical_scene(label: usize) -> Result<BinFrame, RasterError> {
    HandPose { label, unit: 3.0, center: (100.0, 80.0) }.render(200, 180)
}

/// Template for a label: canonical scene through the segmenter.
pub fn make_template(label: usize) -> Result<GestureTemplate, DatasetError> {
    let scene = canonical_scene(label)?;
    let image = segment(&scene, Orientation::ArmFromLeft, TEMPLATE_WIDTH, TEMPLATE_HEIGHT)
        .map_err(|source| DatasetError::Segment { label: label as u8, source })?;
    Ok(GestureTemplate { label: label as u8, image, name: GESTURE_NAMES[label].to_string() })
}

/// Flips between zero and `floor(fraction * pixels)` distinct pixels.
pub fn flip_pixels(bin: &BinFrame, fraction: f64, rng: &mut impl Rng) -> BinFrame {
    let n = bin.width() * bin.height();
    let budget = (fraction * n as f64).floor() as usize;
    let count = rng.gen_range(0..=budget);
    let mut out = bin.clone();
    for idx in sample(rng, n, count) {
        let (r, c) = (idx / bin.width(), idx % bin.width());
        out.set(r, c, !bin.get(r, c));
    }
    out
}

/// Probe canvas size (width, height).
pub const PROBE_CANVAS: (usize, usize) = (160, 120);

/// Rows `[top, bottom)` covered by the leftmost foreground column, or the
/// middle fifth of the image when that column is empty.
pub fn wrist_span(hand: &BinFrame) -> (f64, f64) {
    let col0: Vec<usize> = (0..hand.height()).filter(|&r| hand.get(r, 0)).collect();
    match (col0.first(), col0.last()) {
        (Some(&t), Some(&b)) => (t as f64, b as f64 + 1.0),
        _ => (hand.height() as f64 * 0.4, hand.height() as f64 * 0.6),
    }
}

/// Places a (possibly noisy) template in a larger canvas with a forearm
/// band joined to its left edge. The band is 1.5x the height of `span`,
/// normally the [`wrist_span`] of the clean template.
pub fn embed_with_arm(
    hand: &BinFrame,
    span: (f64, f64),
    canvas: (usize, usize),
    origin: (usize, usize),
) -> Result<BinFrame, RasterError> {
    let (x0, y0) = origin;
    let (top, bottom) = span;
    let mid = y0 as f64 + (top + bottom) / 2.0;
    let half = 0.75 * (bottom - top);
    BinFrame::from_fn(canvas.0, canvas.1, |r, c| {
        if c >= x0 && c < x0 + hand.width() && r >= y0 && r < y0 + hand.height() {
            return hand.get(r - y0, c - x0);
        }
        c < x0 && ((r as f64 + 0.5) - mid).abs() <= half
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub label: u8,
    pub template_index: usize,
    /// Template after pixel flips, before rescaling and placement.
    pub pre_jitter: BinFrame,
    pub frame: BinFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub templates: Vec<GestureTemplate>,
    pub probes: Vec<Probe>,
}

pub fn gen_dataset(spec: &SyntheticSpec) -> Result<Dataset, DatasetError> {
    spec.validate()?;
    let templates = (0..spec.n_labels).map(make_template).collect::<Result<Vec<_>, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (cw, ch) = PROBE_CANVAS;
    let mut probes = Vec::with_capacity(spec.n_labels * spec.variants_per_label);
    for (ti, t) in templates.iter().enumerate() {
        for _ in 0..spec.variants_per_label {
            let noisy = flip_pixels(&t.image, spec.flip_fraction, &mut rng);
            let s = 1.0 + rng.gen_range(-1.0..=1.0) * spec.scale_jitter;
            let w = ((TEMPLATE_WIDTH as f64 * s).round() as usize).max(1);
            let h = ((TEMPLATE_HEIGHT as f64 * s).round() as usize).max(1);
            let scaled = crate::segmenter::resize_binary(&noisy, w, h)
                .map_err(|source| DatasetError::Segment { label: t.label, source })?;
            let max_dx = (spec.max_shift_fraction * cw as f64).floor() as i64;
            let max_dy = (spec.max_shift_fraction * ch as f64).floor() as i64;
            let dx = rng.gen_range(-max_dx..=max_dx);
            let dy = rng.gen_range(-max_dy..=max_dy);
            let x0 = (cw as i64 - w as i64 - 24 + dx).max(8) as usize;
            let y0 = ((ch as i64 - h as i64) / 2 + dy).max(0) as usize;
            let clean = crate::segmenter::resize_binary(&t.image, w, h)
                .map_err(|source| DatasetError::Segment { label: t.label, source })?;
            let frame = embed_with_arm(&scaled, wrist_span(&clean), PROBE_CANVAS, (x0, y0))?;
            probes.push(Probe { label: t.label, template_index: ti, pre_jitter: noisy, frame });
        }
    }
    Ok(Dataset { templates, probes })
}

/// Scripted grayscale clip: the hand slides upward for `moving` frames and
/// then holds still for `still` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub label: usize,
    pub width: usize,
    pub height: usize,
    pub moving: usize,
    pub still: usize,
    /// Vertical displacement per moving frame, pixels.
    pub step_px: f64,
    pub first_seq: u64,
    pub seed: u64,
}

impl SequenceSpec {
    pub fn new(label: usize, width: usize, height: usize) -> Self {
        Self { label, width, height, moving: 10, still: 6, step_px: 0.0, first_seq: 0, seed: 0 }
    }
}

pub const BACKGROUND_LEVEL: u8 = 40;
pub const HAND_LEVEL: u8 = 200;

/// Renders the clip as grayscale frames with mild per-pixel noise.
pub fn render_sequence(spec: &SequenceSpec) -> Result<Vec<GrayFrame>, DatasetError> {
    if spec.label >= GESTURE_NAMES.len() {
        return Err(DatasetError::InvalidSpec("label out of range"));
    }
    let unit = spec.height as f64 / 80.0;
    let step = if spec.step_px > 0.0 { spec.step_px } else { 2.0 * unit };
    let rest = (spec.width as f64 * 0.5, spec.height as f64 * 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.moving + spec.still;
    let mut frames = Vec::with_capacity(total);
    for i in 0..total {
        let lag = spec.moving.saturating_sub(i) as f64;
        let pose = HandPose { label: spec.label, unit, center: (rest.0, rest.1 + lag * step) };
        let mask = pose.render(spec.width, spec.height)?;
        let pixels = mask
            .bits()
            .iter()
            .map(|&b| {
                let base = if b { HAND_LEVEL } else { BACKGROUND_LEVEL };
                base.saturating_add_signed(rng.gen_range(-8i8..=8))
            })
            .collect();
        frames.push(GrayFrame::new(spec.width, spec.height, pixels)?.with_seq(spec.first_seq + i as u64));
    }
    Ok(frames)
}
