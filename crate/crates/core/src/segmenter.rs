//! Region-of-interest extraction, wrist removal and template-size resampling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::BinFrame;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SegmentError {
    #[error("frame has no foreground pixels")]
    NoForeground,
    #[error("no row or column exceeds the noise offset")]
    NoQualifyingRows,
    #[error("output size must be at least 1x1")]
    InvalidSize,
}

/// Inclusive pixel bounds of a region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiBox {
    pub min_row: usize,
    pub max_row: usize,
    pub min_col: usize,
    pub max_col: usize,
}

impl RoiBox {
    pub fn width(&self) -> usize {
        self.max_col - self.min_col + 1
    }

    pub fn height(&self) -> usize {
        self.max_row - self.min_row + 1
    }
}

/// Side of the frame the arm enters from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    ArmFromLeft,
    ArmFromRight,
    ArmFromTop,
    ArmFromBottom,
}

/// Foreground count per column.
pub fn column_histogram(bin: &BinFrame) -> Vec<u32> {
    let mut hist = vec![0u32; bin.width()];
    for row in bin.bits().chunks(bin.width()) {
        for (h, &b) in hist.iter_mut().zip(row) {
            *h += b as u32;
        }
    }
    hist
}

/// Foreground count per row.
pub fn row_histogram(bin: &BinFrame) -> Vec<u32> {
    bin.bits().chunks(bin.width()).map(|row| row.iter().filter(|&&b| b).count() as u32).collect()
}

fn noise_offset(side: usize) -> u32 {
    ((side / 100) as u32).max(1)
}

/// Locates the region of interest.
///
/// Columns qualify when their foreground count exceeds `max(1, width / 100)`,
/// rows when theirs exceeds `max(1, height / 100)`. The outermost qualifying
/// rows and columns bound the box. Counts and offsets are re-evaluated on
/// the shrunken box until it stops changing, so the result is a fixed point
/// and cropping twice equals cropping once.
pub fn roi_box(bin: &BinFrame) -> Result<RoiBox, SegmentError> {
    if bin.count_ones() == 0 {
        return Err(SegmentError::NoForeground);
    }
    let mut roi = RoiBox { min_row: 0, max_row: bin.height() - 1, min_col: 0, max_col: bin.width() - 1 };
    loop {
        let hor = noise_offset(roi.width());
        let ver = noise_offset(roi.height());
        let mut cols = vec![0u32; roi.width()];
        let mut rows = vec![0u32; roi.height()];
        for (ri, r) in (roi.min_row..=roi.max_row).enumerate() {
            for (ci, c) in (roi.min_col..=roi.max_col).enumerate() {
                if bin.get(r, c) {
                    cols[ci] += 1;
                    rows[ri] += 1;
                }
            }
        }
        let first = |v: &[u32], off: u32| v.iter().position(|&n| n > off);
        let last = |v: &[u32], off: u32| v.iter().rposition(|&n| n > off);
        let (Some(c0), Some(c1), Some(r0), Some(r1)) =
            (first(&cols, hor), last(&cols, hor), first(&rows, ver), last(&rows, ver))
        else {
            return Err(SegmentError::NoQualifyingRows);
        };
        let next = RoiBox {
            min_row: roi.min_row + r0,
            max_row: roi.min_row + r1,
            min_col: roi.min_col + c0,
            max_col: roi.min_col + c1,
        };
        if next == roi {
            return Ok(roi);
        }
        roi = next;
    }
}

/// Crops a binary frame to its region of interest.
pub fn crop_roi(bin: &BinFrame) -> Result<BinFrame, SegmentError> {
    let b = roi_box(bin)?;
    Ok(bin.sub_image(b.min_row, b.max_row, b.min_col, b.max_col))
}

/// Column at which the arm is cut off, for a frame with the arm on the left.
///
/// The palm maximum is the tallest column (rightmost on ties); the wrist is
/// the shortest column strictly between column 0 and that maximum (leftmost
/// on ties). `None` when the search range is empty or flat.
pub fn wrist_column(hist: &[u32]) -> Option<usize> {
    let peak = hist.iter().copied().max()?;
    let peak_col = hist.iter().rposition(|&v| v == peak)?;
    if peak_col < 2 {
        return None;
    }
    let range = &hist[1..peak_col];
    let lo = *range.iter().min()?;
    let hi = *range.iter().max()?;
    if lo == hi {
        return None;
    }
    range.iter().position(|&v| v == lo).map(|i| i + 1)
}

fn wrist_crop_left(bin: &BinFrame) -> Result<BinFrame, SegmentError> {
    match wrist_column(&column_histogram(bin)) {
        None => Ok(bin.clone()),
        Some(cut) => crop_roi(&bin.sub_image(0, bin.height() - 1, cut, bin.width() - 1)),
    }
}

/// Removes the wrist and forearm from an ROI-cropped silhouette.
pub fn wrist_crop(bin: &BinFrame, orient: Orientation) -> Result<BinFrame, SegmentError> {
    if bin.count_ones() == 0 {
        return Err(SegmentError::NoForeground);
    }
    match orient {
        Orientation::ArmFromLeft => wrist_crop_left(bin),
        Orientation::ArmFromRight => Ok(wrist_crop_left(&bin.flip_horizontal())?.flip_horizontal()),
        Orientation::ArmFromTop => Ok(wrist_crop_left(&bin.transpose())?.transpose()),
        Orientation::ArmFromBottom => {
            Ok(wrist_crop_left(&bin.transpose().flip_horizontal())?.flip_horizontal().transpose())
        }
    }
}

/// Nearest-neighbour resampling: output `(r, c)` takes input
/// `(floor((r + 0.5) * in_h / out_h), floor((c + 0.5) * in_w / out_w))`.
pub fn resize_binary(bin: &BinFrame, out_w: usize, out_h: usize) -> Result<BinFrame, SegmentError> {
    if out_w == 0 || out_h == 0 {
        return Err(SegmentError::InvalidSize);
    }
    let (in_w, in_h) = (bin.width(), bin.height());
    // (2r + 1) * in / (2 * out) is the exact floor of the half-pixel formula.
    let src_cols: Vec<usize> = (0..out_w).map(|c| (2 * c + 1) * in_w / (2 * out_w)).collect();
    BinFrame::from_fn(out_w, out_h, |r, c| {
        let sr = (2 * r + 1) * in_h / (2 * out_h);
        bin.get(sr, src_cols[c])
    })
    .map_err(|_| SegmentError::InvalidSize)
}

/// Full segmentation chain: ROI crop, wrist removal, resize to template size.
pub fn segment(bin: &BinFrame, orient: Orientation, out_w: usize, out_h: usize) -> Result<BinFrame, SegmentError> {
    let roi = crop_roi(bin)?;
    let hand = wrist_crop(&roi, orient)?;
    resize_binary(&hand, out_w, out_h)
}
