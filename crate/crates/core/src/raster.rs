//! Grayscale and binary rasters, portable any-map codecs, preprocessing and
//! global thresholding.

use thiserror::Error;

/// Largest accepted frame side, in pixels.
pub const MAX_SIDE: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RasterError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("unsupported maxval {0} (at most 255)")]
    UnsupportedMaxval(u32),
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("buffer of {found} pixels does not match {width}x{height}")]
    BufferLength { width: usize, height: usize, found: usize },
}

fn check_dims(width: usize, height: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE {
        return Err(RasterError::InvalidDimensions { width, height });
    }
    Ok(())
}

/// 8-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    /// Source sequence number.
    pub seq: u64,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if pixels.len() != width * height {
            return Err(RasterError::BufferLength { width, height, found: pixels.len() });
        }
        Ok(Self { width, height, pixels, seq: 0 })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn with_seq(mut self, seq: u64) -> Self {
        self.seq = seq;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

/// One-bit frame; `true` is foreground (hand).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinFrame {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinFrame {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if bits.len() != width * height {
            return Err(RasterError::BufferLength { width, height, found: bits.len() });
        }
        Ok(Self { width, height, bits })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self, RasterError> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn ones(width: usize, height: usize) -> Result<Self, RasterError> {
        Self::new(width, height, vec![true; width * height])
    }

    /// Builds a frame from a per-pixel predicate `f(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        let mut bits = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn same_dims(&self, other: &BinFrame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Copies the inclusive rectangle `[r0, r1] x [c0, c1]`.
    pub fn sub_image(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> BinFrame {
        assert!(r0 <= r1 && r1 < self.height && c0 <= c1 && c1 < self.width);
        let w = c1 - c0 + 1;
        let h = r1 - r0 + 1;
        let mut bits = Vec::with_capacity(w * h);
        for r in r0..=r1 {
            bits.extend_from_slice(&self.bits[r * self.width + c0..=r * self.width + c1]);
        }
        BinFrame { width: w, height: h, bits }
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> BinFrame {
        let mut bits = Vec::with_capacity(self.bits.len());
        for row in self.bits.chunks(self.width) {
            bits.extend(row.iter().rev());
        }
        BinFrame { width: self.width, height: self.height, bits }
    }

    /// Swap rows and columns.
    pub fn transpose(&self) -> BinFrame {
        let (w, h) = (self.height, self.width);
        let mut bits = Vec::with_capacity(self.bits.len());
        for r in 0..h {
            for c in 0..w {
                bits.push(self.get(c, r));
            }
        }
        BinFrame { width: w, height: h, bits }
    }

    /// Bytes per packed row (MSB-first, rows padded to a byte boundary).
    pub fn packed_row_len(&self) -> usize {
        self.width.div_ceil(8)
    }

    /// Packs rows MSB-first with byte padding per row; 1 = foreground.
    pub fn pack(&self) -> Vec<u8> {
        let stride = self.packed_row_len();
        let mut out = vec![0u8; stride * self.height];
        for (r, row) in self.bits.chunks(self.width).enumerate() {
            let dst = &mut out[r * stride..(r + 1) * stride];
            for (c, &b) in row.iter().enumerate() {
                if b {
                    dst[c / 8] |= 0x80 >> (c % 8);
                }
            }
        }
        out
    }

    /// Inverse of [`BinFrame::pack`]. Padding bits are ignored.
    pub fn unpack(width: usize, height: usize, packed: &[u8]) -> Result<BinFrame, RasterError> {
        check_dims(width, height)?;
        let stride = width.div_ceil(8);
        let expected = stride * height;
        if packed.len() < expected {
            return Err(RasterError::TruncatedPayload { expected, found: packed.len() });
        }
        let mut bits = Vec::with_capacity(width * height);
        for r in 0..height {
            let row = &packed[r * stride..(r + 1) * stride];
            for c in 0..width {
                bits.push(row[c / 8] & (0x80 >> (c % 8)) != 0);
            }
        }
        Ok(BinFrame { width, height, bits })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "method", content = "level")]
pub enum ThresholdMethod {
    #[default]
    OtsuGlobal,
    Fixed(u8),
}

/// Which side of the threshold counts as foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Pixels strictly above the threshold are the hand.
    #[default]
    BrightForeground,
    /// Pixels at or below the threshold are the hand.
    DarkForeground,
}

// --- PNM header parsing ---------------------------------------------------

struct PnmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmCursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, RasterError> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(RasterError::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| RasterError::MalformedHeader(format!("bad {what}")))
    }

    /// Consumes the single whitespace byte separating header and raster.
    fn end_header(&mut self) -> Result<(), RasterError> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(RasterError::MalformedHeader("missing separator after header".into())),
        }
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

fn read_magic(bytes: &[u8]) -> Result<[u8; 2], RasterError> {
    match bytes {
        [b'P', d, ..] => Ok([b'P', *d]),
        _ => Err(RasterError::MalformedHeader("bad magic".into())),
    }
}

fn read_dims(cur: &mut PnmCursor<'_>) -> Result<(usize, usize), RasterError> {
    let w = cur.number("width")? as usize;
    let h = cur.number("height")? as usize;
    if w == 0 || h == 0 || w > MAX_SIDE || h > MAX_SIDE {
        return Err(RasterError::MalformedHeader(format!("dimensions {w}x{h} out of range")));
    }
    Ok((w, h))
}

/// Decodes a binary (P5) or ASCII (P2) graymap with maxval at most 255.
/// Intensities are kept as stored; no rescaling to 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayFrame, RasterError> {
    let magic = read_magic(bytes)?;
    let ascii = match &magic {
        b"P5" => false,
        b"P2" => true,
        _ => return Err(RasterError::MalformedHeader("expected P2 or P5".into())),
    };
    let mut cur = PnmCursor { bytes, pos: 2 };
    let (w, h) = read_dims(&mut cur)?;
    let maxval = cur.number("maxval")?;
    if maxval == 0 {
        return Err(RasterError::MalformedHeader("maxval 0".into()));
    }
    if maxval > 255 {
        return Err(RasterError::UnsupportedMaxval(maxval));
    }
    let n = w * h;
    let pixels = if ascii {
        let mut px = Vec::with_capacity(n);
        for _ in 0..n {
            cur.skip_ws_and_comments();
            if cur.pos >= bytes.len() {
                return Err(RasterError::TruncatedPayload { expected: n, found: px.len() });
            }
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(RasterError::MalformedHeader(format!("sample {v} above maxval")));
            }
            px.push(v as u8);
        }
        px
    } else {
        cur.end_header()?;
        let rest = cur.rest();
        if rest.len() < n {
            return Err(RasterError::TruncatedPayload { expected: n, found: rest.len() });
        }
        rest[..n].to_vec()
    };
    GrayFrame::new(w, h, pixels)
}

/// Encodes a binary P5 graymap with maxval 255.
pub fn encode_pgm(frame: &GrayFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

/// Encodes a P4 bitmap; file bit 1 is foreground.
pub fn encode_pbm(bin: &BinFrame) -> Vec<u8> {
    let mut out = format!("P4\n{} {}\n", bin.width, bin.height).into_bytes();
    out.extend_from_slice(&bin.pack());
    out
}

/// Decodes a P4 (packed) or P1 (ASCII) bitmap.
pub fn decode_pbm(bytes: &[u8]) -> Result<BinFrame, RasterError> {
    let magic = read_magic(bytes)?;
    let ascii = match &magic {
        b"P4" => false,
        b"P1" => true,
        _ => return Err(RasterError::MalformedHeader("expected P1 or P4".into())),
    };
    let mut cur = PnmCursor { bytes, pos: 2 };
    let (w, h) = read_dims(&mut cur)?;
    if ascii {
        let n = w * h;
        let mut bits = Vec::with_capacity(n);
        while bits.len() < n {
            cur.skip_ws_and_comments();
            match bytes.get(cur.pos) {
                Some(b'0') => bits.push(false),
                Some(b'1') => bits.push(true),
                Some(_) => return Err(RasterError::MalformedHeader("bad P1 sample".into())),
                None => return Err(RasterError::TruncatedPayload { expected: n, found: bits.len() }),
            }
            cur.pos += 1;
        }
        BinFrame::new(w, h, bits)
    } else {
        cur.end_header()?;
        BinFrame::unpack(w, h, cur.rest())
    }
}

// --- preprocessing ----------------------------------------------------------

/// 3x3 box smoothing (floor mean, edge replication) followed by a min-max
/// contrast stretch to [0, 255]. A flat smoothed frame is returned unstretched.
pub fn preprocess(frame: &GrayFrame) -> GrayFrame {
    let smoothed = box_smooth(frame);
    let (lo, hi) = smoothed.pixels.iter().fold((u8::MAX, u8::MIN), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    if lo == hi {
        return smoothed;
    }
    let span = (hi - lo) as u32;
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate().skip(lo as usize).take(span as usize + 1) {
        *slot = ((v as u32 - lo as u32) * 255 / span) as u8;
    }
    GrayFrame { pixels: smoothed.pixels.iter().map(|&p| lut[p as usize]).collect(), ..smoothed }
}

fn box_smooth(frame: &GrayFrame) -> GrayFrame {
    let (w, h) = (frame.width, frame.height);
    let src = &frame.pixels;
    // Horizontal 3-tap sums with edge replication, then vertical.
    let mut rows = vec![0u16; w * h];
    for r in 0..h {
        let line = &src[r * w..(r + 1) * w];
        for c in 0..w {
            let left = line[c.saturating_sub(1)] as u16;
            let right = line[(c + 1).min(w - 1)] as u16;
            rows[r * w + c] = left + line[c] as u16 + right;
        }
    }
    let mut out = vec![0u8; w * h];
    for r in 0..h {
        let up = r.saturating_sub(1) * w;
        let mid = r * w;
        let down = (r + 1).min(h - 1) * w;
        for c in 0..w {
            let s = rows[up + c] + rows[mid + c] + rows[down + c];
            out[mid + c] = (s / 9) as u8;
        }
    }
    GrayFrame { width: w, height: h, pixels: out, seq: frame.seq }
}

// --- thresholding ------------------------------------------------------------

pub fn histogram(frame: &GrayFrame) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &p in &frame.pixels {
        hist[p as usize] += 1;
    }
    hist
}

/// Otsu's threshold: the `t` maximizing between-class variance when the
/// classes are `<= t` and `> t`, smallest `t` on ties. `None` when the
/// histogram holds a single intensity.
///
/// With `n0`, `s0` the count and intensity sum at or below `t` and `n`, `s`
/// the totals, the variance is proportional to `(s0*n - s*n0)^2 / (n0*n1)`.
/// Candidates are compared as exact fractions.
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<u8> {
    if hist.iter().filter(|&&n| n > 0).count() < 2 {
        return None;
    }
    let n: u64 = hist.iter().sum();
    let s: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(u8, Fraction)> = None;
    for (t, &count) in hist.iter().enumerate() {
        n0 += count;
        s0 += t as u64 * count;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = (s0 as i128 * n as i128 - s as i128 * n0 as i128).unsigned_abs();
        let f = Fraction::new(d * d, n0 as u128 * n1 as u128);
        if best.as_ref().is_none_or(|(_, b)| f.greater_than(b)) {
            best = Some((t as u8, f));
        }
    }
    best.map(|(t, _)| t)
}

/// Non-negative `num / den` kept as integer part and remainder so that two
/// values compare exactly without overflow.
struct Fraction {
    whole: u128,
    rem: u128,
    den: u128,
}

impl Fraction {
    fn new(num: u128, den: u128) -> Self {
        Self { whole: num / den, rem: num % den, den }
    }

    fn greater_than(&self, other: &Fraction) -> bool {
        if self.whole != other.whole {
            return self.whole > other.whole;
        }
        self.rem * other.den > other.rem * self.den
    }
}

/// Resolves the threshold level for a frame. `None` means "no foreground".
pub fn threshold_level(frame: &GrayFrame, method: ThresholdMethod) -> Option<u8> {
    match method {
        ThresholdMethod::Fixed(level) => Some(level),
        ThresholdMethod::OtsuGlobal => otsu_threshold(&histogram(frame)),
    }
}

/// Global thresholding with bright foreground: bit = intensity > T.
pub fn binarize(frame: &GrayFrame, method: ThresholdMethod) -> BinFrame {
    binarize_with(frame, method, Polarity::BrightForeground)
}

pub fn binarize_with(frame: &GrayFrame, method: ThresholdMethod, polarity: Polarity) -> BinFrame {
    let bits = match threshold_level(frame, method) {
        None => vec![false; frame.pixels.len()],
        Some(t) => frame.pixels.iter().map(|&p| (p > t) == (polarity == Polarity::BrightForeground)).collect(),
    };
    BinFrame { width: frame.width, height: frame.height, bits }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_p5() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let f = decode_pgm(&bytes).unwrap();
        assert_eq!((f.width(), f.height(), f.seq), (2, 2, 0));
        assert_eq!(f.pixels(), &[0, 255, 128, 64]);
    }

    #[test]
    fn decode_p5_truncated() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(decode_pgm(&bytes), Err(RasterError::TruncatedPayload { .. })));
    }

    #[test]
    fn decode_p5_wide_maxval() {
        let bytes = b"P5 2 2 65535\n\0\0\0\0\0\0\0\0".to_vec();
        assert_eq!(decode_pgm(&bytes), Err(RasterError::UnsupportedMaxval(65535)));
    }

    #[test]
    fn decode_p2_with_comments() {
        let f = decode_pgm(b"P2\n# c\n3 1\n# max\n10\n0 5\n10\n").unwrap();
        assert_eq!(f.pixels(), &[0, 5, 10]);
    }

    #[test]
    fn decode_bad_magic() {
        assert!(matches!(decode_pgm(b"P6 1 1 255\n\0"), Err(RasterError::MalformedHeader(_))));
        assert!(matches!(decode_pgm(b""), Err(RasterError::MalformedHeader(_))));
        assert!(matches!(decode_pgm(b"P5 0 1 255\n"), Err(RasterError::MalformedHeader(_))));
    }

    #[test]
    fn pgm_roundtrip() {
        let f = GrayFrame::new(3, 2, vec![1, 2, 3, 4, 5, 250]).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&f)).unwrap(), f);
    }

    #[test]
    fn preprocess_constant_frame() {
        let f = GrayFrame::filled(2, 2, 100).unwrap();
        assert_eq!(preprocess(&f).pixels(), &[100, 100, 100, 100]);
    }

    #[test]
    fn stretch_identity_when_full_range() {
        // Smoothing of a frame that is 0 on the left half and 255 on the
        // right keeps 0 and 255 present, so the stretch must be the identity.
        let px: Vec<u8> = (0..8 * 8).map(|i| if i % 8 < 4 { 0 } else { 255 }).collect();
        let f = GrayFrame::new(8, 8, px).unwrap();
        let smoothed = box_smooth(&f);
        assert_eq!(preprocess(&f), smoothed);
    }

    #[test]
    fn fixed_threshold_is_strict() {
        let f = GrayFrame::new(2, 1, vec![128, 129]).unwrap();
        assert_eq!(binarize(&f, ThresholdMethod::Fixed(128)).bits(), &[false, true]);
    }

    #[test]
    fn uniform_frame_is_background() {
        let f = GrayFrame::filled(5, 4, 77).unwrap();
        assert_eq!(binarize(&f, ThresholdMethod::OtsuGlobal).count_ones(), 0);
    }

    #[test]
    fn inverted_polarity() {
        let f = GrayFrame::new(2, 1, vec![10, 200]).unwrap();
        let b = binarize_with(&f, ThresholdMethod::Fixed(100), Polarity::DarkForeground);
        assert_eq!(b.bits(), &[true, false]);
    }

    #[test]
    fn p4_padding_msb_first() {
        let b = BinFrame::ones(9, 1).unwrap();
        let enc = encode_pbm(&b);
        assert_eq!(&enc[enc.len() - 2..], &[0xFF, 0x80]);
        assert_eq!(decode_pbm(&enc).unwrap(), b);
    }

    #[test]
    fn p1_decode() {
        let b = decode_pbm(b"P1\n# x\n3 2\n1 0 1\n010").unwrap();
        assert_eq!(b.bits(), &[true, false, true, false, true, false]);
        assert!(matches!(decode_pbm(b"P1 3 2 1 0"), Err(RasterError::TruncatedPayload { .. })));
        assert!(matches!(decode_pbm(b"P4 9 2\n\xff\x80"), Err(RasterError::TruncatedPayload { .. })));
    }

    #[test]
    fn geometry_helpers() {
        let b = BinFrame::from_fn(3, 2, |r, c| r == 0 && c == 0).unwrap();
        let t = b.transpose();
        assert_eq!((t.width(), t.height()), (2, 3));
        assert!(t.get(0, 0));
        let f = b.flip_horizontal();
        assert!(f.get(0, 2) && !f.get(0, 0));
        assert_eq!(b.sub_image(0, 0, 0, 1).bits(), &[true, false]);
    }
}
