//! Pure, deterministic frame-comparison primitives: perceptual hashing,
//! SSIM, normalized cross-correlation, block-matching flow, and a DCT
//! frame embedding. All functions are stateless and safe to call from
//! any number of workers.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, BufRead, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("frame dimensions must be positive and match pixel count (got {width}x{height}, {len} pixels)")]
    BadDimensions { width: u32, height: u32, len: usize },
    #[error("frame size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(u32, u32, u32, u32),
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("malformed PGM: {0}")]
    BadPgm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A grayscale frame: the agent's only sensor. Row-major intensities in
/// [0,255] plus a monotone frame index `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub t: u64,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, t: u64) -> Result<Self, VisionError> {
        if width == 0 || height == 0 || pixels.len() != (width as usize) * (height as usize) {
            return Err(VisionError::BadDimensions { width, height, len: pixels.len() });
        }
        Ok(Frame { width, height, pixels, t })
    }

    pub fn filled(width: u32, height: u32, value: u8, t: u64) -> Self {
        Frame { width, height, pixels: vec![value; (width * height) as usize], t }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

/// Unit-norm feature vector (d = 64) derived from a frame; see [`embed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub const EMBED_DIM: usize = 64;

/// Bilinear resample into f64 intensities. Identity when sizes match.
fn resize_bilinear(frame: &Frame, dst_w: u32, dst_h: u32) -> Vec<f64> {
    let (sw, sh) = (frame.width as usize, frame.height as usize);
    let (dw, dh) = (dst_w as usize, dst_h as usize);
    if sw == dw && sh == dh {
        return frame.pixels.iter().map(|&p| p as f64).collect();
    }
    let mut out = vec![0.0; dw * dh];
    let sx_ratio = sw as f64 / dw as f64;
    let sy_ratio = sh as f64 / dh as f64;
    for dy in 0..dh {
        let fy = ((dy as f64 + 0.5) * sy_ratio - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for dx in 0..dw {
            let fx = ((dx as f64 + 0.5) * sx_ratio - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            let p00 = frame.pixels[y0 * sw + x0] as f64;
            let p01 = frame.pixels[y0 * sw + x1] as f64;
            let p10 = frame.pixels[y1 * sw + x0] as f64;
            let p11 = frame.pixels[y1 * sw + x1] as f64;
            let top = p00 + (p01 - p00) * wx;
            let bot = p10 + (p11 - p10) * wx;
            out[dy * dw + dx] = top + (bot - top) * wy;
        }
    }
    out
}

/// Orthonormal 1D DCT-II.
fn dct1d(input: &[f64], output: &mut [f64]) {
    let n = input.len();
    let scale0 = (1.0 / n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    for (k, out) in output.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, &v) in input.iter().enumerate() {
            acc += v * ((PI / n as f64) * (i as f64 + 0.5) * k as f64).cos();
        }
        *out = acc * if k == 0 { scale0 } else { scale };
    }
}

/// Separable orthonormal 2D DCT-II over a row-major w x h grid.
fn dct2d(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut rows = vec![0.0; w * h];
    let mut buf = vec![0.0; w.max(h)];
    for y in 0..h {
        dct1d(&data[y * w..(y + 1) * w], &mut buf[..w]);
        rows[y * w..(y + 1) * w].copy_from_slice(&buf[..w]);
    }
    let mut out = vec![0.0; w * h];
    let mut col = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = rows[y * w + x];
        }
        dct1d(&col, &mut buf[..h]);
        for y in 0..h {
            out[y * w + x] = buf[y];
        }
    }
    out
}

fn median_of(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// 64-bit DCT perceptual hash: resize to 32x32, 2D DCT, take the top-left
/// 8x8 block with the DC term dropped (zeroed) so uniform brightness shifts
/// cannot move any bit, then threshold each coefficient against the median
/// of the 64 values with a strict `>`.
///
/// The minimum intensity is subtracted in the integer domain first; a
/// uniform shift then yields the byte-identical working image, making the
/// brightness invariance exact rather than subject to float rounding.
pub fn phash64(frame: &Frame) -> u64 {
    let min = frame.pixels.iter().copied().min().unwrap_or(0);
    let shifted = Frame {
        width: frame.width,
        height: frame.height,
        pixels: frame.pixels.iter().map(|&p| p - min).collect(),
        t: frame.t,
    };
    let px = resize_bilinear(&shifted, 32, 32);
    let coeffs = dct2d(&px, 32, 32);
    let mut block = [0.0f64; 64];
    for v in 0..8 {
        for u in 0..8 {
            block[v * 8 + u] = coeffs[v * 32 + u];
        }
    }
    block[0] = 0.0;
    let med = median_of(&block);
    let mut hash = 0u64;
    for (i, &c) in block.iter().enumerate() {
        if c > med {
            hash |= 1u64 << i;
        }
    }
    hash
}

/// Hamming distance between two 64-bit hashes.
#[inline]
pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// 16-char lowercase hex rendering used in logs and bank dumps.
pub fn hash_hex(h: u64) -> String {
    format!("{h:016x}")
}

pub fn hash_from_hex(s: &str) -> Option<u64> {
    if s.len() != 16 {
        return None;
    }
    u64::from_str_radix(s, 16).ok()
}

const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);
const SSIM_WINDOW: usize = 8;
const SSIM_STRIDE: usize = 4;

fn window_ssim(a: &Frame, b: &Frame, x0: usize, y0: usize, w: usize, h: usize) -> f64 {
    let n = (w * h) as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let stride = a.width as usize;
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let pa = a.pixels[y * stride + x] as f64;
            let pb = b.pixels[y * stride + x] as f64;
            sa += pa;
            sb += pb;
            saa += pa * pa;
            sbb += pb * pb;
            sab += pa * pb;
        }
    }
    let mu_a = sa / n;
    let mu_b = sb / n;
    let var_a = saa / n - mu_a * mu_a;
    let var_b = sbb / n - mu_b * mu_b;
    let cov = sab / n - mu_a * mu_b;
    ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2))
}

/// Global SSIM in [-1,1]: mean of 8x8 sliding windows at stride 4 with the
/// standard stabilizing constants. Frames smaller than one window fall back
/// to a single whole-frame window.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64, VisionError> {
    if a.width != b.width || a.height != b.height {
        return Err(VisionError::SizeMismatch(a.width, a.height, b.width, b.height));
    }
    let (w, h) = (a.width as usize, a.height as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Ok(window_ssim(a, b, 0, 0, w, h));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    let mut y = 0;
    while y + SSIM_WINDOW <= h {
        let mut x = 0;
        while x + SSIM_WINDOW <= w {
            total += window_ssim(a, b, x, y, SSIM_WINDOW, SSIM_WINDOW);
            count += 1;
            x += SSIM_STRIDE;
        }
        y += SSIM_STRIDE;
    }
    Ok(total / count as f64)
}

/// Zero-mean normalized cross-correlation after bilinearly resizing `frame`
/// to the template's dimensions. A constant (zero-variance) frame correlates
/// with nothing and scores 0; constant templates are rejected upstream at
/// milestone-library load time.
pub fn ncc_score(frame: &Frame, template: &Frame) -> f64 {
    let f = resize_bilinear(frame, template.width, template.height);
    let t: Vec<f64> = template.pixels.iter().map(|&p| p as f64).collect();
    let n = t.len() as f64;
    let mean_f = f.iter().sum::<f64>() / n;
    let mean_t = t.iter().sum::<f64>() / n;
    let (mut num, mut den_f, mut den_t) = (0.0, 0.0, 0.0);
    for (a, b) in f.iter().zip(t.iter()) {
        let da = a - mean_f;
        let db = b - mean_t;
        num += da * db;
        den_f += da * da;
        den_t += db * db;
    }
    if den_f <= 0.0 || den_t <= 0.0 {
        return 0.0;
    }
    num / (den_f * den_t).sqrt()
}

const FLOW_DOWNSAMPLE: usize = 4;
const FLOW_BLOCK: usize = 8;
const FLOW_RADIUS: i32 = 4;

/// Box-average 4x4 downsample; partial border cells are dropped.
fn downsample4(frame: &Frame) -> (Vec<f64>, usize, usize) {
    let w = frame.width as usize / FLOW_DOWNSAMPLE;
    let h = frame.height as usize / FLOW_DOWNSAMPLE;
    let stride = frame.width as usize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in 0..FLOW_DOWNSAMPLE {
                for dx in 0..FLOW_DOWNSAMPLE {
                    acc += frame.pixels[(y * FLOW_DOWNSAMPLE + dy) * stride + x * FLOW_DOWNSAMPLE + dx] as f64;
                }
            }
            out[y * w + x] = acc / (FLOW_DOWNSAMPLE * FLOW_DOWNSAMPLE) as f64;
        }
    }
    (out, w, h)
}

fn block_sad(cur: &[f64], prev: &[f64], w: usize, bx: usize, by: usize, dx: i32, dy: i32) -> f64 {
    let mut acc = 0.0;
    for y in 0..FLOW_BLOCK {
        let cy = by + y;
        let py = (cy as i32 + dy) as usize;
        for x in 0..FLOW_BLOCK {
            let cx = bx + x;
            let px = (cx as i32 + dx) as usize;
            acc += (cur[cy * w + cx] - prev[py * w + px]).abs();
        }
    }
    acc
}

/// Median optical-flow magnitude in full-frame pixels per frame.
///
/// Block matching at quarter resolution: 8x8 tiles, exhaustive SAD search in
/// +-4 px with zero displacement preferred on ties, parabolic sub-pixel
/// refinement per axis (skipped on a perfect match so identical frames report
/// exactly zero), then the median of block magnitudes rescaled by 4.
pub fn median_flow(prev: &Frame, cur: &Frame) -> Result<f64, VisionError> {
    if prev.width != cur.width || prev.height != cur.height {
        return Err(VisionError::SizeMismatch(prev.width, prev.height, cur.width, cur.height));
    }
    let (p, w, h) = downsample4(prev);
    let (c, _, _) = downsample4(cur);
    if w < FLOW_BLOCK || h < FLOW_BLOCK {
        return Ok(0.0);
    }
    let mut magnitudes = Vec::new();
    let mut by = 0;
    while by + FLOW_BLOCK <= h {
        let mut bx = 0;
        while bx + FLOW_BLOCK <= w {
            let valid = |dx: i32, dy: i32| {
                bx as i32 + dx >= 0
                    && by as i32 + dy >= 0
                    && bx as i32 + dx + FLOW_BLOCK as i32 <= w as i32
                    && by as i32 + dy + FLOW_BLOCK as i32 <= h as i32
            };
            let mut best = (0i32, 0i32, block_sad(&c, &p, w, bx, by, 0, 0));
            for dy in -FLOW_RADIUS..=FLOW_RADIUS {
                for dx in -FLOW_RADIUS..=FLOW_RADIUS {
                    if (dx == 0 && dy == 0) || !valid(dx, dy) {
                        continue;
                    }
                    let sad = block_sad(&c, &p, w, bx, by, dx, dy);
                    if sad < best.2 {
                        best = (dx, dy, sad);
                    }
                }
            }
            let (bdx, bdy, bsad) = best;
            let (mut fx, mut fy) = (bdx as f64, bdy as f64);
            if bsad > 0.0 {
                if valid(bdx - 1, bdy) && valid(bdx + 1, bdy) {
                    let s0 = block_sad(&c, &p, w, bx, by, bdx - 1, bdy);
                    let s2 = block_sad(&c, &p, w, bx, by, bdx + 1, bdy);
                    let den = s0 - 2.0 * bsad + s2;
                    if den > 0.0 {
                        fx += ((s0 - s2) / (2.0 * den)).clamp(-0.5, 0.5);
                    }
                }
                if valid(bdx, bdy - 1) && valid(bdx, bdy + 1) {
                    let s0 = block_sad(&c, &p, w, bx, by, bdx, bdy - 1);
                    let s2 = block_sad(&c, &p, w, bx, by, bdx, bdy + 1);
                    let den = s0 - 2.0 * bsad + s2;
                    if den > 0.0 {
                        fy += ((s0 - s2) / (2.0 * den)).clamp(-0.5, 0.5);
                    }
                }
            }
            magnitudes.push((fx * fx + fy * fy).sqrt() * FLOW_DOWNSAMPLE as f64);
            bx += FLOW_BLOCK;
        }
        by += FLOW_BLOCK;
    }
    if magnitudes.is_empty() {
        return Ok(0.0);
    }
    Ok(median_of(&magnitudes))
}

/// Deterministic frame embedding: resize to 16x16, 2D DCT, flatten the
/// top-left 8x8 block excluding DC (63 values) plus the mean intensity,
/// then L2-normalize. An all-zero frame maps to the canonical unit vector
/// e1 rather than dividing by zero.
pub fn embed(frame: &Frame) -> Embedding {
    let px = resize_bilinear(frame, 16, 16);
    let coeffs = dct2d(&px, 16, 16);
    let mut values = Vec::with_capacity(EMBED_DIM);
    for v in 0..8 {
        for u in 0..8 {
            if u == 0 && v == 0 {
                continue;
            }
            values.push(coeffs[v * 16 + u]);
        }
    }
    values.push(px.iter().sum::<f64>() / px.len() as f64);
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e1 = vec![0.0; EMBED_DIM];
        e1[0] = 1.0;
        return Embedding { values: e1 };
    }
    for v in &mut values {
        *v /= norm;
    }
    Embedding { values }
}

/// Cosine similarity of two embeddings (a dot product, since inputs are
/// unit-norm by construction).
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, VisionError> {
    if a.dim() != b.dim() {
        return Err(VisionError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(a.values.iter().zip(b.values.iter()).map(|(x, y)| x * y).sum())
}

/// Serialize a frame as binary PGM (P5, maxval 255).
pub fn write_pgm<W: Write>(frame: &Frame, mut out: W) -> Result<(), VisionError> {
    write!(out, "P5\n{} {}\n255\n", frame.width, frame.height)?;
    out.write_all(&frame.pixels)?;
    Ok(())
}

/// Parse a binary PGM (P5, maxval 255) produced by [`write_pgm`] or any
/// conforming writer. Comment lines are tolerated in the header.
pub fn read_pgm<R: Read>(reader: R, t: u64) -> Result<Frame, VisionError> {
    let mut r = io::BufReader::new(reader);
    let mut header = Vec::new();
    let mut fields = Vec::new();
    while fields.len() < 4 {
        header.clear();
        let n = r.read_until(b'\n', &mut header)?;
        if n == 0 {
            return Err(VisionError::BadPgm("truncated header".into()));
        }
        let line = String::from_utf8_lossy(&header);
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        fields.extend(line.split_whitespace().map(str::to_string));
    }
    if fields[0] != "P5" {
        return Err(VisionError::BadPgm(format!("expected P5, got {}", fields[0])));
    }
    let width: u32 = fields[1].parse().map_err(|_| VisionError::BadPgm("bad width".into()))?;
    let height: u32 = fields[2].parse().map_err(|_| VisionError::BadPgm("bad height".into()))?;
    let maxval: u32 = fields[3].parse().map_err(|_| VisionError::BadPgm("bad maxval".into()))?;
    if maxval != 255 {
        return Err(VisionError::BadPgm(format!("unsupported maxval {maxval}")));
    }
    let mut pixels = vec![0u8; (width * height) as usize];
    r.read_exact(&mut pixels)
        .map_err(|_| VisionError::BadPgm("truncated pixel data".into()))?;
    Frame::new(width, height, pixels, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Horizontal+vertical gradient test card used across the hash tests.
    pub fn gradient_frame(w: u32, h: u32) -> Frame {
        let mut pixels = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                let v = (x as f64 / (w - 1) as f64 * 160.0 + y as f64 / (h - 1) as f64 * 60.0) as u8;
                pixels.push(v);
            }
        }
        Frame::new(w, h, pixels, 0).unwrap()
    }

    #[test]
    fn phash_identical_frames_distance_zero() {
        let f = gradient_frame(64, 48);
        assert_eq!(hamming(phash64(&f), phash64(&f)), 0);
    }

    #[test]
    fn phash_constant_frame_is_all_zero_bits() {
        for v in [0u8, 100, 255] {
            let f = Frame::filled(32, 32, v, 0);
            assert_eq!(phash64(&f), 0, "constant {v}");
        }
    }

    #[test]
    fn phash_brightness_shift_changes_no_bits() {
        let f = gradient_frame(64, 48);
        let shifted = Frame::new(64, 48, f.pixels.iter().map(|&p| p + 30).collect(), 1).unwrap();
        assert_eq!(hamming(phash64(&f), phash64(&shifted)), 0);
    }

    #[test]
    fn hamming_basics() {
        assert_eq!(hamming(0xdead_beef_0123_4567, 0xdead_beef_0123_4567), 0);
        assert_eq!(hamming(0xdead_beef_0123_4567, !0xdead_beef_0123_4567), 64);
        assert_eq!(hamming(0xaaaa_aaaa_aaaa_aaaa, 0x5555_5555_5555_5555), 64);
    }

    #[test]
    fn hash_hex_roundtrip() {
        let h = 0x00ff_a5a5_0000_0001u64;
        assert_eq!(hash_hex(h), "00ffa5a500000001");
        assert_eq!(hash_from_hex(&hash_hex(h)), Some(h));
    }

    #[test]
    fn ssim_self_is_one() {
        let f = gradient_frame(40, 40);
        assert!((ssim(&f, &f).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_constant_frames_closed_form() {
        // For two constant images the window formula collapses to
        // C1*C2 / ((mu_a^2 + mu_b^2 + C1) * C2).
        let a = Frame::filled(16, 16, 0, 0);
        let b = Frame::filled(16, 16, 255, 0);
        let expected = (SSIM_C1 * SSIM_C2) / ((255.0f64 * 255.0 + SSIM_C1) * SSIM_C2);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, expected {expected}");
        assert!(got < 0.01);
    }

    #[test]
    fn ssim_dimension_mismatch_is_error() {
        let a = Frame::filled(16, 16, 10, 0);
        let b = Frame::filled(16, 8, 10, 0);
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn ncc_self_and_inverse() {
        let t = gradient_frame(32, 24);
        assert!((ncc_score(&t, &t) - 1.0).abs() < 1e-9);
        let inv = Frame::new(32, 24, t.pixels.iter().map(|&p| 255 - p).collect(), 0).unwrap();
        assert!((ncc_score(&inv, &t) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn ncc_offset_invariant() {
        let t = gradient_frame(32, 24);
        let off = Frame::new(32, 24, t.pixels.iter().map(|&p| p + 20).collect(), 0).unwrap();
        assert!((ncc_score(&off, &t) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ncc_constant_frame_scores_zero() {
        let t = gradient_frame(32, 24);
        let flat = Frame::filled(32, 24, 128, 0);
        assert_eq!(ncc_score(&flat, &t), 0.0);
    }

    #[test]
    fn flow_identical_frames_is_zero() {
        let f = gradient_frame(96, 96);
        assert_eq!(median_flow(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn flow_constant_frames_is_zero() {
        let a = Frame::filled(96, 96, 77, 0);
        let b = Frame::filled(96, 96, 77, 1);
        assert_eq!(median_flow(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn embed_unit_norm_and_self_cosine() {
        let f = gradient_frame(80, 60);
        let z = embed(&f);
        let norm: f64 = z.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert!((cosine(&z, &z).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn embed_all_zero_frame_is_e1() {
        let f = Frame::filled(20, 20, 0, 0);
        let z = embed(&f);
        assert_eq!(z.values[0], 1.0);
        assert!(z.values[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embed_deterministic() {
        let f = gradient_frame(80, 60);
        assert_eq!(embed(&f), embed(&f));
    }

    #[test]
    fn cosine_dimension_mismatch_is_error() {
        let a = Embedding { values: vec![1.0, 0.0] };
        let b = Embedding { values: vec![1.0, 0.0, 0.0] };
        assert!(cosine(&a, &b).is_err());
    }

    #[test]
    fn pgm_roundtrip() {
        let f = gradient_frame(33, 17);
        let mut buf = Vec::new();
        write_pgm(&f, &mut buf).unwrap();
        let g = read_pgm(&buf[..], f.t).unwrap();
        assert_eq!(f, g);
    }
}
