//! Binary-to-image featurization.
//!
//! A file's bytes are read as 8-bit grayscale pixels, wrapped into rows at a
//! width chosen from the file size, resized to a small square (32x32 by
//! default), and flattened row-major into a fixed-length feature vector.
//! Every step is a pure function of its inputs, so identical bytes always
//! produce identical vectors.

use crate::error::{Error, Result};

/// Rectangular grid of 8-bit pixels, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::shape(
                format!("{} pixels ({width}x{height})", width * height),
                format!("{} pixels", pixels.len()),
            ));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
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

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Encodes as binary PGM ("P5", maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parses a binary PGM ("P5", maxval 255) produced by [`Self::to_pgm`] or
    /// any compatible writer. `#` comment lines in the header are skipped.
    pub fn from_pgm(data: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields: Vec<u64> = Vec::new();

        if data.len() < 2 || &data[0..2] != b"P5" {
            return Err(Error::parse(1, "not a binary PGM (missing P5 magic)"));
        }
        pos += 2;

        // Header: three whitespace-separated integers (width, height, maxval),
        // then exactly one whitespace byte before the pixel payload.
        while fields.len() < 3 {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < data.len() && data[pos].is_ascii_digit() {
                pos += 1;
            }
            if pos == start {
                return Err(Error::parse(1, "malformed PGM header"));
            }
            let text = std::str::from_utf8(&data[start..pos]).expect("digits are ascii");
            let value: u64 = text
                .parse()
                .map_err(|_| Error::parse(1, format!("bad PGM header field {text:?}")))?;
            fields.push(value);
        }
        if pos >= data.len() || !data[pos].is_ascii_whitespace() {
            return Err(Error::parse(1, "malformed PGM header"));
        }
        pos += 1;

        let (width, height, maxval) = (fields[0] as usize, fields[1] as usize, fields[2]);
        if maxval != 255 {
            return Err(Error::parse(1, format!("unsupported PGM maxval {maxval}")));
        }
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| Error::parse(1, "PGM dimensions overflow"))?;
        let payload = &data[pos..];
        if payload.len() != expected {
            return Err(Error::shape(
                format!("{expected} payload bytes"),
                format!("{} payload bytes", payload.len()),
            ));
        }
        GrayImage::new(width, height, payload.to_vec())
    }
}

/// Interpolation used when resizing to the square feature image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Index-mapped nearest neighbor: bit-exact and platform independent.
    #[default]
    Nearest,
    /// 4-neighbor weighted average, rounded half-up and clamped to [0, 255].
    Bilinear,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Interpolation::Nearest),
            "bilinear" => Ok(Interpolation::Bilinear),
            other => Err(Error::InvalidArgument(format!(
                "unknown interpolation {other:?} (expected nearest or bilinear)"
            ))),
        }
    }
}

/// Maps a file's byte count to the pixel width of its pre-resize image.
///
/// Bands are (inclusive max byte count, width) pairs in increasing order;
/// anything beyond the last band gets the fallback width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WidthRule {
    bands: Vec<(u64, u32)>,
    fallback: u32,
}

impl Default for WidthRule {
    /// Size-banded widths: <10 KiB -> 32, <30 KiB -> 64, <60 KiB -> 128,
    /// <100 KiB -> 256, <200 KiB -> 384, <500 KB -> 512, <1 MiB -> 768,
    /// else 1024.
    fn default() -> Self {
        WidthRule {
            bands: vec![
                (10_240 - 1, 32),
                (30_720 - 1, 64),
                (61_440 - 1, 128),
                (102_400 - 1, 256),
                (204_800 - 1, 384),
                (512_000 - 1, 512),
                (1_048_576 - 1, 768),
            ],
            fallback: 1024,
        }
    }
}

impl WidthRule {
    pub fn new(bands: Vec<(u64, u32)>, fallback: u32) -> Result<Self> {
        if fallback == 0 {
            return Err(Error::InvalidArgument("fallback width must be positive".into()));
        }
        let mut prev: Option<u64> = None;
        for &(max, width) in &bands {
            if width == 0 {
                return Err(Error::InvalidArgument("band width must be positive".into()));
            }
            if let Some(p) = prev {
                if max <= p {
                    return Err(Error::InvalidArgument(
                        "band byte counts must be strictly increasing".into(),
                    ));
                }
            }
            prev = Some(max);
        }
        Ok(WidthRule { bands, fallback })
    }

    /// Fixed-width rule with a single open-ended band. Mostly for tests and
    /// the exact-fit paths where the caller controls the geometry.
    pub fn fixed(width: u32) -> Self {
        WidthRule {
            bands: Vec::new(),
            fallback: width,
        }
    }

    /// Width of the first band whose max byte count covers `byte_count`.
    pub fn select_width(&self, byte_count: u64) -> Result<u32> {
        if byte_count == 0 {
            return Err(Error::EmptyInput("cannot pick a width for 0 bytes".into()));
        }
        for &(max, width) in &self.bands {
            if byte_count <= max {
                return Ok(width);
            }
        }
        Ok(self.fallback)
    }

    /// Parses the width-rule override file format: one `MAX_BYTES WIDTH` line
    /// per band (MAX_BYTES is an exclusive upper bound, matching the default
    /// rule's "< N bytes" reading), then a final `* WIDTH` line for the
    /// open-ended band. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut bands = Vec::new();
        let mut fallback: Option<u32> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if fallback.is_some() {
                return Err(Error::parse(line_no, "bands after the open-ended `*` band"));
            }
            let mut parts = line.split_whitespace();
            let bound = parts.next().expect("non-empty line has a first token");
            let width_text = parts
                .next()
                .ok_or_else(|| Error::parse(line_no, "expected `MAX_BYTES WIDTH` or `* WIDTH`"))?;
            if parts.next().is_some() {
                return Err(Error::parse(line_no, "too many fields"));
            }
            let width: u32 = width_text
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad width {width_text:?}")))?;
            if bound == "*" {
                fallback = Some(width);
            } else {
                let max: u64 = bound
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad byte count {bound:?}")))?;
                if max == 0 {
                    return Err(Error::parse(line_no, "band limit must be positive"));
                }
                bands.push((max - 1, width));
            }
        }
        let fallback =
            fallback.ok_or_else(|| Error::parse(text.lines().count().max(1), "missing `* WIDTH` band"))?;
        WidthRule::new(bands, fallback)
    }
}

/// How binaries become fixed-length feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// Pixels per side of the resized square; the vector length is `side^2`.
    pub side: usize,
    pub interpolation: Interpolation,
    pub width_rule: WidthRule,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            side: 32,
            interpolation: Interpolation::Nearest,
            width_rule: WidthRule::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side < 2 {
            return Err(Error::InvalidArgument(format!(
                "side must be at least 2, got {}",
                self.side
            )));
        }
        Ok(())
    }

    pub fn feature_len(&self) -> usize {
        self.side * self.side
    }
}

/// Flat vector of `side^2` byte values (1024 at the default side of 32).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector(Vec<u8>);

impl FeatureVector {
    pub fn new(values: Vec<u8>) -> Self {
        FeatureVector(values)
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<FeatureVector> for Vec<u8> {
    fn from(v: FeatureVector) -> Vec<u8> {
        v.0
    }
}

/// Wraps bytes into a row-major image: width from the rule, height
/// `ceil(len / width)`, the final partial row zero-padded.
pub fn bytes_to_image(bytes: &[u8], rule: &WidthRule) -> Result<GrayImage> {
    if bytes.is_empty() {
        return Err(Error::EmptyInput("cannot image an empty byte stream".into()));
    }
    let width = rule.select_width(bytes.len() as u64)? as usize;
    let height = bytes.len().div_ceil(width);
    let mut pixels = vec![0u8; width * height];
    pixels[..bytes.len()].copy_from_slice(bytes);
    GrayImage::new(width, height, pixels)
}

/// Resizes to `side x side` with the requested interpolation.
pub fn resize_image(img: &GrayImage, side: usize, interp: Interpolation) -> Result<GrayImage> {
    if side < 2 {
        return Err(Error::InvalidArgument(format!(
            "target side must be at least 2, got {side}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let mut pixels = vec![0u8; side * side];
    match interp {
        Interpolation::Nearest => {
            for r in 0..side {
                let src_r = r * h / side;
                for c in 0..side {
                    let src_c = c * w / side;
                    pixels[r * side + c] = img.pixel(src_r, src_c);
                }
            }
        }
        Interpolation::Bilinear => {
            // Half-pixel-center mapping; weights from the fractional offset
            // of the source coordinate between its two integer neighbors.
            let scale_r = h as f64 / side as f64;
            let scale_c = w as f64 / side as f64;
            for r in 0..side {
                let src = ((r as f64 + 0.5) * scale_r - 0.5).clamp(0.0, (h - 1) as f64);
                let r0 = src.floor() as usize;
                let r1 = (r0 + 1).min(h - 1);
                let fr = src - r0 as f64;
                for c in 0..side {
                    let src = ((c as f64 + 0.5) * scale_c - 0.5).clamp(0.0, (w - 1) as f64);
                    let c0 = src.floor() as usize;
                    let c1 = (c0 + 1).min(w - 1);
                    let fc = src - c0 as f64;
                    let top = img.pixel(r0, c0) as f64 * (1.0 - fc) + img.pixel(r0, c1) as f64 * fc;
                    let bottom =
                        img.pixel(r1, c0) as f64 * (1.0 - fc) + img.pixel(r1, c1) as f64 * fc;
                    let value = top * (1.0 - fr) + bottom * fr;
                    pixels[r * side + c] = round_half_up_clamped(value);
                }
            }
        }
    }
    GrayImage::new(side, side, pixels)
}

fn round_half_up_clamped(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Row-major flattening of a square image whose side matches `side`.
pub fn flatten(img: &GrayImage, side: usize) -> Result<FeatureVector> {
    if img.width() != side || img.height() != side {
        return Err(Error::shape(
            format!("{side}x{side} image"),
            format!("{}x{} image", img.width(), img.height()),
        ));
    }
    Ok(FeatureVector(img.pixels().to_vec()))
}

/// Inverse of [`flatten`]: rebuilds the square image from a feature vector.
pub fn unflatten(features: &FeatureVector, side: usize) -> Result<GrayImage> {
    if features.len() != side * side {
        return Err(Error::shape(
            format!("{} values ({side}x{side})", side * side),
            format!("{} values", features.len()),
        ));
    }
    GrayImage::new(side, side, features.values().to_vec())
}

/// Full pipeline: wrap bytes into an image, resize, flatten.
pub fn featurize_bytes(bytes: &[u8], config: &FeatureConfig) -> Result<FeatureVector> {
    config.validate()?;
    let img = bytes_to_image(bytes, &config.width_rule)?;
    let resized = resize_image(&img, config.side, config.interpolation)?;
    flatten(&resized, config.side)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_width_default_bands() {
        let rule = WidthRule::default();
        assert_eq!(rule.select_width(5_000).unwrap(), 32);
        assert_eq!(rule.select_width(25_000).unwrap(), 64);
        assert_eq!(rule.select_width(10_239).unwrap(), 32);
        assert_eq!(rule.select_width(10_240).unwrap(), 64);
        assert_eq!(rule.select_width(2_000_000).unwrap(), 1024);
    }

    #[test]
    fn select_width_rejects_empty() {
        let rule = WidthRule::default();
        assert!(matches!(rule.select_width(0), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn bytes_to_image_pads_final_row() {
        let img = bytes_to_image(&[10, 20, 30, 40, 50, 60, 70], &WidthRule::fixed(4)).unwrap();
        assert_eq!(img.width(), 4);
        assert_eq!(img.height(), 2);
        assert_eq!(img.pixels(), &[10, 20, 30, 40, 50, 60, 70, 0]);
    }

    #[test]
    fn bytes_to_image_exact_fit() {
        let img = bytes_to_image(&[1, 2, 3, 4], &WidthRule::fixed(4)).unwrap();
        assert_eq!((img.width(), img.height()), (4, 1));
        assert_eq!(img.pixels(), &[1, 2, 3, 4]);
    }

    #[test]
    fn bytes_to_image_rejects_empty() {
        assert!(matches!(
            bytes_to_image(&[], &WidthRule::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn nearest_resize_to_same_size_is_identity() {
        let img = bytes_to_image(&[1, 2, 3, 4, 5, 6, 7, 8, 9], &WidthRule::fixed(3)).unwrap();
        let out = resize_image(&img, 3, Interpolation::Nearest).unwrap();
        assert_eq!(out, img);
    }

    // Expected grid computed from out(r,c) = in(r*H/n, c*W/n) at each of the
    // 16 output coordinates.
    #[test]
    fn nearest_upscale_2x2_to_4x4() {
        let img = GrayImage::new(2, 2, vec![0, 255, 0, 255]).unwrap();
        let out = resize_image(&img, 4, Interpolation::Nearest).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let expected = if c < 2 { 0 } else { 255 };
                assert_eq!(out.pixel(r, c), expected, "at ({r},{c})");
            }
        }
    }

    #[test]
    fn constant_image_stays_constant_under_both_interpolations() {
        let img = GrayImage::new(5, 3, vec![77; 15]).unwrap();
        for interp in [Interpolation::Nearest, Interpolation::Bilinear] {
            for side in [2, 4, 8, 32] {
                let out = resize_image(&img, side, interp).unwrap();
                assert!(out.pixels().iter().all(|&p| p == 77), "{interp:?} side {side}");
            }
        }
    }

    #[test]
    fn flatten_row_major() {
        let img = GrayImage::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(flatten(&img, 2).unwrap().values(), &[1, 2, 3, 4]);
    }

    #[test]
    fn flatten_rejects_wrong_side() {
        let img = GrayImage::new(3, 3, vec![0; 9]).unwrap();
        assert!(matches!(flatten(&img, 32), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn featurize_32x32_exact_fit_is_identity() {
        let bytes: Vec<u8> = (0..1024).map(|i| (i % 256) as u8).collect();
        let config = FeatureConfig {
            width_rule: WidthRule::fixed(32),
            ..FeatureConfig::default()
        };
        let vec = featurize_bytes(&bytes, &config).unwrap();
        assert_eq!(vec.values(), bytes.as_slice());
    }

    #[test]
    fn featurize_is_deterministic() {
        let bytes: Vec<u8> = (0..5_000).map(|i| (i * 31 % 256) as u8).collect();
        let config = FeatureConfig::default();
        assert_eq!(
            featurize_bytes(&bytes, &config).unwrap(),
            featurize_bytes(&bytes, &config).unwrap()
        );
    }

    #[test]
    fn pgm_header_layout() {
        let img = GrayImage::new(1, 1, vec![7]).unwrap();
        assert_eq!(img.to_pgm(), b"P5\n1 1\n255\n\x07");
    }

    #[test]
    fn pgm_payload_size() {
        let img = GrayImage::new(4, 2, vec![9; 8]).unwrap();
        let pgm = img.to_pgm();
        let header_len = b"P5\n4 2\n255\n".len();
        assert_eq!(pgm.len() - header_len, 8);
    }

    #[test]
    fn pgm_round_trip() {
        let img = bytes_to_image(&(0..=255).collect::<Vec<u8>>(), &WidthRule::fixed(16)).unwrap();
        let back = GrayImage::from_pgm(&img.to_pgm()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_rejects_truncation() {
        let img = GrayImage::new(4, 4, vec![1; 16]).unwrap();
        let mut pgm = img.to_pgm();
        pgm.truncate(pgm.len() - 3);
        assert!(GrayImage::from_pgm(&pgm).is_err());
    }

    #[test]
    fn width_rule_parse_round_trips_default() {
        let text = "\
# size bands
10240 32
30720 64
61440 128
102400 256
204800 384
512000 512
1048576 768
* 1024
";
        assert_eq!(WidthRule::parse(text).unwrap(), WidthRule::default());
    }

    #[test]
    fn width_rule_parse_errors_carry_line_numbers() {
        let err = WidthRule::parse("10240 32\nbogus\n* 64\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn width_rule_parse_requires_fallback() {
        assert!(WidthRule::parse("10240 32\n").is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn featurize_shape_and_determinism(
            bytes in prop::collection::vec(any::<u8>(), 1..4000),
            side in 2usize..17,
        ) {
            let config = FeatureConfig { side, ..FeatureConfig::default() };
            let v1 = featurize_bytes(&bytes, &config).unwrap();
            let v2 = featurize_bytes(&bytes, &config).unwrap();
            prop_assert_eq!(v1.len(), side * side);
            prop_assert_eq!(v1, v2);
        }

        #[test]
        fn bytes_to_image_never_drops_bytes(
            bytes in prop::collection::vec(any::<u8>(), 1..2000),
            width in 1u32..64,
        ) {
            let img = bytes_to_image(&bytes, &WidthRule::fixed(width)).unwrap();
            prop_assert_eq!(&img.pixels()[..bytes.len()], bytes.as_slice());
            prop_assert!(img.pixels()[bytes.len()..].iter().all(|&p| p == 0));
        }

        #[test]
        fn nearest_self_resize_is_identity(
            (side, pixels) in (2usize..20).prop_flat_map(|side| {
                (Just(side), prop::collection::vec(any::<u8>(), side * side))
            }),
        ) {
            let img = GrayImage::new(side, side, pixels).unwrap();
            let out = resize_image(&img, side, Interpolation::Nearest).unwrap();
            prop_assert_eq!(out, img);
        }

        #[test]
        fn resize_preserves_value_range(
            bytes in prop::collection::vec(any::<u8>(), 1..600),
            width in 1u32..40,
            side in 2usize..24,
        ) {
            let img = bytes_to_image(&bytes, &WidthRule::fixed(width)).unwrap();
            let lo = *img.pixels().iter().min().unwrap();
            let hi = *img.pixels().iter().max().unwrap();
            for interp in [Interpolation::Nearest, Interpolation::Bilinear] {
                let out = resize_image(&img, side, interp).unwrap();
                for &p in out.pixels() {
                    prop_assert!(p >= lo && p <= hi, "{interp:?}: {p} outside [{lo}, {hi}]");
                }
            }
        }

        #[test]
        fn flatten_unflatten_round_trip(
            (side, values) in (2usize..20).prop_flat_map(|side| {
                (Just(side), prop::collection::vec(any::<u8>(), side * side))
            }),
        ) {
            let fv = FeatureVector::new(values);
            let img = unflatten(&fv, side).unwrap();
            prop_assert_eq!(flatten(&img, side).unwrap(), fv);
        }

        #[test]
        fn pgm_round_trip_lossless(
            bytes in prop::collection::vec(any::<u8>(), 1..500),
            width in 1u32..40,
        ) {
            let img = bytes_to_image(&bytes, &WidthRule::fixed(width)).unwrap();
            prop_assert_eq!(GrayImage::from_pgm(&img.to_pgm()).unwrap(), img);
        }
    }
}
