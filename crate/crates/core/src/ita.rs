//! Skin tone estimation by individual typology angle.
//!
//! Pixels are converted sRGB -> linear RGB -> XYZ (D65, 2 degree observer)
//! -> CIELab; the angle `atan((L_mean - 50) / b_mean)` in degrees is taken
//! over the masked (non-lesion) pixels and bucketed into three categories.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// Linear sRGB -> XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

// Reference white as the image of RGB (1, 1, 1), so white maps to a = b = 0.
const WHITE: [f64; 3] = [
    RGB_TO_XYZ[0][0] + RGB_TO_XYZ[0][1] + RGB_TO_XYZ[0][2],
    RGB_TO_XYZ[1][0] + RGB_TO_XYZ[1][1] + RGB_TO_XYZ[1][2],
    RGB_TO_XYZ[2][0] + RGB_TO_XYZ[2][1] + RGB_TO_XYZ[2][2],
];

const LIGHT_ABOVE: f64 = 41.0;
const INTERMEDIATE_ABOVE: f64 = 28.0;

fn srgb_to_linear(channel: u8) -> f64 {
    let c = f64::from(channel) / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// CIELab `(L*, a*, b*)` of an 8-bit sRGB colour.
pub fn srgb_to_lab(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let lin = [srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b)];
    let xyz: Vec<f64> = RGB_TO_XYZ
        .iter()
        .zip(WHITE)
        .map(|(row, w)| row.iter().zip(&lin).map(|(m, c)| m * c).sum::<f64>() / w)
        .collect();
    let (fx, fy, fz) = (lab_f(xyz[0]), lab_f(xyz[1]), lab_f(xyz[2]));
    (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SkinTone {
    Light,
    Intermediate,
    Dark,
}

impl SkinTone {
    pub fn as_str(self) -> &'static str {
        match self {
            SkinTone::Light => "Light",
            SkinTone::Intermediate => "Intermediate",
            SkinTone::Dark => "Dark",
        }
    }
}

impl fmt::Display for SkinTone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SkinTone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "light" => Ok(SkinTone::Light),
            "intermediate" => Ok(SkinTone::Intermediate),
            "dark" => Ok(SkinTone::Dark),
            _ => Err(Error::InvalidArgument(format!("unknown skin tone `{s}`"))),
        }
    }
}

/// Light above 41 degrees, Intermediate in (28, 41], Dark at or below 28.
pub fn categorize_ita(ita_degrees: f64) -> SkinTone {
    if ita_degrees > LIGHT_ABOVE {
        SkinTone::Light
    } else if ita_degrees > INTERMEDIATE_ABOVE {
        SkinTone::Intermediate
    } else {
        SkinTone::Dark
    }
}

/// Angle in degrees from Lab means. With `b_mean == 0` the angle is the
/// arctangent limit: +90 above L = 50, -90 below, 0 at 50.
pub fn ita_from_means(l_mean: f64, b_mean: f64) -> f64 {
    if b_mean == 0.0 {
        log::warn!("b* mean is zero; using the limiting angle");
        return match l_mean.partial_cmp(&50.0) {
            Some(std::cmp::Ordering::Greater) => 90.0,
            Some(std::cmp::Ordering::Less) => -90.0,
            _ => 0.0,
        };
    }
    ((l_mean - 50.0) / b_mean).atan().to_degrees()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn uniform(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![rgb; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    #[cfg(feature = "png")]
    pub fn open(path: &std::path::Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Self::new(w as usize, h as usize, pixels)
    }
}

/// Pixels included in the skin statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    included: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, included: Vec<bool>) -> Result<Self> {
        if included.len() != width * height {
            return Err(Error::Shape(format!(
                "{} mask entries for a {width}x{height} mask",
                included.len()
            )));
        }
        Ok(Self {
            width,
            height,
            included,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            included: vec![true; width * height],
        }
    }

    pub fn included(&self) -> &[bool] {
        &self.included
    }

    pub fn count(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    /// Loads a mask image; any nonzero pixel is included.
    #[cfg(feature = "png")]
    pub fn open(path: &std::path::Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .to_luma8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.pixels().map(|p| p.0[0] != 0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItaRecord {
    pub sample_id: String,
    pub l_mean: f64,
    pub b_mean: f64,
    pub ita_degrees: f64,
    pub category: SkinTone,
}

impl ItaRecord {
    pub fn from_means(sample_id: impl Into<String>, l_mean: f64, b_mean: f64) -> Self {
        let ita_degrees = ita_from_means(l_mean, b_mean);
        Self {
            sample_id: sample_id.into(),
            l_mean,
            b_mean,
            ita_degrees,
            category: categorize_ita(ita_degrees),
        }
    }
}

/// ITA of `image` over the pixels selected by `mask`; the whole image when
/// `mask` is `None`.
pub fn compute_ita(sample_id: &str, image: &RgbImage, mask: Option<&PixelMask>) -> Result<ItaRecord> {
    let full;
    let mask = match mask {
        Some(m) => m,
        None => {
            log::warn!("{sample_id}: no mask, using every pixel");
            full = PixelMask::full(image.width, image.height);
            &full
        }
    };
    if (mask.width, mask.height) != (image.width, image.height) {
        return Err(Error::Shape(format!(
            "{sample_id}: mask is {}x{}, image is {}x{}",
            mask.width, mask.height, image.width, image.height
        )));
    }
    let (mut l_sum, mut b_sum, mut n) = (0.0, 0.0, 0usize);
    for (px, _) in image.pixels.iter().zip(&mask.included).filter(|(_, &m)| m) {
        let (l, _, b) = srgb_to_lab(px[0], px[1], px[2]);
        l_sum += l;
        b_sum += b;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument(format!("{sample_id}: mask selects no pixels")));
    }
    Ok(ItaRecord::from_means(sample_id, l_sum / n as f64, b_sum / n as f64))
}

pub const ITA_CSV_HEADER: &str = "sample_id,l_mean,b_mean,ita_degrees,category";

pub fn ita_records_to_csv(records: &[ItaRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Invariant(format!("CSV serialisation failed: {e}"));
    w.write_record(ITA_CSV_HEADER.split(',')).map_err(to_err)?;
    for r in records {
        w.write_record([
            r.sample_id.clone(),
            r.l_mean.to_string(),
            r.b_mean.to_string(),
            r.ita_degrees.to_string(),
            r.category.to_string(),
        ])
        .map_err(to_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Invariant(format!("CSV serialisation failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
}

pub fn ita_records_from_csv(path: &std::path::Path) -> Result<Vec<ItaRecord>> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_owned(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        if row.len() != 5 {
            return Err(csv_err(format!("expected 5 columns, found {}", row.len())));
        }
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| csv_err(format!("non-numeric value {:?}", &row[i])))
        };
        out.push(ItaRecord {
            sample_id: row[0].to_owned(),
            l_mean: num(1)?,
            b_mean: num(2)?,
            ita_degrees: num(3)?,
            category: row[4].parse()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_white_and_black() {
        let (l, a, b) = srgb_to_lab(255, 255, 255);
        assert!((l - 100.0).abs() < 1e-9);
        assert!(a.abs() < 0.01 && b.abs() < 0.01);
        let (l, a, b) = srgb_to_lab(0, 0, 0);
        assert_eq!((l, a, b), (0.0, 0.0, 0.0));
    }

    // Expected values from an independent colorimetry library (scikit-image
    // rgb2lab, D65); its slightly different white point shifts a*, b* by
    // at most ~0.005.
    #[test]
    fn matches_independent_colorimetry() {
        let cases = [
            ([119, 119, 119], [50.034_438_8, -0.001_397_5, 0.002_649_0]),
            ([224, 172, 140], [74.348_517_9, 14.805_877_9, 23.808_846_6]),
            ([141, 85, 36], [41.671_122_8, 18.905_035_4, 37.239_922_6]),
        ];
        for (rgb, lab) in cases {
            let (l, a, b) = srgb_to_lab(rgb[0], rgb[1], rgb[2]);
            assert!((l - lab[0]).abs() < 0.01, "{rgb:?} L {l}");
            assert!((a - lab[1]).abs() < 0.02, "{rgb:?} a {a}");
            assert!((b - lab[2]).abs() < 0.02, "{rgb:?} b {b}");
        }
    }

    #[test]
    fn gray_axis_is_neutral() {
        for v in (0..=255).step_by(5) {
            let (_, a, b) = srgb_to_lab(v, v, v);
            assert!(a.abs() < 0.5 && b.abs() < 0.5, "gray {v}: a={a} b={b}");
        }
    }

    #[test]
    fn category_boundaries() {
        assert_eq!(categorize_ita(41.0), SkinTone::Intermediate);
        assert_eq!(categorize_ita(28.0), SkinTone::Dark);
        assert_eq!(categorize_ita(41.0001), SkinTone::Light);
        assert_eq!(categorize_ita(28.0001), SkinTone::Intermediate);
        assert_eq!(categorize_ita(-60.0), SkinTone::Dark);
    }

    #[test]
    fn analytic_angles() {
        assert_eq!(ita_from_means(50.0, 12.0), 0.0);
        assert!((ita_from_means(70.0, 20.0) - 45.0).abs() < 1e-12);
        assert_eq!(ItaRecord::from_means("x", 70.0, 20.0).category, SkinTone::Light);
        let r = ItaRecord::from_means("y", 64.0, 20.0);
        assert!((r.ita_degrees - 34.992_020_198_558_66).abs() < 1e-9);
        assert_eq!(r.category, SkinTone::Intermediate);
    }

    #[test]
    fn zero_b_limit() {
        assert_eq!(ita_from_means(60.0, 0.0), 90.0);
        assert_eq!(ita_from_means(40.0, 0.0), -90.0);
        assert_eq!(ita_from_means(50.0, 0.0), 0.0);
    }

    #[test]
    fn mask_selects_pixels() {
        let skin = [224, 172, 140];
        let lesion = [90, 20, 20];
        let img = RgbImage::new(2, 2, vec![skin, lesion, skin, lesion]).unwrap();
        let mask = PixelMask::new(2, 2, vec![true, false, true, false]).unwrap();
        let masked = compute_ita("s", &img, Some(&mask)).unwrap();
        let cropped = compute_ita("s", &RgbImage::uniform(1, 2, skin), None).unwrap();
        assert_eq!(masked, cropped);

        let empty = PixelMask::new(2, 2, vec![false; 4]).unwrap();
        assert!(compute_ita("s", &img, Some(&empty)).is_err());
        assert!(compute_ita("s", &img, Some(&PixelMask::full(3, 1))).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![ItaRecord::from_means("a", 70.0, 20.0), ItaRecord::from_means("b", 40.0, 15.0)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ita.csv");
        std::fs::write(&path, ita_records_to_csv(&recs).unwrap()).unwrap();
        assert_eq!(ita_records_from_csv(&path).unwrap(), recs);
    }
}
