//! sRGB to CIELAB conversion (D65, 2° observer) and the chromaticity distance
//! used for clustering.

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::image::{Plane, RgbImage8};

/// Linear sRGB to XYZ for the D65 white point.
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

/// Reference white: the XYZ of linear (1, 1, 1), so sRGB white maps to
/// L = 100, a = b = 0.
const WHITE: [f64; 3] = [
    SRGB_TO_XYZ[0][0] + SRGB_TO_XYZ[0][1] + SRGB_TO_XYZ[0][2],
    SRGB_TO_XYZ[1][0] + SRGB_TO_XYZ[1][1] + SRGB_TO_XYZ[1][2],
    SRGB_TO_XYZ[2][0] + SRGB_TO_XYZ[2][1] + SRGB_TO_XYZ[2][2],
];

const DELTA: f64 = 6.0 / 29.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabColor {
    #[serde(rename = "L")]
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

/// L, a and b planes of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub l: Plane,
    pub a: Plane,
    pub b: Plane,
}

impl LabImage {
    pub fn width(&self) -> usize {
        self.l.width()
    }

    pub fn height(&self) -> usize {
        self.l.height()
    }

    pub fn color(&self, i: usize) -> LabColor {
        LabColor {
            l: self.l.values()[i],
            a: self.a.values()[i],
            b: self.b.values()[i],
        }
    }
}

/// IEC 61966-2-1 inverse companding of one 8-bit sample.
fn srgb_to_linear(v: u8) -> f64 {
    let c = f64::from(v) / 255.0;
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

pub fn srgb_to_lab(r: u8, g: u8, b: u8) -> LabColor {
    let lin = [srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b)];
    let xyz = SRGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    LabColor {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

pub fn rgb_to_lab_image(image: &RgbImage8) -> LabImage {
    rgb_to_lab_image_with(image, Execution::default())
}

pub fn rgb_to_lab_image_with(image: &RgbImage8, exec: Execution) -> LabImage {
    let data = image.data();
    let colors = exec.map_range(image.pixel_count(), |i| {
        srgb_to_lab(data[3 * i], data[3 * i + 1], data[3 * i + 2])
    });
    let (w, h) = (image.width(), image.height());
    LabImage {
        l: Plane::from_raw(w, h, colors.iter().map(|c| c.l).collect()),
        a: Plane::from_raw(w, h, colors.iter().map(|c| c.a).collect()),
        b: Plane::from_raw(w, h, colors.iter().map(|c| c.b).collect()),
    }
}

/// Euclidean distance in the (a, b) chromaticity plane; lightness is ignored.
pub fn delta_ab(c1: LabColor, c2: LabColor) -> f64 {
    (c1.a - c2.a).hypot(c1.b - c2.b)
}
