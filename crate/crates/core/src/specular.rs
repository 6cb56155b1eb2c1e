//! Specular-reflection detection: white-pixel conjunction over the three
//! color planes, morphological dilation, and boundary-ring extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::image::{BinaryMask, RgbImage8};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeShape {
    Square,
    Disk,
}

/// Structuring element centered on the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub shape: SeShape,
    pub radius: usize,
}

impl StructuringElement {
    pub fn new(shape: SeShape, radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::Config("structuring element radius must be >= 1".into()));
        }
        Ok(Self { shape, radius })
    }

    pub fn square(radius: usize) -> Result<Self> {
        Self::new(SeShape::Square, radius)
    }

    pub fn disk(radius: usize) -> Result<Self> {
        Self::new(SeShape::Disk, radius)
    }

    /// Footprint offsets. The set is closed under negation.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let r = self.radius as isize;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if self.shape == SeShape::Square || dx * dx + dy * dy <= r * r {
                    out.push((dx, dy));
                }
            }
        }
        out
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self {
            shape: SeShape::Square,
            radius: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecularConfig {
    /// A pixel is specular when all three channels are at least this value.
    pub threshold: u8,
    pub se: StructuringElement,
}

impl Default for SpecularConfig {
    fn default() -> Self {
        Self {
            threshold: 240,
            se: StructuringElement::default(),
        }
    }
}

impl SpecularConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold == 0 {
            return Err(Error::Config("specular threshold must be in [1, 255]".into()));
        }
        if self.se.radius == 0 {
            return Err(Error::Config("structuring element radius must be >= 1".into()));
        }
        Ok(())
    }
}

/// Marks pixels whose R, G and B samples all reach the threshold.
pub fn detect_specular(image: &RgbImage8, cfg: &SpecularConfig) -> BinaryMask {
    let t = cfg.threshold;
    let bits = image
        .pixels()
        .map(|[r, g, b]| r >= t && g >= t && b >= t)
        .collect();
    BinaryMask::new(image.width(), image.height(), bits).expect("same shape as image")
}

pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    dilate_with(mask, se, Execution::default())
}

/// Binary dilation; the footprint is clipped at the image border.
pub fn dilate_with(mask: &BinaryMask, se: &StructuringElement, exec: Execution) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let offsets = se.offsets();
    let mut bits = vec![false; w * h];
    exec.for_each_row(&mut bits, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = offsets.iter().any(|&(dx, dy)| {
                let (sx, sy) = (x as isize + dx, y as isize + dy);
                sx >= 0
                    && sy >= 0
                    && (sx as usize) < w
                    && (sy as usize) < h
                    && mask.get(sx as usize, sy as usize)
            });
        }
    });
    BinaryMask::new(w, h, bits).expect("same shape as input")
}

/// In-bounds 4-neighbors of `(x, y)`.
pub(crate) fn neighbors4(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> impl Iterator<Item = (usize, usize)> {
    [
        (x.wrapping_sub(1), y),
        (x + 1, y),
        (x, y.wrapping_sub(1)),
        (x, y + 1),
    ]
    .into_iter()
    .filter(move |&(nx, ny)| nx < w && ny < h)
}

/// Unmasked pixels 4-adjacent to the mask, in row-major order. These carry
/// the Dirichlet data for inpainting.
pub fn mask_boundary(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) && neighbors4(x, y, w, h).any(|(nx, ny)| mask.get(nx, ny)) {
                out.push((x, y));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_pixel(x: usize, y: usize, w: usize, h: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(w, h).unwrap();
        m.set(x, y, true);
        m
    }

    #[test]
    fn detection_is_a_strict_conjunction() {
        let img = RgbImage8::new(3, 1, vec![255, 255, 255, 255, 0, 0, 240, 240, 239]).unwrap();
        let m = detect_specular(&img, &SpecularConfig::default());
        assert_eq!(m.bits(), &[true, false, false]);
    }

    #[test]
    fn zero_threshold_is_invalid() {
        let cfg = SpecularConfig {
            threshold: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(StructuringElement::square(0).is_err());
    }

    #[test]
    fn dilate_single_pixel_square() {
        let m = dilate(&one_pixel(5, 5, 11, 11), &StructuringElement::square(1).unwrap());
        let expect = BinaryMask::from_fn(11, 11, |x, y| (4..=6).contains(&x) && (4..=6).contains(&y)).unwrap();
        assert_eq!(m, expect);
    }

    #[test]
    fn dilate_disk_radius_two() {
        let m = dilate(&one_pixel(5, 5, 11, 11), &StructuringElement::disk(2).unwrap());
        assert_eq!(m.count(), 13);
        assert!(m.get(5, 3) && !m.get(3, 3));
    }

    #[test]
    fn dilate_clips_at_border() {
        let m = dilate(&one_pixel(0, 0, 4, 4), &StructuringElement::square(1).unwrap());
        assert_eq!(m.count(), 4);
    }

    #[test]
    fn dilate_empty_and_full() {
        let se = StructuringElement::square(2).unwrap();
        let empty = BinaryMask::empty(6, 4).unwrap();
        assert_eq!(dilate(&empty, &se), empty);
        let full = BinaryMask::from_fn(6, 4, |_, _| true).unwrap();
        assert_eq!(dilate(&full, &se), full);
    }

    #[test]
    fn boundary_of_single_pixel() {
        let b = mask_boundary(&one_pixel(5, 5, 11, 11));
        assert_eq!(b, vec![(5, 4), (4, 5), (6, 5), (5, 6)]);
        assert!(mask_boundary(&BinaryMask::empty(4, 4).unwrap()).is_empty());
    }

    #[test]
    fn boundary_of_centered_block() {
        let mask = BinaryMask::from_fn(10, 10, |x, y| (3..7).contains(&x) && (3..7).contains(&y)).unwrap();
        // brute-force enumeration of the 4-adjacent ring
        let mut expect = Vec::new();
        for y in 0..10i32 {
            for x in 0..10i32 {
                let inside = |x: i32, y: i32| (3..7).contains(&x) && (3..7).contains(&y);
                if !inside(x, y)
                    && [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
                        .iter()
                        .any(|&(a, b)| inside(a, b))
                {
                    expect.push((x as usize, y as usize));
                }
            }
        }
        assert_eq!(expect.len(), 16);
        assert_eq!(mask_boundary(&mask), expect);
    }

    fn arb_mask(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
        proptest::collection::vec(proptest::bool::weighted(0.1), w * h)
            .prop_map(move |bits| BinaryMask::new(w, h, bits).unwrap())
    }

    fn arb_se() -> impl Strategy<Value = StructuringElement> {
        (prop_oneof![Just(SeShape::Square), Just(SeShape::Disk)], 1usize..4)
            .prop_map(|(s, r)| StructuringElement::new(s, r).unwrap())
    }

    proptest! {
        #[test]
        fn threshold_monotone(data in proptest::collection::vec(200u8.., 48), t in 1u8..255) {
            let img = RgbImage8::new(4, 4, data).unwrap();
            let lo = detect_specular(&img, &SpecularConfig { threshold: t, ..Default::default() });
            let hi = detect_specular(&img, &SpecularConfig { threshold: t + 1, ..Default::default() });
            prop_assert!(hi.is_subset_of(&lo));
        }

        #[test]
        fn dilation_extensive_and_increasing(a in arb_mask(16, 12), b in arb_mask(16, 12), se in arb_se()) {
            let union = BinaryMask::new(16, 12, a.bits().iter().zip(b.bits()).map(|(&p, &q)| p || q).collect()).unwrap();
            let da = dilate(&a, &se);
            prop_assert!(a.is_subset_of(&da));
            prop_assert!(da.is_subset_of(&dilate(&union, &se)));
        }

        #[test]
        fn dilation_commutes_with_translation(px in proptest::collection::vec((4usize..8, 4usize..8), 1..6), tx in 0usize..6, ty in 0usize..6, se in arb_se()) {
            let base = BinaryMask::from_fn(20, 20, |x, y| px.contains(&(x, y))).unwrap();
            let moved = BinaryMask::from_fn(20, 20, |x, y| x >= tx && y >= ty && px.contains(&(x - tx, y - ty))).unwrap();
            let db = dilate(&base, &se);
            let expect = BinaryMask::from_fn(20, 20, |x, y| x >= tx && y >= ty && db.get(x - tx, y - ty)).unwrap();
            prop_assert_eq!(dilate(&moved, &se), expect);
        }

        #[test]
        fn boundary_disjoint_and_adjacent(m in arb_mask(9, 7)) {
            for (x, y) in mask_boundary(&m) {
                prop_assert!(!m.get(x, y));
                prop_assert!(neighbors4(x, y, 9, 7).any(|(a, b)| m.get(a, b)));
            }
        }

        #[test]
        fn parallel_dilation_matches_sequential(m in arb_mask(23, 17), se in arb_se()) {
            prop_assert_eq!(
                dilate_with(&m, &se, Execution::Parallel),
                dilate_with(&m, &se, Execution::Sequential)
            );
        }
    }
}
