//! Seeded synthetic cervigrams with known ground truth: a pink elliptical
//! "cervix" on a dark background inside a darker frame band, saturated white
//! specular dots inside the ellipse, and Gaussian pixel noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{to_byte, BBox, BinaryMask, RgbImage8};
use crate::roi::bbox_with_margin;

pub const FRAME_COLOR: [u8; 3] = [18, 17, 19];
/// Frame band thickness as a fraction of the image width.
pub const FRAME_FRACTION: f64 = 0.08;
/// Speculars are centered within this fraction of the ellipse radii.
const SPECULAR_REACH: f64 = 0.75;
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    /// Counter-clockwise rotation of the `semi_x` axis, radians.
    pub rotation: f64,
}

impl Ellipse {
    /// Coordinates in the ellipse frame, scaled so the boundary is at 1.
    fn normalized(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.rotation.sin_cos();
        ((dx * c + dy * s) / self.semi_x, (-dx * s + dy * c) / self.semi_y)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.normalized(x, y);
        u * u + v * v <= 1.0
    }

    /// Half-extents of the axis-aligned box around the rotated ellipse.
    pub fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (
            (self.semi_x.powi(2) * c * c + self.semi_y.powi(2) * s * s).sqrt(),
            (self.semi_x.powi(2) * s * s + self.semi_y.powi(2) * c * c).sqrt(),
        )
    }

    fn point_at(&self, u: f64, v: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        let (px, py) = (u * self.semi_x, v * self.semi_y);
        (self.cx + px * c - py * s, self.cy + px * s + py * c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub ellipse: Ellipse,
    pub cervix_color: [u8; 3],
    pub background_color: [u8; 3],
    pub n_speculars: usize,
    /// Inclusive range of specular dot radii.
    pub specular_radius_range: (usize, usize),
    pub frame: bool,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            ellipse: Ellipse {
                cx: 159.5,
                cy: 119.5,
                semi_x: 100.0,
                semi_y: 75.0,
                rotation: 0.0,
            },
            cervix_color: [210, 140, 150],
            background_color: [60, 55, 58],
            n_speculars: 12,
            specular_radius_range: (2, 5),
            frame: true,
            noise_sigma: 4.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    /// Default scene whose ellipse placement, size and tilt are drawn from
    /// `seed`, keeping the ellipse inside the frame band.
    pub fn default_for_seed(seed: u64) -> Self {
        let base = Self::default();
        // separate stream from the one generate_phantom uses
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let (w, h) = (base.width as f64, base.height as f64);
        let band = (FRAME_FRACTION * w).round();
        loop {
            let ellipse = Ellipse {
                cx: (w - 1.0) / 2.0 + rng.random_range(-0.05..0.05) * w,
                cy: (h - 1.0) / 2.0 + rng.random_range(-0.05..0.05) * h,
                semi_x: rng.random_range(0.26..0.34) * w,
                semi_y: rng.random_range(0.26..0.34) * h,
                rotation: rng.random_range(-0.35..0.35),
            };
            let (ex, ey) = ellipse.half_extents();
            if ellipse.cx - ex >= band
                && ellipse.cx + ex <= w - 1.0 - band
                && ellipse.cy - ey >= band
                && ellipse.cy + ey <= h - 1.0 - band
            {
                return Self {
                    ellipse,
                    seed,
                    ..base
                };
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("phantom needs nonzero dimensions".into()));
        }
        let e = &self.ellipse;
        if !(e.semi_x > 0.0 && e.semi_y > 0.0) {
            return Err(Error::Config("ellipse axes must be positive".into()));
        }
        let (ex, ey) = e.half_extents();
        if e.cx - ex < 0.0
            || e.cy - ey < 0.0
            || e.cx + ex > self.width as f64 - 1.0
            || e.cy + ey > self.height as f64 - 1.0
        {
            return Err(Error::Config("ellipse does not fit inside the image".into()));
        }
        let (rmin, rmax) = self.specular_radius_range;
        if rmin > rmax {
            return Err(Error::Config("specular radius range is inverted".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    /// The scene before speculars and noise.
    pub clean_image: RgbImage8,
    pub specular_mask: BinaryMask,
    pub ellipse_mask: BinaryMask,
    pub ellipse_bbox: BBox,
}

fn disk_pixels(cx: i64, cy: i64, r: i64) -> impl Iterator<Item = (i64, i64)> {
    (-r..=r).flat_map(move |dy| {
        (-r..=r)
            .filter(move |dx| dx * dx + dy * dy <= r * r)
            .map(move |dx| (cx + dx, cy + dy))
    })
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<(RgbImage8, PhantomTruth)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let band = if spec.frame {
        (FRAME_FRACTION * w as f64).round() as usize
    } else {
        0
    };
    let ellipse_mask = BinaryMask::from_fn(w, h, |x, y| spec.ellipse.contains(x as f64, y as f64))?;
    let clean = RgbImage8::from_fn(w, h, |x, y| {
        if ellipse_mask.get(x, y) {
            spec.cervix_color
        } else if x < band || y < band || x + band >= w || y + band >= h {
            FRAME_COLOR
        } else {
            spec.background_color
        }
    })?;
    let ellipse_bbox = bbox_with_margin(&ellipse_mask, 0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut specular_mask = BinaryMask::empty(w, h)?;
    let (rmin, rmax) = spec.specular_radius_range;
    for _ in 0..spec.n_speculars {
        let r = rng.random_range(rmin..=rmax) as i64;
        let placed = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let rho = SPECULAR_REACH * rng.random::<f64>().sqrt();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let (px, py) = spec.ellipse.point_at(rho * theta.cos(), rho * theta.sin());
            let (cx, cy) = (px.round() as i64, py.round() as i64);
            // one pixel of slack around the dot must stay in the ellipse
            disk_pixels(cx, cy, r + 1)
                .all(|(x, y)| {
                    x >= 0
                        && y >= 0
                        && (x as usize) < w
                        && (y as usize) < h
                        && ellipse_mask.get(x as usize, y as usize)
                })
                .then_some((cx, cy))
        });
        let (cx, cy) = placed.ok_or_else(|| {
            Error::Config(format!("a specular of radius {r} cannot fit inside the ellipse"))
        })?;
        for (x, y) in disk_pixels(cx, cy, r) {
            specular_mask.set(x as usize, y as usize, true);
        }
    }

    let mut image = clean.clone();
    for (x, y) in specular_mask.true_pixels() {
        image.set(x, y, [255, 255, 255]);
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::Config(format!("noise: {e}")))?;
        for y in 0..h {
            for x in 0..w {
                if specular_mask.get(x, y) {
                    continue;
                }
                let px = image.get(x, y);
                let noisy = px.map(|c| to_byte(f64::from(c) + normal.sample(&mut rng)));
                image.set(x, y, noisy);
            }
        }
    }

    Ok((
        image,
        PhantomTruth {
            clean_image: clean,
            specular_mask,
            ellipse_mask,
            ellipse_bbox,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_without_speculars_equals_clean() {
        let spec = PhantomSpec {
            n_speculars: 0,
            noise_sigma: 0.0,
            ..PhantomSpec::default()
        };
        let (img, truth) = generate_phantom(&spec).unwrap();
        assert_eq!(img, truth.clean_image);
        assert!(truth.specular_mask.is_empty());
    }

    #[test]
    fn seeded_determinism() {
        let a = generate_phantom(&PhantomSpec::default_for_seed(7)).unwrap();
        let b = generate_phantom(&PhantomSpec::default_for_seed(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_phantom(&PhantomSpec::default_for_seed(8)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn truth_is_consistent() {
        for seed in 0..10 {
            let spec = PhantomSpec::default_for_seed(seed);
            let (img, truth) = generate_phantom(&spec).unwrap();
            assert!(truth.specular_mask.is_subset_of(&truth.ellipse_mask));
            assert!(!truth.specular_mask.is_empty());
            for (x, y) in truth.specular_mask.true_pixels() {
                assert_eq!(img.get(x, y), [255, 255, 255]);
            }
            assert_eq!(truth.ellipse_bbox, bbox_with_margin(&truth.ellipse_mask, 0).unwrap());
        }
    }

    #[test]
    fn ellipse_must_fit() {
        let mut spec = PhantomSpec::default();
        spec.ellipse.semi_x = 400.0;
        assert!(generate_phantom(&spec).is_err());
    }

    #[test]
    fn oversized_speculars_are_rejected() {
        let spec = PhantomSpec {
            specular_radius_range: (90, 90),
            ..PhantomSpec::default()
        };
        assert!(generate_phantom(&spec).is_err());
    }
}
