//! Harmonic inpainting: masked pixels are replaced by the solution of the
//! discrete Laplace equation whose Dirichlet data is the unmasked ring around
//! each mask component.
//!
//! The discretization is the 5-point stencil with unit spacing. A stencil arm
//! that leaves the image is reflected back inside (`u(-1) = u(1)`), which is a
//! homogeneous Neumann condition at the frame. Along a dimension of length one
//! the reflected arm lands on the pixel itself and both arms drop out of the
//! equation.
//!
//! Gauss-Seidel and SOR sweep in red-black order: every pixel of one color
//! depends only on pixels of the other color, so a half-sweep can be computed
//! in parallel and still match the serial result bit for bit.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::image::{merge_planes, split_planes, to_byte, BinaryMask, Plane, RgbImage8};
use crate::specular::neighbors4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    Jacobi,
    GaussSeidel,
    Sor,
}

impl SolverMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverMethod::Jacobi => "jacobi",
            SolverMethod::GaussSeidel => "gauss-seidel",
            SolverMethod::Sor => "sor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Relaxation factor, used by SOR only.
    pub omega: f64,
    /// Target for the max-norm of the discrete Laplacian over masked pixels.
    pub tol: f64,
    pub max_iters: usize,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Sor,
            omega: 1.9,
            tol: 1e-4,
            max_iters: 20_000,
            exec: Execution::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: SolverMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == SolverMethod::Sor && !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::Config(format!(
                "SOR omega must lie in (0, 2), got {}",
                self.omega
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tolerance must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }

    fn relaxation(&self) -> f64 {
        match self.method {
            SolverMethod::Sor => self.omega,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub method: SolverMethod,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

/// Right-hand side `f` of `-Δu = f`, sampled on the pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonRhs {
    pub f: Plane,
}

/// `u(x-1,y) + u(x+1,y) + u(x,y-1) + u(x,y+1) - 4u(x,y)` at an interior pixel.
pub fn discrete_laplacian(plane: &Plane, x: usize, y: usize) -> Result<f64> {
    let (w, h) = (plane.width(), plane.height());
    if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
        return Err(Error::OutOfBounds(format!(
            "({x},{y}) is not an interior pixel of a {w}x{h} plane"
        )));
    }
    Ok(plane.get(x - 1, y) + plane.get(x + 1, y) + plane.get(x, y - 1) + plane.get(x, y + 1)
        - 4.0 * plane.get(x, y))
}

/// One masked pixel and its stencil.
#[derive(Debug, Clone, Copy)]
struct Unknown {
    idx: usize,
    /// Neighbor pixel indices after reflection; self references removed.
    nbrs: [usize; 4],
    n: usize,
    /// Source term at this pixel.
    f: f64,
}

impl Unknown {
    #[inline]
    fn neighbor_sum(&self, u: &[f64]) -> f64 {
        self.nbrs[..self.n].iter().map(|&j| u[j]).sum()
    }

    #[inline]
    fn residual(&self, u: &[f64]) -> f64 {
        self.neighbor_sum(u) - self.n as f64 * u[self.idx] + self.f
    }

    #[inline]
    fn relaxed(&self, u: &[f64], omega: f64) -> f64 {
        let old = u[self.idx];
        let target = (self.neighbor_sum(u) + self.f) / self.n as f64;
        if omega == 1.0 {
            target
        } else {
            old + omega * (target - old)
        }
    }
}

#[inline]
fn reflect(i: isize, len: usize) -> usize {
    if i < 0 {
        if len > 1 {
            1
        } else {
            0
        }
    } else if i as usize >= len {
        len.saturating_sub(2)
    } else {
        i as usize
    }
}

/// Assembles the unknowns, red (even `x + y`) first. Returns them with the
/// number of red entries.
fn assemble(mask: &BinaryMask, rhs: Option<&Plane>) -> (Vec<Unknown>, usize) {
    let (w, h) = (mask.width(), mask.height());
    let mut red = Vec::new();
    let mut black = Vec::new();
    for (x, y) in mask.true_pixels() {
        let idx = y * w + x;
        let mut nbrs = [0; 4];
        let mut n = 0;
        let (xi, yi) = (x as isize, y as isize);
        for (nx, ny) in [
            (reflect(xi - 1, w), y),
            (reflect(xi + 1, w), y),
            (x, reflect(yi - 1, h)),
            (x, reflect(yi + 1, h)),
        ] {
            let j = ny * w + nx;
            if j != idx {
                nbrs[n] = j;
                n += 1;
            }
        }
        let f = rhs.map_or(0.0, |p| p.values()[idx]);
        let unknown = Unknown { idx, nbrs, n, f };
        if (x + y) % 2 == 0 {
            red.push(unknown);
        } else {
            black.push(unknown);
        }
    }
    let n_red = red.len();
    red.extend(black);
    (red, n_red)
}

/// Sets every masked pixel to the mean of the unmasked ring around its
/// 4-connected mask component.
fn initialize(u: &mut [f64], mask: &BinaryMask) -> Result<()> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    for (sx, sy) in mask.true_pixels() {
        if seen[sy * w + sx] {
            continue;
        }
        members.clear();
        let mut ring_seen = std::collections::HashSet::new();
        let mut ring_sum = 0.0;
        seen[sy * w + sx] = true;
        queue.push_back((sx, sy));
        while let Some((x, y)) = queue.pop_front() {
            members.push(y * w + x);
            for (nx, ny) in neighbors4(x, y, w, h) {
                let j = ny * w + nx;
                if mask.get(nx, ny) {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back((nx, ny));
                    }
                } else if ring_seen.insert(j) {
                    ring_sum += u[j];
                }
            }
        }
        if ring_seen.is_empty() {
            return Err(Error::Degenerate(
                "mask covers the entire plane; no boundary data to interpolate from".into(),
            ));
        }
        let mean = ring_sum / ring_seen.len() as f64;
        for &i in &members {
            u[i] = mean;
        }
    }
    Ok(())
}

fn sweep(u: &mut [f64], unknowns: &[Unknown], omega: f64, exec: Execution) {
    let next = {
        let grid: &[f64] = u;
        exec.map_slice(unknowns, |k| k.relaxed(grid, omega))
    };
    for (k, v) in unknowns.iter().zip(next) {
        u[k.idx] = v;
    }
}

fn max_residual(u: &[f64], unknowns: &[Unknown], exec: Execution) -> f64 {
    exec.max_over(unknowns.len(), |i| unknowns[i].residual(u).abs())
}

/// Fills the masked pixels of `plane` with the harmonic interpolant of the
/// surrounding values. Unmasked pixels are copied unchanged.
///
/// Failing to reach `cfg.tol` within `cfg.max_iters` is not an error: the last
/// iterate is returned with `converged == false`.
pub fn inpaint_plane(plane: &Plane, mask: &BinaryMask, cfg: &SolverConfig) -> Result<(Plane, SolveStats)> {
    solve_poisson(plane, mask, None, cfg)
}

/// Solves `-Δu = f` on the masked pixels with Dirichlet data from the
/// unmasked ones. `rhs = None` is the homogeneous (Laplace) case.
pub fn solve_poisson(
    plane: &Plane,
    mask: &BinaryMask,
    rhs: Option<&PoissonRhs>,
    cfg: &SolverConfig,
) -> Result<(Plane, SolveStats)> {
    cfg.validate()?;
    let (w, h) = (plane.width(), plane.height());
    mask.same_shape(w, h)?;
    if let Some(rhs) = rhs {
        if rhs.f.width() != w || rhs.f.height() != h {
            return Err(Error::Dimensions("right-hand side shape differs from plane".into()));
        }
    }
    if mask.count() == w * h {
        return Err(Error::Degenerate(
            "mask covers the entire plane; no boundary data to interpolate from".into(),
        ));
    }

    let mut u = plane.values().to_vec();
    initialize(&mut u, mask)?;
    let (unknowns, n_red) = assemble(mask, rhs.map(|r| &r.f));
    let (red, black) = unknowns.split_at(n_red);
    let omega = cfg.relaxation();

    let mut residual = max_residual(&u, &unknowns, cfg.exec);
    let mut iterations = 0;
    while residual > cfg.tol && iterations < cfg.max_iters {
        match cfg.method {
            SolverMethod::Jacobi => sweep(&mut u, &unknowns, 1.0, cfg.exec),
            SolverMethod::GaussSeidel | SolverMethod::Sor => {
                sweep(&mut u, red, omega, cfg.exec);
                sweep(&mut u, black, omega, cfg.exec);
            }
        }
        iterations += 1;
        residual = max_residual(&u, &unknowns, cfg.exec);
    }

    let stats = SolveStats {
        method: cfg.method,
        iterations,
        final_residual: residual,
        converged: residual <= cfg.tol,
    };
    Ok((Plane::from_raw(w, h, u), stats))
}

/// Inpaints each color plane independently with the same mask.
pub fn inpaint_image(
    image: &RgbImage8,
    mask: &BinaryMask,
    cfg: &SolverConfig,
) -> Result<(RgbImage8, [SolveStats; 3])> {
    let (r, g, b) = split_planes(image);
    let (r, sr) = inpaint_plane(&r, mask, cfg)?;
    let (g, sg) = inpaint_plane(&g, mask, cfg)?;
    let (b, sb) = inpaint_plane(&b, mask, cfg)?;
    Ok((merge_planes(&r, &g, &b)?, [sr, sg, sb]))
}

/// Inpaints a single luma plane (Rec. 601 weights) and writes the gray fill
/// into all three channels of the masked pixels. Unmasked pixels keep their
/// color.
pub fn inpaint_image_grayscale(
    image: &RgbImage8,
    mask: &BinaryMask,
    cfg: &SolverConfig,
) -> Result<(RgbImage8, SolveStats)> {
    let luma: Vec<f64> = image
        .pixels()
        .map(|[r, g, b]| 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b))
        .collect();
    let gray = Plane::new(image.width(), image.height(), luma)?;
    let (filled, stats) = inpaint_plane(&gray, mask, cfg)?;
    let mut out = image.clone();
    for (x, y) in mask.true_pixels() {
        out.set(x, y, [to_byte(filled.get(x, y)); 3]);
    }
    Ok((out, stats))
}

/// Parameters of the radial fundamental solution of Laplace's equation in
/// `n` dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalSolutionParams {
    pub n: usize,
    pub c1: f64,
    pub c2: f64,
}

/// `c1 ln|x| + c2` for `n = 2`, `c1 / ((2 - n) |x|^(n-2)) + c2` for `n >= 3`.
pub fn fundamental_solution(p: &FundamentalSolutionParams, x: &[f64]) -> Result<f64> {
    if p.n < 2 {
        return Err(Error::Config(format!("dimension must be >= 2, got {}", p.n)));
    }
    if x.len() != p.n {
        return Err(Error::Dimensions(format!(
            "point has {} coordinates, expected {}",
            x.len(),
            p.n
        )));
    }
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::OutOfBounds("fundamental solution is singular at the origin".into()));
    }
    Ok(if p.n == 2 {
        p.c1 * r.ln() + p.c2
    } else {
        let n = p.n as i32;
        p.c1 / (f64::from(2 - n) * r.powi(n - 2)) + p.c2
    })
}

/// Largest `|5-point Laplacian| / h²` of `f` over the grid points
/// `(i h, j h)` whose radius lies in `[inner, outer]`.
pub fn annulus_stencil_residual(
    f: impl Fn(f64, f64) -> f64,
    h: f64,
    inner: f64,
    outer: f64,
) -> Result<f64> {
    if inner.is_nan() || inner <= 0.0 {
        return Err(Error::Config("annulus must not touch the origin".into()));
    }
    if outer.is_nan() || outer <= inner {
        return Err(Error::Config("outer radius must exceed inner radius".into()));
    }
    if !(h > 0.0 && h < inner / 4.0) {
        return Err(Error::Config(format!(
            "grid spacing must lie in (0, inner/4), got {h}"
        )));
    }
    let m = (outer / h).ceil() as i64;
    let mut worst: f64 = 0.0;
    for j in -m..=m {
        for i in -m..=m {
            let (x, y) = (i as f64 * h, j as f64 * h);
            let r = x.hypot(y);
            if r < inner || r > outer {
                continue;
            }
            let center = f(x, y);
            let lap = (f(x - h, y) + f(x + h, y)) + (f(x, y - h) + f(x, y + h)) - 4.0 * center;
            worst = worst.max((lap / (h * h)).abs());
        }
    }
    Ok(worst)
}

/// Samples the two-dimensional fundamental solution on a grid over the
/// annulus and returns the largest scaled stencil residual. Second-order
/// consistency means the value drops about fourfold when `h` is halved.
pub fn verify_radial_harmonicity(
    p: &FundamentalSolutionParams,
    h: f64,
    inner: f64,
    outer: f64,
) -> Result<f64> {
    if p.n != 2 {
        return Err(Error::Config("radial check is defined on the plane (n = 2)".into()));
    }
    if inner.is_nan() || inner <= 0.0 {
        return Err(Error::Config("annulus must not touch the origin".into()));
    }
    let p = *p;
    annulus_stencil_residual(
        move |x, y| fundamental_solution(&p, &[x, y]).expect("annulus excludes the origin"),
        h,
        inner,
        outer,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block_mask(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1).unwrap()
    }

    fn tight(method: SolverMethod, tol: f64) -> SolverConfig {
        SolverConfig {
            method,
            tol,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn laplacian_examples() {
        let c = Plane::filled(5, 5, 3.5).unwrap();
        let affine = Plane::from_fn(5, 5, |x, y| 2.0 * x as f64 + 3.0 * y as f64 + 5.0).unwrap();
        let quad = Plane::from_fn(5, 5, |x, _| (x * x) as f64).unwrap();
        for y in 1..4 {
            for x in 1..4 {
                assert_eq!(discrete_laplacian(&c, x, y).unwrap(), 0.0);
                assert_eq!(discrete_laplacian(&affine, x, y).unwrap(), 0.0);
                assert_eq!(discrete_laplacian(&quad, x, y).unwrap(), 2.0);
            }
        }
        assert!(discrete_laplacian(&c, 0, 2).is_err());
        assert!(discrete_laplacian(&c, 2, 4).is_err());
    }

    #[test]
    fn constant_ring_gives_constant_fill() {
        let plane = Plane::from_fn(3, 3, |x, y| if (x, y) == (1, 1) { 0.0 } else { 7.0 }).unwrap();
        let mask = block_mask(3, 3, 1, 1, 2, 2);
        let (out, stats) = inpaint_plane(&plane, &mask, &tight(SolverMethod::Sor, 1e-6)).unwrap();
        assert!(stats.converged);
        assert!((out.get(1, 1) - 7.0).abs() <= 1e-6);
    }

    #[test]
    fn one_dimensional_fill_is_linear() {
        let plane = Plane::new(6, 1, vec![0.0, 99.0, 99.0, 99.0, 99.0, 10.0]).unwrap();
        let mask = block_mask(6, 1, 1, 0, 5, 1);
        for method in [SolverMethod::Jacobi, SolverMethod::GaussSeidel, SolverMethod::Sor] {
            let cfg = SolverConfig {
                omega: 1.2,
                ..tight(method, 1e-6)
            };
            let (out, stats) = inpaint_plane(&plane, &mask, &cfg).unwrap();
            assert!(stats.converged, "{method:?}");
            for (i, want) in [2.0, 4.0, 6.0, 8.0].iter().enumerate() {
                assert!((out.get(i + 1, 0) - want).abs() <= 1e-5, "{method:?}: {:?}", out.values());
            }
        }
    }

    /// Dense Gaussian elimination on the 5-point system, used as an oracle.
    fn dense_oracle(plane: &Plane, mask: &BinaryMask) -> Vec<((usize, usize), f64)> {
        let cells: Vec<(usize, usize)> = mask.true_pixels().collect();
        let n = cells.len();
        let index = |x: usize, y: usize| cells.iter().position(|&c| c == (x, y));
        let mut a = vec![vec![0.0f64; n + 1]; n];
        for (row, &(x, y)) in cells.iter().enumerate() {
            a[row][row] = 4.0;
            for (nx, ny) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
                match index(nx, ny) {
                    Some(col) => a[row][col] -= 1.0,
                    None => a[row][n] += plane.get(nx, ny),
                }
            }
        }
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            for r in 0..n {
                if r != c {
                    let factor = a[r][c] / a[c][c];
                    for k in c..=n {
                        a[r][k] -= factor * a[c][k];
                    }
                }
            }
        }
        cells.iter().enumerate().map(|(i, &c)| (c, a[i][n] / a[i][i])).collect()
    }

    #[test]
    fn affine_block_matches_dense_solve() {
        let affine = |x: usize, y: usize| 2.0 * x as f64 + 3.0 * y as f64 + 5.0;
        let plane = Plane::from_fn(16, 16, |x, y| if (5..11).contains(&x) && (5..11).contains(&y) { 0.0 } else { affine(x, y) }).unwrap();
        let mask = block_mask(16, 16, 5, 5, 11, 11);
        let exact = dense_oracle(&plane, &mask);
        for ((x, y), v) in &exact {
            assert!((v - affine(*x, *y)).abs() < 1e-9);
        }
        let (out, stats) = inpaint_plane(&plane, &mask, &tight(SolverMethod::Sor, 1e-6)).unwrap();
        assert!(stats.converged);
        for ((x, y), v) in exact {
            assert!((out.get(x, y) - v).abs() < 1e-3);
        }
    }

    #[test]
    fn border_mask_uses_reflection() {
        // Linear in x, masked strip touching the left edge: the Neumann
        // reflection makes the column constant equal to its right neighbor.
        let plane = Plane::from_fn(6, 4, |x, _| x as f64).unwrap();
        let mask = block_mask(6, 4, 0, 0, 2, 4);
        let (out, stats) = inpaint_plane(&plane, &mask, &tight(SolverMethod::Sor, 1e-8)).unwrap();
        assert!(stats.converged);
        for y in 0..4 {
            assert!((out.get(0, y) - 2.0).abs() < 1e-6);
            assert!((out.get(1, y) - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn full_mask_is_degenerate() {
        let plane = Plane::filled(4, 4, 1.0).unwrap();
        let mask = BinaryMask::from_fn(4, 4, |_, _| true).unwrap();
        assert!(matches!(
            inpaint_plane(&plane, &mask, &SolverConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn non_convergence_is_reported() {
        let plane = Plane::from_fn(20, 20, |x, y| ((x * 7 + y * 13) % 17) as f64 * 10.0).unwrap();
        let mask = block_mask(20, 20, 3, 3, 17, 17);
        let cfg = SolverConfig {
            max_iters: 2,
            ..tight(SolverMethod::Jacobi, 1e-9)
        };
        let (_, stats) = inpaint_plane(&plane, &mask, &cfg).unwrap();
        assert_eq!(stats.iterations, 2);
        assert!(!stats.converged && stats.final_residual > cfg.tol);
    }

    #[test]
    fn invalid_configs() {
        let sor = |omega| SolverConfig { omega, ..SolverConfig::default() };
        assert!(sor(2.0).validate().is_err());
        assert!(sor(0.0).validate().is_err());
        assert!(sor(1.5).validate().is_ok());
        let gs = SolverConfig { omega: 5.0, ..SolverConfig::with_method(SolverMethod::GaussSeidel) };
        assert!(gs.validate().is_ok());
        assert!(SolverConfig { tol: 0.0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { max_iters: 0, ..SolverConfig::default() }.validate().is_err());
    }

    #[test]
    fn poisson_source_term() {
        // u = x² has -Δu = -2; solve with that source and quadratic ring data.
        let q = |x: usize| (x * x) as f64;
        let plane = Plane::from_fn(12, 12, |x, _| q(x)).unwrap();
        let mask = block_mask(12, 12, 3, 3, 9, 9);
        let rhs = PoissonRhs { f: Plane::filled(12, 12, -2.0).unwrap() };
        let (out, stats) = solve_poisson(&plane, &mask, Some(&rhs), &tight(SolverMethod::Sor, 1e-8)).unwrap();
        assert!(stats.converged);
        for (x, y) in mask.true_pixels() {
            assert!((out.get(x, y) - q(x)).abs() < 1e-5);
        }
    }

    #[test]
    fn empty_mask_image_identity() {
        let img = RgbImage8::from_fn(5, 4, |x, y| [x as u8, y as u8, 9]).unwrap();
        let (out, stats) = inpaint_image(&img, &BinaryMask::empty(5, 4).unwrap(), &SolverConfig::default()).unwrap();
        assert_eq!(out, img);
        assert!(stats.iter().all(|s| s.iterations == 0 && s.converged));
    }

    #[test]
    fn single_pixel_with_gray_neighbors() {
        let mut img = RgbImage8::filled(5, 5, [100; 3]).unwrap();
        img.set(2, 2, [255; 3]);
        let mut mask = BinaryMask::empty(5, 5).unwrap();
        mask.set(2, 2, true);
        let (out, _) = inpaint_image(&img, &mask, &SolverConfig::default()).unwrap();
        assert_eq!(out.get(2, 2), [100, 100, 100]);
        let (gray, _) = inpaint_image_grayscale(&img, &mask, &SolverConfig::default()).unwrap();
        assert_eq!(gray.get(2, 2), [100, 100, 100]);
    }

    #[test]
    fn fundamental_solution_values() {
        let p2 = FundamentalSolutionParams { n: 2, c1: 1.0, c2: 0.0 };
        assert_eq!(fundamental_solution(&p2, &[1.0, 0.0]).unwrap(), 0.0);
        let p3 = FundamentalSolutionParams { n: 3, c1: 1.0, c2: 0.0 };
        assert!((fundamental_solution(&p3, &[2.0, 0.0, 0.0]).unwrap() + 0.5).abs() < 1e-15);
        let pc = FundamentalSolutionParams { n: 2, c1: 0.0, c2: 4.25 };
        assert_eq!(fundamental_solution(&pc, &[0.3, -7.0]).unwrap(), 4.25);
        assert!(fundamental_solution(&p2, &[0.0, 0.0]).is_err());
        assert!(fundamental_solution(&p2, &[1.0]).is_err());
        let p1 = FundamentalSolutionParams { n: 1, c1: 1.0, c2: 0.0 };
        assert!(fundamental_solution(&p1, &[1.0]).is_err());
    }

    #[test]
    fn fundamental_solution_is_harmonic_in_3d() {
        // central differences of the n = 3 branch
        let p = FundamentalSolutionParams { n: 3, c1: 2.0, c2: 1.0 };
        let f = |x: f64, y: f64, z: f64| fundamental_solution(&p, &[x, y, z]).unwrap();
        let (x, y, z, h) = (0.7, -0.4, 1.1, 1e-3);
        let lap = f(x + h, y, z) + f(x - h, y, z) + f(x, y + h, z) + f(x, y - h, z) + f(x, y, z + h) + f(x, y, z - h)
            - 6.0 * f(x, y, z);
        assert!((lap / (h * h)).abs() < 1e-4);
    }

    #[test]
    fn radial_residual_cases() {
        let constant = FundamentalSolutionParams { n: 2, c1: 0.0, c2: 5.0 };
        assert_eq!(verify_radial_harmonicity(&constant, 0.02, 1.0, 2.0).unwrap(), 0.0);
        let affine = annulus_stencil_residual(|x, y| 1.5 * x - 0.75 * y, 0.01, 1.0, 2.0).unwrap();
        assert!(affine <= 1e-9);
        let log = FundamentalSolutionParams { n: 2, c1: 1.0, c2: 0.0 };
        let coarse = verify_radial_harmonicity(&log, 0.02, 1.0, 2.0).unwrap();
        let fine = verify_radial_harmonicity(&log, 0.01, 1.0, 2.0).unwrap();
        let ratio = coarse / fine;
        assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn radial_residual_rejects_bad_geometry() {
        let p = FundamentalSolutionParams { n: 2, c1: 1.0, c2: 0.0 };
        assert!(verify_radial_harmonicity(&p, 0.01, 0.0, 2.0).is_err());
        assert!(verify_radial_harmonicity(&p, 0.5, 1.0, 2.0).is_err());
        assert!(verify_radial_harmonicity(&p, 0.01, 2.0, 1.0).is_err());
        let p3 = FundamentalSolutionParams { n: 3, ..p };
        assert!(verify_radial_harmonicity(&p3, 0.01, 1.0, 2.0).is_err());
    }

    /// Smooth plane plus a few small disjoint disks as the mask.
    fn instance(seed: u64) -> (Plane, BinaryMask) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (24, 20);
        let (ax, ay, fx, fy) = (rng.random_range(10.0..80.0), rng.random_range(10.0..80.0), rng.random_range(0.05..0.4), rng.random_range(0.05..0.4));
        let plane = Plane::from_fn(w, h, |x, y| 120.0 + ax * (fx * x as f64).sin() + ay * (fy * y as f64).cos()).unwrap();
        let centers: Vec<(f64, f64, f64)> = (0..rng.random_range(1..4))
            .map(|_| (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64), rng.random_range(1.0..3.5)))
            .collect();
        let mask = BinaryMask::from_fn(w, h, |x, y| {
            centers.iter().any(|&(cx, cy, r)| (x as f64 - cx).hypot(y as f64 - cy) <= r)
        })
        .unwrap();
        (plane, mask)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn exterior_is_untouched_and_solvers_agree(seed in any::<u64>()) {
            let (plane, mask) = instance(seed);
            let tol = 1e-5;
            let fills: Vec<Plane> = [SolverMethod::Jacobi, SolverMethod::GaussSeidel, SolverMethod::Sor]
                .into_iter()
                .map(|m| {
                    let (out, stats) = inpaint_plane(&plane, &mask, &tight(m, tol)).unwrap();
                    assert!(stats.converged);
                    out
                })
                .collect();
            for out in &fills {
                for (i, (&a, &b)) in plane.values().iter().zip(out.values()).enumerate() {
                    if !mask.bits()[i] {
                        prop_assert_eq!(a.to_bits(), b.to_bits());
                    }
                }
            }
            for a in &fills {
                for b in &fills {
                    for (p, q) in a.values().iter().zip(b.values()) {
                        prop_assert!((p - q).abs() <= 10.0 * tol);
                    }
                }
            }
        }

        #[test]
        fn idempotent(seed in any::<u64>()) {
            let (plane, mask) = instance(seed);
            let cfg = tight(SolverMethod::Sor, 1e-5);
            let (once, _) = inpaint_plane(&plane, &mask, &cfg).unwrap();
            let (twice, _) = inpaint_plane(&once, &mask, &cfg).unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() <= 10.0 * cfg.tol);
            }
        }

        #[test]
        fn parallel_matches_sequential_bitwise(seed in any::<u64>(), method in prop_oneof![Just(SolverMethod::Jacobi), Just(SolverMethod::GaussSeidel), Just(SolverMethod::Sor)]) {
            let (plane, mask) = instance(seed);
            let seq = SolverConfig { exec: Execution::Sequential, ..tight(method, 1e-5) };
            let par = SolverConfig { exec: Execution::Parallel, ..seq };
            let (a, sa) = inpaint_plane(&plane, &mask, &seq).unwrap();
            let (b, sb) = inpaint_plane(&plane, &mask, &par).unwrap();
            prop_assert_eq!(sa, sb);
            prop_assert!(a.values().iter().zip(b.values()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }

        #[test]
        fn mirror_symmetric_input_gives_symmetric_fill(seed in any::<u64>()) {
            let (plane, mask) = instance(seed);
            let w = plane.width();
            let sym_plane = Plane::from_fn(w, plane.height(), |x, y| plane.get(x.min(w - 1 - x), y)).unwrap();
            let sym_mask = BinaryMask::from_fn(w, plane.height(), |x, y| mask.get(x, y) || mask.get(w - 1 - x, y)).unwrap();
            let tol = 1e-5;
            let (out, _) = inpaint_plane(&sym_plane, &sym_mask, &tight(SolverMethod::Sor, tol)).unwrap();
            for y in 0..plane.height() {
                for x in 0..w {
                    prop_assert!((out.get(x, y) - out.get(w - 1 - x, y)).abs() <= 10.0 * tol);
                }
            }
        }
    }
}
