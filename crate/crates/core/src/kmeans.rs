//! Lloyd's K-means over fixed-dimension feature vectors.
//!
//! Iteration: pick K initial means, assign every point to its nearest mean
//! (squared Euclidean distance, ties to the lowest index), recompute each
//! mean as the centroid of its points, and repeat until no assignment
//! changes. A cluster that loses all its points keeps its previous mean.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// A set of points stored contiguously, `dim` values per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    dim: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Dimensions(format!(
                "{} values cannot form points of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Decode("non-finite feature component".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(1, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Dimensions("points have differing dimensions".into()));
        }
        Self::new(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// The points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Features {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        Features {
            dim: self.dim,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KmeansInit {
    /// K distinct input points drawn uniformly.
    #[serde(rename = "random")]
    RandomPoints,
    #[serde(rename = "kmeanspp")]
    KmeansPlusPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub k: usize,
    pub init: KmeansInit,
    pub seed: u64,
    pub max_iters: usize,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            k: 2,
            init: KmeansInit::RandomPoints,
            seed: 0,
            max_iters: 100,
            exec: Execution::default(),
        }
    }
}

impl KmeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("k-means max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub means: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Number of assignment passes performed.
    pub iterations: usize,
    /// False when `max_iters` stopped the iteration before assignments settled.
    pub converged: bool,
    pub wcss: f64,
    /// WCSS after each assignment pass.
    pub wcss_history: Vec<f64>,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn nearest(point: &[f64], means: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, m) in means.iter().enumerate() {
        let d = dist2(point, m);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Index of the mean nearest to `point`; ties go to the lowest index.
pub fn assign_nearest(point: &[f64], means: &[Vec<f64>]) -> Result<usize> {
    if means.is_empty() {
        return Err(Error::Config("no means to assign to".into()));
    }
    if means.iter().any(|m| m.len() != point.len()) {
        return Err(Error::Dimensions(format!(
            "point has dimension {}, means differ",
            point.len()
        )));
    }
    Ok(nearest(point, means))
}

fn check_means(points: &Features, means: &[Vec<f64>]) -> Result<()> {
    if means.is_empty() {
        return Err(Error::Config("no means given".into()));
    }
    if means.iter().any(|m| m.len() != points.dim) {
        return Err(Error::Dimensions(format!(
            "means must have dimension {}",
            points.dim
        )));
    }
    Ok(())
}

/// Nearest-mean assignment for every point.
pub fn assign_points(points: &Features, means: &[Vec<f64>], exec: Execution) -> Result<Vec<usize>> {
    check_means(points, means)?;
    Ok(exec.map_range(points.len(), |i| nearest(points.point(i), means)))
}

/// Centroid of each cluster; clusters without points keep `previous[j]`.
pub fn update_means(
    points: &Features,
    assignments: &[usize],
    previous: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    update_means_with(points, assignments, previous, Execution::Sequential)
}

fn update_means_with(
    points: &Features,
    assignments: &[usize],
    previous: &[Vec<f64>],
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    check_means(points, previous)?;
    let k = previous.len();
    if assignments.len() != points.len() {
        return Err(Error::Dimensions("one assignment per point required".into()));
    }
    if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
        return Err(Error::OutOfBounds(format!("assignment {bad} with only {k} clusters")));
    }
    let dim = points.dim;
    let partials = exec.map_chunks(points.len(), |range| {
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in range {
            let c = assignments[i];
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(points.point(i)) {
                *s += v;
            }
        }
        (sums, counts)
    });
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (s, c) in partials {
        sums.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        counts.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }
    Ok((0..k)
        .map(|j| {
            if counts[j] == 0 {
                previous[j].clone()
            } else {
                let n = counts[j] as f64;
                sums[j * dim..(j + 1) * dim].iter().map(|s| s / n).collect()
            }
        })
        .collect())
}

/// Within-cluster sum of squared distances.
pub fn within_cluster_ss(points: &Features, assignments: &[usize], means: &[Vec<f64>], exec: Execution) -> f64 {
    exec.map_chunks(points.len(), |range| {
        range
            .map(|i| dist2(points.point(i), &means[assignments[i]]))
            .sum::<f64>()
    })
    .into_iter()
    .sum()
}

/// Seeded initial means according to `cfg.init`.
pub fn initial_means(points: &Features, cfg: &KmeansConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let n = points.len();
    if n == 0 {
        return Err(Error::Degenerate("no points to cluster".into()));
    }
    if cfg.k > n {
        return Err(Error::Config(format!("k = {} exceeds {} points", cfg.k, n)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let chosen: Vec<usize> = match cfg.init {
        KmeansInit::RandomPoints => index::sample(&mut rng, n, cfg.k).into_vec(),
        KmeansInit::KmeansPlusPlus => {
            let mut chosen = vec![rng.random_range(0..n)];
            let mut d2: Vec<f64> = (0..n)
                .map(|i| dist2(points.point(i), points.point(chosen[0])))
                .collect();
            while chosen.len() < cfg.k {
                let total: f64 = d2.iter().sum();
                let next = if total > 0.0 {
                    let target = rng.random::<f64>() * total;
                    let mut acc = 0.0;
                    let mut pick = None;
                    for (i, &w) in d2.iter().enumerate() {
                        acc += w;
                        if w > 0.0 && acc > target {
                            pick = Some(i);
                            break;
                        }
                    }
                    // rounding can leave target just past the last positive weight
                    pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
                } else {
                    let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
                    free[rng.random_range(0..free.len())]
                };
                chosen.push(next);
                for (i, d) in d2.iter_mut().enumerate() {
                    *d = d.min(dist2(points.point(i), points.point(next)));
                }
            }
            chosen
        }
    };
    Ok(chosen.iter().map(|&i| points.point(i).to_vec()).collect())
}

/// Runs K-means from a seeded initialization.
pub fn kmeans(points: &Features, cfg: &KmeansConfig) -> Result<ClusterModel> {
    let init = initial_means(points, cfg)?;
    kmeans_from_means(points, init, cfg.max_iters, cfg.exec)
}

/// Runs the Lloyd iteration from the given initial means.
pub fn kmeans_from_means(
    points: &Features,
    initial: Vec<Vec<f64>>,
    max_iters: usize,
    exec: Execution,
) -> Result<ClusterModel> {
    if points.is_empty() {
        return Err(Error::Degenerate("no points to cluster".into()));
    }
    if max_iters == 0 {
        return Err(Error::Config("k-means max_iters must be >= 1".into()));
    }
    let mut means = initial;
    let mut assignments = assign_points(points, &means, exec)?;
    let mut history = vec![within_cluster_ss(points, &assignments, &means, exec)];
    let mut iterations = 1;
    let mut converged = false;
    while iterations < max_iters {
        means = update_means_with(points, &assignments, &means, exec)?;
        iterations += 1;
        let next = assign_points(points, &means, exec)?;
        history.push(within_cluster_ss(points, &next, &means, exec));
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    Ok(ClusterModel {
        k: means.len(),
        means,
        assignments,
        iterations,
        converged,
        wcss: *history.last().expect("at least one pass"),
        wcss_history: history,
    })
}
