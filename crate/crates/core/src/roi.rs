//! Cervix ROI extraction from a pixel clustering: choose the central cluster,
//! keep its largest connected region and bound it with a box.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::color::LabImage;
use crate::error::{Error, Result};
use crate::image::{BBox, BinaryMask};
use crate::kmeans::ClusterModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u8) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::Config(format!("connectivity must be 4 or 8, got {n}"))),
        }
    }

    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }
}

/// Per-pixel component ids. Id 0 is background; components are numbered
/// `1..=n` in the row-major order of their first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    /// `sizes[id - 1]` is the pixel count of component `id`.
    pub sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub cluster: usize,
    pub size: usize,
    /// Mean squared distance of members to the image center over the squared
    /// half-diagonal.
    pub spatial: f64,
    pub mean_a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiResult {
    pub cluster_index: usize,
    pub scores: Vec<ClusterScore>,
    pub component_sizes: Vec<usize>,
    /// Largest connected component of the chosen cluster.
    pub roi_mask: BinaryMask,
    /// Tight bounds of `roi_mask`.
    pub tight_bbox: BBox,
    /// `tight_bbox` grown by the crop margin and clamped to the image.
    pub bbox: BBox,
}

const SCORE_TIE: f64 = 1e-9;

/// Picks the cluster whose members sit closest to the image center; near
/// ties go to the cluster with the larger mean a (pinker). Empty clusters are
/// skipped.
pub fn select_cervix_cluster(
    model: &ClusterModel,
    lab: &LabImage,
    width: usize,
    height: usize,
) -> Result<(usize, Vec<ClusterScore>)> {
    let n = width * height;
    if model.assignments.len() != n || lab.width() != width || lab.height() != height {
        return Err(Error::Dimensions(format!(
            "clustering of {} points does not match a {width}x{height} image",
            model.assignments.len()
        )));
    }
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let half_diag2 = (width as f64 / 2.0).powi(2) + (height as f64 / 2.0).powi(2);
    let mut size = vec![0usize; model.k];
    let mut dist = vec![0.0f64; model.k];
    let mut a_sum = vec![0.0f64; model.k];
    let a = lab.a.values();
    for (i, &c) in model.assignments.iter().enumerate() {
        let (x, y) = ((i % width) as f64, (i / width) as f64);
        size[c] += 1;
        dist[c] += (x - cx).powi(2) + (y - cy).powi(2);
        a_sum[c] += a[i];
    }
    let scores: Vec<ClusterScore> = (0..model.k)
        .filter(|&c| size[c] > 0)
        .map(|c| ClusterScore {
            cluster: c,
            size: size[c],
            spatial: dist[c] / size[c] as f64 / half_diag2,
            mean_a: a_sum[c] / size[c] as f64,
        })
        .collect();
    let best = scores
        .iter()
        .copied()
        .reduce(|best, s| {
            let closer = s.spatial < best.spatial - SCORE_TIE;
            let tied = (s.spatial - best.spatial).abs() <= SCORE_TIE;
            if closer || (tied && s.mean_a > best.mean_a) {
                s
            } else {
                best
            }
        })
        .ok_or_else(|| Error::Degenerate("every cluster is empty".into()))?;
    Ok((best.cluster, scores))
}

/// Flood-fill labeling under 4- or 8-adjacency.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits()[j] && labels[j] == 0 {
                    labels[j] = id;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    ComponentLabeling {
        width: w,
        height: h,
        labels,
        sizes,
    }
}

/// Mask of the component with the most pixels; ties go to the lowest id.
pub fn largest_component(labeling: &ComponentLabeling) -> Result<BinaryMask> {
    let mut best: Option<(usize, usize)> = None;
    for (i, &s) in labeling.sizes.iter().enumerate() {
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((i, s));
        }
    }
    let (idx, _) = best.ok_or_else(|| Error::Degenerate("no connected components".into()))?;
    let id = idx as u32 + 1;
    BinaryMask::new(
        labeling.width,
        labeling.height,
        labeling.labels.iter().map(|&l| l == id).collect(),
    )
}

/// Tight bounding box of the true pixels grown by `margin` on every side and
/// clamped to the image.
pub fn bbox_with_margin(mask: &BinaryMask, margin: usize) -> Result<BBox> {
    let mut it = mask.true_pixels();
    let (fx, fy) = it
        .next()
        .ok_or_else(|| Error::Degenerate("cannot bound an empty mask".into()))?;
    let (mut x0, mut y0, mut x1, mut y1) = (fx, fy, fx, fy);
    for (x, y) in it {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    BBox::new(
        x0.saturating_sub(margin),
        y0.saturating_sub(margin),
        (x1 + 1 + margin).min(mask.width()),
        (y1 + 1 + margin).min(mask.height()),
    )
}

/// Full ROI stage: cluster choice, labeling, largest component, boxes.
pub fn extract_roi(
    model: &ClusterModel,
    lab: &LabImage,
    connectivity: Connectivity,
    margin: usize,
) -> Result<RoiResult> {
    let (w, h) = (lab.width(), lab.height());
    let (cluster_index, scores) = select_cervix_cluster(model, lab, w, h)?;
    let cluster_mask = BinaryMask::new(
        w,
        h,
        model.assignments.iter().map(|&a| a == cluster_index).collect(),
    )?;
    let labeling = connected_components(&cluster_mask, connectivity);
    let roi_mask = largest_component(&labeling)?;
    let tight_bbox = bbox_with_margin(&roi_mask, 0)?;
    let bbox = bbox_with_margin(&roi_mask, margin)?;
    Ok(RoiResult {
        cluster_index,
        scores,
        component_sizes: labeling.sizes,
        roi_mask,
        tight_bbox,
        bbox,
    })
}
