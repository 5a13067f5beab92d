//! Silhouette-selected K-means over UE positions and UAV placement.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const MAX_LLOYD_ITERATIONS: usize = 300;

fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Point>,
    pub inertia: f64,
    pub iterations: usize,
}

fn nearest_centroid(p: Point, centroids: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, &m) in centroids.iter().enumerate() {
        let d = dist2(p, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn inertia(points: &[Point], assignment: &[usize], centroids: &[Point]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| dist2(*p, centroids[c]))
        .sum()
}

fn kmeans_pp_seed<R: Rng + ?Sized>(points: &[Point], k: usize, rng: &mut R) -> Vec<Point> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(*p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // rounding can walk past the last positive weight
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        centroids.push(c);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(dist2(*p, c));
        }
    }
    centroids
}

fn update_centroids(points: &[Point], assignment: &[usize], centroids: &mut [Point]) -> Vec<usize> {
    let k = centroids.len();
    let mut sums = vec![[0.0, 0.0]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        sums[c][0] += p[0];
        sums[c][1] += p[1];
        counts[c] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
        }
    }
    counts
}

/// Move the worst-fit point of a multi-member cluster into each empty one.
fn repair_empty(points: &[Point], assignment: &mut [usize], centroids: &mut [Point]) {
    loop {
        let counts = update_centroids(points, assignment, centroids);
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        let donor = points
            .iter()
            .enumerate()
            .filter(|(i, _)| counts[assignment[*i]] > 1)
            .max_by(|(i, p), (j, q)| {
                let di = dist2(**p, centroids[assignment[*i]]);
                let dj = dist2(**q, centroids[assignment[*j]]);
                di.total_cmp(&dj).then(j.cmp(i))
            })
            .map(|(i, _)| i);
        let Some(i) = donor else {
            return;
        };
        assignment[i] = empty;
        centroids[empty] = points[i];
    }
}

/// One seeded Lloyd run with k-means++ initialization.
pub fn kmeans<R: Rng + ?Sized>(points: &[Point], k: usize, rng: &mut R) -> Result<KMeansFit> {
    if points.is_empty() {
        return Err(Error::Empty("k-means points"));
    }
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "must be at least 1".into(),
        });
    }
    let mut centroids = kmeans_pp_seed(points, k, rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest_centroid(*p, &centroids).0).collect();
    repair_empty(points, &mut assignment, &mut centroids);
    let mut current = inertia(points, &assignment, &centroids);
    let mut iterations = 0;

    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let next: Vec<usize> = points.iter().map(|p| nearest_centroid(*p, &centroids).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
        repair_empty(points, &mut assignment, &mut centroids);
        let updated = inertia(points, &assignment, &centroids);
        debug_assert!(
            updated <= current * (1.0 + 1e-9) + 1e-9,
            "lloyd iteration increased inertia: {current} -> {updated}"
        );
        current = updated;
    }

    Ok(KMeansFit {
        assignment,
        centroids,
        inertia: current,
        iterations,
    })
}

/// Best-inertia fit over `restarts` seeded runs.
pub fn kmeans_restarts<R: Rng + ?Sized>(points: &[Point], k: usize, restarts: usize, rng: &mut R) -> Result<KMeansFit> {
    let mut best = kmeans(points, k, rng)?;
    for _ in 1..restarts.max(1) {
        let fit = kmeans(points, k, rng)?;
        if fit.inertia < best.inertia {
            best = fit;
        }
    }
    Ok(best)
}

fn cluster_count(assignment: &[usize]) -> usize {
    let mut labels: Vec<usize> = assignment.to_vec();
    labels.sort_unstable();
    labels.dedup();
    labels.len()
}

/// Silhouette coefficient of sample `i`.
///
/// A member of a singleton cluster scores 0, as does a sample with
/// `a == b` (including `a == b == 0`).
pub fn silhouette_sample(i: usize, assignment: &[usize], points: &[Point]) -> Result<f64> {
    if assignment.len() != points.len() {
        return Err(Error::Shape {
            context: "silhouette assignment",
            expected: points.len(),
            actual: assignment.len(),
        });
    }
    let found = cluster_count(assignment);
    if found < 2 {
        return Err(Error::TooFewClusters(found));
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (j, (&c, p)) in assignment.iter().zip(points).enumerate() {
        if j != i {
            sums[c] += dist(points[i], *p);
            counts[c] += 1;
        }
    }
    let own = assignment[i];
    if counts[own] == 0 {
        return Ok(0.0);
    }
    let a = sums[own] / counts[own] as f64;
    let b = (0..k)
        .filter(|&c| c != own && counts[c] > 0)
        .map(|c| sums[c] / counts[c] as f64)
        .fold(f64::INFINITY, f64::min);
    let denom = a.max(b);
    if denom == 0.0 || a == b {
        return Ok(0.0);
    }
    Ok((b - a) / denom)
}

pub fn mean_silhouette(assignment: &[usize], points: &[Point]) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..points.len() {
        total += silhouette_sample(i, assignment, points)?;
    }
    Ok(total / points.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPlan {
    pub k_star: usize,
    /// UE index -> cluster index in `0..k_star`.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Point>,
    /// Mean silhouette of the chosen plan; 0 for the single-cluster fallback.
    pub silhouette_mean: f64,
    /// `(k, S_k)` for every candidate evaluated.
    pub scores: Vec<(usize, f64)>,
    /// Cluster index -> UAV index.
    pub uav_of_cluster: Vec<usize>,
}

impl ClusterPlan {
    /// Sorted indices of the UAVs serving a cluster.
    pub fn active_uavs(&self) -> Vec<usize> {
        let mut v = self.uav_of_cluster.clone();
        v.sort_unstable();
        v
    }

    /// Members of every cluster, in ascending UE order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k_star];
        for (ue, &c) in self.assignment.iter().enumerate() {
            out[c].push(ue);
        }
        out
    }

    /// Cluster served by `uav`, if any.
    pub fn cluster_of_uav(&self, uav: usize) -> Option<usize> {
        self.uav_of_cluster.iter().position(|&u| u == uav)
    }

    fn single(points: &[Point]) -> Self {
        let n = points.len().max(1) as f64;
        let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
        let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
        Self {
            k_star: 1,
            assignment: vec![0; points.len()],
            centroids: vec![[cx, cy]],
            silhouette_mean: 0.0,
            scores: Vec::new(),
            uav_of_cluster: vec![0],
        }
    }
}

/// Choose `k*` in `2..=k_max` maximizing the mean silhouette.
///
/// Fewer than three points, or no two distinct locations, fall back to one
/// cluster. Candidates above the number of distinct locations are skipped.
pub fn select_k<R: Rng + ?Sized>(points: &[Point], k_max: usize, restarts: usize, rng: &mut R) -> Result<ClusterPlan> {
    if points.is_empty() {
        return Err(Error::Empty("clustering points"));
    }
    let mut distinct: Vec<Point> = points.to_vec();
    distinct.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    distinct.dedup();
    if points.len() < 3 || distinct.len() < 2 || k_max < 2 {
        return Ok(ClusterPlan::single(points));
    }

    let mut best: Option<(f64, KMeansFit)> = None;
    let mut scores = Vec::new();
    for k in 2..=k_max.min(distinct.len()) {
        let fit = kmeans_restarts(points, k, restarts, rng)?;
        let s = mean_silhouette(&fit.assignment, points)?;
        scores.push((k, s));
        if best.as_ref().is_none_or(|(bs, _)| s > *bs) {
            best = Some((s, fit));
        }
    }
    let (silhouette_mean, fit) = best.expect("at least k = 2 is evaluated");
    let k_star = fit.centroids.len();
    Ok(ClusterPlan {
        k_star,
        assignment: fit.assignment,
        centroids: fit.centroids,
        silhouette_mean,
        scores,
        uav_of_cluster: (0..k_star).collect(),
    })
}

/// Relabel clusters onto UAV indices, keeping each UAV near where it was.
///
/// `previous[u]` is the last horizontal position of UAV `u` if it was
/// active. Pairs are matched greedily by smallest distance; clusters left
/// over take the lowest free UAV indices.
pub fn match_to_previous(plan: &mut ClusterPlan, previous: &[Option<Point>]) {
    let k_max = previous.len().max(plan.k_star);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (c, &centroid) in plan.centroids.iter().enumerate() {
        for (u, prev) in previous.iter().enumerate() {
            if let Some(p) = prev {
                pairs.push((dist2(centroid, *p), c, u));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut uav_of_cluster = vec![usize::MAX; plan.k_star];
    let mut taken = vec![false; k_max];
    for (_, c, u) in pairs {
        if uav_of_cluster[c] == usize::MAX && !taken[u] {
            uav_of_cluster[c] = u;
            taken[u] = true;
        }
    }
    for slot in uav_of_cluster.iter_mut().filter(|s| **s == usize::MAX) {
        let u = taken.iter().position(|t| !t).expect("k_star <= k_max");
        *slot = u;
        taken[u] = true;
    }
    plan.uav_of_cluster = uav_of_cluster;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavPlacement {
    pub active: bool,
    pub xyz: [f64; 3],
}

/// Active UAVs hover over their cluster centroid; the rest sleep.
pub fn place_uavs(plan: &ClusterPlan, altitude_init: f64, k_max: usize) -> Vec<UavPlacement> {
    let mut out = vec![
        UavPlacement {
            active: false,
            xyz: [0.0, 0.0, altitude_init],
        };
        k_max.max(plan.k_star)
    ];
    for (c, &u) in plan.uav_of_cluster.iter().enumerate() {
        let [x, y] = plan.centroids[c];
        out[u] = UavPlacement {
            active: true,
            xyz: [x, y, altitude_init],
        };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub frame: usize,
    pub ue_id: usize,
    /// Index of the UAV serving the UE's cluster.
    pub cluster: usize,
    pub centroid_x: f64,
    pub centroid_y: f64,
    pub k_star: usize,
    pub mean_silhouette: f64,
}

pub const CLUSTER_HEADER: &str = "frame,ue_id,cluster,centroid_x,centroid_y,k_star,mean_silhouette";

pub fn cluster_rows(frame: usize, plan: &ClusterPlan) -> Vec<ClusterRow> {
    plan.assignment
        .iter()
        .enumerate()
        .map(|(ue_id, &c)| ClusterRow {
            frame,
            ue_id,
            cluster: plan.uav_of_cluster[c],
            centroid_x: plan.centroids[c][0],
            centroid_y: plan.centroids[c][1],
            k_star: plan.k_star,
            mean_silhouette: plan.silhouette_mean,
        })
        .collect()
}

pub fn write_cluster_row<W: Write>(w: &mut W, row: &ClusterRow) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        row.frame, row.ue_id, row.cluster, row.centroid_x, row.centroid_y, row.k_star, row.mean_silhouette
    )
}
