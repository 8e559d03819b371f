//! Per-author prominent-cluster retention.
//!
//! The number of clusters is chosen by sweeping K-Means over `k = 2..=k_max`
//! and keeping the best silhouette; the final grouping comes from
//! agglomerative clustering at that `k`, and only the largest group's
//! entries are kept.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clients::EmbeddingVector;
use crate::corpus::JournalEntry;
use crate::error::{Error, Result};
use crate::text::{euclidean, squared_euclidean, unit};

pub const KMEANS_MAX_ITER: usize = 300;

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        self.values()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Ward,
    Single,
    Complete,
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub k_max: usize,
    pub linkage: Linkage,
    pub seed: u64,
    /// Scale embeddings to unit length before clustering.
    pub normalize: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            k_max: 10,
            linkage: Linkage::Ward,
            seed: 0,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringOutcome {
    pub labels: Vec<usize>,
    pub k_star: usize,
    pub silhouette_by_k: BTreeMap<usize, f64>,
    pub retained_ids: Vec<String>,
}

fn check_dims<V: AsRef<[f64]>>(vectors: &[V]) -> Result<()> {
    if let Some(first) = vectors.first() {
        let d = first.as_ref().len();
        if vectors.iter().any(|v| v.as_ref().len() != d) {
            return Err(Error::argument("vectors have mixed dimensions"));
        }
    }
    Ok(())
}

/// Mean silhouette over all points with Euclidean distance.
///
/// Labels may be any integers; points alone in their cluster score 0.
pub fn silhouette<V: AsRef<[f64]>>(vectors: &[V], labels: &[usize]) -> Result<f64> {
    if vectors.len() != labels.len() {
        return Err(Error::argument(format!(
            "silhouette: {} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    if vectors.len() < 3 {
        return Err(Error::argument("silhouette needs at least 3 points"));
    }
    check_dims(vectors)?;
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::argument("silhouette needs at least 2 clusters"));
    }

    let n = vectors.len();
    let mut total = 0.0;
    for i in 0..n {
        let own = &members[&labels[i]];
        if own.len() == 1 {
            continue;
        }
        let mean_dist = |pts: &[usize]| -> f64 {
            pts.iter()
                .filter(|&&j| j != i)
                .map(|&j| euclidean(vectors[i].as_ref(), vectors[j].as_ref()))
                .sum::<f64>()
        };
        let a = mean_dist(own) / (own.len() - 1) as f64;
        let b = members
            .iter()
            .filter(|(&l, _)| l != labels[i])
            .map(|(_, pts)| mean_dist(pts) / pts.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// K-Means result with the within-cluster sum of squares after each
/// center update.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

pub fn kmeans<V: AsRef<[f64]>>(vectors: &[V], k: usize, seed: u64) -> Result<Vec<usize>> {
    kmeans_fit(vectors, k, seed).map(|f| f.labels)
}

/// Lloyd iterations from greedy farthest-point seeding.
///
/// The first center is drawn uniformly under `seed`; each subsequent center
/// is the point farthest from all chosen centers (lowest index on ties).
/// Assignment ties keep a point's current cluster, else go to the lowest
/// center index. A cluster that empties takes the point farthest from its
/// own center.
pub fn kmeans_fit<V: AsRef<[f64]>>(vectors: &[V], k: usize, seed: u64) -> Result<KMeansFit> {
    let n = vectors.len();
    if k < 2 || k > n {
        return Err(Error::argument(format!("kmeans: k = {k} outside [2, {n}]")));
    }
    check_dims(vectors)?;
    let pts: Vec<&[f64]> = vectors.iter().map(AsRef::as_ref).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut center_idx = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = pts.iter().map(|p| squared_euclidean(p, pts[center_idx[0]])).collect();
    while center_idx.len() < k {
        let mut best = 0;
        for i in 1..n {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        center_idx.push(best);
        for (i, p) in pts.iter().enumerate() {
            nearest[i] = nearest[i].min(squared_euclidean(p, pts[best]));
        }
    }
    let mut centers: Vec<Vec<f64>> = center_idx.iter().map(|&i| pts[i].to_vec()).collect();

    let mut labels = vec![usize::MAX; n];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..KMEANS_MAX_ITER {
        iterations += 1;
        let mut changed = false;
        for (i, p) in pts.iter().enumerate() {
            let current = labels[i];
            let mut best = if current < k { current } else { 0 };
            let mut best_d = squared_euclidean(p, &centers[best]);
            for (c, center) in centers.iter().enumerate() {
                let d = squared_euclidean(p, center);
                if d < best_d || (d == best_d && c < best && best != current) {
                    best = c;
                    best_d = d;
                }
            }
            if best != current {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        repair_empty(&pts, &mut labels, &mut centers);
        update_centers(&pts, &labels, &mut centers);
        inertia_trace.push(inertia(&pts, &labels, &centers));
    }
    repair_empty(&pts, &mut labels, &mut centers);
    Ok(KMeansFit {
        labels,
        inertia_trace,
        iterations,
    })
}

fn update_centers(pts: &[&[f64]], labels: &[usize], centers: &mut [Vec<f64>]) {
    let d = pts[0].len();
    let mut sums = vec![vec![0.0; d]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (p, &l) in pts.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    for (c, (sum, count)) in sums.into_iter().zip(counts).enumerate() {
        if count > 0 {
            centers[c] = sum.into_iter().map(|s| s / count as f64).collect();
        }
    }
}

fn repair_empty(pts: &[&[f64]], labels: &mut [usize], centers: &mut [Vec<f64>]) {
    loop {
        let mut counts = vec![0usize; centers.len()];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in pts.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = squared_euclidean(p, &centers[labels[i]]);
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.expect("k <= n leaves a donor cluster");
        labels[i] = empty;
        centers[empty] = pts[i].to_vec();
    }
}

fn inertia(pts: &[&[f64]], labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    pts.iter()
        .zip(labels)
        .map(|(p, &l)| squared_euclidean(p, &centers[l]))
        .sum()
}

/// Best `k` in `[2, min(k_max, n - 1)]` by K-Means silhouette, smaller `k`
/// on ties. Also returns the full sweep.
pub fn optimal_k<V: AsRef<[f64]>>(vectors: &[V], k_max: usize, seed: u64) -> Result<(usize, BTreeMap<usize, f64>)> {
    let n = vectors.len();
    if n < 3 {
        return Err(Error::argument(format!("optimal_k needs at least 3 points, got {n}")));
    }
    if k_max < 2 {
        return Err(Error::argument(format!("k_max = {k_max} admits no k >= 2")));
    }
    let mut sweep = BTreeMap::new();
    let mut best = (2, f64::NEG_INFINITY);
    for k in 2..=k_max.min(n - 1) {
        let labels = kmeans(vectors, k, seed)?;
        let s = silhouette(vectors, &labels)?;
        sweep.insert(k, s);
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok((best.0, sweep))
}

/// Bottom-up merging to exactly `k` clusters.
///
/// Clusters are identified by their smallest member index; among equal
/// merge costs the pair with the smallest `(i, j)` identifiers merges first.
/// Output labels are numbered in order of each cluster's first member.
pub fn agglomerative<V: AsRef<[f64]>>(vectors: &[V], k: usize, linkage: Linkage) -> Result<Vec<usize>> {
    let n = vectors.len();
    if k < 2 || k > n {
        return Err(Error::argument(format!("agglomerative: k = {k} outside [2, {n}]")));
    }
    check_dims(vectors)?;
    let pts: Vec<&[f64]> = vectors.iter().map(AsRef::as_ref).collect();
    let dist: Vec<Vec<f64>> = pts
        .iter()
        .map(|a| pts.iter().map(|b| euclidean(a, b)).collect())
        .collect();

    struct Group {
        members: Vec<usize>,
        centroid: Vec<f64>,
    }
    // kept sorted by smallest member, which is members[0]
    let mut groups: Vec<Group> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| Group {
            members: vec![i],
            centroid: p.to_vec(),
        })
        .collect();

    let cost = |a: &Group, b: &Group| -> f64 {
        match linkage {
            Linkage::Ward => {
                let (na, nb) = (a.members.len() as f64, b.members.len() as f64);
                na * nb / (na + nb) * squared_euclidean(&a.centroid, &b.centroid)
            }
            Linkage::Single => pairs(a, b, &dist).fold(f64::INFINITY, f64::min),
            Linkage::Complete => pairs(a, b, &dist).fold(f64::NEG_INFINITY, f64::max),
            Linkage::Average => pairs(a, b, &dist).sum::<f64>() / (a.members.len() * b.members.len()) as f64,
        }
    };
    fn pairs<'a>(a: &'a Group, b: &'a Group, dist: &'a [Vec<f64>]) -> impl Iterator<Item = f64> + 'a {
        a.members
            .iter()
            .flat_map(move |&i| b.members.iter().map(move |&j| dist[i][j]))
    }

    while groups.len() > k {
        let mut best = (0, 1, f64::INFINITY);
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let c = cost(&groups[i], &groups[j]);
                if c < best.2 {
                    best = (i, j, c);
                }
            }
        }
        let (i, j, _) = best;
        let b = groups.remove(j);
        let a = &mut groups[i];
        let (na, nb) = (a.members.len() as f64, b.members.len() as f64);
        for (x, y) in a.centroid.iter_mut().zip(&b.centroid) {
            *x = (*x * na + y * nb) / (na + nb);
        }
        a.members.extend(b.members);
        a.members.sort_unstable();
    }

    let mut labels = vec![0; n];
    for (label, g) in groups.iter().enumerate() {
        for &m in &g.members {
            labels[m] = label;
        }
    }
    Ok(labels)
}

/// Keeps one author's most prominent cluster of entries.
///
/// `entries` must be in corpus order. Authors with at most two entries keep
/// everything (`k_star = 1`). Equal-size largest clusters resolve to the
/// one containing the earliest entry.
pub fn retain_prominent(
    entries: &[&JournalEntry],
    embeddings: &[EmbeddingVector],
    cfg: &ClusteringConfig,
) -> Result<ClusteringOutcome> {
    if entries.len() != embeddings.len() {
        return Err(Error::argument(format!(
            "retain_prominent: {} entries but {} embeddings",
            entries.len(),
            embeddings.len()
        )));
    }
    if entries.is_empty() {
        return Err(Error::argument("retain_prominent: author has no entries"));
    }
    if entries.len() <= 2 {
        return Ok(ClusteringOutcome {
            labels: vec![0; entries.len()],
            k_star: 1,
            silhouette_by_k: BTreeMap::new(),
            retained_ids: entries.iter().map(|e| e.entry_id.clone()).collect(),
        });
    }
    let vectors: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| {
            if cfg.normalize {
                unit(e.values())
            } else {
                e.values().to_vec()
            }
        })
        .collect();
    let (k_star, silhouette_by_k) = optimal_k(&vectors, cfg.k_max, cfg.seed)?;
    let labels = agglomerative(&vectors, k_star, cfg.linkage)?;

    // labels are numbered by first member, so the lowest label among the
    // largest clusters is the one holding the earliest entry
    let mut sizes = vec![0usize; k_star];
    for &l in &labels {
        sizes[l] += 1;
    }
    let max = *sizes.iter().max().expect("k_star >= 2");
    let keep = sizes.iter().position(|&s| s == max).expect("max exists");
    let retained_ids = entries
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == keep)
        .map(|(e, _)| e.entry_id.clone())
        .collect();
    Ok(ClusteringOutcome {
        labels,
        k_star,
        silhouette_by_k,
        retained_ids,
    })
}
