//! Reduction of a scenario pool to a few typical days with k-means.
//!
//! Each scenario becomes one feature vector: its bus demand (active and
//! reactive) and PV availability profiles, concatenated and z-scored per
//! feature across the pool. Seeding is k-means++ driven by a counter RNG,
//! so results are reproducible. Solutions are grown one cluster at a
//! time, each k warm-started from the k-1 result, which makes the
//! reported SSE non-increasing in k for the same pool and seed.

use crate::scenario::ScenarioSet;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cluster count must be in 1..={pool} for a pool of {pool} scenarios, got {k}")]
    BadK { k: usize, pool: usize },
    #[error("scenario pool is empty")]
    EmptyPool,
    #[error("scenario {label:?} has a different shape than the rest of the pool")]
    ShapeMismatch { label: String },
}

#[derive(Debug, Clone)]
pub struct ClusterResult {
    /// Per-cluster mean scenarios, labeled cluster1..clusterK.
    pub scenarios: Vec<ScenarioSet>,
    /// Pool members per cluster.
    pub weights: Vec<usize>,
    /// Cluster index of each pool scenario.
    pub assignment: Vec<usize>,
    /// Sum of squared distances in normalized feature space.
    pub sse: f64,
}

pub fn cluster_scenarios(
    pool: &[ScenarioSet],
    k: usize,
    seed: u64,
) -> Result<ClusterResult, ClusterError> {
    if pool.is_empty() {
        return Err(ClusterError::EmptyPool);
    }
    if k == 0 || k > pool.len() {
        return Err(ClusterError::BadK { k, pool: pool.len() });
    }
    for s in &pool[1..] {
        if s.horizon != pool[0].horizon
            || s.demand_p.len() != pool[0].demand_p.len()
            || s.pv_availability.len() != pool[0].pv_availability.len()
        {
            return Err(ClusterError::ShapeMismatch { label: s.label.clone() });
        }
    }

    let points = normalized_features(pool);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Grow from one cluster up: k-means++ proposes a fresh seeding at each
    // size, the incumbent adds the farthest point to the k-1 centroids, and
    // the better of the two (after Lloyd refinement) wins. The incumbent
    // route alone guarantees sse(k) <= sse(k-1).
    let mut best: Option<(Vec<Vec<f64>>, Vec<usize>, f64)> = None;
    for size in 1..=k {
        let mut candidates: Vec<Vec<Vec<f64>>> = Vec::new();
        candidates.push(plus_plus_seed(&points, size, &mut rng));
        if let Some((prev, _, _)) = &best {
            let mut grown = prev.clone();
            grown.push(points[farthest_point(&points, prev)].clone());
            candidates.push(grown);
        }
        let mut round_best: Option<(Vec<Vec<f64>>, Vec<usize>, f64)> = None;
        for cand in candidates {
            let (c, a, sse) = lloyd(&points, cand);
            if round_best.as_ref().map_or(true, |(_, _, s)| sse < *s) {
                round_best = Some((c, a, sse));
            }
        }
        best = round_best;
    }
    let (_, assignment, sse) = best.expect("k >= 1");

    // Raw-space centroids are plain member means: the z-score map is
    // affine, so the mean commutes with it.
    let mut weights = vec![0usize; k];
    for &a in &assignment {
        weights[a] += 1;
    }
    let mut scenarios = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<usize> =
            (0..pool.len()).filter(|&i| assignment[i] == c).collect();
        scenarios.push(mean_scenario(pool, &members, &format!("cluster{}", c + 1)));
    }
    Ok(ClusterResult { scenarios, weights, assignment, sse })
}

// --- feature space -----------------------------------------------------

fn raw_features(set: &ScenarioSet) -> Vec<f64> {
    let mut v = Vec::new();
    for row in set.demand_p.iter().chain(&set.demand_q).chain(&set.pv_availability) {
        v.extend_from_slice(row);
    }
    v
}

fn normalized_features(pool: &[ScenarioSet]) -> Vec<Vec<f64>> {
    let mut points: Vec<Vec<f64>> = pool.iter().map(raw_features).collect();
    let dim = points[0].len();
    let n = points.len() as f64;
    for d in 0..dim {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for p in &mut points {
            p[d] = if sd > 1e-12 { (p[d] - mean) / sd } else { 0.0 };
        }
    }
    points
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// --- k-means core -------------------------------------------------------

fn plus_plus_seed(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| centroids.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All mass on existing centroids (duplicate points); any pick works.
            rng.gen_range(0..points.len())
        } else {
            let mut ticket = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if ticket < *w {
                    pick = i;
                    break;
                }
                ticket -= w;
            }
            pick
        };
        centroids.push(points[next].clone());
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut assignment = vec![0usize; points.len()];
    let mut sse = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, cen) in centroids.iter().enumerate() {
            let d = dist2(p, cen);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignment[i] = best;
        sse += best_d;
    }
    (assignment, sse)
}

fn farthest_point(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> usize {
    let (assignment, _) = assign(points, centroids);
    let mut pick = 0;
    let mut pick_d = -1.0;
    for (i, p) in points.iter().enumerate() {
        let d = dist2(p, &centroids[assignment[i]]);
        if d > pick_d {
            pick_d = d;
            pick = i;
        }
    }
    pick
}

fn lloyd(
    points: &[Vec<f64>],
    mut centroids: Vec<Vec<f64>>,
) -> (Vec<Vec<f64>>, Vec<usize>, f64) {
    let dim = points[0].len();
    let k = centroids.len();
    let mut assignment = Vec::new();
    for _ in 0..100 {
        let (a, _) = assign(points, &centroids);
        if a == assignment {
            break;
        }
        assignment = a;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for d in 0..dim {
                sums[assignment[i]][d] += p[d];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed a starved cluster from the worst-fit point.
                centroids[c] = points[farthest_point(points, &centroids)].clone();
            } else {
                for d in 0..dim {
                    centroids[c][d] = sums[c][d] / counts[c] as f64;
                }
            }
        }
    }
    let (assignment, sse) = assign(points, &centroids);
    (centroids, assignment, sse)
}

fn mean_scenario(pool: &[ScenarioSet], members: &[usize], label: &str) -> ScenarioSet {
    let proto = &pool[0];
    let mut out = ScenarioSet {
        label: label.to_string(),
        horizon: proto.horizon,
        demand_p: vec![vec![0.0; proto.horizon]; proto.demand_p.len()],
        demand_q: vec![vec![0.0; proto.horizon]; proto.demand_q.len()],
        pv_availability: vec![vec![0.0; proto.horizon]; proto.pv_availability.len()],
    };
    if members.is_empty() {
        return out;
    }
    let w = 1.0 / members.len() as f64;
    for &i in members {
        let s = &pool[i];
        for (dst, src) in out.demand_p.iter_mut().zip(&s.demand_p) {
            for (d, v) in dst.iter_mut().zip(src) {
                *d += w * v;
            }
        }
        for (dst, src) in out.demand_q.iter_mut().zip(&s.demand_q) {
            for (d, v) in dst.iter_mut().zip(src) {
                *d += w * v;
            }
        }
        for (dst, src) in out.pv_availability.iter_mut().zip(&s.pv_availability) {
            for (d, v) in dst.iter_mut().zip(src) {
                *d += w * v;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
