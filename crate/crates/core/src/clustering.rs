//! Two-cluster k-means and fuzzy c-means over small point clouds.

use rand::seq::index::sample;
use rand::Rng;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn centroid(points: &[Vec<f64>], weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let dim = points[0].len();
    let mut c = vec![0.0; dim];
    let mut total = 0.0;
    for (p, w) in points.iter().zip(weights) {
        total += w;
        for (ci, pi) in c.iter_mut().zip(p) {
            *ci += w * pi;
        }
    }
    if total > 0.0 {
        c.iter_mut().for_each(|v| *v /= total);
    }
    c
}

/// Lloyd's algorithm with `k = 2`, k-means++ seeding and `restarts`
/// independent runs; the labelling with the smallest within-cluster sum of
/// squares wins.
pub fn kmeans2<R: Rng + ?Sized>(points: &[Vec<f64>], restarts: usize, rng: &mut R) -> Vec<usize> {
    let n = points.len();
    if n < 2 {
        return vec![0; n];
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let first = rng.random_range(0..n);
        let d: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
        let total: f64 = d.iter().sum();
        let second = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, di) in d.iter().enumerate() {
                if target < *di {
                    pick = i;
                    break;
                }
                target -= di;
            }
            pick
        } else {
            (first + 1) % n
        };
        let mut centers = [points[first].clone(), points[second].clone()];
        let mut labels = vec![0usize; n];
        for _ in 0..100 {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let l = usize::from(sq_dist(p, &centers[1]) < sq_dist(p, &centers[0]));
                if l != labels[i] {
                    labels[i] = l;
                    changed = true;
                }
            }
            for (c, center) in centers.iter_mut().enumerate() {
                if labels.contains(&c) {
                    *center = centroid(points, labels.iter().map(|&l| f64::from(u8::from(l == c))));
                }
            }
            if !changed {
                break;
            }
        }
        let sse: f64 = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, labels));
        }
    }
    best.map(|(_, l)| l).unwrap_or_default()
}

pub const FUZZIFIER: f64 = 2.0;

/// Fuzzy c-means with two centres. Returns each point's membership in
/// cluster 1 (membership in cluster 0 is the complement).
pub fn fuzzy_cmeans2<R: Rng + ?Sized>(points: &[Vec<f64>], restarts: usize, rng: &mut R) -> Vec<f64> {
    let n = points.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let exponent = 2.0 / (FUZZIFIER - 1.0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..restarts.max(1) {
        let seeds = sample(rng, n, 2);
        let mut centers = [points[seeds.index(0)].clone(), points[seeds.index(1)].clone()];
        let mut member = vec![0.5; n];
        for _ in 0..200 {
            let mut shift: f64 = 0.0;
            for (i, p) in points.iter().enumerate() {
                let d0 = sq_dist(p, &centers[0]).sqrt();
                let d1 = sq_dist(p, &centers[1]).sqrt();
                let u1 = if d1 == 0.0 && d0 == 0.0 {
                    0.5
                } else if d1 == 0.0 {
                    1.0
                } else if d0 == 0.0 {
                    0.0
                } else {
                    1.0 / (1.0 + (d1 / d0).powf(exponent))
                };
                shift = shift.max((u1 - member[i]).abs());
                member[i] = u1;
            }
            centers[0] = centroid(points, member.iter().map(|u| (1.0 - u).powf(FUZZIFIER)));
            centers[1] = centroid(points, member.iter().map(|u| u.powf(FUZZIFIER)));
            if shift < 1e-9 {
                break;
            }
        }
        let objective: f64 = points
            .iter()
            .zip(&member)
            .map(|(p, u)| {
                (1.0 - u).powf(FUZZIFIER) * sq_dist(p, &centers[0]) + u.powf(FUZZIFIER) * sq_dist(p, &centers[1])
            })
            .sum();
        if best.as_ref().is_none_or(|(b, _)| objective < *b) {
            best = Some((objective, member));
        }
    }
    best.map(|(_, m)| m).unwrap_or_default()
}
