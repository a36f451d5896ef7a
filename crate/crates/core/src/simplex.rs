//! Euclidean projection onto the truncated simplex
//! `{x : x_k >= floor, sum x <= cap}`.

/// Projects `x` in place. Requires `cap >= (x.len() + 1) * floor`, which
/// leaves room for the implicit remainder coordinate too.
pub fn project(x: &mut [f64], floor: f64, cap: f64) {
    let k = x.len();
    for v in x.iter_mut() {
        if !v.is_finite() || *v < floor {
            *v = floor;
        }
    }
    let sum: f64 = x.iter().sum();
    if sum <= cap {
        return;
    }
    // Project (x - floor) onto {y >= 0, sum y = budget}.
    let budget = cap - k as f64 * floor;
    let mut sorted: Vec<f64> = x.iter().map(|v| v - floor).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut running = 0.0;
    let mut theta = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        running += s;
        let candidate = (running - budget) / (i + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    for v in x.iter_mut() {
        *v = floor + (*v - floor - theta).max(0.0);
    }
}

/// Squared distance from `x` to its projection.
pub fn infeasibility(x: &[f64], floor: f64, cap: f64) -> f64 {
    let mut p = x.to_vec();
    project(&mut p, floor, cap);
    p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum()
}
