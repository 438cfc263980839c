//! Dense vector helpers on `[f64]`.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x {
        *xi *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let d = norm(&sub(a, b));
    d / norm(a).max(norm(b)).max(floor)
}

/// Sums equal-length vectors with a fixed pairwise tree, so the result only
/// depends on the order of `items`, never on how they were produced.
pub fn pairwise_sum(items: &[Vec<f64>], len: usize) -> Vec<f64> {
    match items.len() {
        0 => vec![0.0; len],
        1 => items[0].clone(),
        n => {
            let (lo, hi) = items.split_at(n / 2);
            let mut out = pairwise_sum(lo, len);
            let right = pairwise_sum(hi, len);
            axpy(1.0, &right, &mut out);
            out
        }
    }
}

pub fn pairwise_sum_scalars(items: &[f64]) -> f64 {
    match items.len() {
        0 => 0.0,
        1 => items[0],
        n => {
            let (lo, hi) = items.split_at(n / 2);
            pairwise_sum_scalars(lo) + pairwise_sum_scalars(hi)
        }
    }
}

/// Sample mean and standard error of the mean. The standard error is zero
/// for fewer than two samples.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum_scalars(xs) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Coordinate-wise mean and standard error across equal-length vectors.
pub fn mean_and_se_vec(items: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = items.len();
    let mut mean = pairwise_sum(items, len);
    if n == 0 {
        return (mean, vec![0.0; len]);
    }
    scale(1.0 / n as f64, &mut mean);
    let mut se = vec![0.0; len];
    if n >= 2 {
        for item in items {
            for (j, v) in item.iter().enumerate() {
                se[j] += (v - mean[j]).powi(2);
            }
        }
        for s in &mut se {
            *s = (*s / (n - 1) as f64 / n as f64).sqrt();
        }
    }
    (mean, se)
}
