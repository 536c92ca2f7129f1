//! Small dense vector helpers over `&[f64]`.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm_q(a: &[f64], q: f64) -> f64 {
    let m = norm_inf(a);
    if m == 0.0 {
        return 0.0;
    }
    // scaled to avoid underflow for q close to 1 and tiny entries
    m * a.iter().map(|x| (x.abs() / m).powf(q)).sum::<f64>().powf(1.0 / q)
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| x * c).collect()
}

/// `y += c * x`
pub fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Row-major `rows x cols` matrix times vector.
pub fn mat_vec(m: &[f64], cols: usize, v: &[f64]) -> Vec<f64> {
    m.chunks_exact(cols).map(|row| dot(row, v)).collect()
}

/// Transpose of a row-major `rows x cols` matrix times a vector of length `rows`.
pub fn mat_t_vec(m: &[f64], cols: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, vi) in m.chunks_exact(cols).zip(v) {
        axpy(*vi, row, &mut out);
    }
    out
}

/// Pairwise summation: a fixed reduction tree, so chunked parallel evaluation
/// reproduces the sequential result bit for bit.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
