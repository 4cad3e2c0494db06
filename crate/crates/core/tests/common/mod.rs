#![allow(dead_code)]

/// Two-sample Kolmogorov–Smirnov distance of two sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// KS distance of a sample to U(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic two-sample KS critical value at level 1%.
pub fn ks_crit_1pct(m: usize, n: usize) -> f64 {
    1.628 * ((m + n) as f64 / (m * n) as f64).sqrt()
}

pub fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}
