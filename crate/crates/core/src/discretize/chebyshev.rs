//! Chebyshev extreme points, spectral differentiation and Clenshaw–Curtis
//! quadrature on `[-1, 1]`.

use std::f64::consts::PI;

use faer::Mat;

/// `p` Chebyshev extreme points in ascending order.
pub fn points(p: usize) -> Vec<f64> {
    assert!(p >= 2, "need at least two Chebyshev points");
    let n = (p - 1) as f64;
    (0..p).map(|k| -(PI * k as f64 / n).cos()).collect()
}

/// Position of point `k` in `[0, 1]`: `(1 + x_k) / 2`, exact at both ends.
pub fn unit_fraction(p: usize, k: usize) -> f64 {
    let s = (PI * k as f64 / (2.0 * (p - 1) as f64)).sin();
    s * s
}

/// First-derivative matrix on the ascending extreme points.
pub fn diff_matrix(p: usize) -> Mat<f64> {
    assert!(p >= 2);
    let n = p - 1;
    let h = PI / (2.0 * n as f64);
    let weight = |k: usize| {
        let s = if k % 2 == 0 { 1.0 } else { -1.0 };
        if k == 0 || k == n {
            0.5 * s
        } else {
            s
        }
    };
    let mut d = Mat::<f64>::zeros(p, p);
    for i in 0..p {
        let mut diag = 0.0;
        for j in 0..p {
            if i == j {
                continue;
            }
            // x_i - x_j written with sines to avoid cancellation
            let diff = 2.0 * (h * (i + j) as f64).sin() * (h * (i as f64 - j as f64)).sin();
            let v = weight(j) / weight(i) / diff;
            d[(i, j)] = v;
            diag -= v;
        }
        d[(i, i)] = diag;
    }
    d
}

/// Clenshaw–Curtis weights for the `p` extreme points on `[-1, 1]`.
pub fn clenshaw_curtis_weights(p: usize) -> Vec<f64> {
    assert!(p >= 2, "need at least two quadrature points");
    let n = p - 1;
    let nf = n as f64;
    let mut w = vec![0.0; p];
    let theta = |k: usize| PI * k as f64 / nf;
    let mut v = vec![1.0; n.saturating_sub(1)];
    if n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for m in 1..n / 2 {
            let mf = m as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * mf * theta(i + 1)).cos() / (4.0 * mf * mf - 1.0);
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta(i + 1)).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for m in 1..=(n - 1) / 2 {
            let mf = m as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * mf * theta(i + 1)).cos() / (4.0 * mf * mf - 1.0);
            }
        }
    }
    for (i, vi) in v.iter().enumerate() {
        w[i + 1] = 2.0 * vi / nf;
    }
    w
}

/// Evaluates the barycentric interpolant of `values` (at the extreme
/// points) at `x` in `[-1, 1]`.
pub fn interpolate(values: &[f64], x: f64) -> f64 {
    let p = values.len();
    let pts = points(p);
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, (&xk, &fk)) in pts.iter().zip(values).enumerate() {
        let diff = x - xk;
        if diff == 0.0 {
            return fk;
        }
        let mut w = if k % 2 == 0 { 1.0 } else { -1.0 };
        if k == 0 || k == p - 1 {
            w *= 0.5;
        }
        num += w / diff * fk;
        den += w / diff;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_weights() {
        assert_eq!(clenshaw_curtis_weights(2), vec![1.0, 1.0]);
        let w3 = clenshaw_curtis_weights(3);
        for (a, b) in w3.iter().zip([1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_are_positive_and_integrate_polynomials() {
        for p in 2..=33 {
            let w = clenshaw_curtis_weights(p);
            let x = points(p);
            assert!(w.iter().all(|&v| v > 0.0), "p = {p}");
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "p = {p}");
            // exact for polynomials of degree p - 1
            for deg in 0..p {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let q: f64 = w.iter().zip(&x).map(|(wi, xi)| wi * xi.powi(deg as i32)).sum();
                assert!((q - exact).abs() < 1e-12, "p = {p}, degree {deg}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn differentiation_is_exact_on_polynomials() {
        for p in [2, 4, 7, 12, 20] {
            let d = diff_matrix(p);
            let x = points(p);
            for deg in 0..p {
                for i in 0..p {
                    let du: f64 = (0..p).map(|j| d[(i, j)] * x[j].powi(deg as i32)).sum();
                    let exact = if deg == 0 { 0.0 } else { deg as f64 * x[i].powi(deg as i32 - 1) };
                    assert!((du - exact).abs() < 1e-10 * (1 + deg * deg) as f64, "p={p} deg={deg}");
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_smooth_function() {
        let p = 24;
        let vals: Vec<f64> = points(p).iter().map(|x| (2.0 * x).sin()).collect();
        assert!((interpolate(&vals, 0.3137) - (0.6274f64).sin()).abs() < 1e-13);
        assert!((unit_fraction(9, 8) - 1.0).abs() == 0.0 && unit_fraction(9, 0) == 0.0);
    }
}
