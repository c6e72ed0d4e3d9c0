//! Special functions and quadrature shared by the signal, moment and
//! thresholding modules.

use std::f64::consts::PI;

/// Dirichlet kernel `sin(pi f n) / sin(pi f)`.
///
/// At integer `f` the removable singularity is resolved by L'Hopital,
/// giving `n cos(pi f n) / cos(pi f)`, i.e. `n` at `f = 0`.
pub fn dirichlet(n: usize, f: f64) -> f64 {
    let n_f = n as f64;
    // Reduce to (-1/2, 1/2] modulo the kernel's period structure: D_n(f+1) = (-1)^(n-1) D_n(f).
    let k = f.round();
    let r = f - k;
    let sign = if n.is_multiple_of(2) && (k as i64 % 2 != 0) { -1.0 } else { 1.0 };
    let den = (PI * r).sin();
    if den.abs() < 1e-12 {
        // Taylor expansion around r = 0 keeps the kernel smooth near the singularity.
        let x2 = (PI * r) * (PI * r);
        return sign * n_f * (1.0 - (n_f * n_f - 1.0) * x2 / 6.0);
    }
    sign * (PI * r * n_f).sin() / den
}

/// Normalized sinc, `sin(pi x) / (pi x)` with value 1 at the origin.
pub fn normalized_sinc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let px = PI * x;
    if px.abs() < 1e-8 {
        return 1.0 - px * px / 6.0;
    }
    px.sin() / px
}

/// Composite trapezoidal rule of `f` over `[lo, hi]` with `intervals` panels.
pub fn trapezoid<T, F>(lo: f64, hi: f64, intervals: usize, mut f: F) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    F: FnMut(f64) -> T,
{
    assert!(intervals >= 1);
    let h = (hi - lo) / intervals as f64;
    let mut acc = (f(lo) + f(hi)) * 0.5;
    for i in 1..intervals {
        acc = acc + f(lo + h * i as f64);
    }
    acc * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_examples() {
        assert_eq!(dirichlet(4, 0.0), 4.0);
        assert!(dirichlet(256, 1.0 / 256.0).abs() < 1e-12);
        assert!((dirichlet(2, 0.25) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_matches_geometric_sum() {
        for &n in &[1usize, 2, 5, 16, 33] {
            for i in 0..200 {
                let f = -1.7 + i as f64 * 0.0173;
                let direct: f64 = (0..n)
                    .map(|t| (2.0 * PI * f * (t as f64 - (n as f64 - 1.0) / 2.0)).cos())
                    .sum();
                assert!(
                    (dirichlet(n, f) - direct).abs() < 1e-9,
                    "n={n} f={f}: {} vs {direct}",
                    dirichlet(n, f)
                );
            }
        }
    }

    #[test]
    fn dirichlet_is_even() {
        for &n in &[1usize, 2, 7, 256] {
            for i in 0..1000 {
                let f = i as f64 * 1e-3 - 0.5;
                assert!((dirichlet(n, f) - dirichlet(n, -f)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dirichlet_at_integers() {
        assert_eq!(dirichlet(3, 1.0), 3.0);
        assert_eq!(dirichlet(4, 1.0), -4.0);
        assert_eq!(dirichlet(4, 2.0), 4.0);
    }

    #[test]
    fn sinc_examples() {
        assert_eq!(normalized_sinc(0.0), 1.0);
        assert!(normalized_sinc(1.0).abs() < 1e-15);
        assert!((normalized_sinc(0.5) - 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let v: f64 = trapezoid(0.0, 2.0, 3, |x| 3.0 * x + 1.0);
        assert!((v - 8.0).abs() < 1e-12);
    }
}
