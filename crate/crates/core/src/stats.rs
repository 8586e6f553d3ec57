//! Sample statistics and the normality test used by the verification studies.

use num_complex::Complex64;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

pub fn complex_mean(xs: &[Complex64]) -> Complex64 {
    xs.iter().sum::<Complex64>() / xs.len() as f64
}

/// Normalized sample correlation `E[(a-ā)(b-b̄)*] / sqrt(E|a-ā|² E|b-b̄|²)`.
pub fn complex_correlation(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len());
    let ma = complex_mean(a);
    let mb = complex_mean(b);
    let mut cross = Complex64::new(0.0, 0.0);
    let mut pa = 0.0;
    let mut pb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cross += dx * dy.conj();
        pa += dx.norm_sqr();
        pb += dy.norm_sqr();
    }
    cross / (pa * pb).sqrt()
}

/// Outcome of the Anderson–Darling test for normality with mean and variance
/// estimated from the sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityTest {
    /// Small-sample corrected statistic `A²(1 + 0.75/n + 2.25/n²)`.
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl NormalityTest {
    pub fn rejects_at(&self, significance: f64) -> bool {
        self.p_value < significance
    }
}

/// Anderson–Darling normality test. Returns `None` for fewer than 8 samples or
/// a degenerate (zero-variance) sample.
pub fn anderson_darling(xs: &[f64]) -> Option<NormalityTest> {
    let n = xs.len();
    if n < 8 {
        return None;
    }
    let m = mean(xs);
    let s = std_dev(xs);
    if !(s > 0.0) || s <= 1e-12 * m.abs().max(1e-300) {
        return None;
    }
    let mut z: Vec<f64> = xs.iter().map(|x| (x - m) / s).collect();
    z.sort_by(f64::total_cmp);
    let unit = Normal::new(0.0, 1.0).expect("standard normal");
    let nf = n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let lo = unit.cdf(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let hi = unit.sf(z[n - 1 - i]).clamp(1e-300, 1.0);
        acc += (2.0 * i as f64 + 1.0) * (lo.ln() + hi.ln());
    }
    let a2 = -nf - acc / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    // D'Agostino & Stephens (1986), table 4.9
    let p = if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a > 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a > 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    Some(NormalityTest {
        statistic: a,
        p_value: p.clamp(0.0, 1.0),
        n,
    })
}
