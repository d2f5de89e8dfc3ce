//! Small numerical kernels shared by the fusion rules and the metrics.
//!
//! Weighted means use a compensated dot product (error-free `TwoSum` and
//! `TwoProd` transforms) followed by a corrected division, so the result is
//! the correctly rounded quotient in all but pathological cases. This keeps
//! identities such as `mean(0.2, 0.4, 0.6) == 0.4` exact in binary64.

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Compensated sum of `values`, returned as an unevaluated pair `hi + lo`.
fn sum2(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut hi = 0.0;
    let mut lo = 0.0;
    for v in values {
        let (s, e) = two_sum(hi, v);
        hi = s;
        lo += e;
    }
    two_sum(hi, lo)
}

/// Compensated dot product, returned as `hi + lo`.
fn dot2(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut hi = 0.0;
    let mut lo = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (p, ep) = two_prod(x, y);
        let (s, es) = two_sum(hi, p);
        hi = s;
        lo += es + ep;
    }
    two_sum(hi, lo)
}

/// `(nh + nl) / (dh + dl)` with one correction step.
fn div2((nh, nl): (f64, f64), (dh, dl): (f64, f64)) -> f64 {
    let q = nh / dh;
    // nh - q*dh is exact via fma
    let r = (q.mul_add(-dh, nh) + nl - q * dl) / dh;
    q + r
}

/// Arithmetic mean. Returns `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(div2(sum2(values.iter().copied()), (values.len() as f64, 0.0)))
}

/// `Σ wᵢ·xᵢ / Σ wᵢ`. Returns `None` when lengths differ or the weight sum is not positive.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Option<f64> {
    if values.len() != weights.len() || values.is_empty() {
        return None;
    }
    let den = sum2(weights.iter().copied());
    if den.0 + den.1 <= 0.0 {
        return None;
    }
    Some(div2(dot2(weights, values), den))
}

/// Unbiased sample variance (divisor `n - 1`). `None` for fewer than two values.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some(ss / (values.len() - 1) as f64)
}
