//! One-dimensional quadrature rules used across the crate.

/// Composite trapezoid rule for samples on a uniform grid.
pub fn trapezoid(values: &[f64], spacing: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            spacing * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Composite Simpson rule for an odd number of uniform samples.
///
/// An even sample count falls back to Simpson on the first `n - 1` points
/// plus a trapezoid panel at the end.
pub fn simpson(values: &[f64], spacing: f64) -> f64 {
    let n = values.len();
    if n < 3 {
        return trapezoid(values, spacing);
    }
    let m = if n % 2 == 1 { n } else { n - 1 };
    let mut sum = values[0] + values[m - 1];
    for (i, v) in values[1..m - 1].iter().enumerate() {
        sum += if i % 2 == 0 { 4.0 * v } else { 2.0 * v };
    }
    let mut total = sum * spacing / 3.0;
    if m < n {
        total += 0.5 * spacing * (values[n - 2] + values[n - 1]);
    }
    total
}

/// Tanh-sinh (double exponential) quadrature of `f` over `[a, b]`.
///
/// Endpoint singularities are tolerated: `f` is never evaluated at `a` or
/// `b`, and abscissae are built from the distance to the nearest endpoint.
/// Refinement halves the step until two successive levels agree to `tol`
/// (relative) or eight levels have been used.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let half = 0.5 * (b - a);
    let t_max = 3.5;
    let node = |t: f64| -> Option<(f64, f64)> {
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let e = (-2.0 * u.abs()).exp();
        // distance of the abscissa from the nearer endpoint, scaled to [0, 2]
        let gap = 2.0 * e / (1.0 + e);
        if gap == 0.0 {
            return None;
        }
        let ch = u.cosh();
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / (ch * ch);
        let x = if t >= 0.0 { b - half * gap } else { a + half * gap };
        if x <= a || x >= b {
            return None;
        }
        Some((x, w))
    };

    let mut h = 0.5;
    let mut sum = {
        let (x0, w0) = node(0.0).expect("midpoint is interior");
        let mut s = w0 * f(x0);
        let mut k = 1;
        loop {
            let t = k as f64 * h;
            if t > t_max {
                break;
            }
            for tt in [t, -t] {
                if let Some((x, w)) = node(tt) {
                    s += w * f(x);
                }
            }
            k += 1;
        }
        s
    };
    let mut estimate = half * h * sum;
    for _ in 0..8 {
        h *= 0.5;
        let mut k = 1;
        loop {
            let t = k as f64 * h;
            if t > t_max {
                break;
            }
            for tt in [t, -t] {
                if let Some((x, w)) = node(tt) {
                    sum += w * f(x);
                }
            }
            k += 2;
        }
        let next = half * h * sum;
        let done = (next - estimate).abs() <= tol * next.abs().max(1e-300);
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let xs: Vec<f64> = (0..11).map(|i| 0.1 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((trapezoid(&ys, 0.1) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn simpson_is_exact_for_cubic() {
        let ys: Vec<f64> = (0..21).map(|i| (0.05 * i as f64).powi(3)).collect();
        assert!((simpson(&ys, 0.05) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2
        let v = tanh_sinh(|x| x.powf(-0.5), 0.0, 1.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-9, "{v}");
        // int_0^1 (1 - x)^{0.2} dx = 1 / 1.2
        let v = tanh_sinh(|x| (1.0 - x).powf(0.2), 0.0, 1.0, 1e-12);
        assert!((v - 1.0 / 1.2).abs() < 1e-12, "{v}");
    }
}
