//! Adaptive Simpson quadrature; test-only oracle for the closed-form densities.

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adapt(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
        + adapt(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
}

/// Integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // Split into a few panels first so narrow features are not skipped.
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (flo, fhi) = (f(lo), f(hi));
            let (m, fm, whole) = simpson(&f, lo, flo, hi, fhi);
            adapt(&f, lo, flo, hi, fhi, whole, m, fm, tol / panels as f64, 40)
        })
        .sum()
}

/// Iterated integral over the rectangle `[a1, b1] x [a2, b2]`.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    (a1, b1): (f64, f64),
    (a2, b2): (f64, f64),
    tol: f64,
) -> f64 {
    let inner_tol = tol / (b2 - a2).abs().max(1.0);
    integrate(
        |x2| integrate(|x1| f(x1, x2), a1, b1, inner_tol),
        a2,
        b2,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        assert!((integrate(|x| x * x, 0.0, 3.0, 1e-12) - 9.0).abs() < 1e-12);
        assert!((integrate(f64::exp, 0.0, 1.0, 1e-12) - (1f64.exp() - 1.0)).abs() < 1e-12);
        let v = integrate_2d(|a, b| a * b, (0.0, 1.0), (0.0, 2.0), 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
    }
}
