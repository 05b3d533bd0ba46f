//! Fixed-panel quadrature rules.
//!
//! Panel counts are fixed by the caller so that repeated runs are
//! bit-for-bit reproducible.

/// Composite Simpson rule on `[a, b]` with `panels` subintervals.
///
/// An odd panel count is rounded up to the next even number.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = (panels.max(2) + 1) & !1;
    if a == b {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in 1..n {
        let x = a + k as f64 * h;
        if k % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    h / 3.0 * (f(a) + 4.0 * odd + 2.0 * even + f(b))
}

/// Composite trapezoid rule on `[a, b]` with `panels` subintervals.
pub fn trapezoid<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(1);
    if a == b {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|k| f(a + k as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}
