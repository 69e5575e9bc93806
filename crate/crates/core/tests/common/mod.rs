//! Independent quadrature oracle shared by the integration tests.

/// 24-point Gauss–Legendre rule by Newton iteration on the three-term
/// recurrence.
fn legendre_rule() -> Vec<(f64, f64)> {
    const N: usize = 24;
    let mut rule = Vec::with_capacity(N);
    for i in 0..N {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
        let mut deriv = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=N {
                let k = k as f64;
                (p0, p1) = (p1, ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k);
            }
            deriv = N as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / deriv;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * deriv * deriv)));
    }
    rule
}

/// Composite Gauss–Legendre with doubling panel counts until two
/// consecutive values agree to `1e-15` relative.
pub fn converged_quadrature<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let rule = legendre_rule();
    let composite = |panels: usize| {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let mid = a + (p as f64 + 0.5) * h;
                rule.iter().map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
            })
            .sum::<f64>()
    };
    let mut prev = composite(1);
    let mut panels = 2;
    loop {
        let next = composite(panels);
        if (next - prev).abs() <= 1e-15 * next.abs() || panels >= 1 << 14 {
            return next;
        }
        prev = next;
        panels *= 2;
    }
}
