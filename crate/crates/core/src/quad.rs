//! Adaptive Simpson quadrature.
//!
//! This is the independent oracle used by the verification suites to check
//! closed-form densities, the marginalized link and conditional means; it is
//! deliberately kept separate from any sampling or model code path.

/// Integrate `f` over `[a, b]` to absolute tolerance `tol` with adaptive
/// Simpson bisection.
///
/// The interval is first split into uniform panels so that integrands with
/// localized mass (or sign changes placed symmetrically around the
/// midpoint) cannot fool the refinement test into accepting zero.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    const PANELS: usize = 16;
    let width = (b - a) / PANELS as f64;
    let panel_tol = tol / PANELS as f64;
    let mut total = 0.0;
    for i in 0..PANELS {
        let pa = a + i as f64 * width;
        let pb = if i + 1 == PANELS { b } else { pa + width };
        let fa = f(pa);
        let fb = f(pb);
        let m = 0.5 * (pa + pb);
        let fm = f(m);
        total += simpson_rec(&f, pa, pb, fa, fb, fm, simpson(pa, pb, fa, fm, fb), panel_tol, 56);
    }
    total
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, fm, flm, left, tol / 2.0, depth - 1)
            + simpson_rec(f, m, b, fm, fb, frm, right, tol / 2.0, depth - 1)
    }
}

/// Mean of an unnormalized 1-D density: `E[x] = ∫ x g(x) / ∫ g(x)` over `[a, b]`.
pub fn density_mean<F: Fn(f64) -> f64>(g: F, a: f64, b: f64, tol: f64) -> f64 {
    let mass = integrate(|x| g(x), a, b, tol);
    let first = integrate(|x| x * g(x), a, b, tol);
    first / mass
}
