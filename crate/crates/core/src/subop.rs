//! Discrete horizontal gradient and sub-Laplacian with exact
//! summation-by-parts structure.
//!
//! The first-order fields are one-sided: `X_i^+ = D+_{x_i} + 2 y_i D+_s` and
//! `Y_i^+ = D+_{y_i} - 2 x_i D+_s`, with coefficients frozen at cell centers.
//! Because `y_i` is constant along both differenced axes, the adjoint of
//! `X_i^+` is exactly `-X_i^-` (the backward analogue), so the composed
//! operator `L_h = sum_i (X_i^- X_i^+ + Y_i^- Y_i^+)` satisfies
//! `<L_h u, u> = -sum_i (||X_i^+ u||^2 + ||Y_i^+ u||^2)` to rounding. That
//! identity is the semi-discrete energy law the whole artifact leans on; the
//! price is a second-order scheme instead of a wide centered stencil.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{self, BoxGrid, Field};

/// One-sided difference along a flat axis, ghost value 0 outside unless the
/// axis wraps (see [`BoxGrid::axis_wraps`]).
fn axis_diff(u: &Field, axis: usize, forward: bool) -> Field {
    let g = u.grid();
    let len = u.len();
    let stride = g.stride(axis);
    let cnt = g.axis_len(axis);
    let wrap = g.axis_wraps(axis);
    let inv_h = 1.0 / g.axis_spacing(axis);
    let vals = u.values();
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let block = stride * cnt;
    let zero = Complex64::new(0.0, 0.0);
    for base in (0..len).step_by(block) {
        for lane in 0..stride {
            let start = base + lane;
            for j in 0..cnt {
                let idx = start + j * stride;
                let d = if forward {
                    let up = if j + 1 < cnt {
                        vals[idx + stride]
                    } else if wrap {
                        vals[start]
                    } else {
                        zero
                    };
                    up - vals[idx]
                } else {
                    let dn = if j > 0 {
                        vals[idx - stride]
                    } else if wrap {
                        vals[start + (cnt - 1) * stride]
                    } else {
                        zero
                    };
                    vals[idx] - dn
                };
                out[idx] = d * inv_h;
            }
        }
    }
    Field::from_values(g.clone(), out).expect("same length as input")
}

pub(crate) fn forward_diff(u: &Field, axis: usize) -> Field {
    axis_diff(u, axis, true)
}

pub(crate) fn backward_diff(u: &Field, axis: usize) -> Field {
    axis_diff(u, axis, false)
}

fn check_field_index(i: usize, n: usize) -> Result<()> {
    if i >= n {
        Err(Error::IndexOutOfRange { index: i, limit: n })
    } else {
        Ok(())
    }
}

fn horizontal_combine(u: &Field, i: usize, forward: bool, x_kind: bool) -> Field {
    let g = u.grid().clone();
    let n = g.n();
    let pos_axis = if x_kind { i } else { n + i };
    // X_i carries the coefficient 2*y_i, Y_i carries -2*x_i.
    let coef_axis = if x_kind { n + i } else { i };
    let sign = if x_kind { 2.0 } else { -2.0 };
    let d_pos = axis_diff(u, pos_axis, forward);
    let d_s = axis_diff(u, g.s_axis(), forward);
    let stride = g.stride(coef_axis);
    let alen = g.axis_len(coef_axis);
    let values: Vec<Complex64> = d_pos
        .values()
        .iter()
        .zip(d_s.values())
        .enumerate()
        .map(|(idx, (&dp, &ds))| {
            let j = (idx / stride) % alen;
            let c = g.axis_coordinate(coef_axis, j);
            dp + sign * c * ds
        })
        .collect();
    Field::from_values(g, values).expect("same length as input")
}

/// `X_i^+ u = D+_{x_i} u + 2 y_i D+_s u`.
pub fn x_forward(i: usize, u: &Field) -> Result<Field> {
    check_field_index(i, u.grid().n())?;
    Ok(horizontal_combine(u, i, true, true))
}

/// `Y_i^+ u = D+_{y_i} u - 2 x_i D+_s u`.
pub fn y_forward(i: usize, u: &Field) -> Result<Field> {
    check_field_index(i, u.grid().n())?;
    Ok(horizontal_combine(u, i, true, false))
}

pub(crate) fn x_backward(i: usize, u: &Field) -> Field {
    horizontal_combine(u, i, false, true)
}

pub(crate) fn y_backward(i: usize, u: &Field) -> Field {
    horizontal_combine(u, i, false, false)
}

/// The 2n forward-type components `(X_1 u, .., X_n u, Y_1 u, .., Y_n u)`.
#[derive(Debug, Clone)]
pub struct HorizontalGradient {
    components: Vec<Field>,
}

impl HorizontalGradient {
    pub fn x(&self, i: usize) -> &Field {
        &self.components[i]
    }

    pub fn y(&self, i: usize) -> &Field {
        &self.components[self.components.len() / 2 + i]
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    /// `||grad_H u||^2 = sum_i (||X_i u||^2 + ||Y_i u||^2)`.
    pub fn norm_sq(&self) -> f64 {
        self.components.iter().map(grid::l2_norm_sq).sum()
    }
}

/// Assemble the discrete horizontal gradient of `u`.
pub fn grad_h(u: &Field) -> HorizontalGradient {
    let n = u.grid().n();
    let mut components = Vec::with_capacity(2 * n);
    for i in 0..n {
        components.push(x_forward(i, u).expect("index in range"));
    }
    for i in 0..n {
        components.push(y_forward(i, u).expect("index in range"));
    }
    HorizontalGradient { components }
}

/// `L_h u = sum_i (X_i^- (X_i^+ u) + Y_i^- (Y_i^+ u))`.
pub fn sublaplacian(u: &Field) -> Field {
    let g = u.grid().clone();
    let n = g.n();
    let mut acc = Field::zeros(g);
    for i in 0..n {
        let xx = x_backward(i, &x_forward(i, u).expect("index in range"));
        let yy = y_backward(i, &y_forward(i, u).expect("index in range"));
        acc = acc
            .add_scaled(&xx, Complex64::new(1.0, 0.0))
            .and_then(|a| a.add_scaled(&yy, Complex64::new(1.0, 0.0)))
            .expect("grids match");
    }
    acc
}

/// Estimate of the largest eigenvalue of `-L_h`, with a flag recording
/// whether power iteration converged. On non-convergence the value falls
/// back to [`closed_form_bound`].
#[derive(Debug, Clone, Copy)]
pub struct SpectralBound {
    pub value: f64,
    pub converged: bool,
}

/// Power iteration on `-L_h` from a nonzero start field. Stops after
/// `max_iters` or when the Rayleigh quotient changes by less than `rel_tol`
/// relatively; the boolean reports which.
pub fn power_iteration(start: &Field, max_iters: usize, rel_tol: f64) -> Result<(f64, bool)> {
    let norm0 = grid::l2_norm_sq(start);
    if !(norm0 > 0.0) {
        return Err(Error::InvalidInput(
            "power iteration requires a nonzero start field".into(),
        ));
    }
    let mut v = start.scaled(Complex64::new(1.0 / norm0.sqrt(), 0.0));
    let mut lambda = 0.0f64;
    for _ in 0..max_iters {
        let w = sublaplacian(&v).scaled(Complex64::new(-1.0, 0.0));
        let next = grid::inner(&w, &v).expect("same grid").re;
        let wn = grid::l2_norm_sq(&w).sqrt();
        if wn == 0.0 {
            // Start field lay in the kernel; the quotient is exact.
            return Ok((next.max(0.0), true));
        }
        let converged = (next - lambda).abs() <= rel_tol * next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        if converged {
            return Ok((lambda, true));
        }
        v = w.scaled(Complex64::new(1.0 / wn, 0.0));
    }
    Ok((lambda, false))
}

/// Triangle-inequality bound on `||-L_h||`: each one-sided difference has
/// norm at most `2/h`, so `||X_i^+|| <= 2/h_x + 2 max|y_i| * 2/h_s` and
/// squaring gives per-pair terms `4/h_x^2`, `16 y^2 / h_s^2` and the cross
/// term `16 |y| / (h_x h_s)` (same shape for `Y_i^+` with `x`). Coordinates
/// are maximised over cell centers. Never an underestimate, usually loose.
pub fn closed_form_bound(grid: &BoxGrid) -> f64 {
    let n = grid.n() as f64;
    let (hx, hy, hs) = (grid.h_x(), grid.h_y(), grid.h_s());
    let max_x = grid.l_xy() - 0.5 * hx;
    let max_y = grid.l_xy() - 0.5 * hy;
    let radial = n * (max_x * max_x + max_y * max_y);
    let cross = 16.0 * n * (max_y / (hx * hs) + max_x / (hy * hs));
    4.0 * n / (hx * hx) + 4.0 * n / (hy * hy) + 16.0 * radial / (hs * hs) + cross
}

/// Spectral bound used by the CFL control: power iteration (200 iterations
/// or relative change below 1e-6) from a fixed seeded start field, falling
/// back to the conservative closed form when it does not settle.
pub fn spectral_bound(grid: &Arc<BoxGrid>) -> SpectralBound {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5bc7_a11d);
    let start = Field::from_values(
        grid.clone(),
        (0..grid.num_cells())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0))
            .collect(),
    )
    .expect("length matches");
    match power_iteration(&start, 200, 1e-6) {
        Ok((lambda, true)) => SpectralBound {
            value: lambda,
            converged: true,
        },
        Ok((_, false)) => SpectralBound {
            value: closed_form_bound(grid),
            converged: false,
        },
        Err(_) => SpectralBound {
            value: closed_form_bound(grid),
            converged: false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryCondition;
    use crate::hgroup::{self, SeparableTest, TestFunction};

    fn random_field(g: &Arc<BoxGrid>, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_values(
            g.clone(),
            (0..g.num_cells())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    fn grid(nx: usize, bc: BoundaryCondition) -> Arc<BoxGrid> {
        Arc::new(BoxGrid::new(1, nx, nx, nx, 6.0, 12.0, bc).unwrap())
    }

    #[test]
    fn forward_fields_on_polynomials() {
        let g = grid(8, BoundaryCondition::Dirichlet);
        let zero = Field::zeros(g.clone());
        assert_eq!(grid::linf_norm(&x_forward(0, &zero).unwrap()), 0.0);

        // u = x1: interior forward difference of a linear function is exact.
        let ux = Field::from_fn(g.clone(), |p| Complex64::new(p.x[0], 0.0));
        let dx = x_forward(0, &ux).unwrap();
        for lin in 0..g.num_cells() {
            if g.axis_index_of(lin, 0) + 1 < g.nx() {
                assert!(
                    (dx.values()[lin] - Complex64::new(1.0, 0.0)).norm() < 1e-13,
                    "cell {lin}"
                );
            }
        }

        // u = s: D+_s s = 1 exactly away from the wrap, so X_1 u = 2 y_1.
        let us = Field::from_fn(g.clone(), |p| Complex64::new(p.s, 0.0));
        let ds = x_forward(0, &us).unwrap();
        for lin in 0..g.num_cells() {
            if g.axis_index_of(lin, g.s_axis()) + 1 < g.ns() {
                let y = g.point_of(lin).y[0];
                assert!(
                    (ds.values()[lin] - Complex64::new(2.0 * y, 0.0)).norm() < 1e-12,
                    "cell {lin}"
                );
            }
        }

        assert!(x_forward(1, &ux).is_err());
        assert!(y_forward(2, &ux).is_err());
    }

    #[test]
    fn gradient_norm_matches_naive_loop() {
        let g = grid(6, BoundaryCondition::Dirichlet);
        let u = random_field(&g, 21);
        let gh = grad_h(&u);
        let naive: f64 = gh
            .components()
            .iter()
            .map(|c| c.values().iter().map(|z| z.norm_sqr()).sum::<f64>() * g.h_vol())
            .sum();
        assert!((gh.norm_sq() - naive).abs() <= 1e-12 * (1.0 + naive));
    }

    #[test]
    fn sublaplacian_annihilates_constants_periodically() {
        let g = grid(6, BoundaryCondition::Periodic);
        let c = Field::constant(g.clone(), Complex64::new(2.5, -1.0));
        assert_eq!(grid::linf_norm(&sublaplacian(&c)), 0.0);
        let z = Field::zeros(g);
        assert_eq!(grid::linf_norm(&sublaplacian(&z)), 0.0);
    }

    #[test]
    fn sbp_identity_random_fields() {
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Periodic] {
            let g = grid(7, bc);
            let sb = spectral_bound(&g).value;
            for seed in 0..40 {
                let u = random_field(&g, 100 + seed);
                let lhs = grid::inner(&sublaplacian(&u), &u).unwrap().re;
                let gh = grad_h(&u);
                let rhs = -gh.norm_sq();
                let tol = 1e-12 * (1.0 + grid::l2_norm_sq(&u) * sb);
                assert!(
                    (lhs - rhs).abs() <= tol,
                    "bc {bc:?} seed {seed}: lhs {lhs} rhs {rhs}"
                );
                assert!(lhs <= 0.0, "negativity violated: {lhs}");
            }
        }
    }

    #[test]
    fn sublaplacian_is_symmetric() {
        let g = grid(6, BoundaryCondition::Dirichlet);
        for seed in 0..20 {
            let u = random_field(&g, 200 + seed);
            let v = random_field(&g, 300 + seed);
            let a = grid::inner(&sublaplacian(&u), &v).unwrap();
            let b = grid::inner(&u, &sublaplacian(&v)).unwrap();
            let scale = 1.0 + a.norm() + b.norm();
            assert!((a - b).norm() <= 1e-11 * scale, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn consistency_order_two_on_gaussian() {
        // Compare L_h against the exact jet oracle on a smooth bump and fit
        // the observed order across three refinements.
        let bump = SeparableTest::gaussian(1, 1.2, 2.0, 0.0);
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for nx in [9usize, 17, 33] {
            let g = grid(nx, BoundaryCondition::Dirichlet);
            let u = Field::from_fn(g.clone(), |p| bump.value(p));
            let lu = sublaplacian(&u);
            let exact = Field::from_fn(g.clone(), |p| hgroup::apply_sublaplacian_exact(&bump, p));
            let diff = lu.add_scaled(&exact, Complex64::new(-1.0, 0.0)).unwrap();
            errs.push(grid::linf_norm(&diff));
            hs.push(g.h_x());
        }
        let order1 = (errs[0] / errs[1]).ln() / (hs[0] / hs[1]).ln();
        let order2 = (errs[1] / errs[2]).ln() / (hs[1] / hs[2]).ln();
        let order = 0.5 * (order1 + order2);
        assert!(
            (order - 2.0).abs() <= 0.2,
            "observed order {order} (steps {order1}, {order2}), errors {errs:?}"
        );
    }

    #[test]
    fn spectral_bound_matches_dense_eigensolve() {
        // 5x5x5 dense matrix of -L_h, symmetric; nalgebra is the oracle.
        let g = Arc::new(BoxGrid::new(1, 5, 5, 5, 2.0, 4.0, BoundaryCondition::Dirichlet).unwrap());
        let mcells = g.num_cells();
        let mut mat = nalgebra::DMatrix::<f64>::zeros(mcells, mcells);
        for col in 0..mcells {
            let mut e = Field::zeros(g.clone());
            e.apply(|k, z| if k == col { Complex64::new(1.0, 0.0) } else { z });
            let le = sublaplacian(&e);
            for row in 0..mcells {
                mat[(row, col)] = -le.values()[row].re;
            }
        }
        let sym = nalgebra::SymmetricEigen::new(mat);
        let lam_max = sym.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let sb = spectral_bound(&g);
        assert!(
            sb.value >= lam_max * 0.95 && sb.value <= lam_max * 1.05,
            "power iteration {} vs dense {lam_max}",
            sb.value
        );
        assert!(closed_form_bound(&g) >= lam_max);
    }

    #[test]
    fn spectral_bound_monotone_under_s_refinement() {
        let g1 = Arc::new(BoxGrid::new(1, 7, 7, 8, 6.0, 12.0, BoundaryCondition::Dirichlet).unwrap());
        let g2 =
            Arc::new(BoxGrid::new(1, 7, 7, 16, 6.0, 12.0, BoundaryCondition::Dirichlet).unwrap());
        let b1 = spectral_bound(&g1).value;
        let b2 = spectral_bound(&g2).value;
        assert!(b2 >= b1, "halving h_s decreased the bound: {b1} -> {b2}");
    }

    #[test]
    fn power_iteration_rejects_zero_start() {
        let g = grid(6, BoundaryCondition::Dirichlet);
        let z = Field::zeros(g);
        assert!(power_iteration(&z, 10, 1e-6).is_err());
    }
}
