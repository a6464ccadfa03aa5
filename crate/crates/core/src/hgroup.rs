//! Exact algebra of the Heisenberg group and jet-based application of its
//! left-invariant vector fields.
//!
//! Points are `(x, y, s)` with `x, y` of length `n`; the central coordinate
//! is called `s` so that `t`/`tau` always means simulation time. The vector
//! fields act on closed-form test functions through second-order jets, so
//! every derivative here is exact up to rounding. This module is the
//! ground-truth oracle against which the discrete operators in
//! [`crate::subop`] are measured.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A point of the group: horizontal coordinates `x`, `y` (length `n`) and
/// the central coordinate `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: f64,
}

impl GroupPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>, s: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if !(x.iter().all(|v| v.is_finite()) && y.iter().all(|v| v.is_finite()) && s.is_finite()) {
            return Err(Error::NonFinite("group point coordinates".into()));
        }
        Ok(Self { x, y, s })
    }

    /// Identity element of H^n.
    pub fn origin(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            y: vec![0.0; n],
            s: 0.0,
        }
    }

    /// Convenience constructor for n = 1.
    pub fn point1(x: f64, y: f64, s: f64) -> Self {
        Self {
            x: vec![x],
            y: vec![y],
            s,
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Coordinate by flat index: `x_1..x_n, y_1..y_n, s`.
    pub fn coord(&self, k: usize) -> f64 {
        let n = self.n();
        if k < n {
            self.x[k]
        } else if k < 2 * n {
            self.y[k - n]
        } else {
            self.s
        }
    }

    fn coords(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(2 * self.n() + 1);
        c.extend_from_slice(&self.x);
        c.extend_from_slice(&self.y);
        c.push(self.s);
        c
    }

    fn with_coord(&self, k: usize, value: f64) -> Self {
        let mut p = self.clone();
        let n = p.n();
        if k < n {
            p.x[k] = value;
        } else if k < 2 * n {
            p.y[k - n] = value;
        } else {
            p.s = value;
        }
        p
    }
}

/// Group law: `(x, y, s) . (x~, y~, s~) = (x + x~, y + y~, s + s~ + 2 sum(x~_i y_i - x_i y~_i))`.
pub fn mul(a: &GroupPoint, b: &GroupPoint) -> Result<GroupPoint> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: b.n(),
        });
    }
    let n = a.n();
    let mut twist = 0.0;
    for i in 0..n {
        twist += b.x[i] * a.y[i] - a.x[i] * b.y[i];
    }
    Ok(GroupPoint {
        x: (0..n).map(|i| a.x[i] + b.x[i]).collect(),
        y: (0..n).map(|i| a.y[i] + b.y[i]).collect(),
        s: a.s + b.s + 2.0 * twist,
    })
}

/// Group inverse, `xi^{-1} = -xi`.
pub fn inverse(p: &GroupPoint) -> GroupPoint {
    GroupPoint {
        x: p.x.iter().map(|v| -v).collect(),
        y: p.y.iter().map(|v| -v).collect(),
        s: -p.s,
    }
}

/// Anisotropic dilation `(x, y, s) -> (l x, l y, l^2 s)`, `l > 0`.
pub fn dilate(lambda: f64, p: &GroupPoint) -> Result<GroupPoint> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "dilation factor must be positive and finite, got {lambda}"
        )));
    }
    Ok(GroupPoint {
        x: p.x.iter().map(|v| lambda * v).collect(),
        y: p.y.iter().map(|v| lambda * v).collect(),
        s: lambda * lambda * p.s,
    })
}

/// Value, gradient and (symmetric) Hessian of a scalar function at a point.
/// Coordinate order matches [`GroupPoint::coord`]: `x_1..x_n, y_1..y_n, s`.
#[derive(Debug, Clone)]
pub struct Jet2 {
    dim: usize,
    pub value: Complex64,
    grad: Vec<Complex64>,
    /// Lower triangle, row-major: entry `(i, j)` with `j <= i` at `i(i+1)/2 + j`.
    hess_tri: Vec<Complex64>,
}

impl Jet2 {
    pub fn new(value: Complex64, grad: Vec<Complex64>, hess_tri: Vec<Complex64>) -> Result<Self> {
        let dim = grad.len();
        if hess_tri.len() != dim * (dim + 1) / 2 {
            return Err(Error::InvalidInput(format!(
                "triangular Hessian length {} does not match dimension {dim}",
                hess_tri.len()
            )));
        }
        let finite = value.is_finite()
            && grad.iter().all(|z| z.is_finite())
            && hess_tri.iter().all(|z| z.is_finite());
        if !finite {
            return Err(Error::NonFinite("jet entries".into()));
        }
        Ok(Self {
            dim,
            value,
            grad,
            hess_tri,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grad(&self, k: usize) -> Complex64 {
        self.grad[k]
    }

    /// Symmetric Hessian lookup.
    pub fn hess(&self, i: usize, j: usize) -> Complex64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.hess_tri[r * (r + 1) / 2 + c]
    }
}

/// Evaluation contract for closed-form scalar functions on H^n: the returned
/// jets are exact derivatives of the closed form.
pub trait TestFunction: Send + Sync {
    fn n(&self) -> usize;
    fn label(&self) -> String;
    fn jet(&self, p: &GroupPoint) -> Jet2;

    fn value(&self, p: &GroupPoint) -> Complex64 {
        self.jet(p).value
    }
}

/// One-dimensional factor of a separable test function, with closed-form
/// value and first two derivatives.
#[derive(Debug, Clone, Copy)]
pub enum Factor1d {
    One,
    /// `t^k`
    Power(u32),
    /// `exp(-(t - center)^2 / (2 width^2))`
    Gaussian { center: f64, width: f64 },
    /// `sin(freq t + phase)`
    Sine { freq: f64, phase: f64 },
}

impl Factor1d {
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            Factor1d::One => (1.0, 0.0, 0.0),
            Factor1d::Power(k) => {
                let k = k as i32;
                let g = t.powi(k);
                let d1 = if k >= 1 { k as f64 * t.powi(k - 1) } else { 0.0 };
                let d2 = if k >= 2 {
                    (k * (k - 1)) as f64 * t.powi(k - 2)
                } else {
                    0.0
                };
                (g, d1, d2)
            }
            Factor1d::Gaussian { center, width } => {
                let z = t - center;
                let w2 = width * width;
                let g = (-z * z / (2.0 * w2)).exp();
                let d1 = -(z / w2) * g;
                let d2 = (z * z / (w2 * w2) - 1.0 / w2) * g;
                (g, d1, d2)
            }
            Factor1d::Sine { freq, phase } => {
                let a = freq * t + phase;
                (a.sin(), freq * a.cos(), -freq * freq * a.sin())
            }
        }
    }
}

/// Separable product `amplitude * g_1(c_1) * ... * g_{2n+1}(c_{2n+1})` over
/// the flat coordinates. Covers the whole built-in catalog: monomials,
/// Gaussian bumps and sine products all factor coordinate by coordinate,
/// which keeps the jets closed-form.
#[derive(Debug, Clone)]
pub struct SeparableTest {
    label: String,
    amplitude: Complex64,
    factors: Vec<Factor1d>,
}

impl SeparableTest {
    pub fn new(label: impl Into<String>, amplitude: Complex64, factors: Vec<Factor1d>) -> Self {
        assert!(
            factors.len() >= 3 && factors.len() % 2 == 1,
            "factor count must be 2n+1"
        );
        Self {
            label: label.into(),
            amplitude,
            factors,
        }
    }

    /// Monomial `x_i^a y_i^b s^c` on H^n.
    pub fn monomial(n: usize, i: usize, a: u32, b: u32, c: u32) -> Self {
        let mut factors = vec![Factor1d::One; 2 * n + 1];
        factors[i] = Factor1d::Power(a);
        factors[n + i] = Factor1d::Power(b);
        factors[2 * n] = Factor1d::Power(c);
        Self::new(
            format!("x{}^{a} y{}^{b} s^{c}", i + 1, i + 1),
            Complex64::new(1.0, 0.0),
            factors,
        )
    }

    /// Isotropic-in-(x, y) Gaussian bump with its own width in s.
    pub fn gaussian(n: usize, width_xy: f64, width_s: f64, center_s: f64) -> Self {
        let mut factors = Vec::with_capacity(2 * n + 1);
        for _ in 0..2 * n {
            factors.push(Factor1d::Gaussian {
                center: 0.0,
                width: width_xy,
            });
        }
        factors.push(Factor1d::Gaussian {
            center: center_s,
            width: width_s,
        });
        Self::new(
            format!("gauss(w_xy={width_xy}, w_s={width_s})"),
            Complex64::new(1.0, 0.0),
            factors,
        )
    }
}

impl TestFunction for SeparableTest {
    fn n(&self) -> usize {
        (self.factors.len() - 1) / 2
    }

    fn label(&self) -> String {
        self.label.clone()
    }

    fn jet(&self, p: &GroupPoint) -> Jet2 {
        let dim = self.factors.len();
        assert_eq!(dim, 2 * p.n() + 1, "point dimension mismatch");
        let coords = p.coords();
        let evals: Vec<(f64, f64, f64)> = self
            .factors
            .iter()
            .zip(&coords)
            .map(|(f, &t)| f.eval(t))
            .collect();

        // Products over all factors except a skipped set; dim is tiny so the
        // rescan per entry is cheaper than being clever about zeros.
        let prod_skip = |skip: &[usize]| -> f64 {
            evals
                .iter()
                .enumerate()
                .filter(|(k, _)| !skip.contains(k))
                .map(|(_, e)| e.0)
                .product()
        };

        let value = self.amplitude * prod_skip(&[]);
        let grad: Vec<Complex64> = (0..dim)
            .map(|k| self.amplitude * evals[k].1 * prod_skip(&[k]))
            .collect();
        let mut hess_tri = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                let h = if i == j {
                    evals[i].2 * prod_skip(&[i])
                } else {
                    evals[i].1 * evals[j].1 * prod_skip(&[i, j])
                };
                hess_tri.push(self.amplitude * h);
            }
        }
        Jet2::new(value, grad, hess_tri).expect("separable factors produce finite jets")
    }
}

/// Built-in catalog: all monomials `x_i^a y_i^b s^c` with `a+b+c <= 4`,
/// Gaussian bumps, sine products, and one complex-amplitude entry.
pub fn catalog(n: usize) -> Vec<SeparableTest> {
    let mut out = Vec::new();
    for i in 0..n {
        for a in 0..=4u32 {
            for b in 0..=4 - a {
                for c in 0..=4 - a - b {
                    out.push(SeparableTest::monomial(n, i, a, b, c));
                }
            }
        }
    }
    out.push(SeparableTest::gaussian(n, 1.0, 1.5, 0.0));
    out.push(SeparableTest::gaussian(n, 1.4, 2.0, 0.5));

    let mut sine = vec![Factor1d::One; 2 * n + 1];
    sine[0] = Factor1d::Sine {
        freq: 0.5,
        phase: 0.0,
    };
    sine[n] = Factor1d::Sine {
        freq: 0.7,
        phase: 0.3,
    };
    sine[2 * n] = Factor1d::Sine {
        freq: 0.3,
        phase: 0.2,
    };
    out.push(SeparableTest::new(
        "sin(x/2) sin(7y/10+0.3) sin(3s/10+0.2)",
        Complex64::new(1.0, 0.0),
        sine.clone(),
    ));
    sine[2 * n] = Factor1d::One;
    out.push(SeparableTest::new(
        "sin(x/2) sin(7y/10+0.3)",
        Complex64::new(1.0, 0.0),
        sine,
    ));

    let mut g = SeparableTest::gaussian(n, 1.2, 1.8, -0.3);
    g.amplitude = Complex64::new(0.8, -0.6);
    g.label = "complex gauss".into();
    out.push(g);
    out
}

fn check_index(i: usize, n: usize) -> Result<()> {
    if i >= n {
        Err(Error::IndexOutOfRange { index: i, limit: n })
    } else {
        Ok(())
    }
}

/// `X_i f = d/dx_i f + 2 y_i d/ds f`, exact through the jet.
pub fn apply_x(i: usize, f: &dyn TestFunction, p: &GroupPoint) -> Result<Complex64> {
    let n = p.n();
    check_index(i, n)?;
    let jet = f.jet(p);
    Ok(jet.grad(i) + 2.0 * p.y[i] * jet.grad(2 * n))
}

/// `Y_i f = d/dy_i f - 2 x_i d/ds f`.
pub fn apply_y(i: usize, f: &dyn TestFunction, p: &GroupPoint) -> Result<Complex64> {
    let n = p.n();
    check_index(i, n)?;
    let jet = f.jet(p);
    Ok(jet.grad(n + i) - 2.0 * p.x[i] * jet.grad(2 * n))
}

/// `X_i(X_i f)` assembled from the jet: the coefficient `2 y_i` is constant
/// along both differenced directions, so only second derivatives enter.
pub fn apply_xx(i: usize, f: &dyn TestFunction, p: &GroupPoint) -> Result<Complex64> {
    let n = p.n();
    check_index(i, n)?;
    let jet = f.jet(p);
    let (xi, sidx) = (i, 2 * n);
    let yi = p.y[i];
    Ok(jet.hess(xi, xi) + 4.0 * yi * jet.hess(xi, sidx) + 4.0 * yi * yi * jet.hess(sidx, sidx))
}

/// `Y_i(Y_i f)`.
pub fn apply_yy(i: usize, f: &dyn TestFunction, p: &GroupPoint) -> Result<Complex64> {
    let n = p.n();
    check_index(i, n)?;
    let jet = f.jet(p);
    let (yi_idx, sidx) = (n + i, 2 * n);
    let xi = p.x[i];
    Ok(jet.hess(yi_idx, yi_idx) - 4.0 * xi * jet.hess(yi_idx, sidx)
        + 4.0 * xi * xi * jet.hess(sidx, sidx))
}

/// `X_i(Y_i f) - Y_i(X_i f) + 4 d/ds f`, which vanishes identically because
/// `[X_i, Y_i] = -4 d/ds`. Returned as a defect so tests can bound it by
/// rounding alone.
pub fn commutator_defect(i: usize, f: &dyn TestFunction, p: &GroupPoint) -> Result<Complex64> {
    let n = p.n();
    check_index(i, n)?;
    let jet = f.jet(p);
    let (xi, yi, sidx) = (i, n + i, 2 * n);
    let (cx, cy) = (p.x[i], p.y[i]);
    let ds = jet.grad(sidx);
    // X(Yf): differentiate Yf = d_y f - 2x d_s f along x, then add 2y d_s(Yf).
    let x_of_y = jet.hess(xi, yi) - 2.0 * ds - 2.0 * cx * jet.hess(xi, sidx)
        + 2.0 * cy * (jet.hess(sidx, yi) - 2.0 * cx * jet.hess(sidx, sidx));
    // Y(Xf): differentiate Xf = d_x f + 2y d_s f along y, then subtract 2x d_s(Xf).
    let y_of_x = jet.hess(yi, xi) + 2.0 * ds + 2.0 * cy * jet.hess(yi, sidx)
        - 2.0 * cx * (jet.hess(sidx, xi) + 2.0 * cy * jet.hess(sidx, sidx));
    Ok(x_of_y - y_of_x + 4.0 * ds)
}

/// Exact sub-Laplacian `L f = sum_i (X_i^2 + Y_i^2) f` assembled from the jet:
/// `sum_i [d2_{x_i} + d2_{y_i} + 4 y_i d_{x_i} d_s - 4 x_i d_{y_i} d_s + 4 (x_i^2 + y_i^2) d2_s] f`.
pub fn apply_sublaplacian_exact(f: &dyn TestFunction, p: &GroupPoint) -> Complex64 {
    let n = p.n();
    let jet = f.jet(p);
    let sidx = 2 * n;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let (cx, cy) = (p.x[i], p.y[i]);
        acc += jet.hess(i, i) + jet.hess(n + i, n + i);
        acc += 4.0 * cy * jet.hess(i, sidx) - 4.0 * cx * jet.hess(n + i, sidx);
        acc += 4.0 * (cx * cx + cy * cy) * jet.hess(sidx, sidx);
    }
    acc
}

/// Central finite-difference validation of a jet, used to certify that a
/// `TestFunction` honours its exactness contract.
pub fn jet_fd_defect(f: &dyn TestFunction, p: &GroupPoint, eps: f64) -> f64 {
    let dim = 2 * p.n() + 1;
    let jet = f.jet(p);
    let mut worst: f64 = 0.0;
    for k in 0..dim {
        let plus = f.value(&p.with_coord(k, p.coord(k) + eps));
        let minus = f.value(&p.with_coord(k, p.coord(k) - eps));
        let fd = (plus - minus) / (2.0 * eps);
        worst = worst.max((fd - jet.grad(k)).norm());
    }
    for i in 0..dim {
        for j in 0..dim {
            let fd = if i == j {
                let plus = f.value(&p.with_coord(i, p.coord(i) + eps));
                let minus = f.value(&p.with_coord(i, p.coord(i) - eps));
                (plus + minus - 2.0 * jet.value) / (eps * eps)
            } else {
                let pp = f.value(&p.with_coord(i, p.coord(i) + eps).with_coord(j, p.coord(j) + eps));
                let pm = f.value(&p.with_coord(i, p.coord(i) + eps).with_coord(j, p.coord(j) - eps));
                let mp = f.value(&p.with_coord(i, p.coord(i) - eps).with_coord(j, p.coord(j) + eps));
                let mm = f.value(&p.with_coord(i, p.coord(i) - eps).with_coord(j, p.coord(j) - eps));
                (pp - pm - mp + mm) / (4.0 * eps * eps)
            };
            worst = worst.max((fd - jet.hess(i, j)).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut impl Rng, n: usize, scale: f64) -> GroupPoint {
        GroupPoint {
            x: (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
            y: (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
            s: rng.random_range(-scale..scale),
        }
    }

    #[test]
    fn group_law_examples() {
        let xi = GroupPoint::point1(1.0, 0.0, 0.0);
        let eta = GroupPoint::point1(0.0, 1.0, 0.0);
        let prod = mul(&xi, &eta).unwrap();
        assert_eq!(prod, GroupPoint::point1(1.0, 1.0, -2.0));

        let zero = GroupPoint::origin(1);
        let p = GroupPoint::point1(0.3, -0.7, 2.0);
        assert_eq!(mul(&zero, &p).unwrap(), p);
        assert_eq!(mul(&p, &inverse(&p)).unwrap(), zero);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(inverse(&GroupPoint::origin(2)), GroupPoint::origin(2));
        assert_eq!(
            inverse(&GroupPoint::point1(1.0, 2.0, 3.0)),
            GroupPoint::point1(-1.0, -2.0, -3.0)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = random_point(&mut rng, 2, 5.0);
            let back = mul(&inverse(&p), &p).unwrap();
            assert!(back.x.iter().all(|&v| v == 0.0));
            assert!(back.y.iter().all(|&v| v == 0.0));
            assert!(back.s.abs() <= 1e-12 * (1.0 + p.s.abs()));
        }
    }

    #[test]
    fn dilation_examples() {
        let p = GroupPoint::point1(1.0, 1.0, 1.0);
        assert_eq!(dilate(1.0, &p).unwrap(), p);
        assert_eq!(dilate(2.0, &p).unwrap(), GroupPoint::point1(2.0, 2.0, 4.0));
        assert!(dilate(0.0, &p).is_err());
        assert!(dilate(-1.0, &p).is_err());
    }

    #[test]
    fn dilation_is_group_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_point(&mut rng, 1, 3.0);
            let b = random_point(&mut rng, 1, 3.0);
            let lambda = rng.random_range(0.1..4.0);
            let lhs = dilate(lambda, &mul(&a, &b).unwrap()).unwrap();
            let rhs = mul(&dilate(lambda, &a).unwrap(), &dilate(lambda, &b).unwrap()).unwrap();
            let scale = 1.0 + lhs.s.abs();
            assert!((lhs.s - rhs.s).abs() <= 1e-12 * scale);
            assert!((lhs.x[0] - rhs.x[0]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn associativity_to_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let a = random_point(&mut rng, 2, 10.0);
            let b = random_point(&mut rng, 2, 10.0);
            let c = random_point(&mut rng, 2, 10.0);
            let lhs = mul(&mul(&a, &b).unwrap(), &c).unwrap();
            let rhs = mul(&a, &mul(&b, &c).unwrap()).unwrap();
            let scale = 1.0 + lhs.s.abs() + rhs.s.abs();
            assert!((lhs.s - rhs.s).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn vector_field_examples() {
        let f_x = SeparableTest::monomial(1, 0, 1, 0, 0); // x1
        let f_y = SeparableTest::monomial(1, 0, 0, 1, 0); // y1
        let f_s = SeparableTest::monomial(1, 0, 0, 0, 1); // s
        let f_xy = SeparableTest::monomial(1, 0, 1, 1, 0); // x1 y1

        let p = GroupPoint::point1(0.4, 3.0, -1.0);
        assert_eq!(apply_x(0, &f_x, &p).unwrap().re, 1.0);
        assert_eq!(apply_x(0, &f_s, &p).unwrap().re, 6.0); // 2 y1 with y1 = 3
        assert_eq!(apply_x(0, &f_xy, &p).unwrap().re, p.y[0]);

        let q = GroupPoint::point1(3.0, 0.2, 5.0);
        assert_eq!(apply_y(0, &f_y, &q).unwrap().re, 1.0);
        assert_eq!(apply_y(0, &f_s, &q).unwrap().re, -6.0); // -2 x1 with x1 = 3
        assert_eq!(apply_y(0, &f_xy, &q).unwrap().re, q.x[0]);

        assert!(apply_x(1, &f_x, &p).is_err());
        assert!(apply_y(3, &f_x, &p).is_err());
    }

    #[test]
    fn commutator_examples() {
        let p = GroupPoint::point1(0.7, -1.3, 0.4);
        let f_xy = SeparableTest::monomial(1, 0, 1, 1, 0);
        let f_s = SeparableTest::monomial(1, 0, 0, 0, 1);
        let f_const = SeparableTest::monomial(1, 0, 0, 0, 0);
        assert_eq!(commutator_defect(0, &f_xy, &p).unwrap().norm(), 0.0);
        assert_eq!(commutator_defect(0, &f_s, &p).unwrap().norm(), 0.0);
        assert_eq!(commutator_defect(0, &f_const, &p).unwrap().norm(), 0.0);
    }

    #[test]
    fn commutator_defect_over_catalog() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for f in catalog(1) {
            for _ in 0..50 {
                let p = random_point(&mut rng, 1, 2.0);
                let jet = f.jet(&p);
                let scale: f64 = (0..3)
                    .flat_map(|i| (0..3).map(move |j| (i, j)))
                    .map(|(i, j)| jet.hess(i, j).norm())
                    .fold(1.0, f64::max);
                let defect = commutator_defect(0, &f, &p).unwrap().norm();
                assert!(
                    defect <= 1e-13 * scale,
                    "{}: defect {defect:e} at scale {scale:e}",
                    f.label()
                );
            }
        }
    }

    #[test]
    fn sublaplacian_examples() {
        let p = GroupPoint::point1(1.5, -2.5, 0.8);
        let f_x2 = SeparableTest::monomial(1, 0, 2, 0, 0);
        let f_s = SeparableTest::monomial(1, 0, 0, 0, 1);
        let f_const = SeparableTest::monomial(1, 0, 0, 0, 0);
        assert_eq!(apply_sublaplacian_exact(&f_x2, &p).re, 2.0);
        assert_eq!(apply_sublaplacian_exact(&f_s, &p).norm(), 0.0);
        assert_eq!(apply_sublaplacian_exact(&f_const, &p).norm(), 0.0);
    }

    #[test]
    fn sublaplacian_matches_composed_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for f in catalog(1) {
            for _ in 0..20 {
                let p = random_point(&mut rng, 1, 2.0);
                let direct = apply_sublaplacian_exact(&f, &p);
                let composed = apply_xx(0, &f, &p).unwrap() + apply_yy(0, &f, &p).unwrap();
                let scale = 1.0 + direct.norm() + composed.norm();
                assert!(
                    (direct - composed).norm() <= 1e-12 * scale,
                    "{} at {p:?}",
                    f.label()
                );
            }
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for f in catalog(1) {
            for _ in 0..10 {
                let p = random_point(&mut rng, 1, 1.5);
                let defect = jet_fd_defect(&f, &p, 1e-5);
                assert!(defect <= 1e-6, "{}: fd defect {defect:e}", f.label());
            }
        }
    }

    #[test]
    fn dilation_exponent_composition_is_exact() {
        let p = GroupPoint::point1(0.5, -0.25, 3.0);
        let a = dilate(3.0, &dilate(2.0, &p).unwrap()).unwrap();
        let b = dilate(6.0, &p).unwrap();
        assert_eq!(a, b);
    }
}
