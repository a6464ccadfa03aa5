//! Truncated box discretization of H^n: cell-centered grids, complex fields,
//! and the deterministic reductions every functional is built on.
//!
//! Axis order is `x_1..x_n, y_1..y_n, s` with `s` fastest-varying. All sums
//! run through a fixed block-tree reduction so repeated evaluations are
//! bit-identical regardless of how the work might be partitioned.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hgroup::GroupPoint;

pub const MIN_POINTS_PER_AXIS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Zero exterior ghost values on the horizontal axes. Default for
    /// compactly supported Cauchy data on the (non-compact) group.
    Dirichlet,
    /// Index wrap on every axis. Certified for spatially constant or
    /// s-independent sine data, where the coefficient jump at the wrap
    /// multiplies vanishing differences.
    Periodic,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryCondition::Dirichlet => write!(f, "dirichlet"),
            BoundaryCondition::Periodic => write!(f, "periodic"),
        }
    }
}

impl FromStr for BoundaryCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(BoundaryCondition::Dirichlet),
            "periodic" => Ok(BoundaryCondition::Periodic),
            other => Err(Error::Parse(format!("unknown boundary condition `{other}`"))),
        }
    }
}

/// Cell-centered box grid over `[-L_xy, L_xy]^{2n} x [-L_s, L_s]`.
///
/// The central axis always wraps, in both boundary modes: every s-difference
/// of an s-independent field must vanish exactly (the eigenmode oracles and
/// the reduction of the operator to its Euclidean part rely on this), and the
/// wrap is the one rule that also keeps the forward/backward differences
/// exactly skew-adjoint. Zero ghosts therefore apply to the horizontal axes
/// only; for the compactly supported data the Dirichlet mode exists for, the
/// two rules agree up to the truncation tails.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    n: usize,
    nx: usize,
    ny: usize,
    ns: usize,
    l_xy: f64,
    l_s: f64,
    bc: BoundaryCondition,
}

impl BoxGrid {
    pub fn new(
        n: usize,
        nx: usize,
        ny: usize,
        ns: usize,
        l_xy: f64,
        l_s: f64,
        bc: BoundaryCondition,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("group parameter n must be >= 1".into()));
        }
        for (name, count) in [("N_x", nx), ("N_y", ny), ("N_s", ns)] {
            if count < MIN_POINTS_PER_AXIS {
                return Err(Error::InvalidInput(format!(
                    "{name} = {count} is below the minimum of {MIN_POINTS_PER_AXIS}"
                )));
            }
        }
        if !(l_xy > 0.0 && l_xy.is_finite() && l_s > 0.0 && l_s.is_finite()) {
            return Err(Error::InvalidInput(
                "half-widths must be positive and finite".into(),
            ));
        }
        Ok(Self {
            n,
            nx,
            ny,
            ns,
            l_xy,
            l_s,
            bc,
        })
    }

    /// Desk-scale default: n = 1, 33x33x33 over [-6, 6]^2 x [-12, 12].
    /// The central box is wider because the transport coefficients 2y, 2x
    /// amplify motion along s.
    pub fn desk_default(bc: BoundaryCondition) -> Arc<Self> {
        Arc::new(Self::new(1, 33, 33, 33, 6.0, 12.0, bc).expect("default grid is valid"))
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn ns(&self) -> usize {
        self.ns
    }
    pub fn l_xy(&self) -> f64 {
        self.l_xy
    }
    pub fn l_s(&self) -> f64 {
        self.l_s
    }
    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn h_x(&self) -> f64 {
        2.0 * self.l_xy / self.nx as f64
    }
    pub fn h_y(&self) -> f64 {
        2.0 * self.l_xy / self.ny as f64
    }
    pub fn h_s(&self) -> f64 {
        2.0 * self.l_s / self.ns as f64
    }

    /// Cell volume `h_x^n h_y^n h_s`.
    pub fn h_vol(&self) -> f64 {
        self.h_x().powi(self.n as i32) * self.h_y().powi(self.n as i32) * self.h_s()
    }

    /// Axis extents in flat order `x_1..x_n, y_1..y_n, s`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.nx; self.n];
        d.extend(vec![self.ny; self.n]);
        d.push(self.ns);
        d
    }

    pub fn num_axes(&self) -> usize {
        2 * self.n + 1
    }

    pub fn s_axis(&self) -> usize {
        2 * self.n
    }

    pub fn num_cells(&self) -> usize {
        self.nx.pow(self.n as u32) * self.ny.pow(self.n as u32) * self.ns
    }

    pub fn axis_len(&self, axis: usize) -> usize {
        if axis < self.n {
            self.nx
        } else if axis < 2 * self.n {
            self.ny
        } else {
            self.ns
        }
    }

    pub fn axis_spacing(&self, axis: usize) -> f64 {
        if axis < self.n {
            self.h_x()
        } else if axis < 2 * self.n {
            self.h_y()
        } else {
            self.h_s()
        }
    }

    pub fn axis_halfwidth(&self, axis: usize) -> f64 {
        if axis < 2 * self.n {
            self.l_xy
        } else {
            self.l_s
        }
    }

    /// Whether differences along `axis` wrap around. The s axis always does.
    pub fn axis_wraps(&self, axis: usize) -> bool {
        axis == self.s_axis() || self.bc == BoundaryCondition::Periodic
    }

    /// Elements to skip to move one cell along `axis` (s is fastest).
    pub fn stride(&self, axis: usize) -> usize {
        let dims = self.dims();
        dims[axis + 1..].iter().product()
    }

    /// Cell-center coordinate of index `j` along `axis`.
    pub fn axis_coordinate(&self, axis: usize, j: usize) -> f64 {
        let h = self.axis_spacing(axis);
        -self.axis_halfwidth(axis) + (j as f64 + 0.5) * h
    }

    /// Cell-centered point for a multi-index in flat axis order.
    pub fn coordinates(&self, idx: &[usize]) -> Result<GroupPoint> {
        let dims = self.dims();
        if idx.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len(),
                got: idx.len(),
            });
        }
        for (axis, (&j, &len)) in idx.iter().zip(&dims).enumerate() {
            if j >= len {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    limit: len,
                });
            }
            let _ = axis;
        }
        let coords: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(axis, &j)| self.axis_coordinate(axis, j))
            .collect();
        Ok(GroupPoint {
            x: coords[..self.n].to_vec(),
            y: coords[self.n..2 * self.n].to_vec(),
            s: coords[2 * self.n],
        })
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        let dims = self.dims();
        let mut lin = 0;
        for (j, len) in idx.iter().zip(&dims) {
            lin = lin * len + j;
        }
        lin
    }

    pub fn multi_index(&self, mut lin: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut idx = vec![0; dims.len()];
        for (slot, len) in idx.iter_mut().zip(&dims).rev() {
            *slot = lin % len;
            lin /= len;
        }
        idx
    }

    /// Axis index component of a linear cell index.
    pub fn axis_index_of(&self, lin: usize, axis: usize) -> usize {
        (lin / self.stride(axis)) % self.axis_len(axis)
    }

    /// Cell-center point of a linear index.
    pub fn point_of(&self, lin: usize) -> GroupPoint {
        self.coordinates(&self.multi_index(lin))
            .expect("linear index within bounds")
    }

    fn header_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n, self.nx, self.ny, self.ns, self.l_xy, self.l_s, self.bc
        )
    }
}

/// Complex scalar samples on a [`BoxGrid`], with a validity flag recording
/// whether every value is finite.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<BoxGrid>,
    values: Vec<Complex64>,
    finite: bool,
}

impl Field {
    pub fn zeros(grid: Arc<BoxGrid>) -> Self {
        let len = grid.num_cells();
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); len],
            finite: true,
        }
    }

    pub fn constant(grid: Arc<BoxGrid>, c: Complex64) -> Self {
        let len = grid.num_cells();
        let finite = c.is_finite();
        Self {
            grid,
            values: vec![c; len],
            finite,
        }
    }

    pub fn from_values(grid: Arc<BoxGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::InvalidInput(format!(
                "value table length {} does not match grid cell count {}",
                values.len(),
                grid.num_cells()
            )));
        }
        let finite = values.iter().all(|z| z.is_finite());
        Ok(Self {
            grid,
            values,
            finite,
        })
    }

    /// Sample a closed form at the cell centers.
    pub fn from_fn(grid: Arc<BoxGrid>, f: impl Fn(&GroupPoint) -> Complex64) -> Self {
        let values: Vec<Complex64> = (0..grid.num_cells())
            .map(|lin| f(&grid.point_of(lin)))
            .collect();
        Self::from_values(grid, values).expect("length matches by construction")
    }

    pub fn grid(&self) -> &Arc<BoxGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Whether every stored value is finite.
    pub fn is_finite(&self) -> bool {
        self.finite
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Rewrite each value as `f(index, value)`, refreshing the validity flag.
    pub fn apply(&mut self, f: impl Fn(usize, Complex64) -> Complex64) {
        let mut finite = true;
        for (k, v) in self.values.iter_mut().enumerate() {
            *v = f(k, *v);
            finite &= v.is_finite();
        }
        self.finite = finite;
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        let values: Vec<Complex64> = self.values.iter().map(|&z| f(z)).collect();
        let finite = values.iter().all(|z| z.is_finite());
        Field {
            grid: self.grid.clone(),
            values,
            finite,
        }
    }

    pub fn scaled(&self, c: Complex64) -> Field {
        self.map(|z| c * z)
    }

    /// `self + c * other`, elementwise.
    pub fn add_scaled(&self, other: &Field, c: Complex64) -> Result<Field> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let values: Vec<Complex64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a + c * b)
            .collect();
        let finite = values.iter().all(|z| z.is_finite());
        Ok(Field {
            grid: self.grid.clone(),
            values,
            finite,
        })
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub(crate) fn refresh_finite(&mut self) {
        self.finite = self.values.iter().all(|z| z.is_finite());
    }
}

const REDUCTION_BLOCK: usize = 64;

/// Fixed block-tree sum: blocks of 64 accumulated left to right, the block
/// sums combined pairwise in a fixed binary tree. Partitions may be computed
/// concurrently but must combine in this tree order, so the result is
/// bit-reproducible.
pub fn tree_sum_c64(vals: &[Complex64]) -> Complex64 {
    if vals.len() <= REDUCTION_BLOCK {
        let mut acc = Complex64::new(0.0, 0.0);
        for v in vals {
            acc += v;
        }
        return acc;
    }
    let blocks = vals.len().div_ceil(REDUCTION_BLOCK);
    let mid = (blocks / 2) * REDUCTION_BLOCK;
    tree_sum_c64(&vals[..mid]) + tree_sum_c64(&vals[mid..])
}

/// Real-valued variant of [`tree_sum_c64`] with the identical tree shape.
pub fn tree_sum_f64(vals: &[f64]) -> f64 {
    if vals.len() <= REDUCTION_BLOCK {
        let mut acc = 0.0;
        for v in vals {
            acc += v;
        }
        return acc;
    }
    let blocks = vals.len().div_ceil(REDUCTION_BLOCK);
    let mid = (blocks / 2) * REDUCTION_BLOCK;
    tree_sum_f64(&vals[..mid]) + tree_sum_f64(&vals[mid..])
}

/// Hermitian L2 pairing `<u, v> = sum u conj(v) h_vol`.
pub fn inner(u: &Field, v: &Field) -> Result<Complex64> {
    if !u.same_grid(v) {
        return Err(Error::GridMismatch);
    }
    let products: Vec<Complex64> = u
        .values
        .iter()
        .zip(&v.values)
        .map(|(&a, &b)| a * b.conj())
        .collect();
    Ok(tree_sum_c64(&products) * u.grid.h_vol())
}

/// `||u||^2 = Re <u, u>`, accumulated directly in reals.
pub fn l2_norm_sq(u: &Field) -> f64 {
    let sq: Vec<f64> = u.values.iter().map(|z| z.norm_sqr()).collect();
    tree_sum_f64(&sq) * u.grid.h_vol()
}

/// `max |u|` over all cells.
pub fn linf_norm(u: &Field) -> f64 {
    u.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Write a field snapshot: one header line `n,N_x,N_y,N_s,L_xy,L_s,bc`,
/// then one `re,im` line per value in axis order (s fastest).
pub fn write_snapshot(field: &Field, mut w: impl Write) -> Result<()> {
    writeln!(w, "{}", field.grid.header_line())?;
    for z in &field.values {
        writeln!(w, "{},{}", z.re, z.im)?;
    }
    Ok(())
}

/// Read a snapshot produced by [`write_snapshot`].
pub fn read_snapshot(r: impl BufRead) -> Result<Field> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty snapshot".into()))??;
    let parts: Vec<&str> = header.trim().split(',').collect();
    if parts.len() != 7 {
        return Err(Error::Parse(format!(
            "snapshot header needs 7 fields, got {}",
            parts.len()
        )));
    }
    let parse_usize = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Parse(format!("bad integer `{s}` in snapshot header")))
    };
    let parse_f64 = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Parse(format!("bad float `{s}` in snapshot header")))
    };
    let grid = Arc::new(BoxGrid::new(
        parse_usize(parts[0])?,
        parse_usize(parts[1])?,
        parse_usize(parts[2])?,
        parse_usize(parts[3])?,
        parse_f64(parts[4])?,
        parse_f64(parts[5])?,
        parts[6].parse()?,
    )?);
    let mut values = Vec::with_capacity(grid.num_cells());
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let (re, im) = t
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("bad value line `{t}`")))?;
        values.push(Complex64::new(parse_f64(re.trim())?, parse_f64(im.trim())?));
    }
    Field::from_values(grid, values)
}
