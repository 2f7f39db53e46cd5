//! Uniform tensor grids on boxes with homogeneous Dirichlet boundary, face-centered
//! gradients and the conservative regularized p-Laplacian.
//!
//! Nodes are stored x-fastest. Face arrays are stored per axis: along axis 0 there
//! are `(n0 + 1) * n1` faces, face `(i, j)` sitting between nodes `(i-1, j)` and
//! `(i, j)`; along axis 1 there are `n0 * (n1 + 1)` faces, face `(i, j)` sitting
//! between nodes `(i, j-1)` and `(i, j)`. Nodes outside the interior hold the
//! Dirichlet zero.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("axis {axis}: need at least one interior node")]
    TooFewNodes { axis: usize },
    #[error("axis {axis}: length {length} must be positive")]
    BadLength { axis: usize, length: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("degenerate flux: eps_reg = 0 with p < 2 at a zero-gradient face")]
    DegenerateFlux,
    #[error("coefficient {value} at t = {t} leaves [{alpha}, {lambda}]")]
    CoefficientOutOfBounds { value: f64, t: f64, alpha: f64, lambda: f64 },
    #[error("snapshot csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("snapshot csv: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    nodes: [usize; 2],
    lengths: [f64; 2],
    spacing: [f64; 2],
}

impl Grid {
    pub fn new(nodes: &[usize], lengths: &[f64]) -> Result<Self, FieldError> {
        let dim = nodes.len();
        if !(dim == 1 || dim == 2) || lengths.len() != dim {
            return Err(FieldError::BadDimension(dim));
        }
        let mut g = Grid {
            dim,
            nodes: [1, 1],
            lengths: [1.0, 1.0],
            spacing: [1.0, 1.0],
        };
        for axis in 0..dim {
            if nodes[axis] == 0 {
                return Err(FieldError::TooFewNodes { axis });
            }
            if !(lengths[axis] > 0.0) || !lengths[axis].is_finite() {
                return Err(FieldError::BadLength {
                    axis,
                    length: lengths[axis],
                });
            }
            g.nodes[axis] = nodes[axis];
            g.lengths[axis] = lengths[axis];
            g.spacing[axis] = lengths[axis] / (nodes[axis] + 1) as f64;
        }
        Ok(g)
    }

    pub fn unit_1d(n: usize) -> Result<Self, FieldError> {
        Grid::new(&[n], &[1.0])
    }

    pub fn unit_2d(n: usize) -> Result<Self, FieldError> {
        Grid::new(&[n, n], &[1.0, 1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self, axis: usize) -> usize {
        self.nodes[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.lengths[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn len(&self) -> usize {
        self.nodes[0] * self.nodes[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).product()
    }

    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|a| self.lengths[a]).product()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nodes[0] * j
    }

    /// `(i, j)` of a flat node index.
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nodes[0], idx / self.nodes[0])
    }

    /// Physical coordinates of node `(i, j)`; the second entry is 0 in 1D.
    pub fn coord(&self, i: usize, j: usize) -> [f64; 2] {
        let x = (i + 1) as f64 * self.spacing[0];
        let y = if self.dim == 2 {
            (j + 1) as f64 * self.spacing[1]
        } else {
            0.0
        };
        [x, y]
    }

    pub fn face_count(&self, axis: usize) -> usize {
        if axis == 0 {
            (self.nodes[0] + 1) * self.nodes[1]
        } else {
            self.nodes[0] * (self.nodes[1] + 1)
        }
    }

    /// Face midpoint of face `(i, j)` along `axis`.
    pub fn face_midpoint(&self, axis: usize, i: usize, j: usize) -> [f64; 2] {
        let [h0, h1] = self.spacing;
        if axis == 0 {
            let y = if self.dim == 2 { (j + 1) as f64 * h1 } else { 0.0 };
            [(i as f64 + 0.5) * h0, y]
        } else {
            [(i + 1) as f64 * h0, (j as f64 + 0.5) * h1]
        }
    }

    /// Value at a possibly-boundary node given signed indices; outside the interior is 0.
    #[inline]
    fn at(&self, values: &[f64], i: isize, j: isize) -> f64 {
        if i < 0 || j < 0 || i >= self.nodes[0] as isize || j >= self.nodes[1] as isize {
            0.0
        } else {
            values[i as usize + self.nodes[0] * j as usize]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        let field = ScalarField { grid, values };
        field.check_finite()?;
        Ok(field)
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let (i, j) = grid.ij(idx);
                f(grid.coord(i, j))
            })
            .collect();
        ScalarField { grid, values }
    }

    pub fn check_finite(&self) -> Result<(), FieldError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(idx) => Err(FieldError::NonFinite(idx)),
            None => Ok(()),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Writes one row per interior node: indices, coordinates, value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FieldError> {
        let mut w = csv::Writer::from_writer(writer);
        if self.grid.dim == 1 {
            w.write_record(["i", "x", "u"])?;
        } else {
            w.write_record(["i", "j", "x", "y", "u"])?;
        }
        for (idx, v) in self.values.iter().enumerate() {
            let (i, j) = self.grid.ij(idx);
            let [x, y] = self.grid.coord(i, j);
            if self.grid.dim == 1 {
                w.write_record([i.to_string(), format!("{x:e}"), format!("{v:e}")])?;
            } else {
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    format!("{x:e}"),
                    format!("{y:e}"),
                    format!("{v:e}"),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the format written by [`ScalarField::write_csv`] onto `grid`.
    pub fn read_csv<R: Read>(grid: Grid, reader: R) -> Result<Self, FieldError> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let expected: &[&str] = if grid.dim == 1 {
            &["i", "x", "u"]
        } else {
            &["i", "j", "x", "y", "u"]
        };
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(FieldError::Format(format!("unexpected header {headers:?}")));
        }
        let mut values = vec![f64::NAN; grid.len()];
        let mut seen = 0;
        for record in r.records() {
            let record = record?;
            let parse_idx = |k: usize| -> Result<usize, FieldError> {
                record[k]
                    .parse::<usize>()
                    .map_err(|e| FieldError::Format(format!("row index: {e}")))
            };
            let i = parse_idx(0)?;
            let j = if grid.dim == 2 { parse_idx(1)? } else { 0 };
            if i >= grid.nodes[0] || j >= grid.nodes[1] {
                return Err(FieldError::Format(format!("node ({i}, {j}) outside grid")));
            }
            let v: f64 = record[expected.len() - 1]
                .parse()
                .map_err(|e| FieldError::Format(format!("value: {e}")))?;
            values[grid.index(i, j)] = v;
            seen += 1;
        }
        if seen != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                got: seen,
            });
        }
        ScalarField::from_values(grid, values)
    }
}

/// Face-centered vector data: one array per axis, laid out as described in the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub grid: Grid,
    pub axes: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn face_index(&self, axis: usize, i: usize, j: usize) -> usize {
        if axis == 0 {
            i + (self.grid.nodes[0] + 1) * j
        } else {
            i + self.grid.nodes[0] * j
        }
    }

    pub fn get(&self, axis: usize, i: usize, j: usize) -> f64 {
        self.axes[axis][self.face_index(axis, i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.axes
            .iter()
            .flatten()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

pub type ScalarCoefficient = Arc<dyn Fn(f64, [f64; 2]) -> f64 + Send + Sync>;
pub type DiagonalCoefficient = Arc<dyn Fn(f64, [f64; 2], usize) -> f64 + Send + Sync>;

/// Diffusion matrix `A(t, x)` evaluated at face midpoints.
#[derive(Clone)]
pub enum CoefficientMode {
    Identity,
    Scalar(ScalarCoefficient),
    Diagonal(DiagonalCoefficient),
}

#[derive(Clone)]
pub struct CoefficientField {
    pub mode: CoefficientMode,
    pub alpha: f64,
    pub lambda: f64,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mode = match self.mode {
            CoefficientMode::Identity => "identity",
            CoefficientMode::Scalar(_) => "scalar",
            CoefficientMode::Diagonal(_) => "diagonal",
        };
        f.debug_struct("CoefficientField")
            .field("mode", &mode)
            .field("alpha", &self.alpha)
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl CoefficientField {
    pub fn identity() -> Self {
        CoefficientField {
            mode: CoefficientMode::Identity,
            alpha: 1.0,
            lambda: 1.0,
        }
    }

    /// Coefficient of the flux component along `axis` at point `x`.
    #[inline]
    pub fn eval(&self, t: f64, x: [f64; 2], axis: usize) -> f64 {
        match &self.mode {
            CoefficientMode::Identity => 1.0,
            CoefficientMode::Scalar(f) => f(t, x),
            CoefficientMode::Diagonal(f) => f(t, x, axis),
        }
    }

    /// Samples every face of `grid` at each time in `times` and checks `α ≤ a ≤ Λ`.
    pub fn check_bounds(&self, grid: &Grid, times: &[f64]) -> Result<(), FieldError> {
        for &t in times {
            for axis in 0..grid.dim {
                for_each_face(grid, axis, |i, j, _| {
                    let x = grid.face_midpoint(axis, i, j);
                    let value = self.eval(t, x, axis);
                    if !(value >= self.alpha && value <= self.lambda) {
                        return Err(FieldError::CoefficientOutOfBounds {
                            value,
                            t,
                            alpha: self.alpha,
                            lambda: self.lambda,
                        });
                    }
                    Ok(())
                })?;
            }
        }
        Ok(())
    }
}

fn for_each_face<E>(
    grid: &Grid,
    axis: usize,
    mut f: impl FnMut(usize, usize, usize) -> Result<(), E>,
) -> Result<(), E> {
    let (ni, nj) = if axis == 0 {
        (grid.nodes[0] + 1, grid.nodes[1])
    } else {
        (grid.nodes[0], grid.nodes[1] + 1)
    };
    for j in 0..nj {
        for i in 0..ni {
            f(i, j, i + ni * j)?;
        }
    }
    Ok(())
}

/// Normal differences `(u_right - u_left)/h` on every face; boundary faces see the Dirichlet zero.
pub fn gradient(field: &ScalarField) -> FaceField {
    let g = &field.grid;
    let u = &field.values;
    let mut axes = Vec::with_capacity(g.dim);
    for axis in 0..g.dim {
        let h = g.spacing[axis];
        let mut out = vec![0.0; g.face_count(axis)];
        let _ = for_each_face::<()>(g, axis, |i, j, f| {
            let (i, j) = (i as isize, j as isize);
            out[f] = if axis == 0 {
                (g.at(u, i, j) - g.at(u, i - 1, j)) / h
            } else {
                (g.at(u, i, j) - g.at(u, i, j - 1)) / h
            };
            Ok(())
        });
        axes.push(out);
    }
    FaceField { grid: *g, axes }
}

/// Face-centered fluxes `A (eps² + |∇u|²)^{(p-2)/2} ∂u`.
///
/// `|∇u|` at a face combines the normal difference with the tangential central
/// difference averaged from the two adjacent nodes.
pub fn p_fluxes(field: &ScalarField, coeff: &CoefficientField, p: f64, eps_reg: f64, t: f64) -> Result<FaceField, FieldError> {
    let mut flux = gradient(field);
    let weights = face_diffusivities(field, &flux, coeff, p, eps_reg, t)?;
    for (axis, w) in weights.axes.iter().enumerate() {
        for (f, k) in flux.axes[axis].iter_mut().zip(w) {
            *f *= k;
        }
    }
    Ok(flux)
}

/// Per-face diffusivity `A (eps² + |∇u|²)^{(p-2)/2}` given precomputed normal gradients.
pub fn face_diffusivities(
    field: &ScalarField,
    normal: &FaceField,
    coeff: &CoefficientField,
    p: f64,
    eps_reg: f64,
    t: f64,
) -> Result<FaceField, FieldError> {
    let g = &field.grid;
    let u = &field.values;
    let expo = 0.5 * (p - 2.0);
    let eps2 = eps_reg * eps_reg;
    let mut axes = Vec::with_capacity(g.dim);
    for axis in 0..g.dim {
        let mut out = vec![0.0; g.face_count(axis)];
        let other = 1 - axis;
        let ho = g.spacing[other];
        for_each_face(g, axis, |i, j, f| {
            let gn = normal.axes[axis][f];
            let gt = if g.dim == 2 {
                let (i, j) = (i as isize, j as isize);
                // Central tangential differences at the two nodes sharing this face.
                let (a, b) = if axis == 0 {
                    (
                        (g.at(u, i - 1, j + 1) - g.at(u, i - 1, j - 1)) / (2.0 * ho),
                        (g.at(u, i, j + 1) - g.at(u, i, j - 1)) / (2.0 * ho),
                    )
                } else {
                    (
                        (g.at(u, i + 1, j - 1) - g.at(u, i - 1, j - 1)) / (2.0 * ho),
                        (g.at(u, i + 1, j) - g.at(u, i - 1, j)) / (2.0 * ho),
                    )
                };
                0.5 * (a + b)
            } else {
                0.0
            };
            let s = eps2 + gn * gn + gt * gt;
            let k = if expo == 0.0 {
                1.0
            } else if s == 0.0 {
                if expo < 0.0 {
                    return Err(FieldError::DegenerateFlux);
                }
                0.0
            } else if expo == 0.5 {
                s.sqrt()
            } else {
                s.powf(expo)
            };
            let a = coeff.eval(t, g.face_midpoint(axis, i, j), axis);
            out[f] = a * k;
            Ok(())
        })?;
        axes.push(out);
    }
    Ok(FaceField { grid: *g, axes })
}

/// Conservative divergence of face data: `Σ_axis (F_after - F_before)/h`.
pub fn divergence(faces: &FaceField) -> ScalarField {
    let g = &faces.grid;
    let mut out = vec![0.0; g.len()];
    for axis in 0..g.dim {
        let h = g.spacing[axis];
        let data = &faces.axes[axis];
        for j in 0..g.nodes[1] {
            for i in 0..g.nodes[0] {
                let (before, after) = if axis == 0 {
                    let base = (g.nodes[0] + 1) * j;
                    (data[base + i], data[base + i + 1])
                } else {
                    (data[i + g.nodes[0] * j], data[i + g.nodes[0] * (j + 1)])
                };
                out[g.index(i, j)] += (after - before) / h;
            }
        }
    }
    ScalarField {
        grid: *g,
        values: out,
    }
}

/// Regularized `div(A (eps² + |∇u|²)^{(p-2)/2} ∇u)` at every interior node.
pub fn p_flux_divergence(
    field: &ScalarField,
    coeff: &CoefficientField,
    p: f64,
    eps_reg: f64,
    t: f64,
) -> Result<ScalarField, FieldError> {
    Ok(divergence(&p_fluxes(field, coeff, p, eps_reg, t)?))
}

/// Nodal central-difference gradient, per axis.
pub fn nodal_gradient(field: &ScalarField) -> Vec<[f64; 2]> {
    let g = &field.grid;
    let u = &field.values;
    (0..g.len())
        .map(|idx| {
            let (i, j) = g.ij(idx);
            let (i, j) = (i as isize, j as isize);
            let gx = (g.at(u, i + 1, j) - g.at(u, i - 1, j)) / (2.0 * g.spacing[0]);
            let gy = if g.dim == 2 {
                (g.at(u, i, j + 1) - g.at(u, i, j - 1)) / (2.0 * g.spacing[1])
            } else {
                0.0
            };
            [gx, gy]
        })
        .collect()
}

/// Nodal `|∇u|^q`, the nodal gradient being the average of adjacent face gradients.
pub fn gradient_magnitude_q(field: &ScalarField, q: f64) -> ScalarField {
    let values = nodal_gradient(field)
        .into_iter()
        .map(|[gx, gy]| {
            let s = gx * gx + gy * gy;
            if s == 0.0 {
                0.0
            } else if q == 2.0 {
                s
            } else {
                s.powf(0.5 * q)
            }
        })
        .collect();
    ScalarField {
        grid: field.grid,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_has_zero_gradient_and_flux() {
        let g = Grid::unit_2d(5).unwrap();
        let u = ScalarField::zeros(g);
        assert_eq!(gradient(&u).max_abs(), 0.0);
        let d = p_flux_divergence(&u, &CoefficientField::identity(), 3.0, 0.0, 0.0).unwrap();
        assert!(d.is_zero());
        assert!(gradient_magnitude_q(&u, 1.5).is_zero());
    }

    #[test]
    fn linear_data_has_unit_interior_gradient() {
        let g = Grid::unit_1d(9).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0]);
        let grad = gradient(&u);
        // Faces 1..n are interior; face n is the right boundary kink.
        for i in 1..9 {
            assert!((grad.get(0, i, 0) - 1.0).abs() < 1e-12);
        }
        assert!(grad.get(0, 9, 0) < 0.0);
    }

    #[test]
    fn affine_2d_gradient() {
        let g = Grid::new(&[6, 7], &[1.0, 2.0]).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0] + 2.0 * x[1]);
        let grad = gradient(&u);
        for j in 0..7 {
            for i in 1..6 {
                assert!((grad.get(0, i, j) - 1.0).abs() < 1e-12);
            }
        }
        for j in 1..7 {
            for i in 0..6 {
                assert!((grad.get(1, i, j) - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_second_difference_is_exact() {
        let g = Grid::unit_1d(15).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0] * (1.0 - x[0]));
        let d = p_flux_divergence(&u, &CoefficientField::identity(), 2.0, 1e-8, 0.0).unwrap();
        for v in d.values {
            assert!((v + 2.0).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn three_node_p3_flux_by_hand() {
        // Independent evaluation: face fluxes F = |Δu/h| Δu/h with Dirichlet zeros.
        let g = Grid::unit_1d(3).unwrap();
        assert_eq!(g.spacing(0), 0.25);
        let vals = [0.1, 0.3, 0.2];
        let u = ScalarField::from_values(g, vals.to_vec()).unwrap();
        let d = p_flux_divergence(&u, &CoefficientField::identity(), 3.0, 0.0, 0.0).unwrap();
        let ext = [0.0, 0.1, 0.3, 0.2, 0.0];
        let h = 0.25;
        let flux = |a: f64, b: f64| {
            let s = (b - a) / h;
            s.abs() * s
        };
        for node in 1..=3 {
            let expect = (flux(ext[node], ext[node + 1]) - flux(ext[node - 1], ext[node])) / h;
            assert!((d.values[node - 1] - expect).abs() < 1e-12);
        }
        // Middle node: F_right = -0.16, F_left = 0.64.
        assert!((d.values[1] + 3.2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_singular_flux_is_flagged() {
        let g = Grid::unit_1d(3).unwrap();
        let u = ScalarField::from_values(g, vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            p_flux_divergence(&u, &CoefficientField::identity(), 1.5, 0.0, 0.0),
            Err(FieldError::DegenerateFlux)
        ));
        assert!(p_flux_divergence(&u, &CoefficientField::identity(), 1.5, 1e-4, 0.0).is_ok());
    }

    #[test]
    fn gradient_power_identities() {
        let g = Grid::unit_2d(8).unwrap();
        let u = ScalarField::from_fn(g, |x| (3.0 * x[0]).sin() * (x[1] + 0.3));
        let one = gradient_magnitude_q(&u, 1.0);
        let two = gradient_magnitude_q(&u, 2.0);
        for (a, b) in one.values.iter().zip(&two.values) {
            assert!((a * a - b).abs() <= 1e-12 * (1.0 + b));
        }
        // Affine with |∇u| = 1 at nodes away from the boundary.
        let g = Grid::unit_1d(9).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0]);
        for q in [0.5, 1.3, 2.0] {
            let m = gradient_magnitude_q(&u, q);
            for v in &m.values[..8] {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coefficient_bounds_are_checked() {
        let g = Grid::unit_2d(4).unwrap();
        let c = CoefficientField {
            mode: CoefficientMode::Scalar(Arc::new(|_, x| 1.0 + x[0])),
            alpha: 1.0,
            lambda: 1.5,
        };
        assert!(c.check_bounds(&g, &[0.0]).is_err());
        let c = CoefficientField { lambda: 2.0, ..c };
        assert!(c.check_bounds(&g, &[0.0, 1.0]).is_ok());
    }

    #[test]
    fn snapshot_csv_round_trip() {
        let g = Grid::new(&[4, 3], &[1.0, 0.5]).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0] * 0.1 + x[1].powi(3) / 7.0);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,x,y,u\n"));
        let back = ScalarField::read_csv(g, buf.as_slice()).unwrap();
        assert_eq!(back, u);
    }
}
