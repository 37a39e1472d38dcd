//! Pointwise Riemannian machinery on a chart: metric evaluation and
//! inversion, the Levi-Civita connection with its coordinate derivatives,
//! covariant derivatives of covector and vector fields, and the curvature
//! tensor.
//!
//! All tensors are evaluated at sample points; there is no global symbolic
//! tensor algebra. Metric components and field components keep their exact
//! symbolic first and second derivatives, so every number produced here is
//! an evaluation of an exact expression, not a finite difference.
//!
//! Curvature sign convention, fixed once for the whole crate: with
//! `gamma[[i, j, k]]` the connection coefficients, the stored tensor is
//!
//! ```text
//! riem[[a, i, k, l]] = d_l gamma^i_ak - d_k gamma^i_al
//!                    + gamma^r_ak gamma^i_rl - gamma^r_al gamma^i_rk
//! ```
//!
//! antisymmetric in `(k, l)`, normalized so that a metric of constant
//! curvature `K` satisfies `riem[[a,i,k,l]] = K (h_ak d^i_l - h_al d^i_k)`
//! and the unit round sphere comes out at `K = +1`.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Array3, Array4};

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::expr::{Expr, Func, ScalarField};

/// Condition-number cutoff for metric inversion. Past this, the residual
/// tolerances used elsewhere stop meaning anything.
pub const CONDITION_LIMIT: f64 = 1e10;

/// Required accuracy of `g * g^-1` against the identity.
pub const INVERSION_TOLERANCE: f64 = 1e-10;

fn flat3(n: usize, i: usize, j: usize, k: usize) -> usize {
    (i * n + j) * n + k
}

/// Symmetric matrix of scalar fields with eagerly cached symbolic first and
/// second derivatives of every component.
#[derive(Debug, Clone)]
pub struct MetricField {
    chart: Arc<Chart>,
    /// `comps[i*n + j]`, symmetric.
    comps: Vec<ScalarField>,
    /// `d1[(i*n + j)*n + k]` = ∂_k g_ij.
    d1: Vec<ScalarField>,
    /// `d2[((i*n + j)*n + k)*n + l]` = ∂_l ∂_k g_ij.
    d2: Vec<ScalarField>,
    /// Symbolic inverse (adjugate over determinant), built on first use.
    inverse: OnceLock<Vec<ScalarField>>,
}

impl MetricField {
    /// Builds a metric from a full component matrix. Components must be
    /// structurally symmetric; positive-definiteness is checked at each
    /// evaluation point, not here.
    pub fn new(rows: Vec<Vec<ScalarField>>, chart: &Arc<Chart>) -> Result<MetricField> {
        let n = chart.dim();
        if n < 2 {
            return Err(Error::Chart(format!(
                "metric needs a chart of dimension >= 2, got {}",
                n
            )));
        }
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!(
                "metric components must form a {n}x{n} matrix"
            )));
        }
        for row in &rows {
            for f in row {
                if f.chart() != chart {
                    return Err(Error::Chart(
                        "metric component bound to a different chart".into(),
                    ));
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Shape(format!(
                        "metric components are not symmetric: entry ({},{}) is `{}` but ({},{}) is `{}`",
                        i + 1, j + 1, rows[i][j], j + 1, i + 1, rows[j][i]
                    )));
                }
            }
        }
        let comps: Vec<ScalarField> = rows.into_iter().flatten().collect();
        let mut d1 = Vec::with_capacity(n * n * n);
        for f in &comps {
            for k in 0..n {
                d1.push(f.differentiate(k)?);
            }
        }
        let mut d2 = Vec::with_capacity(n * n * n * n);
        for f in &d1 {
            for l in 0..n {
                d2.push(f.differentiate(l)?);
            }
        }
        Ok(MetricField {
            chart: Arc::clone(chart),
            comps,
            d1,
            d2,
            inverse: OnceLock::new(),
        })
    }

    /// Euclidean components on the chart.
    pub fn euclidean(chart: &Arc<Chart>) -> Result<MetricField> {
        let n = chart.dim();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| ScalarField::constant(if i == j { 1.0 } else { 0.0 }, chart))
                    .collect()
            })
            .collect();
        MetricField::new(rows, chart)
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn component(&self, i: usize, j: usize) -> &ScalarField {
        &self.comps[i * self.dim() + j]
    }

    /// The conformally rescaled metric with components `e^{2 rho} g_ij`.
    pub fn conformal_scale(&self, rho: &ScalarField) -> Result<MetricField> {
        let n = self.dim();
        let factor = rho.scale(2.0).apply(Func::Exp);
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                row.push(factor.mul(self.component(i, j))?);
            }
            rows.push(row);
        }
        MetricField::new(rows, &self.chart)
    }

    /// Symbolic inverse components, `inv[i*n + j]` = g^{ij}, computed as
    /// adjugate over determinant. Singularities surface at evaluation as
    /// division-by-zero domain errors.
    pub fn inverse_components(&self) -> &[ScalarField] {
        self.inverse.get_or_init(|| {
            let n = self.dim();
            let grid: Vec<Expr> = self.comps.iter().map(|f| f.expr().clone()).collect();
            let det = det_expr(&grid, n);
            let mut inv = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    // adjugate: transposed cofactor
                    let minor = minor_grid(&grid, n, j, i);
                    let mut c = det_expr(&minor, n - 1);
                    if (i + j) % 2 == 1 {
                        c = crate::expr::Expr::Neg(c.into());
                    }
                    let entry = Expr::Div(c.into(), det.clone().into());
                    inv.push(
                        ScalarField::from_expr(entry, &self.chart)
                            .expect("inverse components stay on the same chart"),
                    );
                }
            }
            inv
        })
    }

    /// Evaluates the component matrix, checks positive-definiteness and
    /// conditioning, and returns `(g, g^{-1})`.
    pub fn evaluate(&self, x: &[f64]) -> Result<(Array2<f64>, Array2<f64>)> {
        metric_at(self, x)
    }

    fn comp_value(&self, i: usize, j: usize, x: &[f64]) -> Result<f64> {
        self.comps[i * self.dim() + j].evaluate(x)
    }

    fn d1_value(&self, i: usize, j: usize, k: usize, x: &[f64]) -> Result<f64> {
        let n = self.dim();
        self.d1[flat3(n, i, j, k)].evaluate(x)
    }

    fn d2_value(&self, i: usize, j: usize, k: usize, l: usize, x: &[f64]) -> Result<f64> {
        let n = self.dim();
        self.d2[flat3(n, i, j, k) * n + l].evaluate(x)
    }
}

fn minor_grid(grid: &[Expr], n: usize, drop_row: usize, drop_col: usize) -> Vec<Expr> {
    let mut out = Vec::with_capacity((n - 1) * (n - 1));
    for i in 0..n {
        if i == drop_row {
            continue;
        }
        for j in 0..n {
            if j == drop_col {
                continue;
            }
            out.push(grid[i * n + j].clone());
        }
    }
    out
}

fn det_expr(grid: &[Expr], n: usize) -> Expr {
    match n {
        0 => Expr::one(),
        1 => grid[0].clone(),
        _ => {
            let mut acc = Expr::zero();
            for j in 0..n {
                let minor = minor_grid(grid, n, 0, j);
                let mut term = Expr::Mul(grid[j].clone().into(), det_expr(&minor, n - 1).into());
                if j % 2 == 1 {
                    term = Expr::Neg(term.into());
                }
                acc = if acc.is_zero() {
                    term
                } else {
                    Expr::Add(acc.into(), term.into())
                };
            }
            acc
        }
    }
}

/// Evaluates the metric at `x` and returns `(g, g^{-1})`. Fails when the
/// matrix is not positive definite or too ill-conditioned to invert within
/// `INVERSION_TOLERANCE`.
pub fn metric_at(g: &MetricField, x: &[f64]) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = g.dim();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = g.comp_value(i, j, x)?;
        }
    }
    let eigen = SymmetricEigen::new(m.clone());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &ev in eigen.eigenvalues.iter() {
        lo = lo.min(ev);
        hi = hi.max(ev);
    }
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            point: x.to_vec(),
            eigenvalue: lo,
        });
    }
    let condition = hi / lo;
    if condition > CONDITION_LIMIT {
        return Err(Error::IllConditioned {
            point: x.to_vec(),
            condition,
        });
    }
    // inverse through the eigendecomposition keeps the result symmetric
    let q = &eigen.eigenvectors;
    let mut inv = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for r in 0..n {
                s += q[(i, r)] * q[(j, r)] / eigen.eigenvalues[r];
            }
            inv[(i, j)] = s;
        }
    }
    let product = &m * &inv;
    let mut residual = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            residual = residual.max((product[(i, j)] - target).abs());
        }
    }
    if residual > INVERSION_TOLERANCE {
        return Err(Error::IllConditioned {
            point: x.to_vec(),
            condition,
        });
    }
    let to_array = |m: &DMatrix<f64>| Array2::from_shape_fn((n, n), |(i, j)| m[(i, j)]);
    Ok((to_array(&m), to_array(&inv)))
}

/// Levi-Civita connection data at a point: the metric pair, the
/// coefficients `gamma[[i, j, k]]` (symmetric in `j, k`), and their
/// coordinate derivatives `dgamma[[i, j, k, l]]` = ∂_l gamma^i_jk.
#[derive(Debug, Clone)]
pub struct ConnectionEval {
    pub x: Vec<f64>,
    pub g: Array2<f64>,
    pub g_inv: Array2<f64>,
    pub gamma: Array3<f64>,
    pub dgamma: Array4<f64>,
}

/// Connection coefficients and their derivatives from exact metric
/// derivatives: `gamma^i_jk = 1/2 g^{ir} (d_j g_rk + d_k g_rj - d_r g_jk)`.
pub fn christoffel(g: &MetricField, x: &[f64]) -> Result<ConnectionEval> {
    let n = g.dim();
    let (gm, ginv) = metric_at(g, x)?;

    let mut dg = Array3::zeros((n, n, n));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                dg[[i, j, k]] = g.d1_value(i, j, k, x)?;
            }
        }
    }
    let mut ddg = Array4::zeros((n, n, n, n));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    ddg[[i, j, k, l]] = g.d2_value(i, j, k, l, x)?;
                }
            }
        }
    }

    // first kind
    let mut gamma1 = Array3::zeros((n, n, n));
    let mut dgamma1 = Array4::zeros((n, n, n, n));
    for r in 0..n {
        for j in 0..n {
            for k in 0..n {
                gamma1[[r, j, k]] = 0.5 * (dg[[r, k, j]] + dg[[r, j, k]] - dg[[j, k, r]]);
                for l in 0..n {
                    dgamma1[[r, j, k, l]] =
                        0.5 * (ddg[[r, k, j, l]] + ddg[[r, j, k, l]] - ddg[[j, k, r, l]]);
                }
            }
        }
    }

    // d_l g^{ir} = -g^{ia} (d_l g_ab) g^{br}
    let mut dginv = Array3::zeros((n, n, n));
    for i in 0..n {
        for r in 0..n {
            for l in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s -= ginv[[i, a]] * dg[[a, b, l]] * ginv[[b, r]];
                    }
                }
                dginv[[i, r, l]] = s;
            }
        }
    }

    let mut gamma = Array3::zeros((n, n, n));
    let mut dgamma = Array4::zeros((n, n, n, n));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for r in 0..n {
                    s += ginv[[i, r]] * gamma1[[r, j, k]];
                }
                gamma[[i, j, k]] = s;
                for l in 0..n {
                    let mut t = 0.0;
                    for r in 0..n {
                        t += dginv[[i, r, l]] * gamma1[[r, j, k]]
                            + ginv[[i, r]] * dgamma1[[r, j, k, l]];
                    }
                    dgamma[[i, j, k, l]] = t;
                }
            }
        }
    }

    Ok(ConnectionEval {
        x: x.to_vec(),
        g: gm,
        g_inv: ginv,
        gamma,
        dgamma,
    })
}

/// Self-test of the conformal transformation law. Computes the connection
/// of `e^{2 rho} g` independently and compares it with
/// `gamma(g) + rho_j d^i_k + rho_k d^i_j - rho^i g_jk`. Returns the largest
/// componentwise deviation.
pub fn conformal_christoffel_residual(
    g: &MetricField,
    rho: &ScalarField,
    x: &[f64],
) -> Result<f64> {
    let n = g.dim();
    let scaled = g.conformal_scale(rho)?;
    let lhs = christoffel(&scaled, x)?;
    let base = christoffel(g, x)?;

    let mut rho_d = vec![0.0; n];
    for (j, slot) in rho_d.iter_mut().enumerate() {
        *slot = rho.differentiate(j)?.evaluate(x)?;
    }
    let mut rho_up = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            rho_up[i] += base.g_inv[[i, j]] * rho_d[j];
        }
    }

    let mut residual = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut rhs = base.gamma[[i, j, k]] - rho_up[i] * base.g[[j, k]];
                if i == k {
                    rhs += rho_d[j];
                }
                if i == j {
                    rhs += rho_d[k];
                }
                residual = residual.max((lhs.gamma[[i, j, k]] - rhs).abs());
            }
        }
    }
    Ok(residual)
}

/// Covector field with cached symbolic first and second derivatives.
#[derive(Debug, Clone)]
pub struct CovectorField {
    chart: Arc<Chart>,
    comps: Vec<ScalarField>,
    /// `d1[i*n + j]` = ∂_j b_i
    d1: Vec<ScalarField>,
    /// `d2[(i*n + j)*n + k]` = ∂_k ∂_j b_i
    d2: Vec<ScalarField>,
}

/// Vector field (upper index) with cached symbolic first derivatives.
#[derive(Debug, Clone)]
pub struct VectorField {
    chart: Arc<Chart>,
    comps: Vec<ScalarField>,
    /// `d1[i*n + j]` = ∂_j v^i
    d1: Vec<ScalarField>,
}

fn check_components(comps: &[ScalarField], chart: &Arc<Chart>) -> Result<()> {
    if comps.len() != chart.dim() {
        return Err(Error::Shape(format!(
            "expected {} components, got {}",
            chart.dim(),
            comps.len()
        )));
    }
    for f in comps {
        if f.chart() != chart {
            return Err(Error::Chart(
                "field component bound to a different chart".into(),
            ));
        }
    }
    Ok(())
}

impl CovectorField {
    pub fn new(comps: Vec<ScalarField>, chart: &Arc<Chart>) -> Result<CovectorField> {
        check_components(&comps, chart)?;
        let n = chart.dim();
        let mut d1 = Vec::with_capacity(n * n);
        for f in &comps {
            for j in 0..n {
                d1.push(f.differentiate(j)?);
            }
        }
        let mut d2 = Vec::with_capacity(n * n * n);
        for f in &d1 {
            for k in 0..n {
                d2.push(f.differentiate(k)?);
            }
        }
        Ok(CovectorField {
            chart: Arc::clone(chart),
            comps,
            d1,
            d2,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.comps[i]
    }

    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.comps.iter().map(|f| f.evaluate(x)).collect()
    }

    /// Raises the index symbolically with the inverse metric.
    pub fn raise(&self, g: &MetricField) -> Result<VectorField> {
        if g.chart() != &self.chart {
            return Err(Error::Chart("field and metric on different charts".into()));
        }
        let n = self.chart.dim();
        let inv = g.inverse_components();
        let mut comps = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = ScalarField::constant(0.0, &self.chart);
            for j in 0..n {
                acc = acc.add(&inv[i * n + j].mul(&self.comps[j])?)?;
            }
            comps.push(acc);
        }
        VectorField::new(comps, &self.chart)
    }
}

impl VectorField {
    pub fn new(comps: Vec<ScalarField>, chart: &Arc<Chart>) -> Result<VectorField> {
        check_components(&comps, chart)?;
        let n = chart.dim();
        let mut d1 = Vec::with_capacity(n * n);
        for f in &comps {
            for j in 0..n {
                d1.push(f.differentiate(j)?);
            }
        }
        Ok(VectorField {
            chart: Arc::clone(chart),
            comps,
            d1,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.comps[i]
    }

    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.comps.iter().map(|f| f.evaluate(x)).collect()
    }

    /// Lowers the index symbolically with the metric.
    pub fn lower(&self, g: &MetricField) -> Result<CovectorField> {
        if g.chart() != &self.chart {
            return Err(Error::Chart("field and metric on different charts".into()));
        }
        let n = self.chart.dim();
        let mut comps = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = ScalarField::constant(0.0, &self.chart);
            for j in 0..n {
                acc = acc.add(&g.component(i, j).mul(&self.comps[j])?)?;
            }
            comps.push(acc);
        }
        CovectorField::new(comps, &self.chart)
    }
}

/// Covariant derivative of a covector: `out[[i, j]] = b_{i||j}
/// = d_j b_i - gamma^r_ij b_r`.
pub fn covariant_derivative(
    field: &CovectorField,
    g: &MetricField,
    x: &[f64],
) -> Result<Array2<f64>> {
    let conn = christoffel(g, x)?;
    covariant_derivative_with(field, &conn, x)
}

/// Same as [`covariant_derivative`] but reusing an already-computed
/// connection at the point.
pub fn covariant_derivative_with(
    field: &CovectorField,
    conn: &ConnectionEval,
    x: &[f64],
) -> Result<Array2<f64>> {
    let n = field.chart.dim();
    let b = field.values(x)?;
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut v = field.d1[i * n + j].evaluate(x)?;
            for r in 0..n {
                v -= conn.gamma[[r, i, j]] * b[r];
            }
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// Covariant derivative of a vector: `out[[i, j]] = v^i_{||j}
/// = d_j v^i + gamma^i_rj v^r`.
pub fn covariant_derivative_vector(
    field: &VectorField,
    g: &MetricField,
    x: &[f64],
) -> Result<Array2<f64>> {
    let n = field.chart.dim();
    let conn = christoffel(g, x)?;
    let v = field.values(x)?;
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = field.d1[i * n + j].evaluate(x)?;
            for r in 0..n {
                s += conn.gamma[[i, r, j]] * v[r];
            }
            out[[i, j]] = s;
        }
    }
    Ok(out)
}

/// Second covariant derivative of a covector, full tensor rule:
///
/// `out[[i, j, k]] = b_{i||j||k}
/// = d_k(b_{i||j}) - gamma^r_ik b_{r||j} - gamma^r_jk b_{i||r}`
///
/// with `d_k(b_{i||j})` assembled from exact symbolic derivatives:
/// `d_k d_j b_i - (d_k gamma^r_ij) b_r - gamma^r_ij d_k b_r`.
pub fn second_covariant_derivative(
    field: &CovectorField,
    g: &MetricField,
    x: &[f64],
) -> Result<Array3<f64>> {
    let n = field.chart.dim();
    let conn = christoffel(g, x)?;
    let b = field.values(x)?;
    let first = covariant_derivative_with(field, &conn, x)?;

    let mut db = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            db[[i, j]] = field.d1[i * n + j].evaluate(x)?;
        }
    }

    let mut out = Array3::zeros((n, n, n));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut partial = field.d2[(i * n + j) * n + k].evaluate(x)?;
                for r in 0..n {
                    partial -= conn.dgamma[[r, i, j, k]] * b[r] + conn.gamma[[r, i, j]] * db[[r, k]];
                }
                let mut v = partial;
                for r in 0..n {
                    v -= conn.gamma[[r, i, k]] * first[[r, j]];
                    v -= conn.gamma[[r, j, k]] * first[[i, r]];
                }
                out[[i, j, k]] = v;
            }
        }
    }
    Ok(out)
}

/// Curvature tensor at a point in the crate-wide convention (see module
/// docs): `riem[[a, i, k, l]]`, antisymmetric in `(k, l)`.
pub fn riemann(g: &MetricField, x: &[f64]) -> Result<Array4<f64>> {
    let conn = christoffel(g, x)?;
    Ok(riemann_with(&conn))
}

/// Curvature from an already-computed connection.
pub fn riemann_with(conn: &ConnectionEval) -> Array4<f64> {
    let n = conn.gamma.shape()[0];
    let mut out = Array4::zeros((n, n, n, n));
    for a in 0..n {
        for i in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = conn.dgamma[[i, a, k, l]] - conn.dgamma[[i, a, l, k]];
                    for r in 0..n {
                        v += conn.gamma[[r, a, k]] * conn.gamma[[i, r, l]]
                            - conn.gamma[[r, a, l]] * conn.gamma[[i, r, k]];
                    }
                    out[[a, i, k, l]] = v;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chart2() -> Arc<Chart> {
        Arc::new(Chart::axes(&[(0.2, 3.0), (-3.0, 3.0)]).unwrap())
    }

    fn metric(sources: &[[&str; 2]; 2], chart: &Arc<Chart>) -> MetricField {
        let rows = sources
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| ScalarField::parse(s, chart).unwrap())
                    .collect()
            })
            .collect();
        MetricField::new(rows, chart).unwrap()
    }

    fn sphere2(chart: &Arc<Chart>) -> MetricField {
        metric(&[["1", "0"], ["0", "sin(x1)^2"]], chart)
    }

    /// Finite-difference Christoffel oracle built only from metric values.
    fn christoffel_fd(g: &MetricField, x: &[f64]) -> Array3<f64> {
        let n = g.dim();
        let h = 1e-5;
        let g_at = |x: &[f64]| {
            let mut m = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    m[[i, j]] = g.comp_value(i, j, x).unwrap();
                }
            }
            m
        };
        let (_, ginv) = metric_at(g, x).unwrap();
        let mut dg = Array3::zeros((n, n, n));
        for k in 0..n {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[k] += h;
            lo[k] -= h;
            let a = g_at(&hi);
            let b = g_at(&lo);
            for i in 0..n {
                for j in 0..n {
                    dg[[i, j, k]] = (a[[i, j]] - b[[i, j]]) / (2.0 * h);
                }
            }
        }
        let mut gamma = Array3::zeros((n, n, n));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut s = 0.0;
                    for r in 0..n {
                        s += ginv[[i, r]] * (dg[[r, k, j]] + dg[[r, j, k]] - dg[[j, k, r]]);
                    }
                    gamma[[i, j, k]] = 0.5 * s;
                }
            }
        }
        gamma
    }

    #[test]
    fn identity_metric_inverts_to_identity() {
        let c = chart2();
        let g = MetricField::euclidean(&c).unwrap();
        let (m, inv) = metric_at(&g, &[1.0, 1.0]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_eq!(m[[i, j]], expected);
                assert!((inv[[i, j]] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn diagonal_metric_inverts_componentwise() {
        let c = chart2();
        let g = metric(&[["1", "0"], ["0", "x1^2"]], &c);
        let (m, inv) = metric_at(&g, &[2.0, 0.0]).unwrap();
        assert!((m[[1, 1]] - 4.0).abs() < 1e-14);
        assert!((inv[[1, 1]] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn signature_violation_is_rejected() {
        let chart = Arc::new(Chart::axes(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap());
        let g = metric(&[["1", "0"], ["0", "-1"]], &chart);
        match metric_at(&g, &[0.0, 0.0]) {
            Err(Error::NotPositiveDefinite { eigenvalue, .. }) => {
                assert!((eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("expected signature rejection, got {:?}", other),
        }
    }

    #[test]
    fn asymmetric_components_are_rejected() {
        let c = chart2();
        let rows = vec![
            vec![
                ScalarField::parse("1", &c).unwrap(),
                ScalarField::parse("x1", &c).unwrap(),
            ],
            vec![
                ScalarField::parse("x2", &c).unwrap(),
                ScalarField::parse("1", &c).unwrap(),
            ],
        ];
        assert!(matches!(MetricField::new(rows, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn flat_connection_vanishes() {
        let c = chart2();
        let g = MetricField::euclidean(&c).unwrap();
        let conn = christoffel(&g, &[1.3, -0.4]).unwrap();
        assert!(conn.gamma.iter().all(|v| *v == 0.0));
        assert!(conn.dgamma.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn polar_form_connection_matches_hand_values_and_fd() {
        let c = chart2();
        let g = metric(&[["1", "0"], ["0", "x1^2"]], &c);
        let x = [2.0, 0.7];
        let conn = christoffel(&g, &x).unwrap();
        // gamma^2_12 = 1/x1, gamma^1_22 = -x1, all others zero
        assert!((conn.gamma[[1, 0, 1]] - 0.5).abs() < 1e-13);
        assert!((conn.gamma[[1, 1, 0]] - 0.5).abs() < 1e-13);
        assert!((conn.gamma[[0, 1, 1]] + 2.0).abs() < 1e-13);
        let fd = christoffel_fd(&g, &x);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert!((conn.gamma[[i, j, k]] - fd[[i, j, k]]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn conformal_flat_connection_matches_hand_values() {
        let chart = Arc::new(Chart::axes(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap());
        let g = metric(
            &[["exp(2*x1)", "0"], ["0", "exp(2*x1)"]],
            &chart,
        );
        let conn = christoffel(&g, &[0.0, 0.0]).unwrap();
        let expect = |i: usize, j: usize, k: usize| -> f64 {
            match (i, j, k) {
                (0, 0, 0) => 1.0,
                (0, 1, 1) => -1.0,
                (1, 0, 1) | (1, 1, 0) => 1.0,
                _ => 0.0,
            }
        };
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert!(
                        (conn.gamma[[i, j, k]] - expect(i, j, k)).abs() < 1e-13,
                        "gamma[{},{},{}] = {}",
                        i,
                        j,
                        k,
                        conn.gamma[[i, j, k]]
                    );
                }
            }
        }
    }

    #[test]
    fn gamma_is_symmetric_in_lower_indices() {
        let c = chart2();
        let g = sphere2(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = [rng.gen_range(0.3..2.8), rng.gen_range(-3.0..3.0)];
            let conn = christoffel(&g, &x).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        assert_eq!(conn.gamma[[i, j, k]], conn.gamma[[i, k, j]]);
                    }
                }
            }
        }
    }

    #[test]
    fn conformal_identity_zero_factor_is_exact() {
        let c = chart2();
        let g = sphere2(&c);
        let rho = ScalarField::constant(0.0, &c);
        let r = conformal_christoffel_residual(&g, &rho, &[1.0, 0.5]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn conformal_identity_flat_linear_factor() {
        let chart = Arc::new(Chart::axes(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap());
        let g = MetricField::euclidean(&chart).unwrap();
        let rho = ScalarField::parse("x1", &chart).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let r = conformal_christoffel_residual(&g, &rho, &x).unwrap();
            assert!(r <= 1e-9, "residual {} at {:?}", r, x);
        }
    }

    #[test]
    fn conformal_identity_curved_metric() {
        let c = chart2();
        let g = metric(&[["1", "0"], ["0", "x1^2"]], &c);
        let rho = ScalarField::parse("ln(1 + x2^2)", &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let x = [rng.gen_range(0.5..2.5), rng.gen_range(-2.0..2.0)];
            let r = conformal_christoffel_residual(&g, &rho, &x).unwrap();
            assert!(r <= 1e-9, "residual {} at {:?}", r, x);
        }
    }

    #[test]
    fn constant_covector_on_flat_metric_is_parallel() {
        let chart = Arc::new(Chart::axes(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap());
        let g = MetricField::euclidean(&chart).unwrap();
        let b = CovectorField::new(
            vec![
                ScalarField::constant(0.7, &chart),
                ScalarField::constant(-0.2, &chart),
            ],
            &chart,
        )
        .unwrap();
        let d = covariant_derivative(&b, &g, &[0.3, 0.4]).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rotating_covector_witness_values() {
        let chart = Arc::new(Chart::axes(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap());
        let g = MetricField::euclidean(&chart).unwrap();
        let b = CovectorField::new(
            vec![
                ScalarField::parse("cos(x2)", &chart).unwrap(),
                ScalarField::parse("sin(x2)", &chart).unwrap(),
            ],
            &chart,
        )
        .unwrap();
        let d = covariant_derivative(&b, &g, &[0.5, 0.0]).unwrap();
        assert_eq!(d[[0, 1]], 0.0); // W_{1||2} = -sin(0)
        assert_eq!(d[[1, 1]], 1.0); // W_{2||2} = cos(0)
    }

    #[test]
    fn metricity_raising_commutes_with_derivative() {
        let c = chart2();
        let g = sphere2(&c);
        let b = CovectorField::new(
            vec![
                ScalarField::parse("sin(x1*x2)", &c).unwrap(),
                ScalarField::parse("x1 + x2^2", &c).unwrap(),
            ],
            &c,
        )
        .unwrap();
        let v = b.raise(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let x = [rng.gen_range(0.4..2.7), rng.gen_range(-2.0..2.0)];
            let low = covariant_derivative(&b, &g, &x).unwrap();
            let up = covariant_derivative_vector(&v, &g, &x).unwrap();
            let (gm, _) = metric_at(&g, &x).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let mut lowered = 0.0;
                    for r in 0..2 {
                        lowered += gm[[i, r]] * up[[r, j]];
                    }
                    assert!(
                        (lowered - low[[i, j]]).abs() <= 1e-10,
                        "metricity failed at {:?}",
                        x
                    );
                }
            }
        }
    }

    #[test]
    fn second_derivative_of_constant_covector_vanishes() {
        let chart = Arc::new(Chart::axes(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap());
        let g = MetricField::euclidean(&chart).unwrap();
        let b = CovectorField::new(
            vec![
                ScalarField::constant(1.0, &chart),
                ScalarField::constant(2.0, &chart),
            ],
            &chart,
        )
        .unwrap();
        let d2 = second_covariant_derivative(&b, &g, &[0.1, -0.7]).unwrap();
        assert!(d2.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ricci_identity_for_covectors() {
        // b_{i||j||k} - b_{i||k||j} + b_r riem[[i, r, j, k]] = 0
        let c = chart2();
        let g = sphere2(&c);
        let b = CovectorField::new(
            vec![
                ScalarField::parse("sin(x1)*cos(x2)", &c).unwrap(),
                ScalarField::parse("x1*x2", &c).unwrap(),
            ],
            &c,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..30 {
            let x = [rng.gen_range(0.4..2.7), rng.gen_range(-2.0..2.0)];
            let d2 = second_covariant_derivative(&b, &g, &x).unwrap();
            let riem = riemann(&g, &x).unwrap();
            let bv = b.values(&x).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        let mut v = d2[[i, j, k]] - d2[[i, k, j]];
                        for r in 0..2 {
                            v += bv[r] * riem[[i, r, j, k]];
                        }
                        assert!(v.abs() <= 1e-8, "ricci residual {} at {:?}", v, x);
                    }
                }
            }
        }
    }

    #[test]
    fn flat_curvature_vanishes() {
        let chart = Arc::new(Chart::axes(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap());
        let g = MetricField::euclidean(&chart).unwrap();
        let r = riemann(&g, &[0.2, 0.8]).unwrap();
        assert!(r.iter().all(|v| *v == 0.0));
    }

    fn curvature_ansatz_fit(g: &MetricField, x: &[f64]) -> (f64, f64) {
        let n = g.dim();
        let riem = riemann(g, x).unwrap();
        let (gm, _) = metric_at(g, x).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        let mut model = Array4::zeros((n, n, n, n));
        for a in 0..n {
            for i in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut m = 0.0;
                        if i == l {
                            m += gm[[k, a]];
                        }
                        if i == k {
                            m -= gm[[a, l]];
                        }
                        model[[a, i, k, l]] = m;
                        num += riem[[a, i, k, l]] * m;
                        den += m * m;
                    }
                }
            }
        }
        let k_hat = num / den;
        let mut misfit = 0.0f64;
        for (r, m) in riem.iter().zip(model.iter()) {
            misfit = misfit.max((r - k_hat * m).abs());
        }
        (k_hat, misfit)
    }

    #[test]
    fn unit_sphere_has_curvature_plus_one() {
        let c = chart2();
        let g = sphere2(&c);
        let (k, misfit) = curvature_ansatz_fit(&g, &[std::f64::consts::FRAC_PI_3, 0.4]);
        assert!((k - 1.0).abs() <= 1e-8, "k = {}", k);
        assert!(misfit <= 1e-8);
    }

    #[test]
    fn stereographic_three_sphere_has_curvature_plus_one() {
        let chart = Arc::new(
            Chart::axes(&[(-0.8, 0.8), (-0.8, 0.8), (-0.8, 0.8)]).unwrap(),
        );
        let f = "4/(1 + x1^2 + x2^2 + x3^2)^2";
        let rows: Vec<Vec<ScalarField>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| {
                        if i == j {
                            ScalarField::parse(f, &chart).unwrap()
                        } else {
                            ScalarField::constant(0.0, &chart)
                        }
                    })
                    .collect()
            })
            .collect();
        let g = MetricField::new(rows, &chart).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let x = [
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
            ];
            let (k, misfit) = curvature_ansatz_fit(&g, &x);
            assert!((k - 1.0).abs() <= 1e-6, "k = {} at {:?}", k, x);
            assert!(misfit <= 1e-6);
        }
    }

    #[test]
    fn curvature_symmetries_hold_at_random_points() {
        let c = chart2();
        let g = metric(&[["1 + x2^2", "x1*x2/4"], ["x1*x2/4", "1 + x1^2"]], &c);
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..20 {
            let x = [rng.gen_range(0.3..2.9), rng.gen_range(-2.9..2.9)];
            let r = riemann(&g, &x).unwrap();
            for a in 0..2 {
                for i in 0..2 {
                    for k in 0..2 {
                        for l in 0..2 {
                            // antisymmetry in the last pair
                            assert!((r[[a, i, k, l]] + r[[a, i, l, k]]).abs() <= 1e-9);
                            // first Bianchi identity, cyclic over (a, k, l)
                            let cyc =
                                r[[a, i, k, l]] + r[[k, i, l, a]] + r[[l, i, a, k]];
                            assert!(cyc.abs() <= 1e-9, "bianchi {} at {:?}", cyc, x);
                        }
                    }
                }
            }
        }
    }
}
