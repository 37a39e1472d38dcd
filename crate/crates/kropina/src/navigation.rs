//! Kropina data and its navigation representation.
//!
//! A Kropina metric `F = α²/β` is specified by a positive-definite matrix
//! field `a_ij` and a nowhere-vanishing covector field `b_i`. The same
//! metric is equivalently carried by *navigation data*: a Riemannian metric
//! `h` together with a vector field `W` of unit `h`-length, related by
//!
//! ```text
//! h_ij = e^κ a_ij,      2 W_i = e^κ b_i,      e^κ b² = 4,
//! ```
//!
//! where `b² = a^{ij} b_i b_j` and `κ` is determined by the unit-length
//! constraint when going forward, but is a free gauge when going back:
//! every admissible `κ` reconstructs (a, b) data with the same `F`,
//! geodesics, and curvature. That gauge freedom is exploited as a
//! correctness check throughout the test suite.
//!
//! This module owns the two data types, the conversions between them, the
//! metric value `F` in both forms, and the first-order deformation tensors
//! of `b` (with respect to `a`) and of `W` (with respect to `h`) that feed
//! the geodesic spray.

use std::sync::Arc;

use ndarray::Array2;

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::expr::{Func, ScalarField};
use crate::geom::{
    christoffel, covariant_derivative_with, metric_at, CovectorField, MetricField, VectorField,
};

/// Unit-length deviation allowed before navigation data is rejected.
pub const UNIT_LENGTH_TOLERANCE: f64 = 1e-8;

/// Default threshold for the admissible cone: directions with
/// `W_0 <= eps * |y|_h` (equivalently `β <= eps * α`) are rejected.
pub const DEFAULT_EPSILON_DIR: f64 = 1e-6;

/// Kropina data `(a, b)` with the derived symbolic fields `b^i` and
/// `b² = a^{ij} b_i b_j` cached for reuse.
#[derive(Debug, Clone)]
pub struct KropinaData {
    a: MetricField,
    b: CovectorField,
    b_up: VectorField,
    b_sq: ScalarField,
}

impl KropinaData {
    pub fn new(a: MetricField, b: CovectorField) -> Result<KropinaData> {
        if a.chart() != b.chart() {
            return Err(Error::Chart(
                "matrix and covector data live on different charts".into(),
            ));
        }
        let b_up = b.raise(&a)?;
        let n = a.dim();
        let mut b_sq = ScalarField::constant(0.0, a.chart());
        for i in 0..n {
            b_sq = b_sq.add(&b_up.component(i).mul(b.component(i))?)?;
        }
        Ok(KropinaData { a, b, b_up, b_sq })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        self.a.chart()
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn a(&self) -> &MetricField {
        &self.a
    }

    pub fn b(&self) -> &CovectorField {
        &self.b
    }

    pub fn b_upper(&self) -> &VectorField {
        &self.b_up
    }

    /// The symbolic field `b² = a^{ij} b_i b_j`.
    pub fn b_squared(&self) -> &ScalarField {
        &self.b_sq
    }

    /// The scale fixed by the unit-length constraint: `κ = ln(4 / b²)`.
    /// Symbolic, so it can be differentiated wherever `κ_i` is needed.
    /// Points where `b²` is not positive surface as domain errors naming
    /// the offending subexpression.
    pub fn kappa(&self) -> ScalarField {
        ScalarField::constant(4.0, self.chart())
            .div(&self.b_sq)
            .expect("same chart")
            .apply(Func::Ln)
    }
}

/// Navigation data: a Riemannian metric `h` and a vector field `W` that
/// must have unit `h`-length wherever it is sampled. The lowered components
/// `W_i` are cached symbolically.
#[derive(Debug, Clone)]
pub struct NavigationData {
    h: MetricField,
    w_up: VectorField,
    w_low: CovectorField,
}

impl NavigationData {
    pub fn new(h: MetricField, w: VectorField) -> Result<NavigationData> {
        if h.chart() != w.chart() {
            return Err(Error::Chart(
                "metric and vector field live on different charts".into(),
            ));
        }
        let w_low = w.lower(&h)?;
        Ok(NavigationData {
            h,
            w_up: w,
            w_low,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        self.h.chart()
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn h(&self) -> &MetricField {
        &self.h
    }

    pub fn w_upper(&self) -> &VectorField {
        &self.w_up
    }

    pub fn w_lower(&self) -> &CovectorField {
        &self.w_low
    }

    /// `|W|_h² - 1` deviation at one point.
    pub fn unit_length_deviation(&self, x: &[f64]) -> Result<f64> {
        let up = self.w_up.values(x)?;
        let low = self.w_low.values(x)?;
        let sq: f64 = up.iter().zip(&low).map(|(u, l)| u * l).sum();
        Ok((sq.sqrt() - 1.0).abs())
    }

    /// Largest unit-length deviation over the given points.
    pub fn max_unit_length_deviation(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst = 0.0f64;
        for x in points {
            worst = worst.max(self.unit_length_deviation(x)?);
        }
        Ok(worst)
    }

    /// Errors when `|W|` deviates from 1 by more than the tolerance at any
    /// of the points.
    pub fn require_unit_length(&self, points: &[Vec<f64>], tolerance: f64) -> Result<()> {
        for x in points {
            let dev = self.unit_length_deviation(x)?;
            if dev > tolerance {
                return Err(Error::UnitLength {
                    point: x.clone(),
                    deviation: dev,
                });
            }
        }
        Ok(())
    }

    /// Largest symmetrized-derivative entry `max_ij |R_ij|` over the given
    /// points; zero exactly when `W` is Killing there.
    pub fn max_killing_residual(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst = 0.0f64;
        for x in points {
            let t = navigation_tensors(self, x)?;
            for v in t.r.iter() {
                worst = worst.max(v.abs());
            }
        }
        Ok(worst)
    }
}

/// Forward conversion: `h = e^κ a`, `W_i = e^κ b_i / 2`, with
/// `e^κ = 4 / b²` so that `|W|_h = 1` identically.
pub fn to_navigation(k: &KropinaData) -> Result<NavigationData> {
    let chart = k.chart();
    let n = k.dim();
    // e^κ written directly as 4/b²; same field, shallower expressions.
    let scale = ScalarField::constant(4.0, chart).div(k.b_squared())?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            row.push(scale.mul(k.a().component(i, j))?);
        }
        rows.push(row);
    }
    let h = MetricField::new(rows, chart)?;
    // W^i = h^{ij} W_j = b^i / 2, independent of the scale.
    let mut w_comps = Vec::with_capacity(n);
    for i in 0..n {
        w_comps.push(k.b_upper().component(i).scale(0.5));
    }
    let w = VectorField::new(w_comps, chart)?;
    NavigationData::new(h, w)
}

/// Reverse conversion with an explicit gauge: `a = e^{-κ} h`,
/// `b_i = 2 e^{-κ} W_i`. The unit-length precondition is checked at the
/// given sample points before converting.
pub fn from_navigation(
    n: &NavigationData,
    kappa: &ScalarField,
    check_points: &[Vec<f64>],
) -> Result<KropinaData> {
    if kappa.chart() != n.chart() {
        return Err(Error::Chart("gauge field lives on a different chart".into()));
    }
    n.require_unit_length(check_points, UNIT_LENGTH_TOLERANCE)?;
    let dim = n.dim();
    let inv_scale = kappa.neg().apply(Func::Exp);
    let mut rows = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut row = Vec::with_capacity(dim);
        for j in 0..dim {
            row.push(inv_scale.mul(n.h().component(i, j))?);
        }
        rows.push(row);
    }
    let a = MetricField::new(rows, n.chart())?;
    let mut b_comps = Vec::with_capacity(dim);
    for i in 0..dim {
        b_comps.push(inv_scale.scale(2.0).mul(n.w_lower().component(i))?);
    }
    let b = CovectorField::new(b_comps, n.chart())?;
    KropinaData::new(a, b)
}

/// Metric value from `(a, b)` data: `F = α²/β`. Rejects directions with
/// `β <= eps * α`.
pub fn f_alpha_beta(k: &KropinaData, x: &[f64], y: &[f64], epsilon_dir: f64) -> Result<f64> {
    let n = k.dim();
    let (am, _) = metric_at(k.a(), x)?;
    let bv = k.b().values(x)?;
    let mut alpha_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            alpha_sq += am[[i, j]] * y[i] * y[j];
        }
    }
    let beta: f64 = bv.iter().zip(y).map(|(b, y)| b * y).sum();
    let alpha = alpha_sq.sqrt();
    if alpha == 0.0 || beta <= epsilon_dir * alpha {
        return Err(Error::SingularDirection {
            alignment: if alpha == 0.0 { 0.0 } else { beta / alpha },
            threshold: epsilon_dir,
        });
    }
    Ok(alpha_sq / beta)
}

/// Metric value from navigation data: `F = h_00 / (2 W_0)`. Rejects
/// directions with `W_0 <= eps * |y|_h`.
pub fn f_navigation(n: &NavigationData, x: &[f64], y: &[f64], epsilon_dir: f64) -> Result<f64> {
    let dim = n.dim();
    let (hm, _) = metric_at(n.h(), x)?;
    let wl = n.w_lower().values(x)?;
    let mut h00 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            h00 += hm[[i, j]] * y[i] * y[j];
        }
    }
    let w0: f64 = wl.iter().zip(y).map(|(w, y)| w * y).sum();
    let norm = h00.sqrt();
    if norm == 0.0 || w0 <= epsilon_dir * norm {
        return Err(Error::SingularDirection {
            alignment: if norm == 0.0 { 0.0 } else { w0 / norm },
            threshold: epsilon_dir,
        });
    }
    Ok(h00 / (2.0 * w0))
}

/// Deformation tensors of a covector field against its metric:
/// the symmetric part `r_ij`, antisymmetric part `s_ij`, mixed `s^i_j`,
/// and the contractions `s_j = b^i s_ij`, `r_j = b^i r_ij`.
#[derive(Debug, Clone)]
pub struct DeformationTensors {
    pub r: Array2<f64>,
    pub s: Array2<f64>,
    /// `s^i_j` (first index raised)
    pub s_mixed: Array2<f64>,
    /// `s_j = contraction of the raised field with the first slot of s`
    pub s_contracted: Vec<f64>,
    /// `r_j`, same contraction of the symmetric part
    pub r_contracted: Vec<f64>,
}

fn deformation_from(
    cov_deriv: &Array2<f64>,
    ginv: &Array2<f64>,
    raised: &[f64],
) -> DeformationTensors {
    let n = raised.len();
    let mut r = Array2::zeros((n, n));
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            r[[i, j]] = 0.5 * (cov_deriv[[i, j]] + cov_deriv[[j, i]]);
            s[[i, j]] = 0.5 * (cov_deriv[[i, j]] - cov_deriv[[j, i]]);
        }
    }
    let mut s_mixed = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for a in 0..n {
                v += ginv[[i, a]] * s[[a, j]];
            }
            s_mixed[[i, j]] = v;
        }
    }
    let mut s_contracted = vec![0.0; n];
    let mut r_contracted = vec![0.0; n];
    for j in 0..n {
        for i in 0..n {
            s_contracted[j] += raised[i] * s[[i, j]];
            r_contracted[j] += raised[i] * r[[i, j]];
        }
    }
    DeformationTensors {
        r,
        s,
        s_mixed,
        s_contracted,
        r_contracted,
    }
}

/// Deformation tensors of `b` with respect to `a`: built from the
/// covariant derivative `b_{i;j}`.
pub fn rs_tensors(k: &KropinaData, x: &[f64]) -> Result<DeformationTensors> {
    let conn = christoffel(k.a(), x)?;
    let d = covariant_derivative_with(k.b(), &conn, x)?;
    let b_up = k.b_upper().values(x)?;
    Ok(deformation_from(&d, &conn.g_inv, &b_up))
}

/// Deformation tensors of `W` with respect to `h`: built from `W_{i||j}`.
/// `r` vanishes exactly when `W` is Killing.
pub fn navigation_tensors(n: &NavigationData, x: &[f64]) -> Result<DeformationTensors> {
    let conn = christoffel(n.h(), x)?;
    let d = covariant_derivative_with(n.w_lower(), &conn, x)?;
    let w_up = n.w_upper().values(x)?;
    Ok(deformation_from(&d, &conn.g_inv, &w_up))
}

/// Largest residual of the four conversion identities relating the `(a, b)`
/// deformation tensors to the navigation ones at a point:
///
/// ```text
/// r_ij  = 2 e^{-κ} (R_ij - 1/2 (W_r κ̄^r) h_ij)
/// s_ij  = 2 e^{-κ} (S_ij + (κ_i W_j - κ_j W_i)/2)
/// s^i_j = 2 S^i_j + W_j κ̄^i - κ_j W^i
/// b^i   = 2 W^i
/// ```
///
/// with `κ = ln(4/b²)` and `κ̄^i = h^{ij} κ_j`. Both sides are computed
/// through independent code paths.
pub fn conversion_residual(k: &KropinaData, x: &[f64]) -> Result<f64> {
    let n = k.dim();
    let nav = to_navigation(k)?;
    let kappa = k.kappa();

    let ab = rs_tensors(k, x)?;
    let hw = navigation_tensors(&nav, x)?;

    let (hm, hinv) = metric_at(nav.h(), x)?;
    let w_up = nav.w_upper().values(x)?;
    let w_low = nav.w_lower().values(x)?;
    let b_up = k.b_upper().values(x)?;

    let e_kappa = kappa.evaluate(x)?.exp();
    let mut kappa_d = vec![0.0; n];
    for (i, slot) in kappa_d.iter_mut().enumerate() {
        *slot = kappa.differentiate(i)?.evaluate(x)?;
    }
    let mut kappa_bar = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            kappa_bar[i] += hinv[[i, j]] * kappa_d[j];
        }
    }
    let w_dot_kappa: f64 = w_low
        .iter()
        .zip(&kappa_bar)
        .map(|(wl, kb)| wl * kb)
        .sum();

    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let r_rhs = 2.0 / e_kappa * (hw.r[[i, j]] - 0.5 * w_dot_kappa * hm[[i, j]]);
            worst = worst.max((ab.r[[i, j]] - r_rhs).abs());

            let s_rhs = 2.0 / e_kappa
                * (hw.s[[i, j]] + 0.5 * (kappa_d[i] * w_low[j] - kappa_d[j] * w_low[i]));
            worst = worst.max((ab.s[[i, j]] - s_rhs).abs());

            let s_mixed_rhs =
                2.0 * hw.s_mixed[[i, j]] + w_low[j] * kappa_bar[i] - kappa_d[j] * w_up[i];
            worst = worst.max((ab.s_mixed[[i, j]] - s_mixed_rhs).abs());
        }
        worst = worst.max((b_up[i] - 2.0 * w_up[i]).abs());
    }
    Ok(worst)
}
