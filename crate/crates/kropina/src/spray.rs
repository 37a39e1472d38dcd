//! Geodesic spray coefficients `G^i(x, y)` by three routes.
//!
//! * the `(a, b)` route, through the general deformed-connection formula
//!   specialized to `φ(s) = 1/s`;
//! * the navigation route, entirely in `(h, W)` quantities;
//! * the Killing shortcut `2G^i = γ^i_00(h) - 2 F S^i_0`, valid once `W`
//!   is verified to be a Killing field of `h`.
//!
//! The three must agree wherever they are all defined; that cross-route
//! equality is one of the main correctness gates of the crate.
//!
//! A [`Spray`] can freeze its per-point data (connection coefficients and
//! deformation tensors) into a [`PointSpray`], after which evaluating at
//! different directions `y` costs only closed-form arithmetic. The
//! curvature pipeline leans on this when it takes finite differences of
//! the spray in `y`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geom::{christoffel, covariant_derivative_with, MetricField};
use crate::navigation::{KropinaData, NavigationData};

/// Route that produced a spray value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SprayRoute {
    AlphaBeta,
    Navigation,
    Killing,
    Riemannian,
}

/// Spray coefficients at one point-direction pair.
#[derive(Debug, Clone)]
pub struct SprayEval {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub g: Vec<f64>,
    pub route: SprayRoute,
}

/// Scalars of the `(a, b)` spray formula at one `(x, y)`: `s = β/α`,
/// `ω = -1/(2s)`, `ω' = 1/(2s²)`, `Θ = -s/b²`, and the contractions
/// `r_00`, `s_0`, `s^i_0` with the direction.
#[derive(Debug, Clone)]
pub struct SprayIntermediates {
    pub s: f64,
    pub omega: f64,
    pub omega_prime: f64,
    pub theta: f64,
    pub b_sq: f64,
    pub r_00: f64,
    pub s_0: f64,
    pub s_i0: Vec<f64>,
}

impl SprayIntermediates {
    /// Residual of `1 + sω + (b² - s²)ω' = b²/(2s²)`, relative to the
    /// right-hand side. Holds to machine precision for every admissible
    /// direction; a violation is an internal bug.
    pub fn identity_residual(&self) -> f64 {
        let lhs = 1.0 + self.s * self.omega + (self.b_sq - self.s * self.s) * self.omega_prime;
        let rhs = self.b_sq / (2.0 * self.s * self.s);
        (lhs - rhs).abs() / rhs.abs().max(1e-300)
    }
}

/// Spray frozen at a point: all chart-dependent data is precomputed, so
/// evaluation in `y` is pure arithmetic.
pub struct PointSpray {
    dim: usize,
    f: Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>,
}

impl PointSpray {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(y.len(), self.dim);
        (self.f)(y)
    }
}

/// A second-order spray `y ↦ G(x, y)`, positively 2-homogeneous in `y`.
pub trait Spray: Sync {
    fn dim(&self) -> usize;

    /// Freezes the spray at `x`.
    fn at(&self, x: &[f64]) -> Result<PointSpray>;

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.at(x)?.eval(y)
    }
}

fn quadratic(m: &Array2<f64>, y: &[f64]) -> f64 {
    let n = y.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += m[[i, j]] * y[i] * y[j];
        }
    }
    acc
}

fn contract_rows(m: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| (0..n).map(|j| m[[i, j]] * y[j]).sum())
        .collect()
}

fn gamma_00(gamma: &ndarray::Array3<f64>, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                acc += gamma[[i, j, k]] * y[j] * y[k];
            }
        }
        out[i] = acc;
    }
    out
}

/// Spray of the `(a, b)` data through the deformed-connection formula
///
/// ```text
/// 2G^i = γ^i_00(a) + 2ωα s^i_0 + 2Θ (r_00 - 2αω s_0) (y^i/α + ω'/(ω - sω') b^i)
/// ```
///
/// with the `φ(s) = 1/s` specializations of `ω`, `ω'`, `Θ`.
pub struct AlphaBetaSpray<'a> {
    data: &'a KropinaData,
    epsilon_dir: f64,
}

impl<'a> AlphaBetaSpray<'a> {
    pub fn new(data: &'a KropinaData, epsilon_dir: f64) -> AlphaBetaSpray<'a> {
        AlphaBetaSpray { data, epsilon_dir }
    }

    /// The formula scalars at an admissible `(x, y)`.
    pub fn intermediates(&self, x: &[f64], y: &[f64]) -> Result<SprayIntermediates> {
        let conn = christoffel(self.data.a(), x)?;
        let tensors = crate::navigation::rs_tensors(self.data, x)?;
        let b_vals = self.data.b().values(x)?;
        let b_sq = self.data.b_squared().evaluate(x)?;
        intermediates_at(
            &conn.g,
            &tensors.r,
            &tensors.s_mixed,
            &tensors.s_contracted,
            &b_vals,
            b_sq,
            y,
            self.epsilon_dir,
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn intermediates_at(
    a: &Array2<f64>,
    r: &Array2<f64>,
    s_mixed: &Array2<f64>,
    s_contracted: &[f64],
    b_vals: &[f64],
    b_sq: f64,
    y: &[f64],
    epsilon_dir: f64,
) -> Result<SprayIntermediates> {
    let alpha_sq = quadratic(a, y);
    let alpha = alpha_sq.sqrt();
    let beta: f64 = b_vals.iter().zip(y).map(|(b, y)| b * y).sum();
    if alpha == 0.0 || beta <= epsilon_dir * alpha {
        return Err(Error::SingularDirection {
            alignment: if alpha == 0.0 { 0.0 } else { beta / alpha },
            threshold: epsilon_dir,
        });
    }
    let s = beta / alpha;
    Ok(SprayIntermediates {
        s,
        omega: -1.0 / (2.0 * s),
        omega_prime: 1.0 / (2.0 * s * s),
        theta: -s / b_sq,
        b_sq,
        r_00: quadratic(r, y),
        s_0: s_contracted.iter().zip(y).map(|(s, y)| s * y).sum(),
        s_i0: contract_rows(s_mixed, y),
    })
}

impl Spray for AlphaBetaSpray<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn at(&self, x: &[f64]) -> Result<PointSpray> {
        let n = self.dim();
        let conn = christoffel(self.data.a(), x)?;
        let tensors = crate::navigation::rs_tensors(self.data, x)?;
        let b_vals = self.data.b().values(x)?;
        let b_up = self.data.b_upper().values(x)?;
        let b_sq = self.data.b_squared().evaluate(x)?;
        if b_sq <= 0.0 {
            return Err(Error::Domain {
                subexpression: self.data.b_squared().to_string(),
                reason: format!("b² = {} must be positive", b_sq),
            });
        }
        let epsilon_dir = self.epsilon_dir;
        let a = conn.g.clone();
        let gamma = conn.gamma;
        let f = move |y: &[f64]| -> Result<Vec<f64>> {
            let inter = intermediates_at(
                &a,
                &tensors.r,
                &tensors.s_mixed,
                &tensors.s_contracted,
                &b_vals,
                b_sq,
                y,
                epsilon_dir,
            )?;
            debug_assert!(
                inter.identity_residual() <= 1e-12,
                "spray intermediates identity violated: {}",
                inter.identity_residual()
            );
            let alpha = quadratic(&a, y).sqrt();
            let gamma00 = gamma_00(&gamma, y);
            let ratio = inter.omega_prime / (inter.omega - inter.s * inter.omega_prime);
            let factor =
                2.0 * inter.theta * (inter.r_00 - 2.0 * alpha * inter.omega * inter.s_0);
            let mut g = vec![0.0; n];
            for i in 0..n {
                let two_g = gamma00[i]
                    + 2.0 * inter.omega * alpha * inter.s_i0[i]
                    + factor * (y[i] / alpha + ratio * b_up[i]);
                g[i] = 0.5 * two_g;
            }
            Ok(g)
        };
        Ok(PointSpray {
            dim: n,
            f: Box::new(f),
        })
    }
}

/// Spray in navigation form:
///
/// ```text
/// 2G^i = γ^i_00(h) + (h_00/W_0)(S_0 W^i - S^i_0)
///      + (R_00 W^i - 2 S_0 y^i) - (2W_0/h_00) R_00 y^i
/// ```
///
/// No gauge enters: the formula is written purely in `(h, W)`.
pub struct NavigationSpray<'a> {
    data: &'a NavigationData,
    epsilon_dir: f64,
}

impl<'a> NavigationSpray<'a> {
    pub fn new(data: &'a NavigationData, epsilon_dir: f64) -> NavigationSpray<'a> {
        NavigationSpray { data, epsilon_dir }
    }
}

impl Spray for NavigationSpray<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn at(&self, x: &[f64]) -> Result<PointSpray> {
        let n = self.dim();
        let conn = christoffel(self.data.h(), x)?;
        let tensors = crate::navigation::navigation_tensors(self.data, x)?;
        let w_up = self.data.w_upper().values(x)?;
        let w_low = self.data.w_lower().values(x)?;
        let epsilon_dir = self.epsilon_dir;
        let h = conn.g.clone();
        let gamma = conn.gamma;
        let f = move |y: &[f64]| -> Result<Vec<f64>> {
            let h00 = quadratic(&h, y);
            let w0: f64 = w_low.iter().zip(y).map(|(w, y)| w * y).sum();
            let norm = h00.sqrt();
            if norm == 0.0 || w0 <= epsilon_dir * norm {
                return Err(Error::SingularDirection {
                    alignment: if norm == 0.0 { 0.0 } else { w0 / norm },
                    threshold: epsilon_dir,
                });
            }
            let r00 = quadratic(&tensors.r, y);
            let s0: f64 = tensors
                .s_contracted
                .iter()
                .zip(y)
                .map(|(s, y)| s * y)
                .sum();
            let si0 = contract_rows(&tensors.s_mixed, y);
            let gamma00 = gamma_00(&gamma, y);
            let mut g = vec![0.0; n];
            for i in 0..n {
                let two_phi = (h00 / w0) * (s0 * w_up[i] - si0[i])
                    + (r00 * w_up[i] - 2.0 * s0 * y[i])
                    - (2.0 * w0 / h00) * r00 * y[i];
                g[i] = 0.5 * (gamma00[i] + two_phi);
            }
            Ok(g)
        };
        Ok(PointSpray {
            dim: n,
            f: Box::new(f),
        })
    }
}

/// Killing-field shortcut `2G^i = γ^i_00(h) - 2 F S^i_0`. The constructor
/// verifies the precondition at the supplied sample points.
pub struct KillingSpray<'a> {
    data: &'a NavigationData,
    epsilon_dir: f64,
}

impl<'a> KillingSpray<'a> {
    pub fn new(
        data: &'a NavigationData,
        epsilon_dir: f64,
        killing_points: &[Vec<f64>],
        killing_tolerance: f64,
    ) -> Result<KillingSpray<'a>> {
        let max = data.max_killing_residual(killing_points)?;
        if max > killing_tolerance {
            return Err(Error::NotKilling {
                max_residual: max,
                tolerance: killing_tolerance,
            });
        }
        Ok(KillingSpray { data, epsilon_dir })
    }
}

impl Spray for KillingSpray<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn at(&self, x: &[f64]) -> Result<PointSpray> {
        let n = self.dim();
        let conn = christoffel(self.data.h(), x)?;
        let d = covariant_derivative_with(self.data.w_lower(), &conn, x)?;
        // S^i_j with the Killing simplification W_{i||j} = S_ij
        let mut s_mixed = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for a in 0..n {
                    acc += conn.g_inv[[i, a]] * 0.5 * (d[[a, j]] - d[[j, a]]);
                }
                s_mixed[[i, j]] = acc;
            }
        }
        let w_low = self.data.w_lower().values(x)?;
        let epsilon_dir = self.epsilon_dir;
        let h = conn.g.clone();
        let gamma = conn.gamma;
        let f = move |y: &[f64]| -> Result<Vec<f64>> {
            let h00 = quadratic(&h, y);
            let w0: f64 = w_low.iter().zip(y).map(|(w, y)| w * y).sum();
            let norm = h00.sqrt();
            if norm == 0.0 || w0 <= epsilon_dir * norm {
                return Err(Error::SingularDirection {
                    alignment: if norm == 0.0 { 0.0 } else { w0 / norm },
                    threshold: epsilon_dir,
                });
            }
            let f_val = h00 / (2.0 * w0);
            let si0 = contract_rows(&s_mixed, y);
            let gamma00 = gamma_00(&gamma, y);
            let mut g = vec![0.0; n];
            for i in 0..n {
                g[i] = 0.5 * (gamma00[i] - 2.0 * f_val * si0[i]);
            }
            Ok(g)
        };
        Ok(PointSpray {
            dim: n,
            f: Box::new(f),
        })
    }
}

/// Plain Riemannian spray `G^i = γ^i_00 / 2` of a metric; used as the
/// reference case whose curvature is known through the connection route.
pub struct RiemannianSpray<'a> {
    metric: &'a MetricField,
}

impl<'a> RiemannianSpray<'a> {
    pub fn new(metric: &'a MetricField) -> RiemannianSpray<'a> {
        RiemannianSpray { metric }
    }
}

impl Spray for RiemannianSpray<'_> {
    fn dim(&self) -> usize {
        self.metric.dim()
    }

    fn at(&self, x: &[f64]) -> Result<PointSpray> {
        let n = self.dim();
        let conn = christoffel(self.metric, x)?;
        let gamma = conn.gamma;
        let f = move |y: &[f64]| -> Result<Vec<f64>> {
            Ok(gamma_00(&gamma, y).into_iter().map(|v| 0.5 * v).collect())
        };
        Ok(PointSpray {
            dim: n,
            f: Box::new(f),
        })
    }
}

/// One-shot `(a, b)`-route evaluation.
pub fn spray_alpha_beta(
    k: &KropinaData,
    x: &[f64],
    y: &[f64],
    epsilon_dir: f64,
) -> Result<SprayEval> {
    let g = AlphaBetaSpray::new(k, epsilon_dir).eval(x, y)?;
    Ok(SprayEval {
        x: x.to_vec(),
        y: y.to_vec(),
        g,
        route: SprayRoute::AlphaBeta,
    })
}

/// One-shot navigation-route evaluation.
pub fn spray_navigation(
    n: &NavigationData,
    x: &[f64],
    y: &[f64],
    epsilon_dir: f64,
) -> Result<SprayEval> {
    let g = NavigationSpray::new(n, epsilon_dir).eval(x, y)?;
    Ok(SprayEval {
        x: x.to_vec(),
        y: y.to_vec(),
        g,
        route: SprayRoute::Navigation,
    })
}

/// One-shot Killing-route evaluation; verifies the Killing precondition at
/// `killing_points` first.
pub fn spray_killing(
    n: &NavigationData,
    x: &[f64],
    y: &[f64],
    epsilon_dir: f64,
    killing_points: &[Vec<f64>],
    killing_tolerance: f64,
) -> Result<SprayEval> {
    let spray = KillingSpray::new(n, epsilon_dir, killing_points, killing_tolerance)?;
    let g = spray.eval(x, y)?;
    Ok(SprayEval {
        x: x.to_vec(),
        y: y.to_vec(),
        g,
        route: SprayRoute::Killing,
    })
}
