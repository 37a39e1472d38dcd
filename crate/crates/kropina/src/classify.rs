//! Curvature analysis and the constant-flag-curvature classifier.
//!
//! Two independent routes are computed and must agree:
//!
//! 1. the *structural* route — `W` is a Killing field of `h`, and `h` has
//!    constant curvature `K` (checked through the exact-symbolic
//!    connection/curvature pipeline);
//! 2. the *direct* route — the spray curvature `R^i_l` is sampled through
//!    finite differences of the exact spray and fitted against the
//!    scalar-curvature model `K F² (δ^i_l - l^i l_l)` at many `(x, y)`.
//!
//! Both passing with matching `K`, or both failing, is the only acceptable
//! outcome; a split verdict is reported as an error because it can only
//! mean a bug in the toolkit.
//!
//! "Constant over the manifold" is always certified statistically, from
//! seeded samples in the declared chart box, never claimed globally.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::geom::{
    covariant_derivative, metric_at, riemann, second_covariant_derivative, CovectorField,
    MetricField,
};
use crate::navigation::{
    navigation_tensors, to_navigation, KropinaData, NavigationData, DEFAULT_EPSILON_DIR,
    UNIT_LENGTH_TOLERANCE,
};
use crate::spray::{NavigationSpray, PointSpray, Spray};

/// Base step for the finite differences of the spray, scaled per
/// coordinate by magnitude. The spray itself is exact-symbolic inside, so
/// only these two numeric differentiation layers exist.
pub const FD_BASE_STEP: f64 = 1e-4;

/// Allowed relative disagreement between the full-step and half-step
/// curvature evaluations before a step-size failure is raised.
pub const FD_RICHARDSON_LIMIT: f64 = 1e-5;

/// Directions are sampled with at least this alignment `W_0 / |y|_h`, so
/// that the finite-difference stencils around them stay admissible. The
/// admissible-cone threshold `epsilon_dir` still governs spray legality.
const MIN_SAMPLE_ALIGNMENT: f64 = 1e-2;

// Distinct seeds per sampling stage, derived from the run seed.
const STAGE_KILLING: u64 = 0x4b49;
const STAGE_CURVATURE: u64 = 0x4356;
const STAGE_FLAG: u64 = 0x464c;

/// Tolerances used by the classifier.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ToleranceBundle {
    /// Bound on `max |R_ij|` for the Killing verdict.
    pub killing: f64,
    /// Bound on curvature-fit residuals, per-sample spread, and the
    /// cross-route `K` agreement.
    pub curvature_fit: f64,
    /// Bound on pointwise identity residuals (second-derivative identity,
    /// cross-route spray equality in the verification suite).
    pub identity: f64,
}

impl Default for ToleranceBundle {
    fn default() -> Self {
        ToleranceBundle {
            killing: 1e-8,
            curvature_fit: 1e-5,
            identity: 1e-7,
        }
    }
}

/// Sampling plan: how many points, how many directions per point, the RNG
/// seed, the admissible-cone threshold, and the tolerance bundle.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleConfig {
    pub points: usize,
    pub directions: usize,
    pub seed: u64,
    pub epsilon_dir: f64,
    pub tolerances: ToleranceBundle,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            points: 30,
            directions: 4,
            seed: 42,
            epsilon_dir: DEFAULT_EPSILON_DIR,
            tolerances: ToleranceBundle::default(),
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 || self.directions == 0 {
            return Err(Error::Config("sample counts must be at least 1".into()));
        }
        let t = &self.tolerances;
        if !(t.killing > 0.0 && t.curvature_fit > 0.0 && t.identity > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.epsilon_dir <= 0.0 {
            return Err(Error::Config("epsilon_dir must be positive".into()));
        }
        Ok(())
    }

    fn stage_rng(&self, stage: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9e3779b97f4a7c15) ^ stage)
    }
}

/// Spray curvature `R^i_l` (the doubly-transvected curvature of the spray)
/// at one `(x, y)`:
///
/// ```text
/// R^i_l = 2 d_x^l G^i - y^j d²G^i/dx^j dy^l
///       + 2 G^j d²G^i/dy^j dy^l - (dG^i/dy^j)(dG^j/dy^l)
/// ```
///
/// computed with 4th-order central differences of the (exact) spray, at
/// the base step and again at half step; the two must agree to
/// [`FD_RICHARDSON_LIMIT`] relative, and the half-step value is returned.
pub fn berwald_curvature<S: Spray + ?Sized>(spray: &S, x: &[f64], y: &[f64]) -> Result<Array2<f64>> {
    let full = berwald_curvature_once(spray, x, y, FD_BASE_STEP)?;
    let half = berwald_curvature_once(spray, x, y, FD_BASE_STEP / 2.0)?;
    let mut scale = 1.0f64;
    for v in half.iter() {
        scale = scale.max(v.abs());
    }
    let mut disagreement = 0.0f64;
    for (a, b) in full.iter().zip(half.iter()) {
        disagreement = disagreement.max((a - b).abs());
    }
    let relative = disagreement / scale;
    if relative > FD_RICHARDSON_LIMIT {
        return Err(Error::StepSize {
            disagreement: relative,
            limit: FD_RICHARDSON_LIMIT,
        });
    }
    Ok(half)
}

const STENCIL: [(f64, f64); 4] = [(2.0, -1.0), (1.0, 8.0), (-1.0, -8.0), (-2.0, 1.0)];

fn shifted(base: &[f64], k: usize, delta: f64) -> Vec<f64> {
    let mut out = base.to_vec();
    out[k] += delta;
    out
}

/// 4th-order central first derivative of `f` in slot `k` at step `h`.
fn central4(mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>, at: &[f64], k: usize, h: f64) -> Result<Vec<f64>> {
    let n = at.len();
    let mut acc = vec![0.0; 0];
    for (mult, coeff) in STENCIL {
        let v = f(&shifted(at, k, mult * h))?;
        if acc.is_empty() {
            acc = vec![0.0; v.len()];
        }
        for (a, vi) in acc.iter_mut().zip(&v) {
            *a += coeff * vi;
        }
    }
    let _ = n;
    for a in acc.iter_mut() {
        *a /= 12.0 * h;
    }
    Ok(acc)
}

fn y_gradient(ps: &PointSpray, y: &[f64], hy: &[f64]) -> Result<Vec<Vec<f64>>> {
    // out[j][i] = dG^i/dy^j
    (0..y.len())
        .map(|j| central4(|yy| ps.eval(yy), y, j, hy[j]))
        .collect()
}

fn berwald_curvature_once<S: Spray + ?Sized>(
    spray: &S,
    x: &[f64],
    y: &[f64],
    base_step: f64,
) -> Result<Array2<f64>> {
    let n = spray.dim();
    let hx: Vec<f64> = x.iter().map(|v| base_step * v.abs().max(1.0)).collect();
    let hy: Vec<f64> = y.iter().map(|v| base_step * v.abs().max(1.0)).collect();

    let at_x = spray.at(x)?;
    let g0 = at_x.eval(y)?;
    // dyg[j][i] = dG^i/dy^j
    let dyg = y_gradient(&at_x, y, &hy)?;

    // d2y[j][l][i] = d²G^i / dy^j dy^l  (stencil over j of the gradient in l)
    let mut d2y = vec![vec![vec![0.0; n]; n]; n];
    for j in 0..n {
        let mut acc = vec![vec![0.0; n]; n];
        for (mult, coeff) in STENCIL {
            let yshift = shifted(y, j, mult * hy[j]);
            let grad = y_gradient(&at_x, &yshift, &hy)?;
            for l in 0..n {
                for i in 0..n {
                    acc[l][i] += coeff * grad[l][i];
                }
            }
        }
        for l in 0..n {
            for i in 0..n {
                d2y[j][l][i] = acc[l][i] / (12.0 * hy[j]);
            }
        }
    }

    // dxg[l][i] = dG^i/dx^l and dxy[j][l][i] = d²G^i/dx^j dy^l, sharing the
    // frozen sprays at the shifted base points.
    let mut dxg = vec![vec![0.0; n]; n];
    let mut dxy = vec![vec![vec![0.0; n]; n]; n];
    for j in 0..n {
        let mut acc_g = vec![0.0; n];
        let mut acc_grad = vec![vec![0.0; n]; n];
        for (mult, coeff) in STENCIL {
            let ps = spray.at(&shifted(x, j, mult * hx[j]))?;
            let gv = ps.eval(y)?;
            let grad = y_gradient(&ps, y, &hy)?;
            for i in 0..n {
                acc_g[i] += coeff * gv[i];
                for l in 0..n {
                    acc_grad[l][i] += coeff * grad[l][i];
                }
            }
        }
        for i in 0..n {
            dxg[j][i] = acc_g[i] / (12.0 * hx[j]);
            for l in 0..n {
                dxy[j][l][i] = acc_grad[l][i] / (12.0 * hx[j]);
            }
        }
    }

    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for l in 0..n {
            let mut v = 2.0 * dxg[l][i];
            for j in 0..n {
                v -= y[j] * dxy[j][l][i];
                v += 2.0 * g0[j] * 0.5 * (d2y[j][l][i] + d2y[l][j][i]);
                v -= dyg[j][i] * dyg[l][j];
            }
            out[[i, l]] = v;
        }
    }
    Ok(out)
}

/// Least-squares fit of the scalar-curvature model
/// `R^i_l = K F² (δ^i_l - l^i l_l)` with `l^i = y^i/F`, `l_l = dF/dy^l`.
/// Returns `(K, residual)` where the residual is the Frobenius norm of the
/// misfit over the norm of the model tensor.
pub fn flag_curvature_fit(
    r: &Array2<f64>,
    f: f64,
    df_dy: &[f64],
    y: &[f64],
) -> Result<(f64, f64)> {
    let n = y.len();
    let mut model = Array2::zeros((n, n));
    for i in 0..n {
        for l in 0..n {
            let mut m = -f * df_dy[l] * y[i];
            if i == l {
                m += f * f;
            }
            model[[i, l]] = m;
        }
    }
    let norm_sq: f64 = model.iter().map(|v| v * v).sum();
    let norm = norm_sq.sqrt();
    if norm < 1e-12 {
        return Err(Error::DegenerateModel { norm });
    }
    let k: f64 = r
        .iter()
        .zip(model.iter())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / norm_sq;
    let misfit_sq: f64 = r
        .iter()
        .zip(model.iter())
        .map(|(a, b)| (a - k * b) * (a - k * b))
        .sum();
    Ok((k, misfit_sq.sqrt() / norm))
}

/// `F` and its exact `y`-gradient for navigation data at a point, as a
/// closed form in `y`. Independent of the spray path used for `R^i_l`.
pub struct FlagModel {
    h: Array2<f64>,
    w_low: Vec<f64>,
    epsilon_dir: f64,
}

impl FlagModel {
    pub fn at(n: &NavigationData, x: &[f64], epsilon_dir: f64) -> Result<FlagModel> {
        let (h, _) = metric_at(n.h(), x)?;
        let w_low = n.w_lower().values(x)?;
        Ok(FlagModel {
            h,
            w_low,
            epsilon_dir,
        })
    }

    /// `(F, dF/dy)` at a direction.
    pub fn eval(&self, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = y.len();
        let mut h00 = 0.0;
        let mut hy = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                h00 += self.h[[i, j]] * y[i] * y[j];
                hy[i] += self.h[[i, j]] * y[j];
            }
        }
        let w0: f64 = self.w_low.iter().zip(y).map(|(w, y)| w * y).sum();
        let norm = h00.sqrt();
        if norm == 0.0 || w0 <= self.epsilon_dir * norm {
            return Err(Error::SingularDirection {
                alignment: if norm == 0.0 { 0.0 } else { w0 / norm },
                threshold: self.epsilon_dir,
            });
        }
        let f = h00 / (2.0 * w0);
        let df = (0..n)
            .map(|l| hy[l] / w0 - h00 * self.w_low[l] / (2.0 * w0 * w0))
            .collect();
        Ok((f, df))
    }
}

/// Killing verdict over sampled points.
#[derive(Debug, Clone, Serialize)]
pub struct KillingVerdict {
    pub pass: bool,
    /// `max_ij |R_ij|` over the samples.
    pub max_residual: f64,
    /// `max |W^i W^j R_ij|`: forced to vanish by unit length alone, so a
    /// violation flags corrupted navigation data rather than a non-Killing
    /// field.
    pub max_unit_observable: f64,
    pub tolerance: f64,
}

/// Checks `max |R_ij| <= tol` over seeded sample points.
pub fn killing_check(n: &NavigationData, cfg: &SampleConfig) -> Result<KillingVerdict> {
    cfg.validate()?;
    let mut rng = cfg.stage_rng(STAGE_KILLING);
    let points = n.chart().sample_points(&mut rng, cfg.points)?;
    killing_check_at(n, &points, cfg.tolerances.killing)
}

pub(crate) fn killing_check_at(
    n: &NavigationData,
    points: &[Vec<f64>],
    tolerance: f64,
) -> Result<KillingVerdict> {
    let dim = n.dim();
    let mut max_residual = 0.0f64;
    let mut max_unit = 0.0f64;
    for x in points {
        let t = navigation_tensors(n, x)?;
        let w_up = n.w_upper().values(x)?;
        for v in t.r.iter() {
            max_residual = max_residual.max(v.abs());
        }
        let mut obs = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                obs += w_up[i] * w_up[j] * t.r[[i, j]];
            }
        }
        max_unit = max_unit.max(obs.abs());
    }
    Ok(KillingVerdict {
        pass: max_residual <= tolerance,
        max_residual,
        max_unit_observable: max_unit,
        tolerance,
    })
}

/// Result of fitting a constant-curvature ansatz.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureFit {
    pub k_hat: f64,
    /// Max deviation of per-point `K` from the mean plus max ansatz misfit.
    pub residual: f64,
    pub pass: bool,
    pub tolerance: f64,
}

/// Fits `riem[[a,i,k,l]] = K (h_ka δ^i_l - h_al δ^i_k)` per sampled point,
/// averages the per-point `K`, and reports the spread plus worst misfit.
pub fn constant_curvature_check(h: &MetricField, cfg: &SampleConfig) -> Result<CurvatureFit> {
    cfg.validate()?;
    let mut rng = cfg.stage_rng(STAGE_CURVATURE);
    let points = h.chart().sample_points(&mut rng, cfg.points)?;
    constant_curvature_check_at(h, &points, cfg.tolerances.curvature_fit)
}

pub(crate) fn constant_curvature_check_at(
    h: &MetricField,
    points: &[Vec<f64>],
    tolerance: f64,
) -> Result<CurvatureFit> {
    let n = h.dim();
    let mut ks = Vec::with_capacity(points.len());
    let mut worst_misfit = 0.0f64;
    for x in points {
        let riem = riemann(h, x)?;
        let (hm, _) = metric_at(h, x)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for a in 0..n {
            for i in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut m = 0.0;
                        if i == l {
                            m += hm[[k, a]];
                        }
                        if i == k {
                            m -= hm[[a, l]];
                        }
                        num += riem[[a, i, k, l]] * m;
                        den += m * m;
                    }
                }
            }
        }
        let k_point = num / den;
        let mut misfit_sq = 0.0;
        let mut model_sq = 0.0;
        for a in 0..n {
            for i in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut m = 0.0;
                        if i == l {
                            m += hm[[k, a]];
                        }
                        if i == k {
                            m -= hm[[a, l]];
                        }
                        let d = riem[[a, i, k, l]] - k_point * m;
                        misfit_sq += d * d;
                        model_sq += m * m;
                    }
                }
            }
        }
        worst_misfit = worst_misfit.max(misfit_sq.sqrt() / model_sq.sqrt());
        ks.push(k_point);
    }
    let k_hat = ks.iter().sum::<f64>() / ks.len() as f64;
    let spread = ks
        .iter()
        .fold(0.0f64, |m, k| m.max((k - k_hat).abs()));
    let residual = spread + worst_misfit;
    Ok(CurvatureFit {
        k_hat,
        residual,
        pass: residual <= tolerance,
        tolerance,
    })
}

/// Residual of the second-derivative identity for unit Killing fields,
/// `W_{i||j||k} = W_r riem[[k, r, i, j]]`, maximized over sampled points.
pub fn killing_identity_residual(n: &NavigationData, cfg: &SampleConfig) -> Result<f64> {
    cfg.validate()?;
    let verdict = killing_check(n, cfg)?;
    if !verdict.pass {
        return Err(Error::NotKilling {
            max_residual: verdict.max_residual,
            tolerance: verdict.tolerance,
        });
    }
    let mut rng = cfg.stage_rng(STAGE_KILLING ^ 0xff);
    let points = n.chart().sample_points(&mut rng, cfg.points)?;
    let mut worst = 0.0f64;
    for x in &points {
        worst = worst.max(killing_identity_residual_at(n.w_lower(), n.h(), x)?);
    }
    Ok(worst)
}

/// Pointwise form of the identity residual. Takes the covector and metric
/// directly so it can also exercise Killing fields of non-unit length,
/// for which the identity still holds.
pub fn killing_identity_residual_at(
    w: &CovectorField,
    h: &MetricField,
    x: &[f64],
) -> Result<f64> {
    let n = h.dim();
    let d2 = second_covariant_derivative(w, h, x)?;
    let riem = riemann(h, x)?;
    let wv = w.values(x)?;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut rhs = 0.0;
                for r in 0..n {
                    rhs += wv[r] * riem[[k, r, i, j]];
                }
                worst = worst.max((d2[[i, j, k]] - rhs).abs());
            }
        }
    }
    Ok(worst)
}

/// Flag-curvature samples from the direct route.
#[derive(Debug, Clone, Serialize)]
pub struct FlagSamples {
    pub k_values: Vec<f64>,
    pub mean_k: f64,
    pub spread: f64,
    pub max_fit_residual: f64,
    pub pass: bool,
    pub tolerance: f64,
}

/// Final verdict with the certified curvature when both routes agree.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub constant_curvature: bool,
    pub k_hat: Option<f64>,
    /// `|K_structural - K_direct|` when both routes produced a value.
    pub routes_delta_k: f64,
    pub reason: String,
}

/// Everything the classifier measured, plus provenance for reproduction.
#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub killing: KillingVerdict,
    pub riemannian: CurvatureFit,
    pub flag: FlagSamples,
    pub provenance: SampleConfig,
}

/// Classifier input: either representation is accepted; Kropina data is
/// converted to navigation form first.
pub enum ClassifyInput<'a> {
    Kropina(&'a KropinaData),
    Navigation(&'a NavigationData),
}

/// Samples one admissible direction at `x`: isotropic Gaussian components
/// (Box-Muller), normalized, flipped into the half-space where the
/// contraction with `W` is positive, and rejected while the alignment is
/// below [`MIN_SAMPLE_ALIGNMENT`].
fn sample_direction<R: Rng>(
    rng: &mut R,
    flag: &FlagModel,
    dim: usize,
) -> Result<Vec<f64>> {
    for _ in 0..200 {
        let mut y = Vec::with_capacity(dim);
        while y.len() < dim {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let radius = (-2.0 * u1.ln()).sqrt();
            let angle = 2.0 * std::f64::consts::PI * u2;
            y.push(radius * angle.cos());
            if y.len() < dim {
                y.push(radius * angle.sin());
            }
        }
        let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for v in y.iter_mut() {
            *v /= norm;
        }
        // flip into the admissible half-cone
        let mut h00 = 0.0;
        let mut w0 = 0.0;
        for i in 0..dim {
            w0 += flag.w_low[i] * y[i];
            for j in 0..dim {
                h00 += flag.h[[i, j]] * y[i] * y[j];
            }
        }
        if w0 < 0.0 {
            for v in y.iter_mut() {
                *v = -*v;
            }
            w0 = -w0;
        }
        if w0 > MIN_SAMPLE_ALIGNMENT * h00.sqrt() {
            return Ok(y);
        }
    }
    Err(Error::Sampling(
        "could not draw an admissible direction after 200 tries".into(),
    ))
}

/// Runs the full two-route classification.
pub fn classify(input: ClassifyInput<'_>, cfg: &SampleConfig) -> Result<ClassificationReport> {
    cfg.validate()?;
    let owned;
    let nav: &NavigationData = match input {
        ClassifyInput::Kropina(k) => {
            owned = to_navigation(k)?;
            &owned
        }
        ClassifyInput::Navigation(n) => n,
    };
    let chart: &Chart = nav.chart();

    // the unit-length invariant is a precondition of everything below
    {
        let mut rng = cfg.stage_rng(STAGE_KILLING ^ 0xaa);
        let pts = chart.sample_points(&mut rng, cfg.points)?;
        nav.require_unit_length(&pts, UNIT_LENGTH_TOLERANCE)?;
    }

    let killing = killing_check(nav, cfg)?;
    let riemannian = constant_curvature_check(nav.h(), cfg)?;

    // direct route: flag-curvature fit over points x directions
    let mut rng = cfg.stage_rng(STAGE_FLAG);
    let points = chart.sample_points(&mut rng, cfg.points)?;
    let mut samples = Vec::with_capacity(cfg.points * cfg.directions);
    for x in &points {
        let flag = FlagModel::at(nav, x, cfg.epsilon_dir)?;
        for _ in 0..cfg.directions {
            let y = sample_direction(&mut rng, &flag, nav.dim())?;
            samples.push((x.clone(), y));
        }
    }
    let spray = NavigationSpray::new(nav, cfg.epsilon_dir);
    let fits: Vec<Result<(f64, f64)>> = samples
        .par_iter()
        .map(|(x, y)| {
            let r = berwald_curvature(&spray, x, y)?;
            let flag = FlagModel::at(nav, x, cfg.epsilon_dir)?;
            let (f, df) = flag.eval(y)?;
            flag_curvature_fit(&r, f, &df, y)
        })
        .collect();
    let mut k_values = Vec::with_capacity(fits.len());
    let mut max_fit_residual = 0.0f64;
    for fit in fits {
        let (k, res) = fit?;
        k_values.push(k);
        max_fit_residual = max_fit_residual.max(res);
    }
    let mean_k = k_values.iter().sum::<f64>() / k_values.len() as f64;
    let lo = k_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = k_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    let tol = cfg.tolerances.curvature_fit;
    let flag_samples = FlagSamples {
        k_values,
        mean_k,
        spread,
        max_fit_residual,
        pass: spread <= tol && max_fit_residual <= tol,
        tolerance: tol,
    };

    let structural_pass = killing.pass && riemannian.pass;
    let direct_pass = flag_samples.pass;
    let delta_k = (riemannian.k_hat - mean_k).abs();

    if structural_pass != direct_pass {
        return Err(Error::InconsistentVerdict(format!(
            "structural route (killing pass: {}, curvature pass: {}) vs direct route (pass: {}, spread {:.3e}, max fit residual {:.3e})",
            killing.pass, riemannian.pass, direct_pass, spread, max_fit_residual
        )));
    }
    if structural_pass && delta_k > tol {
        return Err(Error::InconsistentVerdict(format!(
            "both routes pass but disagree on K: structural {:.9e} vs direct {:.9e}",
            riemannian.k_hat, mean_k
        )));
    }

    let verdict = if structural_pass {
        Verdict {
            constant_curvature: true,
            k_hat: Some(riemannian.k_hat),
            routes_delta_k: delta_k,
            reason: format!(
                "Killing check passed (max |R_ij| = {:.3e}) and curvature fit K = {:.9} agrees with sampled flag curvature",
                killing.max_residual, riemannian.k_hat
            ),
        }
    } else {
        let reason = if !killing.pass {
            format!(
                "Killing check failed (max |R_ij| = {:.3e} > {:.1e})",
                killing.max_residual, killing.tolerance
            )
        } else {
            format!(
                "curvature fit residual {:.3e} exceeds {:.1e}",
                riemannian.residual, riemannian.tolerance
            )
        };
        Verdict {
            constant_curvature: false,
            k_hat: None,
            routes_delta_k: delta_k,
            reason,
        }
    };

    Ok(ClassificationReport {
        verdict,
        killing,
        riemannian,
        flag: flag_samples,
        provenance: *cfg,
    })
}
