//! Geodesic integration: the spray ODE `x'' + 2G(x, x') = 0` with classical
//! fixed-step fourth-order Runge-Kutta, plus the conservation diagnostic
//! `F(x(t), x'(t)) = const` that validates both the spray and the
//! integrator at once.
//!
//! Fixed steps, no adaptivity: traces feed deterministic regression tests
//! and byte-stable CSV exports, so the step history must not depend on
//! error estimates.

use std::io::Write;

use serde::Serialize;

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::spray::{Spray, SprayRoute};

/// One integration sample.
#[derive(Debug, Clone, Serialize)]
pub struct TraceSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub f: f64,
}

/// Why the integrator stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitReason {
    /// All requested steps were taken.
    Completed,
    /// The trajectory left the chart box after the recorded samples.
    LeftChart { step: usize },
    /// The velocity left the admissible cone after the recorded samples.
    LeftAdmissibleCone { step: usize },
}

/// An integrated trajectory. Timestamps increase strictly; every recorded
/// sample was admissible when it was taken.
#[derive(Debug, Clone, Serialize)]
pub struct GeodesicTrace {
    pub samples: Vec<TraceSample>,
    pub dt: f64,
    pub route: SprayRoute,
    pub exit: ExitReason,
}

impl GeodesicTrace {
    pub fn last(&self) -> &TraceSample {
        self.samples.last().expect("trace is never empty")
    }
}

/// Integrates the spray ODE from `(x0, y0)` for `steps` steps of size `dt`.
///
/// `f_fn` supplies the metric value recorded per sample (and conserved
/// along geodesics). An inadmissible initial condition is an error; a
/// trajectory that later exits the chart box or the admissible cone halts
/// early and returns the partial trace with the exit reason.
pub fn integrate<S: Spray>(
    spray: &S,
    chart: &Chart,
    f_fn: impl Fn(&[f64], &[f64]) -> Result<f64>,
    route: SprayRoute,
    x0: &[f64],
    y0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<GeodesicTrace> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("step size must be positive, got {}", dt)));
    }
    if !chart.contains(x0) {
        return Err(Error::Chart(format!(
            "initial point {:?} lies outside the chart box",
            x0
        )));
    }
    let n = spray.dim();
    // fail fast on an inadmissible start
    let f0 = f_fn(x0, y0)?;
    spray.eval(x0, y0)?;

    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(TraceSample {
        t: 0.0,
        x: x0.to_vec(),
        v: y0.to_vec(),
        f: f0,
    });

    let accel = |x: &[f64], v: &[f64]| -> Result<Vec<f64>> {
        let g = spray.eval(x, v)?;
        Ok(g.into_iter().map(|gi| -2.0 * gi).collect())
    };

    // Integration roundoff may push an endpoint a few ulps past a box wall;
    // only a macroscopic exit should halt the trace.
    let inside = |x: &[f64]| -> bool {
        x.iter().zip(chart.bounds()).all(|(v, &(lo, hi))| {
            let slack = 1e-12 * (hi - lo).abs().max(1.0);
            *v >= lo - slack && *v <= hi + slack
        })
    };

    let mut x = x0.to_vec();
    let mut v = y0.to_vec();
    let mut exit = ExitReason::Completed;

    for step in 1..=steps {
        let result = (|| -> Result<(Vec<f64>, Vec<f64>)> {
            let a1 = accel(&x, &v)?;
            let k1x = v.clone();

            let x2: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * dt * k1x[i]).collect();
            let v2: Vec<f64> = (0..n).map(|i| v[i] + 0.5 * dt * a1[i]).collect();
            let a2 = accel(&x2, &v2)?;

            let x3: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * dt * v2[i]).collect();
            let v3: Vec<f64> = (0..n).map(|i| v[i] + 0.5 * dt * a2[i]).collect();
            let a3 = accel(&x3, &v3)?;

            let x4: Vec<f64> = (0..n).map(|i| x[i] + dt * v3[i]).collect();
            let v4: Vec<f64> = (0..n).map(|i| v[i] + dt * a3[i]).collect();
            let a4 = accel(&x4, &v4)?;

            let xn = (0..n)
                .map(|i| x[i] + dt / 6.0 * (k1x[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]))
                .collect();
            let vn = (0..n)
                .map(|i| v[i] + dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]))
                .collect();
            Ok((xn, vn))
        })();

        let (xn, vn) = match result {
            Ok(pair) => pair,
            Err(Error::SingularDirection { .. }) => {
                exit = ExitReason::LeftAdmissibleCone { step };
                break;
            }
            Err(e) => return Err(e),
        };
        if !inside(&xn) {
            exit = ExitReason::LeftChart { step };
            break;
        }
        let f = match f_fn(&xn, &vn) {
            Ok(f) => f,
            Err(Error::SingularDirection { .. }) => {
                exit = ExitReason::LeftAdmissibleCone { step };
                break;
            }
            Err(e) => return Err(e),
        };
        x = xn;
        v = vn;
        samples.push(TraceSample {
            t: step as f64 * dt,
            x: x.clone(),
            v: v.clone(),
            f,
        });
    }

    Ok(GeodesicTrace {
        samples,
        dt,
        route,
        exit,
    })
}

/// Relative drift of the conserved metric value along the trace:
/// `max_t |F(t) - F(0)| / F(0)`.
pub fn f_drift(trace: &GeodesicTrace) -> f64 {
    let f0 = trace.samples[0].f;
    trace
        .samples
        .iter()
        .fold(0.0f64, |m, s| m.max((s.f - f0).abs()))
        / f0
}

/// Writes the trace as CSV with columns `t, x1..xn, v1..vn, F`, followed by
/// comment lines carrying the route, the drift, and the exit reason.
pub fn write_csv<W: Write>(trace: &GeodesicTrace, out: &mut W) -> std::io::Result<()> {
    let n = trace.samples[0].x.len();
    write!(out, "t")?;
    for i in 1..=n {
        write!(out, ",x{}", i)?;
    }
    for i in 1..=n {
        write!(out, ",v{}", i)?;
    }
    writeln!(out, ",F")?;
    for s in &trace.samples {
        write!(out, "{}", s.t)?;
        for v in &s.x {
            write!(out, ",{}", v)?;
        }
        for v in &s.v {
            write!(out, ",{}", v)?;
        }
        writeln!(out, ",{}", s.f)?;
    }
    writeln!(out, "# route = {}", route_name(trace.route))?;
    writeln!(out, "# f_drift = {:e}", f_drift(trace))?;
    match &trace.exit {
        ExitReason::Completed => writeln!(out, "# exit = completed")?,
        ExitReason::LeftChart { step } => writeln!(out, "# exit = left-chart at step {}", step)?,
        ExitReason::LeftAdmissibleCone { step } => {
            writeln!(out, "# exit = left-admissible-cone at step {}", step)?
        }
    }
    Ok(())
}

fn route_name(route: SprayRoute) -> &'static str {
    match route {
        SprayRoute::AlphaBeta => "alpha-beta",
        SprayRoute::Navigation => "navigation",
        SprayRoute::Killing => "killing",
        SprayRoute::Riemannian => "riemannian",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::expr::ScalarField;
    use crate::geom::{metric_at, CovectorField, MetricField};
    use crate::navigation::{f_alpha_beta, KropinaData};
    use crate::spray::{AlphaBetaSpray, RiemannianSpray};
    use std::sync::Arc;

    fn flat_constant() -> (Arc<Chart>, KropinaData) {
        let chart = Arc::new(Chart::axes(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap());
        let a = MetricField::euclidean(&chart).unwrap();
        let b = CovectorField::new(
            vec![
                ScalarField::constant(2.0, &chart),
                ScalarField::constant(0.0, &chart),
            ],
            &chart,
        )
        .unwrap();
        (chart.clone(), KropinaData::new(a, b).unwrap())
    }

    #[test]
    fn straight_line_on_flat_data() {
        let (chart, k) = flat_constant();
        let spray = AlphaBetaSpray::new(&k, 1e-6);
        let trace = integrate(
            &spray,
            &chart,
            |x, y| f_alpha_beta(&k, x, y, 1e-6),
            SprayRoute::AlphaBeta,
            &[0.0, 0.0],
            &[1.0, 0.0],
            0.01,
            100,
        )
        .unwrap();
        assert_eq!(trace.exit, ExitReason::Completed);
        assert_eq!(trace.samples.len(), 101);
        for s in &trace.samples {
            assert!((s.x[0] - s.t).abs() <= 1e-13);
            assert_eq!(s.x[1], 0.0);
            assert_eq!(s.v, vec![1.0, 0.0]);
        }
        assert!(f_drift(&trace) <= 1e-12);
    }

    #[test]
    fn oblique_straight_line() {
        let (chart, k) = flat_constant();
        let spray = AlphaBetaSpray::new(&k, 1e-6);
        let trace = integrate(
            &spray,
            &chart,
            |x, y| f_alpha_beta(&k, x, y, 1e-6),
            SprayRoute::AlphaBeta,
            &[-0.9, -0.5],
            &[1.0, 0.5],
            0.01,
            100,
        )
        .unwrap();
        assert_eq!(trace.exit, ExitReason::Completed);
        for s in &trace.samples {
            assert!((s.x[0] - (-0.9 + s.t)).abs() <= 1e-13);
            assert!((s.x[1] - (-0.5 + 0.5 * s.t)).abs() <= 1e-13);
        }
    }

    #[test]
    fn inadmissible_start_is_an_error() {
        let (chart, k) = flat_constant();
        let spray = AlphaBetaSpray::new(&k, 1e-6);
        let r = integrate(
            &spray,
            &chart,
            |x, y| f_alpha_beta(&k, x, y, 1e-6),
            SprayRoute::AlphaBeta,
            &[0.0, 0.0],
            &[0.0, 1.0],
            0.01,
            10,
        );
        assert!(matches!(r, Err(Error::SingularDirection { .. })));
    }

    #[test]
    fn chart_exit_halts_with_partial_trace() {
        let (chart, k) = flat_constant();
        let spray = AlphaBetaSpray::new(&k, 1e-6);
        let trace = integrate(
            &spray,
            &chart,
            |x, y| f_alpha_beta(&k, x, y, 1e-6),
            SprayRoute::AlphaBeta,
            &[0.5, 0.0],
            &[1.0, 0.0],
            0.01,
            100,
        )
        .unwrap();
        assert!(matches!(trace.exit, ExitReason::LeftChart { .. }));
        assert!(trace.samples.len() < 101);
        assert!(trace.last().x[0] <= 1.0 + 1e-9);
    }

    #[test]
    fn riemannian_sphere_conserves_speed_at_fourth_order() {
        // great-circle flow on the unit two-sphere; conserved quantity is
        // the Riemannian speed
        let chart = Arc::new(Chart::axes(&[(0.3, 2.8), (-20.0, 20.0)]).unwrap());
        let rows = vec![
            vec![
                ScalarField::constant(1.0, &chart),
                ScalarField::constant(0.0, &chart),
            ],
            vec![
                ScalarField::constant(0.0, &chart),
                ScalarField::parse("sin(x1)^2", &chart).unwrap(),
            ],
        ];
        let g = MetricField::new(rows, &chart).unwrap();
        let spray = RiemannianSpray::new(&g);
        let speed = |x: &[f64], y: &[f64]| -> Result<f64> {
            let (gm, _) = metric_at(&g, x)?;
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += gm[[i, j]] * y[i] * y[j];
                }
            }
            Ok(s.sqrt())
        };
        let x0 = [1.2, 0.0];
        let y0 = [0.2, 0.9];
        let run = |dt: f64, steps: usize| {
            integrate(&spray, &chart, speed, SprayRoute::Riemannian, &x0, &y0, dt, steps).unwrap()
        };
        // steps chosen so truncation dominates the roundoff floor
        let coarse = run(2e-2, 500);
        assert_eq!(coarse.exit, ExitReason::Completed);
        let fine = run(1e-2, 1000);
        let dc = f_drift(&coarse);
        let df = f_drift(&fine);
        assert!(dc < 1e-8, "coarse drift {}", dc);
        let ratio = dc / df;
        assert!(
            (8.0..=32.0).contains(&ratio),
            "step-halving ratio {} outside the fourth-order window",
            ratio
        );
    }

    #[test]
    fn csv_has_expected_columns_and_footer() {
        let (chart, k) = flat_constant();
        let spray = AlphaBetaSpray::new(&k, 1e-6);
        let trace = integrate(
            &spray,
            &chart,
            |x, y| f_alpha_beta(&k, x, y, 1e-6),
            SprayRoute::AlphaBeta,
            &[0.0, 0.0],
            &[1.0, 0.0],
            0.1,
            5,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,v1,v2,F");
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 7);
        assert!(text.contains("# f_drift"));
        assert!(text.contains("# exit = completed"));
    }
}
