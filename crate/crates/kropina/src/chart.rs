//! Coordinate charts: dimension, coordinate names, a closed domain box,
//! and an optional exclusion predicate for carving out loci where the data
//! degenerates (for example where the defining covector vanishes).

use rand::Rng;

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr};

/// A single coordinate chart. Charts are immutable once built; fields hold
/// them behind `Arc` so sharing across threads is free.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    names: Vec<String>,
    bounds: Vec<(f64, f64)>,
    /// When present, sampled points must keep this expression > 0.
    exclusion: Option<Expr>,
}

impl Chart {
    /// Chart with default coordinate names `x1..xn` over the given box.
    pub fn axes(bounds: &[(f64, f64)]) -> Result<Chart> {
        let names = (1..=bounds.len()).map(|i| format!("x{}", i)).collect();
        Chart::with_names(names, bounds.to_vec())
    }

    /// Chart with explicit coordinate names.
    pub fn with_names(names: Vec<String>, bounds: Vec<(f64, f64)>) -> Result<Chart> {
        if names.is_empty() {
            return Err(Error::Chart("chart needs at least one coordinate".into()));
        }
        if names.len() != bounds.len() {
            return Err(Error::Chart(format!(
                "{} coordinate names but {} domain intervals",
                names.len(),
                bounds.len()
            )));
        }
        for (name, &(lo, hi)) in names.iter().zip(&bounds) {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Chart(format!(
                    "domain interval for `{}` is empty or not finite: [{}, {}]",
                    name, lo, hi
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Chart(format!("duplicate coordinate name `{}`", name)));
            }
        }
        Ok(Chart {
            names,
            bounds,
            exclusion: None,
        })
    }

    /// Attaches an exclusion predicate: sampled points must satisfy
    /// `source > 0`. The expression is parsed against this chart.
    pub fn with_exclusion(mut self, source: &str) -> Result<Chart> {
        let expr = parse_expr(source, &self)?;
        self.exclusion = Some(expr);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn coordinate_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// True when the point lies inside the (closed) domain box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, &(lo, hi))| *v >= lo && *v <= hi)
    }

    /// Checks a point against the exclusion predicate; points where the
    /// predicate fails to evaluate are treated as excluded.
    pub fn admissible_point(&self, x: &[f64]) -> bool {
        match &self.exclusion {
            None => true,
            Some(e) => matches!(e.eval(x), Ok(v) if v > 0.0),
        }
    }

    /// Draws `count` points uniformly from the domain box, rejecting
    /// excluded ones. Deterministic for a fixed RNG state.
    pub fn sample_points<R: Rng>(&self, rng: &mut R, count: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(count);
        let mut rejected = 0usize;
        while out.len() < count {
            let x: Vec<f64> = self
                .bounds
                .iter()
                .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
                .collect();
            if self.admissible_point(&x) {
                out.push(x);
                rejected = 0;
            } else {
                rejected += 1;
                if rejected > 10_000 {
                    return Err(Error::Sampling(
                        "exclusion predicate rejected 10000 consecutive samples".into(),
                    ));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_empty_interval() {
        assert!(Chart::axes(&[(0.0, 1.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn default_names_are_indexed() {
        let c = Chart::axes(&[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        assert_eq!(c.names(), &["x1", "x2", "x3"]);
        assert_eq!(c.coordinate_index("x3"), Some(2));
        assert_eq!(c.coordinate_index("x4"), None);
    }

    #[test]
    fn sampling_respects_box_and_exclusion() {
        let c = Chart::axes(&[(-1.0, 1.0), (-1.0, 1.0)])
            .unwrap()
            .with_exclusion("x1")
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = c.sample_points(&mut rng, 200).unwrap();
        assert_eq!(pts.len(), 200);
        for p in &pts {
            assert!(c.contains(p));
            assert!(p[0] > 0.0);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let c = Chart::axes(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let a = c
            .sample_points(&mut ChaCha8Rng::seed_from_u64(9), 16)
            .unwrap();
        let b = c
            .sample_points(&mut ChaCha8Rng::seed_from_u64(9), 16)
            .unwrap();
        assert_eq!(a, b);
    }
}
