//! Coordinate charts and points.
//!
//! All fields in this library live on a single open box in R^n, optionally
//! with an excluded set (e.g. the origin for the planar oscillator), periodic
//! coordinates (angles), and a unit-norm constraint block for embedded
//! spheres.

use crate::error::{Error, Result};
use std::sync::Arc;

type MembershipFn = dyn Fn(&[f64]) -> bool + Send + Sync;

/// An open axis-aligned box in R^n with named coordinates.
pub struct CoordChart {
    names: Vec<String>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Returns true when the point must be excluded from the domain.
    excluded: Option<Arc<MembershipFn>>,
    /// Period per axis (None for ordinary coordinates).
    periodic: Vec<Option<f64>>,
    /// Coordinates `[start, start+len)` are constrained to the unit sphere.
    unit_block: Option<(usize, usize)>,
}

impl CoordChart {
    pub fn new(names: &[&str], lo: &[f64], hi: &[f64]) -> Result<Arc<Self>> {
        if names.is_empty() {
            return Err(Error::ChartConstruction("dimension must be >= 1".into()));
        }
        if names.len() != lo.len() || names.len() != hi.len() {
            return Err(Error::ChartConstruction(
                "names and box bounds must have equal length".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for n in names {
            if !seen.insert(*n) {
                return Err(Error::ChartConstruction(format!(
                    "duplicate coordinate name `{n}`"
                )));
            }
        }
        for i in 0..lo.len() {
            if !(lo[i] < hi[i]) {
                return Err(Error::ChartConstruction(format!(
                    "empty box on axis {i}: [{}, {}]",
                    lo[i], hi[i]
                )));
            }
        }
        Ok(Arc::new(Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            excluded: None,
            periodic: vec![None; names.len()],
            unit_block: None,
        }))
    }

    /// Chart with an excluded subset (membership predicate returns true on
    /// points to remove from the domain).
    pub fn with_excluded(
        names: &[&str],
        lo: &[f64],
        hi: &[f64],
        excluded: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Result<Arc<Self>> {
        let chart = Self::new(names, lo, hi)?;
        let mut inner = Arc::try_unwrap(chart).ok().expect("fresh chart");
        inner.excluded = Some(Arc::new(excluded));
        Ok(Arc::new(inner))
    }

    /// Marks axis `axis` as periodic with the given period.
    pub fn with_periodic_axis(self: &Arc<Self>, axis: usize, period: f64) -> Arc<Self> {
        let mut inner = Self {
            names: self.names.clone(),
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            excluded: self.excluded.clone(),
            periodic: self.periodic.clone(),
            unit_block: self.unit_block,
        };
        inner.periodic[axis] = Some(period);
        Arc::new(inner)
    }

    /// Constrains coordinates `[start, start+len)` to the unit sphere.
    pub fn with_unit_block(self: &Arc<Self>, start: usize, len: usize) -> Arc<Self> {
        let mut inner = Self {
            names: self.names.clone(),
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            excluded: self.excluded.clone(),
            periodic: self.periodic.clone(),
            unit_block: self.unit_block,
        };
        inner.unit_block = Some((start, len));
        Arc::new(inner)
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn periodic(&self) -> &[Option<f64>] {
        &self.periodic
    }

    pub fn unit_block(&self) -> Option<(usize, usize)> {
        self.unit_block
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// Membership test. Periodic axes are unbounded (values wrap).
    pub fn contains(&self, coords: &[f64]) -> bool {
        if coords.len() != self.dim() {
            return false;
        }
        for i in 0..self.dim() {
            if self.periodic[i].is_some() {
                continue;
            }
            if coords[i] < self.lo[i] || coords[i] > self.hi[i] {
                return false;
            }
        }
        if let Some(f) = &self.excluded {
            if f(coords) {
                return false;
            }
        }
        true
    }

    pub fn check_contains(&self, coords: &[f64]) -> Result<()> {
        if self.contains(coords) {
            Ok(())
        } else {
            Err(Error::OutsideChart {
                point: coords.to_vec(),
            })
        }
    }

    /// Componentwise displacement a - b, reduced along periodic axes.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let d = a[i] - b[i];
                match self.periodic[i] {
                    Some(p) => {
                        let mut r = d % p;
                        if r > p / 2.0 {
                            r -= p;
                        } else if r < -p / 2.0 {
                            r += p;
                        }
                        r
                    }
                    None => d,
                }
            })
            .collect()
    }

    /// Max-norm distance respecting periodic axes.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.displacement(a, b)
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()))
    }

    /// Canonical representative with periodic axes wrapped into [0, period).
    pub fn wrap(&self, coords: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| match self.periodic[i] {
                Some(p) => coords[i].rem_euclid(p),
                None => coords[i],
            })
            .collect()
    }
}

impl std::fmt::Debug for CoordChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoordChart")
            .field("names", &self.names)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .finish()
    }
}

/// A point in a chart. Coordinates are guaranteed finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        for (axis, &value) in coords.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinitePoint { axis, value });
            }
        }
        Ok(Self(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(coords.to_vec())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
