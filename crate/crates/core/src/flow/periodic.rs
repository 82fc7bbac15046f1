//! Periodic flows, their 2pi-periodic generators, and cached orbit samples.
//!
//! A `PeriodicFlow` owns a vector field X, its frequency function omega
//! (analytic or detected), and the generator X/omega whose time-2pi flow is
//! the identity. `OrbitSample` discretizes one generator orbit with flow
//! Jacobians (and optionally second variations), and is the substrate of the
//! averaging operators.

use super::integrator::{integrate_carry, IntegratorConfig, StepObserver};
use super::{detect_period, variational_rhs, FlowField, PeriodDetectConfig};
use crate::chart::{CoordChart, Point};
use crate::error::{Error, Result};
use crate::field::TensorField;
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, RwLock};

/// Which derivative data an orbit sample carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrbitTier {
    /// Nodes and first variations (flow Jacobians).
    Jacobian,
    /// Nodes, first, and second variations.
    Hessian,
}

/// Uniform samples of one generator orbit.
pub struct OrbitSample {
    pub base: Point,
    pub node_count: usize,
    nodes: Vec<Vec<f64>>,
    jac: Vec<DMatrix<f64>>,
    inv_jac: Vec<DMatrix<f64>>,
    /// Flat second variations per node: `[a*n*n + i*n + j]`.
    hess: Option<Vec<Vec<f64>>>,
    pub max_condition: f64,
    pub closure_defect: f64,
    /// Set when the base point is a fixed point of the action (the sample
    /// degenerates to a constant orbit; trust is left to the caller).
    pub degenerate: bool,
}

impl OrbitSample {
    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j]
    }

    pub fn jacobian(&self, j: usize) -> &DMatrix<f64> {
        &self.jac[j]
    }

    pub fn inverse_jacobian(&self, j: usize) -> &DMatrix<f64> {
        &self.inv_jac[j]
    }

    pub fn hessian(&self, j: usize) -> Option<&[f64]> {
        self.hess.as_ref().map(|h| h[j].as_slice())
    }

    pub fn has_hessians(&self) -> bool {
        self.hess.is_some()
    }

    pub fn node_time(&self, j: usize) -> f64 {
        TAU * j as f64 / self.node_count as f64
    }
}

/// Configuration shared by a periodic flow's integrations and samples.
#[derive(Debug, Clone)]
pub struct PeriodicFlowConfig {
    pub integrator: IntegratorConfig,
    /// Node count used by operators (power of two, >= 16).
    pub default_nodes: usize,
    /// Aliasing guard doubles the node count up to this cap.
    pub max_nodes: usize,
    pub closure_tol: f64,
    /// Tolerance for the construction check |L_X omega| = 0.
    pub frequency_invariance_tol: f64,
}

impl Default for PeriodicFlowConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            default_nodes: 256,
            max_nodes: 4096,
            closure_tol: 1e-7,
            frequency_invariance_tol: 1e-6,
        }
    }
}

type OrbitKey = (Vec<i64>, usize, OrbitTier);

fn quantize(coords: &[f64]) -> Vec<i64> {
    coords.iter().map(|c| (c / 1e-12).round() as i64).collect()
}

const CACHE_CAPACITY: usize = 8192;

/// A vector field with periodic flow: period/frequency data plus the
/// 2pi-periodic generator, with an orbit cache keyed by base point.
pub struct PeriodicFlow {
    x: TensorField,
    omega: TensorField,
    upsilon: TensorField,
    generator_ops: FlowField,
    pub config: PeriodicFlowConfig,
    cache: RwLock<HashMap<OrbitKey, Arc<OrbitSample>>>,
}

impl PeriodicFlow {
    /// Builds a periodic flow from an analytic frequency function. The
    /// invariants (omega positive, omega a first integral of X, generator
    /// orbits closing after 2pi) are checked at the supplied probe points.
    pub fn new(
        x: &TensorField,
        omega: &TensorField,
        config: PeriodicFlowConfig,
        check_points: &[Point],
    ) -> Result<Arc<Self>> {
        x.same_chart(omega)?;
        config.integrator.validate()?;
        let upsilon = x.scale_by(&omega.reciprocal()?)?;
        let generator_ops = FlowField::new(&upsilon)?;
        let pf = Arc::new(Self {
            x: x.clone(),
            omega: omega.clone(),
            upsilon,
            generator_ops,
            config,
            cache: RwLock::new(HashMap::new()),
        });
        pf.validate_at(check_points)?;
        Ok(pf)
    }

    /// Builds a periodic flow with a numerically detected period function.
    /// The hint must be within 50% of the true period across the working
    /// region. Detected periods are cached per quantized point.
    pub fn with_detected_period(
        x: &TensorField,
        hint: f64,
        config: PeriodicFlowConfig,
        check_points: &[Point],
    ) -> Result<Arc<Self>> {
        let integ = config.integrator;
        let det = PeriodDetectConfig::default();
        let x_inner = x.clone();
        let cache: Arc<RwLock<HashMap<Vec<i64>, f64>>> = Arc::new(RwLock::new(HashMap::new()));
        let omega = TensorField::from_parts(
            x.chart().clone(),
            crate::field::Valence::Scalar,
            "omega[detected]",
            1e-4, // period detection noise makes tighter FD steps useless
            {
                let cache = cache.clone();
                Box::new(move |p: &Point| {
                    let key = quantize(p.coords());
                    if let Some(t) = cache.read().unwrap().get(&key) {
                        return Ok(crate::components::Components::scalar(p.dim(), TAU / t));
                    }
                    let t = detect_period(&x_inner, p, hint, &integ, &det)?;
                    cache.write().unwrap().insert(key, t);
                    Ok(crate::components::Components::scalar(p.dim(), TAU / t))
                })
            },
            None,
        );
        let mut cfg = config;
        // detected omega carries Newton-level noise; relax the invariance check
        cfg.frequency_invariance_tol = cfg.frequency_invariance_tol.max(1e-5);
        Self::new(x, &omega, cfg, check_points)
    }

    fn validate_at(&self, check_points: &[Point]) -> Result<()> {
        for m in check_points {
            let w = self.omega.eval(m)?.as_scalar();
            if !(w > 0.0) {
                return Err(Error::NonPositiveFrequency {
                    point: m.coords().to_vec(),
                    value: w,
                });
            }
            // omega is a first integral of X
            let xv = self.x.eval(m)?;
            let wg = self.omega.jacobian(m)?;
            let lxw: f64 = (0..m.dim()).map(|a| xv.data[a] * wg.entry(0, a)).sum();
            if lxw.abs() > self.config.frequency_invariance_tol * w.abs().max(1.0) {
                return Err(Error::FrequencyNotInvariant {
                    point: m.coords().to_vec(),
                    residual: lxw.abs(),
                });
            }
            // generator orbit closes after 2pi (computing the orbit runs the check)
            self.orbit(m, 16.max(self.config.default_nodes / 16), OrbitTier::Jacobian)?;
        }
        Ok(())
    }

    pub fn chart(&self) -> &Arc<CoordChart> {
        self.x.chart()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn x_field(&self) -> &TensorField {
        &self.x
    }

    pub fn omega(&self) -> &TensorField {
        &self.omega
    }

    /// The 2pi-periodic generator X / omega.
    pub fn generator(&self) -> &TensorField {
        &self.upsilon
    }

    pub fn omega_at(&self, m: &Point) -> Result<f64> {
        Ok(self.omega.eval(m)?.as_scalar())
    }

    pub fn period_at(&self, m: &Point) -> Result<f64> {
        Ok(TAU / self.omega_at(m)?)
    }

    /// Differential of the frequency function as a 1-form field.
    pub fn omega_differential(&self) -> Result<TensorField> {
        crate::exterior::exterior_derivative(&self.omega)
    }

    /// Cached orbit sample through `m` with `n` nodes. Near-singular base
    /// points are refused; diagnostics that must evaluate at fixed points use
    /// `orbit_allow_degenerate`.
    pub fn orbit(&self, m: &Point, n: usize, tier: OrbitTier) -> Result<Arc<OrbitSample>> {
        self.orbit_impl(m, n, tier, false)
    }

    /// Orbit sample that degenerates to a constant orbit (with honest
    /// variational data) at fixed points of the action.
    pub fn orbit_allow_degenerate(
        &self,
        m: &Point,
        n: usize,
        tier: OrbitTier,
    ) -> Result<Arc<OrbitSample>> {
        self.orbit_impl(m, n, tier, true)
    }

    fn orbit_impl(
        &self,
        m: &Point,
        n: usize,
        tier: OrbitTier,
        allow_degenerate: bool,
    ) -> Result<Arc<OrbitSample>> {
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::Config(format!(
                "orbit node count must be a power of two >= 4, got {n}"
            )));
        }
        let wrapped = Point::new(self.chart().wrap(m.coords()))?;
        self.chart().check_contains(wrapped.coords())?;
        let key = (quantize(wrapped.coords()), n, tier);
        if let Some(s) = self.cache.read().unwrap().get(&key) {
            return Ok(s.clone());
        }
        // a Hessian-tier sample serves Jacobian-tier requests
        if tier == OrbitTier::Jacobian {
            let hkey = (key.0.clone(), n, OrbitTier::Hessian);
            if let Some(s) = self.cache.read().unwrap().get(&hkey) {
                return Ok(s.clone());
            }
        }
        let sample = Arc::new(self.compute_orbit(&wrapped, n, tier, allow_degenerate)?);
        let mut w = self.cache.write().unwrap();
        if w.len() >= CACHE_CAPACITY {
            w.clear();
        }
        w.insert(key, sample.clone());
        Ok(sample)
    }

    fn compute_orbit(
        &self,
        base: &Point,
        n: usize,
        tier: OrbitTier,
        allow_degenerate: bool,
    ) -> Result<OrbitSample> {
        let dim = self.dim();
        let degenerate = self.generator_ops.check_regular(base).is_err();
        if degenerate && !allow_degenerate {
            // re-raise the regularity error
            self.generator_ops.check_regular(base)?;
        }

        let with_h = tier == OrbitTier::Hessian;
        let state_len = dim + dim * dim + if with_h { dim * dim * dim } else { 0 };
        let mut y = vec![0.0; state_len];
        y[..dim].copy_from_slice(base.coords());
        for a in 0..dim {
            y[dim + a * dim + a] = 1.0;
        }
        let rhs = variational_rhs(&self.generator_ops, with_h);
        let block = self.chart().unit_block();
        let mut obs = |_t: f64, y: &mut [f64]| {
            if let Some((start, len)) = block {
                let norm: f64 = y[start..start + len].iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 && (norm - 1.0).abs() > 1e-10 {
                    for v in &mut y[start..start + len] {
                        *v /= norm;
                    }
                }
            }
        };

        let mut nodes = Vec::with_capacity(n);
        let mut jacs = Vec::with_capacity(n);
        let mut hess = if with_h { Some(Vec::with_capacity(n)) } else { None };
        let mut h_carry = 0.0;
        for j in 0..n {
            if j > 0 {
                let t0 = TAU * (j - 1) as f64 / n as f64;
                let t1 = TAU * j as f64 / n as f64;
                y = integrate_carry(
                    &rhs,
                    &y,
                    t0,
                    t1,
                    &self.config.integrator,
                    block.map(|_| &mut obs as StepObserver<'_>),
                    &mut h_carry,
                )?;
            }
            nodes.push(y[..dim].to_vec());
            let mut jm = DMatrix::zeros(dim, dim);
            for a in 0..dim {
                for i in 0..dim {
                    jm[(a, i)] = y[dim + a * dim + i];
                }
            }
            jacs.push(jm);
            if let Some(h) = hess.as_mut() {
                h.push(y[dim + dim * dim..].to_vec());
            }
        }
        // close the loop and check the defect
        let t0 = TAU * (n - 1) as f64 / n as f64;
        let y_end = integrate_carry(
            &rhs,
            &y,
            t0,
            TAU,
            &self.config.integrator,
            block.map(|_| &mut obs as StepObserver<'_>),
            &mut h_carry,
        )?;
        let defect = self.chart().distance(&y_end[..dim], base.coords());
        if defect > self.config.closure_tol {
            return Err(Error::ClosureFailure {
                point: base.coords().to_vec(),
                defect,
                tol: self.config.closure_tol,
            });
        }

        let mut max_cond = 0.0f64;
        let mut invs = Vec::with_capacity(n);
        for jm in &jacs {
            let inv = jm.clone().try_inverse().ok_or(Error::SingularJacobian {
                cond: f64::INFINITY,
            })?;
            let cond = one_norm(jm) * one_norm(&inv);
            max_cond = max_cond.max(cond);
            invs.push(inv);
        }

        Ok(OrbitSample {
            base: base.clone(),
            node_count: n,
            nodes,
            jac: jacs,
            inv_jac: invs,
            hess,
            max_condition: max_cond,
            closure_defect: defect,
            degenerate,
        })
    }

    /// Flow of X itself (not the generator).
    pub fn flow_x(&self, m: &Point, t: f64) -> Result<Point> {
        super::flow(&self.x, m, t, &self.config.integrator)
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for c in 0..m.ncols() {
        let s: f64 = (0..m.nrows()).map(|r| m[(r, c)].abs()).sum();
        best = best.max(s);
    }
    best
}

/// Spec-level convenience: uniform orbit sample through `m` with `n` nodes.
pub fn sample_orbit(pf: &PeriodicFlow, m: &Point, n: usize) -> Result<Arc<OrbitSample>> {
    pf.orbit(m, n, OrbitTier::Jacobian)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::CoordChart;
    use approx::assert_abs_diff_eq;

    fn harmonic() -> (Arc<CoordChart>, TensorField, TensorField) {
        let chart =
            CoordChart::with_excluded(&["q", "p"], &[-6.0, -6.0], &[6.0, 6.0], |x: &[f64]| {
                x[0] * x[0] + x[1] * x[1] < 1e-4
            })
            .unwrap();
        let x = TensorField::vector_field(
            &chart,
            "X",
            |x| vec![x[1], -x[0]],
            Some(Box::new(|_| vec![0.0, 1.0, -1.0, 0.0])),
        );
        let omega = TensorField::constant_scalar(&chart, 1.0);
        (chart, x, omega)
    }

    #[test]
    fn harmonic_orbit_nodes_are_rotations() {
        let (_, x, omega) = harmonic();
        let pf = PeriodicFlow::new(
            &x,
            &omega,
            PeriodicFlowConfig::default(),
            &[Point::new(vec![1.0, 0.0]).unwrap()],
        )
        .unwrap();
        let s = sample_orbit(&pf, &Point::new(vec![1.0, 0.0]).unwrap(), 4).unwrap();
        let expect = [[1.0, 0.0], [0.0, -1.0], [-1.0, 0.0], [0.0, 1.0]];
        for j in 0..4 {
            assert_abs_diff_eq!(s.node(j)[0], expect[j][0], epsilon = 1e-9);
            assert_abs_diff_eq!(s.node(j)[1], expect[j][1], epsilon = 1e-9);
        }
        assert!(s.closure_defect < 1e-8);
        assert!(s.max_condition < 1.0 + 1e-6);
    }

    #[test]
    fn orbit_cache_returns_shared_samples() {
        let (_, x, omega) = harmonic();
        let pf = PeriodicFlow::new(
            &x,
            &omega,
            PeriodicFlowConfig::default(),
            &[Point::new(vec![1.0, 0.0]).unwrap()],
        )
        .unwrap();
        let m = Point::new(vec![0.5, 0.25]).unwrap();
        let a = pf.orbit(&m, 64, OrbitTier::Jacobian).unwrap();
        let b = pf.orbit(&m, 64, OrbitTier::Jacobian).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        // a Hessian-tier sample answers Jacobian-tier lookups
        let h = pf.orbit(&m, 128, OrbitTier::Hessian).unwrap();
        let c = pf.orbit(&m, 128, OrbitTier::Jacobian).unwrap();
        assert!(Arc::ptr_eq(&h, &c));
        assert!(h.has_hessians());
    }

    #[test]
    fn second_variations_vanish_for_linear_flows() {
        let (_, x, omega) = harmonic();
        let pf = PeriodicFlow::new(
            &x,
            &omega,
            PeriodicFlowConfig::default(),
            &[Point::new(vec![1.0, 0.0]).unwrap()],
        )
        .unwrap();
        let s = pf
            .orbit(
                &Point::new(vec![0.7, -0.2]).unwrap(),
                16,
                OrbitTier::Hessian,
            )
            .unwrap();
        for j in 0..16 {
            let h = s.hessian(j).unwrap();
            assert!(h.iter().all(|v| v.abs() < 1e-7), "node {j}");
        }
    }

    #[test]
    fn wrong_frequency_fails_closure_check() {
        let (chart, x, _) = harmonic();
        let omega_bad = TensorField::constant_scalar(&chart, 2.0);
        let r = PeriodicFlow::new(
            &x,
            &omega_bad,
            PeriodicFlowConfig::default(),
            &[Point::new(vec![1.0, 0.0]).unwrap()],
        );
        assert!(matches!(r, Err(Error::ClosureFailure { .. })));
    }

    #[test]
    fn non_invariant_frequency_is_rejected() {
        let (chart, x, _) = harmonic();
        let omega_bad = TensorField::scalar_field(
            &chart,
            "1+q",
            |c| 1.0 + 0.2 * c[0],
            Some(Box::new(|_| vec![0.2, 0.0])),
        );
        let r = PeriodicFlow::new(
            &x,
            &omega_bad,
            PeriodicFlowConfig::default(),
            &[Point::new(vec![1.0, 0.5]).unwrap()],
        );
        assert!(matches!(r, Err(Error::FrequencyNotInvariant { .. })));
    }

    #[test]
    fn detected_period_flow_matches_analytic() {
        let (_, x, _) = harmonic();
        let pf = PeriodicFlow::with_detected_period(
            &x,
            6.0,
            PeriodicFlowConfig::default(),
            &[Point::new(vec![1.0, 0.0]).unwrap()],
        )
        .unwrap();
        let w = pf.omega_at(&Point::new(vec![0.4, 0.8]).unwrap()).unwrap();
        assert_abs_diff_eq!(w, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn singular_base_point_is_refused_without_flag() {
        let chart = CoordChart::new(&["q", "p"], &[-6.0, -6.0], &[6.0, 6.0]).unwrap();
        let x = TensorField::vector_field(
            &chart,
            "X",
            |x| vec![x[1], -x[0]],
            Some(Box::new(|_| vec![0.0, 1.0, -1.0, 0.0])),
        );
        let omega = TensorField::constant_scalar(&chart, 1.0);
        let pf = PeriodicFlow::new(
            &x,
            &omega,
            PeriodicFlowConfig::default(),
            &[Point::new(vec![1.0, 0.0]).unwrap()],
        )
        .unwrap();
        let origin = Point::new(vec![0.0, 0.0]).unwrap();
        assert!(pf.orbit(&origin, 16, OrbitTier::Jacobian).is_err());
        let s = pf
            .orbit_allow_degenerate(&origin, 16, OrbitTier::Jacobian)
            .unwrap();
        assert!(s.degenerate);
        assert_eq!(s.node(7), &[0.0, 0.0]);
        // at the fixed point of the rotation the flow Jacobian is the rotation itself
        let j = s.jacobian(4); // t = pi/2
        assert_abs_diff_eq!(j[(0, 1)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(j[(1, 0)], -1.0, epsilon = 1e-9);
    }
}
