//! Monodromy of skew-product flows over periodic slow orbits, and the
//! periodicity certificate that turns a k-th-power identity into a
//! certified periodic flow on the product.

use super::SlowFastSystem;
use crate::chart::Point;
use crate::error::{Error, Result};
use crate::flow::{
    detect_period, integrate, FlowField, PeriodDetectConfig, PeriodicFlow, PeriodicFlowConfig,
};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::TAU;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct MonodromyConfig {
    /// Identity tolerance on the matrix norm of `g^j - I`.
    pub identity_tol: f64,
    /// Hint for slow-period detection when no analytic frequency exists.
    pub period_hint: Option<f64>,
    /// Fast-factor reference point (for the linearity probe and, in the
    /// nonlinear case, the expansion center of the sampled map).
    pub fast_reference: Vec<f64>,
}

impl MonodromyConfig {
    pub fn new(fast_reference: Vec<f64>) -> Self {
        Self {
            identity_tol: 1e-6,
            period_hint: None,
            fast_reference,
        }
    }
}

/// The fiber map after one slow period over a point of the slow factor.
#[derive(Debug, Clone)]
pub struct MonodromyRecord {
    pub base_slow: Point,
    pub slow_period: f64,
    /// The monodromy matrix (the fast map's Jacobian at the reference point
    /// in the nonlinear case).
    pub matrix: DMatrix<f64>,
    /// `max-norm(g^j - I)` for j = 1..k_max.
    pub power_defects: Vec<f64>,
    /// Minimal j with `g^j = id` within tolerance, if any.
    pub k_min: Option<usize>,
    /// `max |g^T S2 g - S2|` against the fast symplectic block.
    pub symplectic_defect: f64,
    /// Whether the fast dynamics was detected to be linear.
    pub linear: bool,
}

impl MonodromyRecord {
    pub fn is_k_periodic(&self, k: usize) -> bool {
        self.k_min.map(|m| k % m == 0).unwrap_or(false)
            || self
                .power_defects
                .get(k - 1)
                .map(|d| *d < 1e-5)
                .unwrap_or(false)
    }
}

fn matrix_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Integrates the time-dependent fast system over one slow period starting
/// at `m1`, returning the monodromy. Linear fast dynamics (all the scenarios
/// here) yield the matrix directly from the variational system; nonlinear
/// dynamics fall back to finite differences of the sampled fast map around
/// the reference point.
pub fn monodromy(
    sfs: &SlowFastSystem,
    m1: &Point,
    k_max: usize,
    cfg: &MonodromyConfig,
) -> Result<MonodromyRecord> {
    let n1 = sfs.pps.dim_slow;
    let n2 = sfs.pps.dim_fast;
    if m1.dim() != n1 {
        return Err(Error::DimensionMismatch {
            expected: n1,
            got: m1.dim(),
        });
    }
    if cfg.fast_reference.len() != n2 {
        return Err(Error::DimensionMismatch {
            expected: n2,
            got: cfg.fast_reference.len(),
        });
    }
    let tau = match &sfs.slow_frequency {
        Some(varpi) => TAU / varpi.eval(m1)?.as_scalar(),
        None => {
            let hint = cfg.period_hint.ok_or_else(|| {
                Error::Monodromy("no analytic slow frequency and no period hint".into())
            })?;
            detect_period(
                &sfs.v_slow,
                m1,
                hint,
                &sfs.pps.chart_integrator(),
                &PeriodDetectConfig::default(),
            )?
        }
    };

    // linearity probe: the fast-block Jacobian must not depend on the fast point
    let a0 = super::fast_block_jacobian(sfs, m1.coords(), &cfg.fast_reference)?;
    let shifted: Vec<f64> = cfg.fast_reference.iter().map(|v| v + 0.37).collect();
    let a1 = super::fast_block_jacobian(sfs, m1.coords(), &shifted)?;
    let linear = matrix_norm(&(&a0 - &a1)) < 1e-9 * (1.0 + matrix_norm(&a0));

    let slow_ops = FlowField::new(&sfs.v_slow)?;
    let integ = sfs.pps.chart_integrator();

    let (g, affine_shift) = if linear {
        // joint system: slow point, fast variational matrix, and the fast
        // trajectory of the reference point (fiber maps may be affine, so
        // the identity test must see the translation part too)
        let rhs = |y: &[f64], dy: &mut [f64]| -> Result<()> {
            slow_ops.eval_into(&y[..n1], &mut dy[..n1])?;
            let a = super::fast_block_jacobian(sfs, &y[..n1], &cfg.fast_reference)?;
            for r in 0..n2 {
                for c in 0..n2 {
                    let mut acc = 0.0;
                    for b in 0..n2 {
                        acc += a[(r, b)] * y[n1 + b * n2 + c];
                    }
                    dy[n1 + r * n2 + c] = acc;
                }
            }
            let off = n1 + n2 * n2;
            let mut coords = Vec::with_capacity(n1 + n2);
            coords.extend_from_slice(&y[..n1]);
            coords.extend_from_slice(&y[off..off + n2]);
            let v = sfs.fast_part.eval(&Point::new(coords)?)?;
            for r in 0..n2 {
                dy[off + r] = v.data[n1 + r];
            }
            Ok(())
        };
        let mut y0 = vec![0.0; n1 + n2 * n2 + n2];
        y0[..n1].copy_from_slice(m1.coords());
        for r in 0..n2 {
            y0[n1 + r * n2 + r] = 1.0;
        }
        y0[n1 + n2 * n2..].copy_from_slice(&cfg.fast_reference);
        let y = integrate(&rhs, &y0, 0.0, tau, &integ)?;
        let mut g = DMatrix::zeros(n2, n2);
        for r in 0..n2 {
            for c in 0..n2 {
                g[(r, c)] = y[n1 + r * n2 + c];
            }
        }
        // translation part: c = G(ref) - A ref
        let endpoint = DVector::from_column_slice(&y[n1 + n2 * n2..]);
        let reference = DVector::from_column_slice(&cfg.fast_reference);
        let shift = &endpoint - &g * &reference;
        (g, shift)
    } else {
        // sampled fast map: finite differences around the reference point
        let fast_map = |m2: &[f64]| -> Result<Vec<f64>> {
            let rhs = |y: &[f64], dy: &mut [f64]| -> Result<()> {
                slow_ops.eval_into(&y[..n1], &mut dy[..n1])?;
                let mut coords = Vec::with_capacity(n1 + n2);
                coords.extend_from_slice(&y[..n1]);
                coords.extend_from_slice(&y[n1..]);
                let v = sfs.fast_part.eval(&Point::new(coords)?)?;
                for r in 0..n2 {
                    dy[n1 + r] = v.data[n1 + r];
                }
                Ok(())
            };
            let mut y0 = vec![0.0; n1 + n2];
            y0[..n1].copy_from_slice(m1.coords());
            y0[n1..].copy_from_slice(m2);
            let y = integrate(&rhs, &y0, 0.0, tau, &integ)?;
            Ok(y[n1..].to_vec())
        };
        let h = 1e-5;
        let mut g = DMatrix::zeros(n2, n2);
        for c in 0..n2 {
            let mut hi = cfg.fast_reference.clone();
            let mut lo = cfg.fast_reference.clone();
            hi[c] += h;
            lo[c] -= h;
            let fp = fast_map(&hi)?;
            let fm = fast_map(&lo)?;
            for r in 0..n2 {
                g[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        let endpoint = DVector::from_column_slice(&fast_map(&cfg.fast_reference)?);
        let reference = DVector::from_column_slice(&cfg.fast_reference);
        let shift = &endpoint - &g * &reference;
        (g, shift)
    };

    // powers of the affine map (A, c) against the identity:
    // G^j = (A^j, (A^{j-1} + .. + I) c)
    let eye = DMatrix::<f64>::identity(n2, n2);
    let mut power = eye.clone();
    let mut shift_acc = DVector::<f64>::zeros(n2);
    let mut power_defects = Vec::with_capacity(k_max);
    let mut k_min = None;
    for j in 1..=k_max {
        shift_acc = &g * &shift_acc + &affine_shift;
        power = &power * &g;
        let defect = matrix_norm(&(&power - &eye))
            + shift_acc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if defect < cfg.identity_tol && k_min.is_none() {
            k_min = Some(j);
        }
        power_defects.push(defect);
    }

    // symplecticity against the fast block at (m1, reference)
    let mut coords = Vec::with_capacity(n1 + n2);
    coords.extend_from_slice(m1.coords());
    coords.extend_from_slice(&cfg.fast_reference);
    let s2 = sfs.pps.block_matrix(
        &sfs.pps.sigma_fast,
        &Point::new(coords)?,
        n1,
        n2,
    )?;
    let symplectic_defect = matrix_norm(&(&g.transpose() * &s2 * &g - &s2));

    Ok(MonodromyRecord {
        base_slow: m1.clone(),
        slow_period: tau,
        matrix: g,
        power_defects,
        k_min,
        symplectic_defect,
        linear,
    })
}

/// A certified periodic flow of the unperturbed field, carrying the
/// resonance order that was requested and the minimal orders observed.
pub struct CertifiedFlow {
    pub flow: Arc<PeriodicFlow>,
    pub k_used: usize,
    pub k_min_observed: Vec<Option<usize>>,
    pub records: Vec<MonodromyRecord>,
}

/// Checks `g^k = id` over each slow base point, then constructs the
/// periodic flow of the unperturbed field with frequency
/// `(slow frequency) / k`, verified by the orbit-closure checks at the
/// product probe points.
pub fn periodicity_certificate(
    sfs: &SlowFastSystem,
    slow_points: &[Point],
    k: usize,
    product_probes: &[Point],
    cfg: &MonodromyConfig,
    flow_config: PeriodicFlowConfig,
) -> Result<CertifiedFlow> {
    let mut records = Vec::with_capacity(slow_points.len());
    for m1 in slow_points {
        let rec = monodromy(sfs, m1, k.max(1), cfg)?;
        let defect = rec.power_defects[k - 1];
        if defect > cfg.identity_tol {
            return Err(Error::CertificateFailed(format!(
                "monodromy power {k} differs from the identity by {defect:.3e} at {:?}",
                m1.coords()
            )));
        }
        records.push(rec);
    }
    let omega = sfs.product_frequency(k)?;
    let flow = PeriodicFlow::new(&sfs.unperturbed, &omega, flow_config, product_probes)?;
    // explicit return check of the X-flow after one full period
    for m in product_probes {
        let t = flow.period_at(m)?;
        let back = flow.flow_x(m, t)?;
        let defect = sfs.pps.chart.distance(back.coords(), m.coords());
        if defect > 1e-6 {
            return Err(Error::CertificateFailed(format!(
                "flow does not return after one period at {:?} (defect {defect:.3e})",
                m.coords()
            )));
        }
    }
    Ok(CertifiedFlow {
        flow,
        k_used: k,
        k_min_observed: records.iter().map(|r| r.k_min).collect(),
        records,
    })
}

impl super::ProductPhaseSpace {
    pub(crate) fn chart_integrator(&self) -> crate::flow::IntegratorConfig {
        crate::flow::IntegratorConfig::default()
    }
}
