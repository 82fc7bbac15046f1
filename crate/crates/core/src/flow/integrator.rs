//! Embedded Dormand-Prince 5(4) integrator with PI step control.
//!
//! Systems here are autonomous and small (the largest is a point plus first
//! and second variations, ~160 components), so a classic adaptive RK with
//! tight tolerances keeps quadrature, not integration, as the dominant error.

use crate::error::{Error, Result};

/// Integrator configuration. Tolerances must lie in (0, 1e-2].
#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Result<Self> {
        let cfg = Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(t > 0.0 && t <= 1e-2) {
                return Err(Error::InvalidIntegratorConfig(format!(
                    "{name} = {t:e} outside (0, 1e-2]"
                )));
            }
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidIntegratorConfig("max_step must be > 0".into()));
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

// 5th-order weights equal the last row of A (FSAL); the embedded 4th-order
// weights are below.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Right-hand side of an autonomous system; may fail (e.g. domain exit).
pub trait Rhs {
    fn eval(&self, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl<F> Rhs for F
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    fn eval(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self(y, dy)
    }
}

/// Observer invoked after each accepted step with (t, y). The state is
/// mutable so constraint projections (e.g. unit-sphere blocks) can renormalize.
pub type StepObserver<'a> = &'a mut dyn FnMut(f64, &mut [f64]);

/// Integrates `rhs` from `(t0, y0)` to `t1`, returning the final state.
pub fn integrate(rhs: &dyn Rhs, y0: &[f64], t0: f64, t1: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    integrate_observed(rhs, y0, t0, t1, cfg, None)
}

/// Integration with an optional accepted-step observer.
pub fn integrate_observed(
    rhs: &dyn Rhs,
    y0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    observer: Option<StepObserver<'_>>,
) -> Result<Vec<f64>> {
    let mut carry = 0.0;
    integrate_carry(rhs, y0, t0, t1, cfg, observer, &mut carry)
}

/// Integration that carries the working step size across calls (`carry` = 0
/// requests the automatic initial step). Segment-by-segment orbit sampling
/// re-enters here hundreds of times per orbit; restarting the controller
/// from scratch each segment costs an order of magnitude.
pub fn integrate_carry(
    rhs: &dyn Rhs,
    y0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    mut observer: Option<StepObserver<'_>>,
    carry: &mut f64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = y0.len();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0.to_vec());
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0.to_vec();

    let mut k = vec![vec![0.0; n]; 7];
    rhs.eval(&y, &mut k[0])?;

    let mut h = if *carry > 0.0 {
        *carry * dir
    } else {
        initial_step(&y, &k[0], span.abs(), cfg) * dir
    };

    let mut err_prev: f64 = 1.0;
    let mut y_stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];

    for _step in 0..cfg.max_steps {
        // treat sub-roundoff slivers left by endpoint clipping as arrival
        if (t1 - t) * dir <= 1e-12 * span.abs() {
            return Ok(y);
        }
        *carry = h.abs();
        // clip to the endpoint and the max step
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        if h.abs() > cfg.max_step {
            h = cfg.max_step * dir;
        }
        if h.abs() < 1e-14 * span.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }

        // stages 2..7
        let mut failed = false;
        for s in 0..6 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                y_stage[i] = y[i] + h * acc;
            }
            if let Err(e) = rhs.eval(&y_stage, &mut k[s + 1]) {
                // domain exits near the boundary: retry with a smaller step
                if h.abs() < 1e-12 * span.abs().max(1.0) {
                    return Err(e);
                }
                h *= 0.25;
                failed = true;
                break;
            }
        }
        if failed {
            continue;
        }

        // 5th-order solution is stage 7's base point (FSAL)
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(6) {
                let a = A[5][j];
                if a != 0.0 {
                    acc += a * kj[i];
                }
            }
            y5[i] = y[i] + h * acc;
        }

        // error estimate against the embedded 4th-order weights
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut y4 = 0.0;
            for (j, kj) in k.iter().enumerate() {
                let b = B4[j];
                if b != 0.0 {
                    y4 += b * kj[i];
                }
            }
            let y4 = y[i] + h * y4;
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y5[i].abs());
            let e = (y5[i] - y4) / sc;
            err_sq += e * e;
        }
        let err = (err_sq / n as f64).sqrt().max(1e-30);

        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y5);
            let mut fsal_stale = false;
            if let Some(obs) = observer.as_mut() {
                let before = y.clone();
                obs(t, &mut y);
                fsal_stale = y != before;
            }
            if fsal_stale {
                rhs.eval(&y, &mut k[6])?;
            }
            k.swap(0, 6); // FSAL
            // PI controller
            let fac = 0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h *= fac.clamp(0.2, 5.0);
            err_prev = err;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    Err(Error::MaxStepsExceeded(cfg.max_steps))
}

fn initial_step(y: &[f64], dy: &[f64], span: f64, cfg: &IntegratorConfig) -> f64 {
    let norm_y: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
    let norm_dy: f64 = dy.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
    let h = 0.01 * norm_y / norm_dy;
    h.min(span).min(cfg.max_step).max(1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn integrates_harmonic_oscillator_to_tolerance() {
        let rhs = |y: &[f64], dy: &mut [f64]| -> Result<()> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let cfg = IntegratorConfig::default();
        let y = integrate(&rhs, &[1.0, 0.0], 0.0, std::f64::consts::TAU, &cfg).unwrap();
        assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(y[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_tolerances() {
        assert!(IntegratorConfig::new(0.5, 1e-8).is_err());
        assert!(IntegratorConfig::new(1e-8, 0.0).is_err());
        assert!(IntegratorConfig::new(1e-8, 1e-8).is_ok());
    }

    #[test]
    fn propagates_rhs_failure() {
        let rhs = |y: &[f64], dy: &mut [f64]| -> Result<()> {
            if y[0] > 1.5 {
                return Err(Error::OutsideChart { point: y.to_vec() });
            }
            dy[0] = 1.0;
            Ok(())
        };
        let cfg = IntegratorConfig::default();
        let r = integrate(&rhs, &[0.0], 0.0, 10.0, &cfg);
        assert!(r.is_err());
    }
}
