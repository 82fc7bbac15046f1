//! Flow maps, variational equations, and period detection for vector fields.

mod integrator;
pub mod periodic;

pub use integrator::{integrate, integrate_carry, integrate_observed, IntegratorConfig, Rhs};
pub use periodic::{OrbitSample, OrbitTier, PeriodicFlow, PeriodicFlowConfig};

use crate::chart::Point;
use crate::error::{Error, Result};
use crate::field::{TensorField, Valence};
use nalgebra::DMatrix;

/// Default floor below which a vector field counts as singular at a point
/// (relative to `1 + |m|`).
pub const REGULARITY_FLOOR: f64 = 1e-8;

/// Evaluation bundle for a vector field used as an ODE right-hand side:
/// values, Jacobians, and second derivatives (for second variations).
#[derive(Clone)]
pub struct FlowField {
    field: TensorField,
}

impl FlowField {
    pub fn new(field: &TensorField) -> Result<Self> {
        if field.valence() != Valence::MultiVector(1) {
            return Err(Error::ValenceMismatch(format!(
                "flows need a vector field, got {}",
                field.valence()
            )));
        }
        Ok(Self {
            field: field.clone(),
        })
    }

    pub fn field(&self) -> &TensorField {
        &self.field
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let v = self.field.eval(&Point::from_slice(x)?)?;
        out.copy_from_slice(&v.data);
        Ok(())
    }

    /// Jacobian matrix `[a][b] = dX^a/dx^b`.
    pub fn jacobian_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let j = self.field.jacobian(&Point::from_slice(x)?)?;
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                m[(a, b)] = j.entry(a, b);
            }
        }
        Ok(m)
    }

    /// Second derivatives `[a*n*n + b*n + c] = d^2 X^a / dx^b dx^c`, by
    /// central differences of the (analytic or FD) Jacobian.
    pub fn hessian_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut out = vec![0.0; n * n * n];
        let step = self.field.fd_step().max(1e-6) * 10.0;
        for c in 0..n {
            let h = step * x[c].abs().max(1.0);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[c] += h;
            xm[c] -= h;
            let jp = self.field.jacobian(&Point::new(xp)?)?;
            let jm = self.field.jacobian(&Point::new(xm)?)?;
            for a in 0..n {
                for b in 0..n {
                    out[a * n * n + b * n + c] = (jp.entry(a, b) - jm.entry(a, b)) / (2.0 * h);
                }
            }
        }
        // symmetrize mixed partials
        for a in 0..n {
            for b in 0..n {
                for c in 0..b {
                    let sym = 0.5 * (out[a * n * n + b * n + c] + out[a * n * n + c * n + b]);
                    out[a * n * n + b * n + c] = sym;
                    out[a * n * n + c * n + b] = sym;
                }
            }
        }
        Ok(out)
    }

    fn norm_at(&self, x: &[f64]) -> Result<f64> {
        let v = self.field.eval(&Point::from_slice(x)?)?;
        Ok(v.data.iter().map(|a| a * a).sum::<f64>().sqrt())
    }

    /// Errors out when `|X(m)|` is below the regularity floor.
    pub fn check_regular(&self, m: &Point) -> Result<()> {
        let scale = 1.0 + m.coords().iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm = self.norm_at(m.coords())?;
        if norm < REGULARITY_FLOOR * scale {
            return Err(Error::NearSingular {
                point: m.coords().to_vec(),
                norm,
            });
        }
        Ok(())
    }
}

fn unit_block_projector(field: &TensorField) -> Option<(usize, usize)> {
    field.chart().unit_block()
}

fn project_unit_block(y: &mut [f64], block: (usize, usize)) {
    let (start, len) = block;
    let norm: f64 = y[start..start + len].iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 && (norm - 1.0).abs() > 1e-10 {
        for v in &mut y[start..start + len] {
            *v /= norm;
        }
    }
}

/// The time-t flow map of a vector field.
pub fn flow(x: &TensorField, m: &Point, t: f64, cfg: &IntegratorConfig) -> Result<Point> {
    let ff = FlowField::new(x)?;
    let rhs = |y: &[f64], dy: &mut [f64]| ff.eval_into(y, dy);
    let block = unit_block_projector(x);
    let mut obs = |_t: f64, y: &mut [f64]| {
        if let Some(b) = block {
            project_unit_block(y, b);
        }
    };
    let out = integrate_observed(
        &rhs,
        m.coords(),
        0.0,
        t,
        cfg,
        block.map(|_| &mut obs as integrator::StepObserver<'_>),
    )?;
    Point::new(out)
}

/// Flow map together with its Jacobian `D_m Fl^t(m)`, from the first
/// variational equation integrated alongside the base trajectory.
pub fn flow_with_jacobian(
    x: &TensorField,
    m: &Point,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(Point, DMatrix<f64>)> {
    let ff = FlowField::new(x)?;
    let n = ff.dim();
    let mut y0 = vec![0.0; n + n * n];
    y0[..n].copy_from_slice(m.coords());
    for a in 0..n {
        y0[n + a * n + a] = 1.0;
    }
    let rhs = variational_rhs(&ff, false);
    let block = unit_block_projector(x);
    let mut obs = |_t: f64, y: &mut [f64]| {
        if let Some(b) = block {
            project_unit_block(y, b);
        }
    };
    let out = integrate_observed(
        &rhs,
        &y0,
        0.0,
        t,
        cfg,
        block.map(|_| &mut obs as integrator::StepObserver<'_>),
    )?;
    let point = Point::new(out[..n].to_vec())?;
    let mut j = DMatrix::zeros(n, n);
    for a in 0..n {
        for i in 0..n {
            j[(a, i)] = out[n + a * n + i];
        }
    }
    Ok((point, j))
}

/// Builds the RHS of the (first and optionally second) variational system.
/// State layout: `[x (n), J (n^2, row-major), H (n^3, a*n^2 + i*n + j)]`.
pub(crate) fn variational_rhs<'a>(
    ff: &'a FlowField,
    with_hessian: bool,
) -> impl Fn(&[f64], &mut [f64]) -> Result<()> + 'a {
    let n = ff.dim();
    move |y: &[f64], dy: &mut [f64]| -> Result<()> {
        ff.eval_into(&y[..n], &mut dy[..n])?;
        let jac = ff.jacobian_matrix(&y[..n])?;
        // J' = DX J
        for a in 0..n {
            for i in 0..n {
                let mut acc = 0.0;
                for b in 0..n {
                    acc += jac[(a, b)] * y[n + b * n + i];
                }
                dy[n + a * n + i] = acc;
            }
        }
        if with_hessian {
            let hess = ff.hessian_flat(&y[..n])?;
            let off = n + n * n;
            for a in 0..n {
                for i in 0..n {
                    for jj in 0..n {
                        let mut acc = 0.0;
                        for b in 0..n {
                            acc += jac[(a, b)] * y[off + b * n * n + i * n + jj];
                        }
                        for b in 0..n {
                            for c in 0..n {
                                let d2 = hess[a * n * n + b * n + c];
                                if d2 != 0.0 {
                                    acc += d2 * y[n + b * n + i] * y[n + c * n + jj];
                                }
                            }
                        }
                        dy[off + a * n * n + i * n + jj] = acc;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Configuration for `detect_period`.
#[derive(Debug, Clone, Copy)]
pub struct PeriodDetectConfig {
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Fraction of the hint skipped before looking for returns.
    pub burn_in_fraction: f64,
    /// Search horizon as a multiple of the hint.
    pub horizon_factor: f64,
}

impl Default for PeriodDetectConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_newton_iters: 20,
            burn_in_fraction: 0.25,
            horizon_factor: 4.0,
        }
    }
}

/// First return time to the hyperplane through `m` normal to `X(m)`,
/// crossed in the forward direction, refined by Newton iteration on the
/// section condition. Returns the minimal period for convex periodic orbits.
pub fn detect_period(
    x: &TensorField,
    m: &Point,
    hint: f64,
    cfg: &IntegratorConfig,
    det: &PeriodDetectConfig,
) -> Result<f64> {
    let ff = FlowField::new(x)?;
    ff.check_regular(m)?;
    let n = ff.dim();
    let mut normal = vec![0.0; n];
    ff.eval_into(m.coords(), &mut normal)?;
    let nn: f64 = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut normal {
        *v /= nn;
    }
    let chart = x.chart();
    let section = |y: &[f64]| -> f64 {
        chart
            .displacement(y, m.coords())
            .iter()
            .zip(&normal)
            .map(|(d, nv)| d * nv)
            .sum()
    };
    let rhs = |y: &[f64], dy: &mut [f64]| ff.eval_into(y, dy);

    // coarse march
    let dt = hint / 64.0;
    let horizon = det.horizon_factor * hint;
    let mut t = 0.0;
    let mut y = m.coords().to_vec();
    let mut s_prev = 0.0;
    let mut bracket: Option<(f64, Vec<f64>, f64)> = None; // (t_a, state, s_a)
    while t < horizon {
        let y_next = integrate(&rhs, &y, t, t + dt, cfg)?;
        let t_next = t + dt;
        let s_next = section(&y_next);
        if t > det.burn_in_fraction * hint && s_prev < 0.0 && s_next >= 0.0 {
            bracket = Some((t, y.clone(), s_prev));
            t = t_next;
            break;
        }
        s_prev = s_next;
        y = y_next;
        t = t_next;
    }
    let (t_a, y_a, _s_a) = bracket.ok_or(Error::NoReturn {
        searched: horizon,
        hint,
    })?;

    // Newton refinement from the right end of the bracket
    let mut t_star = t;
    let mut dy = vec![0.0; n];
    for _ in 0..det.max_newton_iters {
        let y_t = integrate(&rhs, &y_a, t_a, t_star, cfg)?;
        let s = section(&y_t);
        ff.eval_into(&y_t, &mut dy)?;
        let sdot: f64 = dy.iter().zip(&normal).map(|(a, b)| a * b).sum();
        if sdot.abs() < 1e-12 {
            return Err(Error::PeriodRefinementFailed {
                iterations: det.max_newton_iters,
            });
        }
        let delta = s / sdot;
        t_star -= delta;
        if delta.abs() < det.newton_tol * hint.max(1.0) {
            return Ok(t_star);
        }
    }
    Err(Error::PeriodRefinementFailed {
        iterations: det.max_newton_iters,
    })
}
