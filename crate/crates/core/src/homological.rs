//! Global solutions of the homological equations `L_X(unknown) = rhs - remainder`
//! for functions, k-multivector fields, and k-forms, with solvability and
//! kernel diagnostics.
//!
//! The closed-form solutions are assembled from the averaging operators; the
//! remainder is invariant by construction and every bundle is verified
//! pointwise against the first-principles coordinate Lie derivative.

use crate::averaging::{average, lie_x_coordinate, pullback_on_orbit, s_op, s_squared};
use crate::chart::Point;
use crate::components::Components;
use crate::error::{Error, Result};
use crate::exterior::{exterior_derivative, interior_form, interior_multivector, wedge};
use crate::field::{TensorField, Valence};
use crate::flow::{OrbitTier, PeriodicFlow};
use std::sync::Arc;

/// Probe set and tolerances shared by the solvers.
#[derive(Clone)]
pub struct SolveConfig {
    pub probes: Vec<Point>,
    /// Acceptance threshold on `max |L_X(sol) - (rhs - remainder)|`.
    pub residual_threshold: f64,
    /// Threshold on `max |remainder - <remainder>|`.
    pub remainder_invariance_tol: f64,
    /// Relative invariance tolerance for user-supplied gauges.
    pub gauge_invariance_tol: f64,
    /// Replace an almost-invariant gauge by its average instead of failing.
    pub repair_gauge: bool,
}

impl SolveConfig {
    pub fn new(probes: Vec<Point>) -> Self {
        Self {
            probes,
            residual_threshold: 1e-6,
            remainder_invariance_tol: 1e-8,
            gauge_invariance_tol: 1e-7,
            repair_gauge: false,
        }
    }
}

/// Pointwise residual diagnostics of a solved pair.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub max_remainder_deviation: f64,
    pub worst_point: Option<Point>,
}

/// A solved homological pair: `L_X(solution) = rhs - remainder` with the
/// remainder invariant, plus the free invariant gauge that produced it.
pub struct SolutionBundle {
    pub solution: TensorField,
    pub remainder: TensorField,
    pub gauge: TensorField,
    pub report: ResidualReport,
}

/// Max deviation of a field from its own average over the probe points.
pub fn invariance_deviation(
    pf: &Arc<PeriodicFlow>,
    field: &TensorField,
    probes: &[Point],
) -> Result<f64> {
    use rayon::prelude::*;
    let avg = average(pf, field)?;
    let per_point: Result<Vec<f64>> = probes
        .par_iter()
        .map(|m| {
            let v = field.eval(m)?;
            let a = avg.eval(m)?;
            let mut worst = 0.0f64;
            for c in 0..v.data.len() {
                worst = worst.max((v.data[c] - a.data[c]).abs());
            }
            Ok(worst)
        })
        .collect();
    Ok(per_point?.into_iter().fold(0.0, f64::max))
}

fn checked_gauge(
    pf: &Arc<PeriodicFlow>,
    gauge: Option<TensorField>,
    valence: Valence,
    cfg: &SolveConfig,
) -> Result<TensorField> {
    let gauge = match gauge {
        Some(g) => g,
        None => return Ok(TensorField::zero(pf.chart(), valence)),
    };
    if gauge.valence() != valence {
        return Err(Error::ValenceMismatch(format!(
            "gauge must be a {valence}, got {}",
            gauge.valence()
        )));
    }
    let mut scale = 1.0f64;
    for m in &cfg.probes {
        scale = scale.max(gauge.eval(m)?.max_abs());
    }
    let dev = invariance_deviation(pf, &gauge, &cfg.probes)?;
    if dev <= cfg.gauge_invariance_tol * scale {
        return Ok(gauge);
    }
    if cfg.repair_gauge {
        return average(pf, &gauge);
    }
    Err(Error::NonInvariantGauge {
        point: cfg
            .probes
            .first()
            .map(|p| p.coords().to_vec())
            .unwrap_or_default(),
        deviation: dev / scale,
    })
}

/// `max_probe |L_X(solution) - (rhs - remainder)|`, the defining residual of
/// a homological pair, via the coordinate-formula Lie derivative.
pub fn homological_residual(
    pf: &Arc<PeriodicFlow>,
    solution: &TensorField,
    rhs: &TensorField,
    remainder: &TensorField,
    probes: &[Point],
) -> Result<(f64, Option<Point>)> {
    use rayon::prelude::*;
    let lhs = lie_x_coordinate(pf, solution)?;
    let per_point: Result<Vec<f64>> = probes
        .par_iter()
        .map(|m| {
            let l = lhs.eval(m)?;
            let r = rhs.eval(m)?;
            let rem = remainder.eval(m)?;
            let mut worst = 0.0f64;
            for c in 0..l.data.len() {
                worst = worst.max((l.data[c] - (r.data[c] - rem.data[c])).abs());
            }
            Ok(worst)
        })
        .collect();
    let per_point = per_point?;
    let mut worst = 0.0f64;
    let mut worst_point = None;
    for (m, w) in probes.iter().zip(&per_point) {
        if *w > worst {
            worst = *w;
            worst_point = Some(m.clone());
        }
    }
    Ok((worst, worst_point))
}

fn verify_bundle(
    pf: &Arc<PeriodicFlow>,
    solution: TensorField,
    remainder: TensorField,
    gauge: TensorField,
    rhs: &TensorField,
    cfg: &SolveConfig,
) -> Result<SolutionBundle> {
    let (max_residual, worst_point) =
        homological_residual(pf, &solution, rhs, &remainder, &cfg.probes)?;
    let max_remainder_deviation = invariance_deviation(pf, &remainder, &cfg.probes)?;
    if max_residual > cfg.residual_threshold {
        return Err(Error::ResidualExceeded {
            residual: max_residual,
            threshold: cfg.residual_threshold,
        });
    }
    if max_remainder_deviation > cfg.remainder_invariance_tol {
        return Err(Error::ResidualExceeded {
            residual: max_remainder_deviation,
            threshold: cfg.remainder_invariance_tol,
        });
    }
    Ok(SolutionBundle {
        solution,
        remainder,
        gauge,
        report: ResidualReport {
            max_residual,
            max_remainder_deviation,
            worst_point,
        },
    })
}

/// Solves `L_X F = G - <G>` for a scalar field G with invariant gauge K:
/// the remainder is the average and `F = (1/omega) S(G) + K`.
pub fn solve_function(
    pf: &Arc<PeriodicFlow>,
    g: &TensorField,
    gauge: Option<TensorField>,
    cfg: &SolveConfig,
) -> Result<SolutionBundle> {
    if g.valence() != Valence::Scalar {
        return Err(Error::ValenceMismatch(format!(
            "solve_function expects a scalar field, got {}",
            g.valence()
        )));
    }
    let k = checked_gauge(pf, gauge, Valence::Scalar, cfg)?;
    let inv_omega = pf.omega().reciprocal()?;
    let remainder = average(pf, g)?;
    let solution = s_op(pf, g)?.scale_by(&inv_omega)?.add(&k)?;
    verify_bundle(pf, solution, remainder, k, g, cfg)
}

/// Solves the homological equation for a k-multivector field B with
/// invariant gauge C:
/// remainder `= <B> + (1/omega) X ^ i_{d omega} C`,
/// solution  `= (1/omega) S(B) + (1/omega^3) X ^ S^2(i_{d omega} B) + C`.
/// Degree-0 input degenerates to `solve_function` (the contraction of a
/// scalar vanishes by definition).
pub fn solve_kvector(
    pf: &Arc<PeriodicFlow>,
    b: &TensorField,
    gauge: Option<TensorField>,
    cfg: &SolveConfig,
) -> Result<SolutionBundle> {
    match b.valence() {
        Valence::Scalar => solve_function(pf, b, gauge, cfg),
        Valence::MultiVector(_) => {
            let c = checked_gauge(pf, gauge, b.valence(), cfg)?;
            let x = pf.x_field();
            let inv_omega = pf.omega().reciprocal()?;
            let inv_omega3 = inv_omega.powi(3)?;
            let domega = pf.omega_differential()?;

            let s2 = s_squared(pf, &interior_multivector(&domega, b)?)?;
            let solution = s_op(pf, b)?
                .scale_by(&inv_omega)?
                .add(&wedge(x, &s2)?.scale_by(&inv_omega3)?)?
                .add(&c)?;

            let remainder = average(pf, b)?.add(
                &wedge(x, &interior_multivector(&domega, &c)?)?.scale_by(&inv_omega)?,
            )?;
            verify_bundle(pf, solution, remainder, c, b, cfg)
        }
        v => Err(Error::ValenceMismatch(format!(
            "solve_kvector expects a multivector, got {v}"
        ))),
    }
}

/// Vector-field case (`[X, Z] = W - remainder`): the k = 1 specialization,
/// where the contraction `i_{d omega} W` is the scalar `L_W omega`.
pub fn solve_vector(
    pf: &Arc<PeriodicFlow>,
    w: &TensorField,
    gauge: Option<TensorField>,
    cfg: &SolveConfig,
) -> Result<SolutionBundle> {
    if w.valence() != Valence::MultiVector(1) {
        return Err(Error::ValenceMismatch(format!(
            "solve_vector expects a vector field, got {}",
            w.valence()
        )));
    }
    solve_kvector(pf, w, gauge, cfg)
}

/// Solves the homological equation for a k-form eta with invariant gauge mu:
/// remainder `= <eta> - (1/omega) d omega ^ i_X mu`,
/// solution  `= (1/omega) S(eta) - (1/omega^3) d omega ^ S^2(i_X eta) + mu`.
pub fn solve_kform(
    pf: &Arc<PeriodicFlow>,
    eta: &TensorField,
    gauge: Option<TensorField>,
    cfg: &SolveConfig,
) -> Result<SolutionBundle> {
    match eta.valence() {
        Valence::Scalar => solve_function(pf, eta, gauge, cfg),
        Valence::Form(_) => {
            let mu = checked_gauge(pf, gauge, eta.valence(), cfg)?;
            let x = pf.x_field();
            let inv_omega = pf.omega().reciprocal()?;
            let inv_omega3 = inv_omega.powi(3)?;
            let domega = pf.omega_differential()?;

            let s2 = s_squared(pf, &interior_form(x, eta)?)?;
            let solution = s_op(pf, eta)?
                .scale_by(&inv_omega)?
                .sub(&wedge(&domega, &s2)?.scale_by(&inv_omega3)?)?
                .add(&mu)?;

            let remainder = average(pf, eta)?
                .sub(&wedge(&domega, &interior_form(x, &mu)?)?.scale_by(&inv_omega)?)?;
            verify_bundle(pf, solution, remainder, mu, eta, cfg)
        }
        v => Err(Error::ValenceMismatch(format!(
            "solve_kform expects a form, got {v}"
        ))),
    }
}

/// One probe row of a solvability diagnostic.
#[derive(Debug, Clone)]
pub struct ConditionRow {
    pub point: Point,
    pub singular_base: bool,
    /// Residuals of the three necessary conditions; `None` when a condition
    /// is vacuous at this point (condition 1 away from singular points, or a
    /// wedge that overflows the chart dimension).
    pub residuals: [Option<f64>; 3],
}

/// Solvability diagnostic: evaluated residuals of the necessary conditions
/// at each probe. The checks are necessary, not sufficient.
#[derive(Debug, Clone)]
pub struct NecessaryConditionsReport {
    pub rows: Vec<ConditionRow>,
    pub tol: f64,
}

impl NecessaryConditionsReport {
    pub fn all_passed(&self) -> bool {
        self.violations().is_empty()
    }

    /// (probe index, condition index, residual) for each violated condition.
    pub fn violations(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            for (c, r) in row.residuals.iter().enumerate() {
                if let Some(r) = r {
                    if *r > self.tol {
                        out.push((i, c, *r));
                    }
                }
            }
        }
        out
    }
}

/// Average at a point, evaluable at fixed points of the action (constant
/// orbit with honest variational data; results there are flagged upstream).
fn average_at_allow_degenerate(
    pf: &PeriodicFlow,
    field: &TensorField,
    m: &Point,
) -> Result<(Components, bool)> {
    let sample = pf.orbit_allow_degenerate(m, pf.config.default_nodes, OrbitTier::Jacobian)?;
    let pulled = pullback_on_orbit(field, &sample)?;
    let mut out = Components::zeros(field.dim(), field.degree());
    for p in &pulled {
        out.add_assign_scaled(p, 1.0);
    }
    out.scale(1.0 / sample.node_count as f64);
    Ok((out, sample.degenerate))
}

fn is_singular(pf: &PeriodicFlow, m: &Point) -> Result<bool> {
    let xv = pf.x_field().eval(m)?;
    let norm: f64 = xv.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = 1.0 + m.coords().iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(norm < crate::flow::REGULARITY_FLOOR * scale)
}

/// Necessary conditions for solvability of `L_X A = B` (k-vectors):
/// vanishing of the average at zeros of X, `X ^ <B> = 0`, and
/// `i_{d omega} <B> = 0`.
pub fn necessary_conditions_kvector(
    pf: &Arc<PeriodicFlow>,
    b: &TensorField,
    points: &[Point],
    tol: f64,
) -> Result<NecessaryConditionsReport> {
    let domega = pf.omega_differential()?;
    let dim = pf.dim();
    let k = b.degree();
    let mut rows = Vec::with_capacity(points.len());
    for m in points {
        let singular = is_singular(pf, m)?;
        let (avg, _) = average_at_allow_degenerate(pf, b, m)?;
        let cond1 = if singular { Some(avg.max_abs()) } else { None };
        let cond2 = if k + 1 <= dim {
            let xv = pf.x_field().eval(m)?;
            Some(wedge_components(&xv, &avg, dim))
        } else {
            None
        };
        let cond3 = {
            let dw = domega.eval(m)?;
            Some(contract_first(&dw, &avg, dim))
        };
        rows.push(ConditionRow {
            point: m.clone(),
            singular_base: singular,
            residuals: [cond1, cond2, cond3],
        });
    }
    Ok(NecessaryConditionsReport { rows, tol })
}

/// Necessary conditions for solvability of `L_X theta = eta` (k-forms):
/// vanishing averages at zeros of X, `d omega ^ <eta> = 0`, `i_X <eta> = 0`.
pub fn necessary_conditions_kform(
    pf: &Arc<PeriodicFlow>,
    eta: &TensorField,
    points: &[Point],
    tol: f64,
) -> Result<NecessaryConditionsReport> {
    let domega = pf.omega_differential()?;
    let dim = pf.dim();
    let k = eta.degree();
    let mut rows = Vec::with_capacity(points.len());
    for m in points {
        let singular = is_singular(pf, m)?;
        let (avg, _) = average_at_allow_degenerate(pf, eta, m)?;
        let cond1 = if singular { Some(avg.max_abs()) } else { None };
        let cond2 = if k + 1 <= dim {
            let dw = domega.eval(m)?;
            Some(wedge_components(&dw, &avg, dim))
        } else {
            None
        };
        let cond3 = {
            let xv = pf.x_field().eval(m)?;
            Some(contract_first(&xv, &avg, dim))
        };
        rows.push(ConditionRow {
            point: m.clone(),
            singular_base: singular,
            residuals: [cond1, cond2, cond3],
        });
    }
    Ok(NecessaryConditionsReport { rows, tol })
}

// pointwise helpers on raw components (degree-1 probe against degree-k data)
fn wedge_components(one: &Components, kdeg: &Components, dim: usize) -> f64 {
    use crate::multiindex::{index_sets, merge_sign, rank};
    let k = kdeg.degree;
    let mut out = vec![0.0; crate::multiindex::binomial(dim, k + 1)];
    for (a, &x) in one.data.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (si, set) in index_sets(dim, k).iter().enumerate() {
            if let Some((sign, merged)) = merge_sign(&[a], set) {
                out[rank(dim, &merged)] += sign * x * kdeg.data[si];
            }
        }
    }
    out.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn contract_first(one: &Components, kdeg: &Components, dim: usize) -> f64 {
    use crate::multiindex::{index_sets, merge_sign, rank};
    let k = kdeg.degree;
    if k == 0 {
        return 0.0; // contraction of a scalar vanishes by definition
    }
    let sets_out = index_sets(dim, k - 1);
    let mut worst = 0.0f64;
    for set in &sets_out {
        let mut acc = 0.0;
        for a in 0..dim {
            if let Some((sign, merged)) = merge_sign(&[a], set) {
                acc += sign * one.data[a] * kdeg.data[rank(dim, &merged)];
            }
        }
        worst = worst.max(acc.abs());
    }
    worst
}

/// Obstruction for the variant with an `L_X`-commuting remainder:
/// `X ^ i_{d omega} <B> = 0` for multivectors, `d omega ^ i_X <eta> = 0`
/// for forms. Returns the verdict and a witness point when violated.
pub fn commuting_remainder_condition(
    pf: &Arc<PeriodicFlow>,
    field: &TensorField,
    points: &[Point],
    tol: f64,
) -> Result<(bool, Option<(Point, f64)>)> {
    let domega = pf.omega_differential()?;
    let avg = average(pf, field)?;
    let obstruction = match field.valence() {
        Valence::MultiVector(_) => wedge(pf.x_field(), &interior_multivector(&domega, &avg)?)?,
        Valence::Form(_) => wedge(&domega, &interior_form(pf.x_field(), &avg)?)?,
        Valence::Scalar => {
            // scalars: solvability is governed by <B> = 0 alone; the
            // commuting variant adds no obstruction
            return Ok((true, None));
        }
    };
    for m in points {
        let v = obstruction.eval(m)?.max_abs();
        if v > tol {
            return Ok((false, Some((m.clone(), v))));
        }
    }
    Ok((true, None))
}

/// Membership test for the kernel of `L_X`: invariance plus the wedge or
/// contraction obstruction, at the probe points.
pub fn kernel_membership(
    pf: &Arc<PeriodicFlow>,
    field: &TensorField,
    points: &[Point],
    tol: f64,
) -> Result<(bool, Option<(Point, f64)>)> {
    let dev = invariance_deviation(pf, field, points)?;
    if dev > tol {
        return Ok((false, points.first().map(|p| (p.clone(), dev))));
    }
    let domega = pf.omega_differential()?;
    let obstruction = match field.valence() {
        Valence::MultiVector(_) => wedge(pf.x_field(), &interior_multivector(&domega, field)?)?,
        Valence::Form(_) => wedge(&domega, &interior_form(pf.x_field(), field)?)?,
        Valence::Scalar => {
            // invariant scalars are exactly the kernel
            return Ok((true, None));
        }
    };
    for m in points {
        let v = obstruction.eval(m)?.max_abs();
        if v > tol {
            return Ok((false, Some((m.clone(), v))));
        }
    }
    Ok((true, None))
}

/// Decomposition of a closed k-form into its invariant average plus an exact
/// part with explicit primitive `i_U S(eta)`.
pub struct ClosedFormDecomposition {
    pub average: TensorField,
    /// The (k-1)-form primitive whose differential is the fluctuating part.
    pub primitive: TensorField,
    pub max_residual: f64,
}

/// Splits a closed form as `eta = <eta> + d(i_U S(eta))`, verifying
/// closedness first and the reconstruction at the probes.
pub fn decompose_closed_form(
    pf: &Arc<PeriodicFlow>,
    eta: &TensorField,
    probes: &[Point],
    closed_tol: f64,
) -> Result<ClosedFormDecomposition> {
    if !matches!(eta.valence(), Valence::Form(_)) {
        return Err(Error::ValenceMismatch(format!(
            "decompose_closed_form expects a k-form, got {}",
            eta.valence()
        )));
    }
    if eta.degree() < pf.dim() {
        let deta = exterior_derivative(eta)?;
        for m in probes {
            let v = deta.eval(m)?.max_abs();
            if v > closed_tol {
                return Err(Error::NotClosed {
                    point: m.coords().to_vec(),
                    residual: v,
                });
            }
        }
    }
    let theta0 = s_op(pf, eta)?;
    let primitive = interior_form(pf.generator(), &theta0)?;
    let avg = average(pf, eta)?;
    let exact_part = exterior_derivative(&primitive)?;
    let mut worst = 0.0f64;
    for m in probes {
        let e = eta.eval(m)?;
        let a = avg.eval(m)?;
        let d = exact_part.eval(m)?;
        for c in 0..e.data.len() {
            worst = worst.max((e.data[c] - a.data[c] - d.data[c]).abs());
        }
    }
    Ok(ClosedFormDecomposition {
        average: avg,
        primitive,
        max_residual: worst,
    })
}
