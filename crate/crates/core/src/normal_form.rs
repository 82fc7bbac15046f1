//! First-order normalization of perturbed vector fields `X + eps W` by the
//! time-eps flow of a generator solving the vector homological equation.
//!
//! The near-identity transformation pulls the perturbed field back to
//! `X + eps W_bar + O(eps^2)`; the order is verified empirically by a
//! log-log fit of the pullback residual over an epsilon grid.

use crate::averaging::{average, s_op, s_squared};
use crate::chart::Point;
use crate::error::{Error, Result};
use crate::exterior::{interior_multivector, lie_bracket};
use crate::field::{TensorField, Valence};
use crate::flow::{integrate_carry, variational_rhs, FlowField, PeriodicFlow};
use crate::homological::invariance_deviation;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

/// A perturbed vector field `X + eps W` over a periodic flow, with the
/// epsilon grid used for order checks.
pub struct PerturbedSystem {
    pub flow: Arc<PeriodicFlow>,
    pub perturbation: TensorField,
    pub epsilon_grid: Vec<f64>,
}

/// Default grid for the order fit.
pub fn default_epsilon_grid() -> Vec<f64> {
    vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
}

impl PerturbedSystem {
    pub fn new(flow: Arc<PeriodicFlow>, perturbation: TensorField) -> Result<Self> {
        if perturbation.valence() != Valence::MultiVector(1) {
            return Err(Error::ValenceMismatch(format!(
                "perturbation must be a vector field, got {}",
                perturbation.valence()
            )));
        }
        if !Arc::ptr_eq(flow.chart(), perturbation.chart()) {
            return Err(Error::ChartMismatch);
        }
        Ok(Self {
            flow,
            perturbation,
            epsilon_grid: default_epsilon_grid(),
        })
    }

    pub fn with_epsilon_grid(mut self, grid: Vec<f64>) -> Self {
        self.epsilon_grid = grid;
        self
    }
}

fn checked_invariant_gauge(
    ps: &PerturbedSystem,
    y: Option<TensorField>,
    probes: &[Point],
    tol: f64,
) -> Result<TensorField> {
    match y {
        None => Ok(TensorField::zero(ps.flow.chart(), Valence::MultiVector(1))),
        Some(y) => {
            let dev = invariance_deviation(&ps.flow, &y, probes)?;
            if dev > tol {
                return Err(Error::NonInvariantGauge {
                    point: probes.first().map(|p| p.coords().to_vec()).unwrap_or_default(),
                    deviation: dev,
                });
            }
            Ok(y)
        }
    }
}

/// The normalization generator
/// `Z = (1/omega) S(W) + (1/omega^3) S^2(L_W omega) X + Y`.
pub fn build_generator(
    ps: &PerturbedSystem,
    y: Option<TensorField>,
    probes: &[Point],
) -> Result<TensorField> {
    let pf = &ps.flow;
    let y = checked_invariant_gauge(ps, y, probes, 1e-6)?;
    let w = &ps.perturbation;
    let inv_omega = pf.omega().reciprocal()?;
    let inv_omega3 = inv_omega.powi(3)?;
    let domega = pf.omega_differential()?;
    let lw_omega = interior_multivector(&domega, w)?;
    s_op(pf, w)?
        .scale_by(&inv_omega)?
        .add(&pf.x_field().scale_by(&s_squared(pf, &lw_omega)?)?.scale_by(&inv_omega3)?)?
        .add(&y)
}

/// The averaged remainder `W_bar = <W> + (L_Y omega / omega) X`, checked to
/// be invariant at the probes.
pub fn averaged_remainder(
    ps: &PerturbedSystem,
    y: Option<TensorField>,
    probes: &[Point],
) -> Result<TensorField> {
    let pf = &ps.flow;
    let y = checked_invariant_gauge(ps, y, probes, 1e-6)?;
    let avg = average(pf, &ps.perturbation)?;
    let domega = pf.omega_differential()?;
    let ly_omega = interior_multivector(&domega, &y)?;
    let wbar = avg.add(
        &pf.x_field()
            .scale_by(&ly_omega.scale_by(&pf.omega().reciprocal()?)?)?,
    )?;
    let dev = invariance_deviation(pf, &wbar, probes)?;
    if dev > 1e-6 {
        return Err(Error::ResidualExceeded {
            residual: dev,
            threshold: 1e-6,
        });
    }
    Ok(wbar)
}

/// Outcome of the normalization-condition check `L_<W> omega = 0`.
#[derive(Debug, Clone)]
pub struct NormalizationCheck {
    pub holds: bool,
    pub max_residual: f64,
    pub witness: Option<Point>,
    /// `max |[X, W_bar]|` over the probes, evaluated when the condition holds.
    pub bracket_residual: Option<f64>,
}

/// Checks `L_<W> omega = 0` at the probes; when it holds, additionally
/// verifies that the averaged remainder commutes with X.
pub fn check_normalization_condition(
    ps: &PerturbedSystem,
    probes: &[Point],
    tol: f64,
) -> Result<NormalizationCheck> {
    let pf = &ps.flow;
    let avg = average(pf, &ps.perturbation)?;
    let mut max_residual = 0.0f64;
    let mut witness = None;
    for m in probes {
        let a = avg.eval(m)?;
        let wg = pf.omega().jacobian(m)?;
        let r: f64 = (0..m.dim()).map(|i| a.data[i] * wg.entry(0, i)).sum();
        if r.abs() > max_residual {
            max_residual = r.abs();
            witness = Some(m.clone());
        }
    }
    let holds = max_residual <= tol;
    let bracket_residual = if holds {
        let wbar = averaged_remainder(ps, None, probes)?;
        let bracket = lie_bracket(pf.x_field(), &wbar)?;
        let mut worst = 0.0f64;
        for m in probes {
            worst = worst.max(bracket.eval(m)?.max_abs());
        }
        Some(worst)
    } else {
        None
    };
    Ok(NormalizationCheck {
        holds,
        max_residual,
        witness: if holds { None } else { witness },
        bracket_residual,
    })
}

/// Residual curve of the near-identity transformation: for each epsilon,
/// `max_probe |(Fl_Z^eps)^* (X + eps W) - X - eps W_bar|`. The pullback of
/// the perturbed field is the inverse flow Jacobian applied at the image
/// point; one variational integration per probe visits the whole grid.
pub fn residual_curve(
    ps: &PerturbedSystem,
    z: &TensorField,
    wbar: &TensorField,
    probes: &[Point],
) -> Result<Vec<(f64, f64)>> {
    let pf = &ps.flow;
    let dim = pf.dim();
    let mut grid = ps.epsilon_grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let zops = FlowField::new(z)?;
    // the generator is built from orbit integrations whose noise sits around
    // 1e-9; integrating its flow tighter than that stalls the controller
    let mut integ = pf.config.integrator;
    integ.rel_tol = integ.rel_tol.max(1e-8);
    integ.abs_tol = integ.abs_tol.max(1e-8);

    let per_probe: Result<Vec<Vec<f64>>> = probes
        .par_iter()
        .map(|m| {
            let rhs = variational_rhs(&zops, false);
            let mut y = vec![0.0; dim + dim * dim];
            y[..dim].copy_from_slice(m.coords());
            for a in 0..dim {
                y[dim + a * dim + a] = 1.0;
            }
            let x_m = pf.x_field().eval(m)?;
            let wbar_m = wbar.eval(m)?;
            let mut t = 0.0;
            let mut carry = 0.0;
            let mut out = Vec::with_capacity(grid.len());
            for &eps in &grid {
                y = integrate_carry(&rhs, &y, t, eps, &integ, None, &mut carry)?;
                t = eps;
                let image = Point::new(y[..dim].to_vec())?;
                let mut jac = DMatrix::zeros(dim, dim);
                for a in 0..dim {
                    for i in 0..dim {
                        jac[(a, i)] = y[dim + a * dim + i];
                    }
                }
                let lu = jac.lu();
                let x_im = pf.x_field().eval(&image)?;
                let w_im = ps.perturbation.eval(&image)?;
                let mut p_eps = DVector::zeros(dim);
                for i in 0..dim {
                    p_eps[i] = x_im.data[i] + eps * w_im.data[i];
                }
                let pulled = lu.solve(&p_eps).ok_or(Error::SingularJacobian {
                    cond: f64::INFINITY,
                })?;
                let mut resid = 0.0f64;
                for i in 0..dim {
                    resid = resid
                        .max((pulled[i] - x_m.data[i] - eps * wbar_m.data[i]).abs());
                }
                out.push(resid);
            }
            Ok(out)
        })
        .collect();
    let per_probe = per_probe?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let r = per_probe.iter().map(|v| v[k]).fold(0.0, f64::max);
            (eps, r)
        })
        .collect())
}

/// Least-squares slope of `ln residual` against `ln eps`, discarding points
/// below the integrator noise floor. `None` when fewer than two points
/// survive.
pub fn fit_order(curve: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|(_, r)| *r > 1e-11)
        .map(|(e, r)| (e.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Result of a first-order normalization run.
pub struct NormalFormResult {
    pub generator: TensorField,
    pub averaged: TensorField,
    pub residual_curve: Vec<(f64, f64)>,
    pub fitted_order: Option<f64>,
}

/// Builds the generator and averaged remainder, then measures the residual
/// curve and fits the order.
pub fn normalize_first_order(
    ps: &PerturbedSystem,
    y: Option<TensorField>,
    probes: &[Point],
) -> Result<NormalFormResult> {
    let z = build_generator(ps, y.clone(), probes)?;
    let wbar = averaged_remainder(ps, y, probes)?;
    let curve = residual_curve(ps, &z, &wbar, probes)?;
    let fitted_order = fit_order(&curve);
    Ok(NormalFormResult {
        generator: z,
        averaged: wbar,
        residual_curve: curve,
        fitted_order,
    })
}

/// Chooses the invariant gauge that kills the vertical part of the averaged
/// remainder: with `a_i = i_{frame_i} d omega`,
/// `Y = -(<c0>/a^2) sum_i a_i frame_i`, where `c0` is the generator
/// coefficient of W in the frame `{frame..., generator}`. The frame fields
/// must be invariant and, together with the generator, form a pointwise
/// basis; `d omega != 0` is required throughout.
pub fn choose_vertical_killer(
    ps: &PerturbedSystem,
    frame: &[TensorField],
    probes: &[Point],
) -> Result<TensorField> {
    let pf = &ps.flow;
    let dim = pf.dim();
    if frame.len() + 1 != dim {
        return Err(Error::Config(format!(
            "frame of {} fields plus the generator cannot span all {dim} directions",
            frame.len()
        )));
    }
    for f in frame {
        let dev = invariance_deviation(pf, f, probes)?;
        if dev > 1e-6 {
            return Err(Error::NonInvariantGauge {
                point: probes.first().map(|p| p.coords().to_vec()).unwrap_or_default(),
                deviation: dev,
            });
        }
    }
    let domega = pf.omega_differential()?;
    // nondegeneracy of the frequency differential at the probes
    for m in probes {
        let dw = domega.eval(m)?;
        if dw.max_abs() < 1e-10 {
            return Err(Error::Nondegenerate {
                point: m.coords().to_vec(),
                what: "d omega vanishes (vertical part cannot be removed)".into(),
            });
        }
    }
    // a_i = d omega (frame_i), invariant scalars; a^2 bounded away from zero
    let a_fields: Vec<TensorField> = frame
        .iter()
        .map(|f| interior_multivector(&domega, f))
        .collect::<Result<_>>()?;
    let mut a_sq = TensorField::constant_scalar(pf.chart(), 0.0);
    for a in &a_fields {
        a_sq = a_sq.add(&a.scale_by(a)?)?;
    }
    for m in probes {
        let v = a_sq.eval(m)?.as_scalar();
        if v < 1e-12 {
            return Err(Error::Nondegenerate {
                point: m.coords().to_vec(),
                what: format!("frame pairing with d omega degenerates (a^2 = {v:.3e})"),
            });
        }
    }
    // vertical coefficient of W in the frame {frame..., generator}
    let c0 = vertical_coefficient(pf, frame, &ps.perturbation)?;
    let avg_c0 = average(pf, &c0)?;
    let inv_a_sq = a_sq.reciprocal()?;
    let mut y = TensorField::zero(pf.chart(), Valence::MultiVector(1));
    for (f, a) in frame.iter().zip(&a_fields) {
        y = y.add(
            &f.scale_by(&avg_c0.scale_by(a)?.scale_by(&inv_a_sq)?)?
                .scale_const(-1.0),
        )?;
    }
    Ok(y)
}

/// The coefficient of the generator direction when `w` is decomposed
/// pointwise in the basis `{frame..., generator}`.
pub fn vertical_coefficient(
    pf: &Arc<PeriodicFlow>,
    frame: &[TensorField],
    w: &TensorField,
) -> Result<TensorField> {
    let dim = pf.dim();
    let frame: Vec<TensorField> = frame.to_vec();
    let gen = pf.generator().clone();
    let w = w.clone();
    let chart = pf.chart().clone();
    Ok(TensorField::from_parts(
        chart,
        Valence::Scalar,
        format!("vertical-coef({})", w.label()),
        1e-6,
        Box::new(move |m: &Point| {
            let mut basis = DMatrix::zeros(dim, dim);
            for (col, f) in frame.iter().enumerate() {
                let v = f.eval(m)?;
                for r in 0..dim {
                    basis[(r, col)] = v.data[r];
                }
            }
            let g = gen.eval(m)?;
            for r in 0..dim {
                basis[(r, dim - 1)] = g.data[r];
            }
            let wv = w.eval(m)?;
            let rhs = DVector::from_column_slice(&wv.data);
            let sol = basis.lu().solve(&rhs).ok_or(Error::FrameDegenerate {
                point: m.coords().to_vec(),
            })?;
            Ok(crate::components::Components::scalar(dim, sol[dim - 1]))
        }),
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::CoordChart;
    use crate::flow::PeriodicFlowConfig;
    use crate::probe::{probe_points, ProbeBox};
    use crate::quadrature::quartic_constant;
    use approx::assert_abs_diff_eq;

    fn harmonic_flow() -> Arc<PeriodicFlow> {
        let chart =
            CoordChart::with_excluded(&["q", "p"], &[-8.0, -8.0], &[8.0, 8.0], |x: &[f64]| {
                x[0] * x[0] + x[1] * x[1] < 1e-6
            })
            .unwrap();
        let x = TensorField::vector_field(
            &chart,
            "X",
            |x| vec![x[1], -x[0]],
            Some(Box::new(|_| vec![0.0, 1.0, -1.0, 0.0])),
        );
        let omega = TensorField::constant_scalar(&chart, 1.0);
        PeriodicFlow::new(
            &x,
            &omega,
            PeriodicFlowConfig::default(),
            &[Point::new(vec![1.0, 0.0]).unwrap()],
        )
        .unwrap()
    }

    fn quartic_flow() -> Arc<PeriodicFlow> {
        let chart =
            CoordChart::with_excluded(&["q1", "p1"], &[-4.0, -4.0], &[4.0, 4.0], |x: &[f64]| {
                x[0] * x[0] + x[1] * x[1] < 1e-4
            })
            .unwrap();
        let x = TensorField::vector_field(
            &chart,
            "Xq",
            |x| vec![x[1], -x[0] * x[0] * x[0]],
            Some(Box::new(|x| vec![0.0, 1.0, -3.0 * x[0] * x[0], 0.0])),
        );
        let c = quartic_constant();
        let omega = TensorField::scalar_field(
            &chart,
            "omega",
            move |x| (2.0 * x[1] * x[1] + x[0].powi(4)).powf(0.25) / (2.0 * c),
            Some(Box::new(move |x| {
                let u = 2.0 * x[1] * x[1] + x[0].powi(4);
                let f = u.powf(-0.75) / (2.0 * c);
                vec![f * x[0].powi(3), f * x[1]]
            })),
        );
        PeriodicFlow::new(
            &x,
            &omega,
            PeriodicFlowConfig::default(),
            &[Point::new(vec![1.0, 0.0]).unwrap()],
        )
        .unwrap()
    }

    fn probes(seed: u64, n: usize) -> Vec<Point> {
        let bx = ProbeBox::new(vec![0.6, -0.4], vec![1.3, 0.4]);
        probe_points(&bx, seed, n, |_| true).unwrap()
    }

    #[test]
    fn hamiltonian_perturbation_normalizes_at_second_order() {
        // W = Hamiltonian field of q^4: slope of the residual curve is ~2
        let pf = harmonic_flow();
        let w = TensorField::vector_field(
            pf.chart(),
            "Vq4",
            |x| vec![0.0, -4.0 * x[0].powi(3)],
            Some(Box::new(|x| vec![0.0, 0.0, -12.0 * x[0] * x[0], 0.0])),
        );
        let ps = PerturbedSystem::new(pf, w).unwrap();
        let pts = probes(1, 4);
        let check = check_normalization_condition(&ps, &pts, 1e-7).unwrap();
        assert!(check.holds, "residual {}", check.max_residual);
        assert!(check.bracket_residual.unwrap() < 1e-6);
        let result = normalize_first_order(&ps, None, &pts).unwrap();
        let slope = result.fitted_order.unwrap();
        assert!((1.8..=2.2).contains(&slope), "slope {slope}");
    }

    #[test]
    fn perturbing_by_the_field_itself_is_a_time_shift() {
        // W = X gives S(W) = 0, Z = 0, W_bar = X: the residual vanishes
        let pf = harmonic_flow();
        let ps = PerturbedSystem::new(pf.clone(), pf.x_field().clone()).unwrap();
        let pts = probes(2, 3);
        let result = normalize_first_order(&ps, None, &pts).unwrap();
        for (eps, r) in &result.residual_curve {
            assert!(*r < 1e-9, "eps {eps}: residual {r}");
        }
    }

    #[test]
    fn wrong_remainder_drops_the_order_to_one() {
        let pf = harmonic_flow();
        let w = TensorField::vector_field(
            pf.chart(),
            "Vq4",
            |x| vec![0.0, -4.0 * x[0].powi(3)],
            Some(Box::new(|x| vec![0.0, 0.0, -12.0 * x[0] * x[0], 0.0])),
        );
        let ps = PerturbedSystem::new(pf.clone(), w).unwrap();
        let pts = probes(3, 3);
        let z = build_generator(&ps, None, &pts).unwrap();
        // the offset must dominate the eps^2 term across the whole grid
        let offset = TensorField::vector_field(pf.chart(), "offset", |_| vec![2.0, 0.0], None);
        let wrong = averaged_remainder(&ps, None, &pts)
            .unwrap()
            .add(&offset)
            .unwrap();
        let curve = residual_curve(&ps, &z, &wrong, &pts).unwrap();
        let slope = fit_order(&curve).unwrap();
        assert!((0.8..=1.2).contains(&slope), "slope {slope}");
    }

    #[test]
    fn hamiltonian_case_satisfies_condition_on_variable_frequency() {
        // W Hamiltonian (of H1 = q) on the quartic slice: the period-energy
        // relation forces L_<W> omega = 0 even though omega varies
        let pf = quartic_flow();
        let w = TensorField::vector_field(
            pf.chart(),
            "V_q",
            |_| vec![0.0, -1.0],
            Some(Box::new(|_| vec![0.0; 4])),
        );
        let ps = PerturbedSystem::new(pf, w).unwrap();
        let pts = probes(4, 4);
        let check = check_normalization_condition(&ps, &pts, 1e-6).unwrap();
        assert!(check.holds, "residual {}", check.max_residual);
        assert!(check.bracket_residual.unwrap() < 1e-6,
            "bracket {}", check.bracket_residual.unwrap());
    }

    #[test]
    fn scaling_perturbation_violates_condition_with_witness() {
        let pf = quartic_flow();
        let scaling = TensorField::vector_field(
            pf.chart(),
            "scaling",
            |x| vec![x[0], 2.0 * x[1]],
            Some(Box::new(|_| vec![1.0, 0.0, 0.0, 2.0])),
        );
        let ps = PerturbedSystem::new(pf, scaling).unwrap();
        let pts = probes(5, 3);
        let check = check_normalization_condition(&ps, &pts, 1e-6).unwrap();
        assert!(!check.holds);
        assert!(check.witness.is_some());
    }

    #[test]
    fn frequency_shifting_gauge_changes_remainder_but_keeps_commutation() {
        // Y = scaling field: L_Y omega = omega, so W_bar gains exactly X
        let pf = quartic_flow();
        let w = TensorField::vector_field(
            pf.chart(),
            "V_q",
            |_| vec![0.0, -1.0],
            Some(Box::new(|_| vec![0.0; 4])),
        );
        let ps = PerturbedSystem::new(pf.clone(), w).unwrap();
        let pts = probes(6, 3);
        let scaling = TensorField::vector_field(
            pf.chart(),
            "scaling",
            |x| vec![x[0], 2.0 * x[1]],
            Some(Box::new(|_| vec![1.0, 0.0, 0.0, 2.0])),
        );
        let wbar0 = averaged_remainder(&ps, None, &pts).unwrap();
        let wbar1 = averaged_remainder(&ps, Some(scaling), &pts).unwrap();
        let x = pf.x_field();
        for m in &pts {
            let a = wbar0.eval(m).unwrap();
            let b = wbar1.eval(m).unwrap();
            let xv = x.eval(m).unwrap();
            for c in 0..2 {
                assert_abs_diff_eq!(b.data[c] - a.data[c], xv.data[c], epsilon = 1e-7);
            }
        }
        // both remainders commute with X
        let bracket = lie_bracket(x, &wbar1).unwrap();
        for m in &pts {
            assert!(bracket.eval(m).unwrap().max_abs() < 1e-6);
        }
    }

    #[test]
    fn vertical_killer_removes_generator_component() {
        let pf = quartic_flow();
        // W with a genuine vertical part
        let w = TensorField::vector_field(
            pf.chart(),
            "W",
            |x| vec![x[0], 0.0],
            Some(Box::new(|_| vec![1.0, 0.0, 0.0, 0.0])),
        );
        let ps = PerturbedSystem::new(pf.clone(), w).unwrap();
        let pts = probes(7, 4);
        let scaling = TensorField::vector_field(
            pf.chart(),
            "scaling",
            |x| vec![x[0], 2.0 * x[1]],
            Some(Box::new(|_| vec![1.0, 0.0, 0.0, 2.0])),
        );
        let frame = vec![scaling];
        let y = choose_vertical_killer(&ps, &frame, &pts).unwrap();
        let wbar = averaged_remainder(&ps, Some(y), &pts).unwrap();
        let c0 = vertical_coefficient(&pf, &frame, &wbar).unwrap();
        for m in &pts {
            let v = c0.eval(m).unwrap().as_scalar();
            assert!(v.abs() < 1e-7, "vertical coefficient {v} at {m:?}");
        }
        // a purely horizontal perturbation needs no gauge
        let w_h = frame[0].clone();
        let ps_h = PerturbedSystem::new(pf.clone(), w_h).unwrap();
        let y0 = choose_vertical_killer(&ps_h, &frame, &pts).unwrap();
        for m in &pts {
            assert!(y0.eval(m).unwrap().max_abs() < 1e-8);
        }
    }

    #[test]
    fn vertical_killer_requires_moving_frequency() {
        let pf = harmonic_flow();
        let w = TensorField::vector_field(pf.chart(), "W", |x| vec![x[0], 0.0], None);
        let ps = PerturbedSystem::new(pf.clone(), w).unwrap();
        let pts = probes(8, 2);
        let euler = TensorField::vector_field(
            pf.chart(),
            "euler",
            |x| vec![x[0], x[1]],
            Some(Box::new(|_| vec![1.0, 0.0, 0.0, 1.0])),
        );
        let r = choose_vertical_killer(&ps, &[euler], &pts);
        assert!(matches!(r, Err(Error::Nondegenerate { .. })));
    }
}
