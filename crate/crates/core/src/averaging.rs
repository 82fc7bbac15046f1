//! The operator calculus of circle averaging, realized spectrally on orbit
//! samples.
//!
//! For a tensor field `Xi` and the 2pi-periodic generator flow, the pulled
//! back component samples `g(t_j)` diagonalize the generator Lie derivative:
//! mode n multiplies by `i n`. The average keeps the zero mode, and the
//! integral operator S (weight `t - pi`) acts as `g_n -> g_n / (i n)` on
//! nonzero modes — the exact inverse of the Lie derivative on mean-zero
//! fields. Operators return lazy fields; evaluation samples (and caches) the
//! orbit through the query point.

use crate::chart::Point;
use crate::components::{det_grad_small, det_small, ComponentJacobian, Components};
use crate::error::{Error, Result};
use crate::exterior::{exterior_derivative, interior_form, interior_multivector, lie_derivative};
use crate::field::{TensorField, Valence};
use crate::flow::{OrbitSample, OrbitTier, PeriodicFlow};
use crate::multiindex::index_sets;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

/// Fraction of spectral energy allowed in the top octave before the node
/// count is doubled.
pub const ALIASING_TAIL_LIMIT: f64 = 1e-8;

/// FD step for fields whose values come from orbit integrations: integrator
/// noise makes the analytic-grade default counterproductive.
const SPECTRAL_FD_STEP: f64 = 1e-4;

fn fft_forward(data: &[f64]) -> Vec<Complex<f64>> {
    static PLANS: OnceLock<RwLock<HashMap<usize, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| RwLock::new(HashMap::new()));
    let n = data.len();
    // the read guard must drop before the write lock is taken
    let cached = plans.read().unwrap().get(&n).cloned();
    let plan = match cached {
        Some(p) => p,
        None => {
            let p = FftPlanner::new().plan_fft_forward(n);
            plans.write().unwrap().insert(n, p.clone());
            p
        }
    };
    let mut buf: Vec<Complex<f64>> = data.iter().map(|&x| Complex::new(x, 0.0)).collect();
    plan.process(&mut buf);
    buf
}

fn mode_order(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// The spectral operators acting mode-by-mode on orbit data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralOp {
    /// Zero-mode projection (the circle average).
    Average,
    /// Mean-zero antiderivative along the action: `g_n -> g_n/(i n)`, zero
    /// mode annihilated.
    SOp,
    /// Double antiderivative: `g_n -> -g_n/n^2`.
    SSquared,
    /// Lie derivative along the generator: `g_n -> i n g_n`.
    LieGenerator,
}

impl SpectralOp {
    fn multiplier(self, n: i64) -> Complex<f64> {
        match self {
            SpectralOp::Average => {
                if n == 0 {
                    Complex::new(1.0, 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                }
            }
            SpectralOp::SOp => {
                if n == 0 {
                    Complex::new(0.0, 0.0)
                } else {
                    Complex::new(0.0, -1.0 / n as f64)
                }
            }
            SpectralOp::SSquared => {
                if n == 0 {
                    Complex::new(0.0, 0.0)
                } else {
                    Complex::new(-1.0 / (n * n) as f64, 0.0)
                }
            }
            SpectralOp::LieGenerator => Complex::new(0.0, n as f64),
        }
    }

    fn label(self) -> &'static str {
        match self {
            SpectralOp::Average => "avg",
            SpectralOp::SOp => "S",
            SpectralOp::SSquared => "S2",
            SpectralOp::LieGenerator => "L_gen",
        }
    }
}

/// Pullback of the field components at orbit node `j` to the base point.
/// Scalars compose with the node point; forms contract node components with
/// flow Jacobian minors; multivectors use inverse-Jacobian minors.
pub fn pullback_at_node(
    field: &TensorField,
    sample: &OrbitSample,
    j: usize,
) -> Result<Components> {
    let node = Point::from_slice(sample.node(j))?;
    let comps = field.eval(&node)?;
    Ok(match field.valence() {
        Valence::Scalar => comps,
        Valence::Form(_) => comps.pullback_covariant(sample.jacobian(j)),
        Valence::MultiVector(_) => comps.pullback_contravariant(sample.inverse_jacobian(j)),
    })
}

/// Pullback and its derivative with respect to the base point, using the
/// orbit's second variations (the sample must be Hessian-tier).
fn pullback_with_jacobian_at_node(
    field: &TensorField,
    sample: &OrbitSample,
    j: usize,
) -> Result<(Components, ComponentJacobian)> {
    let dim = field.dim();
    let node = Point::from_slice(sample.node(j))?;
    let comps = field.eval(&node)?;
    let comp_jac = field.jacobian(&node)?;
    let jm = sample.jacobian(j);
    let hess = sample
        .hessian(j)
        .expect("pullback derivatives need a Hessian-tier orbit sample");

    match field.valence() {
        Valence::Scalar => {
            // d/dm f(Fl(m)) = grad f . J
            let mut out = ComponentJacobian::zeros(dim, 0);
            for l in 0..dim {
                let mut acc = 0.0;
                for a in 0..dim {
                    acc += comp_jac.entry(0, a) * jm[(a, l)];
                }
                *out.entry_mut(0, l) = acc;
            }
            Ok((comps, out))
        }
        Valence::Form(k) => {
            let sets = index_sets(dim, k);
            let mut value = Components::zeros(dim, k);
            let mut jac = ComponentJacobian::zeros(dim, k);
            let mut minor = vec![0.0; k * k];
            for (ti, target) in sets.iter().enumerate() {
                for (si, source) in sets.iter().enumerate() {
                    // minor matrix M[r][c] = J[source_r, target_c]
                    for (r, &sr) in source.iter().enumerate() {
                        for (c, &tc) in target.iter().enumerate() {
                            minor[r * k + c] = jm[(sr, tc)];
                        }
                    }
                    let det = det_small(&minor, k);
                    value.data[ti] += comps.data[si] * det;
                    let dgrad = det_grad_small(&minor, k);
                    for l in 0..dim {
                        // chain rule through the node position
                        let mut dval = 0.0;
                        for a in 0..dim {
                            dval += comp_jac.entry(si, a) * jm[(a, l)];
                        }
                        let mut ddet = 0.0;
                        for (r, &sr) in source.iter().enumerate() {
                            for (c, &tc) in target.iter().enumerate() {
                                // d J[sr, tc] / d m_l = H[sr; tc, l]
                                ddet += dgrad[r * k + c] * hess[sr * dim * dim + tc * dim + l];
                            }
                        }
                        *jac.entry_mut(ti, l) += dval * det + comps.data[si] * ddet;
                    }
                }
            }
            Ok((value, jac))
        }
        Valence::MultiVector(k) => {
            let sets = index_sets(dim, k);
            let kinv = sample.inverse_jacobian(j);
            // dK/dl = -K (dJ/dl) K
            let mut dk = Vec::with_capacity(dim);
            for l in 0..dim {
                let mut dj = nalgebra::DMatrix::zeros(dim, dim);
                for a in 0..dim {
                    for b in 0..dim {
                        dj[(a, b)] = hess[a * dim * dim + b * dim + l];
                    }
                }
                dk.push(-(kinv * dj * kinv));
            }
            let mut value = Components::zeros(dim, k);
            let mut jac = ComponentJacobian::zeros(dim, k);
            let mut minor = vec![0.0; k * k];
            for (ti, target) in sets.iter().enumerate() {
                for (si, source) in sets.iter().enumerate() {
                    // minor M[r][c] = K[target_r, source_c]
                    for (r, &tr) in target.iter().enumerate() {
                        for (c, &sc) in source.iter().enumerate() {
                            minor[r * k + c] = kinv[(tr, sc)];
                        }
                    }
                    let det = det_small(&minor, k);
                    value.data[ti] += comps.data[si] * det;
                    let dgrad = det_grad_small(&minor, k);
                    for l in 0..dim {
                        let mut dval = 0.0;
                        for a in 0..dim {
                            dval += comp_jac.entry(si, a) * jm[(a, l)];
                        }
                        let mut ddet = 0.0;
                        for (r, &tr) in target.iter().enumerate() {
                            for (c, &sc) in source.iter().enumerate() {
                                ddet += dgrad[r * k + c] * dk[l][(tr, sc)];
                            }
                        }
                        *jac.entry_mut(ti, l) += dval * det + comps.data[si] * ddet;
                    }
                }
            }
            Ok((value, jac))
        }
    }
}

/// Pulled-back component samples over a whole orbit (spec operation).
pub fn pullback_on_orbit(field: &TensorField, sample: &OrbitSample) -> Result<Vec<Components>> {
    (0..sample.node_count)
        .map(|j| pullback_at_node(field, sample, j))
        .collect()
}

/// Complex Fourier data of the pulled-back component samples of one orbit.
pub struct OrbitSpectrum {
    pub node_count: usize,
    /// Normalized coefficients per component, indexed by FFT bin `k`, with
    /// mode order `n = k` for `k < N/2` and `n = k - N` otherwise.
    pub coeffs: Vec<Vec<Complex<f64>>>,
    pub samples: Vec<Vec<f64>>,
}

impl OrbitSpectrum {
    pub fn coefficient(&self, comp: usize, n: i64) -> Complex<f64> {
        let nn = self.node_count as i64;
        let k = if n >= 0 { n } else { n + nn };
        self.coeffs[comp][k as usize]
    }

    /// Max modulus over the nonzero modes (spectral noise diagnostic).
    pub fn nonzero_mode_ceiling(&self) -> f64 {
        let mut best = 0.0f64;
        for c in &self.coeffs {
            for (k, v) in c.iter().enumerate() {
                if k != 0 {
                    best = best.max(v.norm());
                }
            }
        }
        best
    }

    /// Inverse transform of component `comp` at node `j`.
    pub fn resynthesize(&self, comp: usize, j: usize) -> f64 {
        let n = self.node_count;
        let mut acc = Complex::new(0.0, 0.0);
        for (k, v) in self.coeffs[comp].iter().enumerate() {
            let ang = 2.0 * PI * (k * j) as f64 / n as f64;
            acc += v * Complex::new(ang.cos(), ang.sin());
        }
        acc.re
    }
}

/// Fourier data of the orbit through `m` for the given field.
pub fn orbit_spectrum(
    pf: &PeriodicFlow,
    field: &TensorField,
    m: &Point,
    nodes: usize,
) -> Result<OrbitSpectrum> {
    let sample = pf.orbit(m, nodes, OrbitTier::Jacobian)?;
    let pulled = pullback_on_orbit(field, &sample)?;
    let ncomp = pulled[0].data.len();
    let mut coeffs = Vec::with_capacity(ncomp);
    let mut samples = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        let seq: Vec<f64> = pulled.iter().map(|p| p.data[c]).collect();
        let mut f = fft_forward(&seq);
        for v in &mut f {
            *v /= nodes as f64;
        }
        coeffs.push(f);
        samples.push(seq);
    }
    Ok(OrbitSpectrum {
        node_count: nodes,
        coeffs,
        samples,
    })
}

fn tail_fraction(seqs: &[Vec<Complex<f64>>], n: usize) -> f64 {
    let mut total = 0.0;
    let mut tail = 0.0;
    for seq in seqs {
        for (k, v) in seq.iter().enumerate() {
            let e = v.norm_sqr();
            total += e;
            let order = mode_order(k, n).unsigned_abs();
            if order > (n / 4) as u64 {
                tail += e;
            }
        }
    }
    if total < 1e-280 {
        0.0
    } else {
        tail / total
    }
}

fn combine(seq: &[Complex<f64>], op: SpectralOp, n: usize) -> f64 {
    let mut acc = Complex::new(0.0, 0.0);
    for (k, v) in seq.iter().enumerate() {
        acc += op.multiplier(mode_order(k, n)) * v;
    }
    acc.re
}

/// Evaluates a spectral operator at a point, doubling the node count while
/// the aliasing diagnostic trips (up to the flow's configured cap).
pub fn spectral_value(
    pf: &PeriodicFlow,
    field: &TensorField,
    m: &Point,
    op: SpectralOp,
) -> Result<Components> {
    let dim = field.dim();
    let degree = field.degree();
    let mut nodes = pf.config.default_nodes.max(16);
    loop {
        let sample = pf.orbit(m, nodes, OrbitTier::Jacobian)?;
        let pulled = pullback_on_orbit(field, &sample)?;
        let ncomp = pulled[0].data.len();
        let mut coeffs = Vec::with_capacity(ncomp);
        for c in 0..ncomp {
            let seq: Vec<f64> = pulled.iter().map(|p| p.data[c]).collect();
            let mut f = fft_forward(&seq);
            for v in &mut f {
                *v /= nodes as f64;
            }
            coeffs.push(f);
        }
        if tail_fraction(&coeffs, nodes) > ALIASING_TAIL_LIMIT && nodes < pf.config.max_nodes {
            nodes *= 2;
            continue;
        }
        let mut out = Components::zeros(dim, degree);
        for c in 0..ncomp {
            out.data[c] = combine(&coeffs[c], op, nodes);
        }
        return Ok(out);
    }
}

/// Derivative of a spectral operator value with respect to the base point:
/// the same mode combination applied to the pullback Jacobian samples
/// (differentiation commutes with the orbit integrals).
pub fn spectral_jacobian(
    pf: &PeriodicFlow,
    field: &TensorField,
    m: &Point,
    op: SpectralOp,
) -> Result<ComponentJacobian> {
    let dim = field.dim();
    let degree = field.degree();
    let mut nodes = pf.config.default_nodes.max(16);
    loop {
        let sample = pf.orbit(m, nodes, OrbitTier::Hessian)?;
        let mut seqs: Vec<Vec<f64>> = Vec::new();
        let mut ncomp = 0;
        for j in 0..nodes {
            let (val, jac) = pullback_with_jacobian_at_node(field, &sample, j)?;
            if j == 0 {
                ncomp = val.data.len();
                seqs = vec![Vec::with_capacity(nodes); ncomp * (dim + 1)];
            }
            for c in 0..ncomp {
                seqs[c].push(val.data[c]);
                for l in 0..dim {
                    seqs[ncomp + c * dim + l].push(jac.entry(c, l));
                }
            }
        }
        let coeffs: Vec<Vec<Complex<f64>>> = seqs
            .iter()
            .map(|s| {
                let mut f = fft_forward(s);
                for v in &mut f {
                    *v /= nodes as f64;
                }
                f
            })
            .collect();
        if tail_fraction(&coeffs, nodes) > ALIASING_TAIL_LIMIT && nodes < pf.config.max_nodes {
            nodes *= 2;
            continue;
        }
        let mut out = ComponentJacobian::zeros(dim, degree);
        for c in 0..ncomp {
            for l in 0..dim {
                *out.entry_mut(c, l) = combine(&coeffs[ncomp + c * dim + l], op, nodes);
            }
        }
        return Ok(out);
    }
}

fn check_operand(pf: &PeriodicFlow, xi: &TensorField) -> Result<()> {
    if !Arc::ptr_eq(pf.chart(), xi.chart()) {
        return Err(Error::ChartMismatch);
    }
    Ok(())
}

fn spectral_field(pf: &Arc<PeriodicFlow>, xi: &TensorField, op: SpectralOp) -> TensorField {
    let (pf1, xi1) = (pf.clone(), xi.clone());
    let (pf2, xi2) = (pf.clone(), xi.clone());
    TensorField::from_parts(
        xi.chart().clone(),
        xi.valence(),
        format!("{}({})", op.label(), xi.label()),
        SPECTRAL_FD_STEP,
        Box::new(move |p: &Point| spectral_value(&pf1, &xi1, p, op)),
        Some(Box::new(move |p: &Point| {
            spectral_jacobian(&pf2, &xi2, p, op)
        })),
    )
}

/// The circle average as a lazy field.
pub fn average(pf: &Arc<PeriodicFlow>, xi: &TensorField) -> Result<TensorField> {
    check_operand(pf, xi)?;
    Ok(spectral_field(pf, xi, SpectralOp::Average))
}

/// The integral operator S (orbit integral weighted by `t - pi`), inverting
/// the generator Lie derivative on mean-zero fields.
pub fn s_op(pf: &Arc<PeriodicFlow>, xi: &TensorField) -> Result<TensorField> {
    check_operand(pf, xi)?;
    Ok(spectral_field(pf, xi, SpectralOp::SOp))
}

/// S applied twice (computed in one spectral pass).
pub fn s_squared(pf: &Arc<PeriodicFlow>, xi: &TensorField) -> Result<TensorField> {
    check_operand(pf, xi)?;
    Ok(spectral_field(pf, xi, SpectralOp::SSquared))
}

/// Lie derivative along the 2pi-periodic generator, spectrally.
pub fn lie_generator(pf: &Arc<PeriodicFlow>, xi: &TensorField) -> Result<TensorField> {
    check_operand(pf, xi)?;
    Ok(spectral_field(pf, xi, SpectralOp::LieGenerator))
}

/// Lie derivative along X itself: `omega L_gen` for scalars, with the wedge
/// correction terms for multivectors and forms when omega varies.
pub fn lie_x(pf: &Arc<PeriodicFlow>, xi: &TensorField) -> Result<TensorField> {
    check_operand(pf, xi)?;
    let lg = lie_generator(pf, xi)?;
    let scaled = lg.scale_by(pf.omega())?;
    match xi.valence() {
        Valence::Scalar => Ok(scaled),
        Valence::MultiVector(_) => {
            // L_{omega U} A = omega L_U A - U ^ i_{d omega} A
            let domega = pf.omega_differential()?;
            let correction =
                crate::exterior::wedge(pf.generator(), &interior_multivector(&domega, xi)?)?;
            scaled.sub(&correction)
        }
        Valence::Form(_) => {
            // L_{omega U} theta = omega L_U theta + d omega ^ i_U theta
            let domega = pf.omega_differential()?;
            let correction = crate::exterior::wedge(&domega, &interior_form(pf.generator(), xi)?)?;
            scaled.add(&correction)
        }
    }
}

// ---- eager conveniences ------------------------------------------------------

pub fn average_at(pf: &PeriodicFlow, xi: &TensorField, m: &Point) -> Result<Components> {
    check_operand(pf, xi)?;
    spectral_value(pf, xi, m, SpectralOp::Average)
}

pub fn s_op_at(pf: &PeriodicFlow, xi: &TensorField, m: &Point) -> Result<Components> {
    check_operand(pf, xi)?;
    spectral_value(pf, xi, m, SpectralOp::SOp)
}

pub fn s_squared_at(pf: &PeriodicFlow, xi: &TensorField, m: &Point) -> Result<Components> {
    check_operand(pf, xi)?;
    spectral_value(pf, xi, m, SpectralOp::SSquared)
}

pub fn lie_generator_at(pf: &PeriodicFlow, xi: &TensorField, m: &Point) -> Result<Components> {
    check_operand(pf, xi)?;
    spectral_value(pf, xi, m, SpectralOp::LieGenerator)
}

/// Weighted-trapezoid realization of the S operator, kept as an independent
/// oracle for the spectral route (the integrand is not periodic, so this is
/// only O(N^-2) accurate).
pub fn s_op_quadrature(
    pf: &PeriodicFlow,
    xi: &TensorField,
    m: &Point,
    nodes: usize,
) -> Result<Components> {
    let sample = pf.orbit(m, nodes, OrbitTier::Jacobian)?;
    let pulled = pullback_on_orbit(xi, &sample)?;
    let mut out = Components::zeros(xi.dim(), xi.degree());
    // endpoint weights cancel: (t_0 - pi) g_0 / 2 + (t_N - pi) g_N / 2 = 0
    for (j, p) in pulled.iter().enumerate().skip(1) {
        let w = sample.node_time(j) - PI;
        out.add_assign_scaled(p, w);
    }
    out.scale(1.0 / nodes as f64);
    Ok(out)
}

/// Coordinate-formula Lie derivative along X (first-principles route used to
/// cross-check the spectral operators and to measure solver residuals).
pub fn lie_x_coordinate(pf: &PeriodicFlow, xi: &TensorField) -> Result<TensorField> {
    lie_derivative(pf.x_field(), xi)
}

/// d commutes with the averaging operators: `d<eta> = <d eta>`.
pub fn average_differential(pf: &Arc<PeriodicFlow>, eta: &TensorField) -> Result<TensorField> {
    average(pf, &exterior_derivative(eta)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::CoordChart;
    use crate::flow::PeriodicFlowConfig;
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

    fn q_field(pf: &PeriodicFlow) -> TensorField {
        TensorField::scalar_field(pf.chart(), "q", |x| x[0], Some(Box::new(|_| vec![1.0, 0.0])))
    }

    fn q2_field(pf: &PeriodicFlow) -> TensorField {
        TensorField::scalar_field(
            pf.chart(),
            "q2",
            |x| x[0] * x[0],
            Some(Box::new(|x| vec![2.0 * x[0], 0.0])),
        )
    }

    fn pt(c: &[f64]) -> Point {
        Point::from_slice(c).unwrap()
    }

    #[test]
    fn scalar_pullback_samples_are_cosines() {
        let pf = harmonic_flow();
        let q = q_field(&pf);
        let s = pf.orbit(&pt(&[1.0, 0.0]), 16, OrbitTier::Jacobian).unwrap();
        let pulled = pullback_on_orbit(&q, &s).unwrap();
        for (j, p) in pulled.iter().enumerate() {
            let t = s.node_time(j);
            assert_abs_diff_eq!(p.as_scalar(), t.cos(), epsilon = 1e-9);
        }
    }

    #[test]
    fn invariant_scalar_pullback_is_constant() {
        let pf = harmonic_flow();
        let h0 = TensorField::scalar_field(
            pf.chart(),
            "H0",
            |x| 0.5 * (x[0] * x[0] + x[1] * x[1]),
            None,
        );
        let s = pf.orbit(&pt(&[1.0, 0.0]), 16, OrbitTier::Jacobian).unwrap();
        for p in pullback_on_orbit(&h0, &s).unwrap() {
            assert_abs_diff_eq!(p.as_scalar(), 0.5, epsilon = 1e-9);
        }
        // its spectrum has no nonzero modes
        let spec = orbit_spectrum(&pf, &h0, &pt(&[1.0, 0.0]), 64).unwrap();
        assert!(spec.nonzero_mode_ceiling() < 1e-10);
    }

    #[test]
    fn vector_pullback_rotates_the_frame() {
        let pf = harmonic_flow();
        let eq = TensorField::vector_field(pf.chart(), "eq", |_| vec![1.0, 0.0], None);
        let s = pf.orbit(&pt(&[1.0, 0.0]), 16, OrbitTier::Jacobian).unwrap();
        let pulled = pullback_on_orbit(&eq, &s).unwrap();
        for (j, p) in pulled.iter().enumerate() {
            let t = s.node_time(j);
            assert_abs_diff_eq!(p.data[0], t.cos(), epsilon = 1e-9);
            assert_abs_diff_eq!(p.data[1], t.sin(), epsilon = 1e-9);
        }
    }

    #[test]
    fn spectrum_roundtrip_reproduces_samples() {
        let pf = quartic_flow();
        let q2 = q2_field(&pf);
        let spec = orbit_spectrum(&pf, &q2, &pt(&[1.1, 0.2]), 128).unwrap();
        for j in [0, 7, 31, 100] {
            assert_abs_diff_eq!(
                spec.resynthesize(0, j),
                spec.samples[0][j],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn harmonic_closed_form_averages() {
        let pf = harmonic_flow();
        let q = q_field(&pf);
        let q2 = q2_field(&pf);
        // <q^2> = (q^2 + p^2)/2
        let v = average_at(&pf, &q2, &pt(&[1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(v.as_scalar(), 0.5, epsilon = 1e-9);
        let v = average_at(&pf, &q2, &pt(&[0.8, -0.6])).unwrap();
        assert_abs_diff_eq!(v.as_scalar(), 0.5, epsilon = 1e-9);
        // <q> = 0
        let v = average_at(&pf, &q, &pt(&[1.3, 0.4])).unwrap();
        assert_abs_diff_eq!(v.as_scalar(), 0.0, epsilon = 1e-10);
        // invariant field is fixed by the average
        let h0 = TensorField::scalar_field(
            pf.chart(),
            "H0",
            |x| 0.5 * (x[0] * x[0] + x[1] * x[1]),
            None,
        );
        let v = average_at(&pf, &h0, &pt(&[1.2, -0.3])).unwrap();
        assert_abs_diff_eq!(v.as_scalar(), 0.5 * (1.44 + 0.09), epsilon = 1e-9);
    }

    #[test]
    fn harmonic_closed_form_s_op() {
        let pf = harmonic_flow();
        let q = q_field(&pf);
        let q2 = q2_field(&pf);
        // S(q) = -p
        assert_abs_diff_eq!(
            s_op_at(&pf, &q, &pt(&[1.0, 0.0])).unwrap().as_scalar(),
            0.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            s_op_at(&pf, &q, &pt(&[0.0, 1.0])).unwrap().as_scalar(),
            -1.0,
            epsilon = 1e-9
        );
        // S(q^2) = -qp/2
        assert_abs_diff_eq!(
            s_op_at(&pf, &q2, &pt(&[1.0, 1.0])).unwrap().as_scalar(),
            -0.5,
            epsilon = 1e-9
        );
        // S of an invariant field vanishes
        let h0 = TensorField::scalar_field(
            pf.chart(),
            "H0",
            |x| 0.5 * (x[0] * x[0] + x[1] * x[1]),
            None,
        );
        assert_abs_diff_eq!(
            s_op_at(&pf, &h0, &pt(&[0.7, 0.7])).unwrap().as_scalar(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn s_squared_is_s_composed_with_s() {
        let pf = harmonic_flow();
        // S^2(q) = -q spectrally
        let q = q_field(&pf);
        assert_abs_diff_eq!(
            s_squared_at(&pf, &q, &pt(&[0.7, -0.3])).unwrap().as_scalar(),
            -0.7,
            epsilon = 1e-9
        );
        // operator-composition oracle on a polynomial without closed form
        let f = TensorField::scalar_field(
            pf.chart(),
            "f",
            |x| x[0] * x[0] * x[1] + 0.3 * x[1],
            None,
        );
        let sf = s_op(&pf, &f).unwrap();
        let m = pt(&[0.9, 0.5]);
        let twice = s_op_at(&pf, &sf, &m).unwrap().as_scalar();
        let once = s_squared_at(&pf, &f, &m).unwrap().as_scalar();
        assert_abs_diff_eq!(twice, once, epsilon = 1e-8);
    }

    #[test]
    fn lie_generator_matches_flow_derivative() {
        let pf = harmonic_flow();
        let q = q_field(&pf);
        // L_U q = p on the harmonic flow
        let v = lie_generator_at(&pf, &q, &pt(&[0.3, 0.9])).unwrap();
        assert_abs_diff_eq!(v.as_scalar(), 0.9, epsilon = 1e-9);
        // identity instance: L_U(S(q^2)) = q^2 - <q^2> = (q^2 - p^2)/2
        let q2 = q2_field(&pf);
        let sq2 = s_op(&pf, &q2).unwrap();
        let v = lie_generator_at(&pf, &sq2, &pt(&[1.0, 0.5])).unwrap();
        assert_abs_diff_eq!(v.as_scalar(), (1.0 - 0.25) / 2.0, epsilon = 1e-8);
    }

    #[test]
    fn quadrature_oracle_agrees_with_spectral_route() {
        let pf = quartic_flow();
        let q2 = q2_field(&pf);
        let m = pt(&[1.0, 0.25]);
        let spectral = s_op_at(&pf, &q2, &m).unwrap().as_scalar();
        let quad = s_op_quadrature(&pf, &q2, &m, 4096).unwrap().as_scalar();
        assert_abs_diff_eq!(spectral, quad, epsilon = 1e-5);
    }

    #[test]
    fn p1_identity_on_variable_frequency_flow_for_vectors() {
        // L_U(S(B)) = B - <B> with the operators evaluated independently
        let pf = quartic_flow();
        let b = TensorField::vector_field(
            pf.chart(),
            "B",
            |x| vec![x[0], 0.2 * x[1] * x[0]],
            Some(Box::new(|x| vec![1.0, 0.0, 0.2 * x[1], 0.2 * x[0]])),
        );
        let m = pt(&[1.05, 0.3]);
        let sb = s_op(&pf, &b).unwrap();
        let lhs = lie_generator_at(&pf, &sb, &m).unwrap();
        let bv = b.eval(&m).unwrap();
        let avg = average_at(&pf, &b, &m).unwrap();
        for c in 0..2 {
            assert_abs_diff_eq!(lhs.data[c], bv.data[c] - avg.data[c], epsilon = 1e-7);
        }
    }

    #[test]
    fn spectral_jacobian_matches_finite_differences() {
        let pf = quartic_flow();
        let b = TensorField::vector_field(
            pf.chart(),
            "B",
            |x| vec![x[0] * x[1], x[0]],
            Some(Box::new(|x| vec![x[1], x[0], 1.0, 0.0])),
        );
        let m = pt(&[1.0, 0.2]);
        let sb = s_op(&pf, &b).unwrap();
        let analytic = sb.jacobian(&m).unwrap();
        let fd = sb.fd_jacobian(&m).unwrap();
        for c in 0..2 {
            for ax in 0..2 {
                assert_abs_diff_eq!(analytic.entry(c, ax), fd.entry(c, ax), epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn aliasing_guard_doubles_node_count() {
        let cfg = PeriodicFlowConfig {
            default_nodes: 16,
            ..PeriodicFlowConfig::default()
        };
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
        let pf =
            PeriodicFlow::new(&x, &omega, cfg, &[Point::new(vec![1.0, 0.0]).unwrap()]).unwrap();
        // exp(3q) needs far more than 16 modes at radius 2:
        // <exp(3q)> over the circle of radius 2 is I_0(6) = 67.2344069764...
        let f = TensorField::scalar_field(&chart, "exp3q", |x| (3.0 * x[0]).exp(), None);
        let v = average_at(&pf, &f, &pt(&[2.0, 0.0])).unwrap();
        assert_abs_diff_eq!(v.as_scalar(), 67.234406976478, epsilon = 1e-6);
    }

    #[test]
    fn lie_x_on_forms_matches_coordinate_route() {
        let pf = quartic_flow();
        let eta = TensorField::one_form(
            pf.chart(),
            "eta",
            |x| vec![x[1] * x[0], x[0]],
            Some(Box::new(|x| vec![x[1], x[0], 1.0, 0.0])),
        );
        let spectral = lie_x(&pf, &eta).unwrap();
        let coordinate = lie_x_coordinate(&pf, &eta).unwrap();
        let m = pt(&[0.95, -0.4]);
        let a = spectral.eval(&m).unwrap();
        let b = coordinate.eval(&m).unwrap();
        for c in 0..2 {
            assert_abs_diff_eq!(a.data[c], b.data[c], epsilon = 1e-7);
        }
    }
}
