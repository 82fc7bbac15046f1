//! Slow-fast phase spaces: products of two symplectic factors carrying the
//! scaled symplectic form `pi1* sigma1 + eps pi2* sigma2`, Hamiltonian
//! vector-field splitting, skew-product monodromy, Hamiltonization of the
//! unperturbed part, and invariant symplectic structures.

mod hamiltonize;
mod monodromy;
pub mod resonance;

pub use hamiltonize::{
    check_theorem51, hamiltonize, invariant_symplectic, HamiltonizeConfig, HamiltonizeResult,
    InvariantSymplecticResult, Theorem51Report,
};
pub use monodromy::{monodromy, periodicity_certificate, CertifiedFlow, MonodromyConfig, MonodromyRecord};

use crate::chart::{CoordChart, Point};
use crate::components::{ComponentJacobian, Components};
use crate::error::{Error, Result};
use crate::field::{TensorField, Valence};
use crate::multiindex::{index_sets, rank};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// A product phase space `M1 x M2` with the eps-scaled symplectic form.
/// The product chart concatenates the slow coordinates (first `dim_slow`)
/// with the fast ones; the factor forms are stored lifted to the product.
pub struct ProductPhaseSpace {
    pub chart: Arc<CoordChart>,
    pub slow_chart: Arc<CoordChart>,
    pub dim_slow: usize,
    pub dim_fast: usize,
    /// `pi1* sigma1` on the product chart.
    pub sigma_slow: TensorField,
    /// `pi2* sigma2` on the product chart.
    pub sigma_fast: TensorField,
    pub epsilon: f64,
}

impl ProductPhaseSpace {
    pub fn new(
        chart: Arc<CoordChart>,
        slow_chart: Arc<CoordChart>,
        dim_slow: usize,
        sigma_slow: TensorField,
        sigma_fast: TensorField,
        epsilon: f64,
    ) -> Result<Self> {
        let dim = chart.dim();
        if dim_slow >= dim || slow_chart.dim() != dim_slow {
            return Err(Error::Config(format!(
                "slow factor dimension {dim_slow} inconsistent with product dimension {dim}"
            )));
        }
        if sigma_slow.valence() != Valence::Form(2) || sigma_fast.valence() != Valence::Form(2) {
            return Err(Error::ValenceMismatch(
                "factor symplectic structures must be 2-forms".into(),
            ));
        }
        Ok(Self {
            chart,
            slow_chart,
            dim_slow,
            dim_fast: dim - dim_slow,
            sigma_slow,
            sigma_fast,
            epsilon,
        })
    }

    /// The full form `pi1* sigma1 + eps pi2* sigma2`.
    pub fn sigma(&self) -> Result<TensorField> {
        self.sigma_slow
            .add(&self.sigma_fast.scale_const(self.epsilon))
    }

    /// Checks closedness of both factor forms and nondegeneracy of the
    /// factor blocks at the probes (the fast block of an embedded sphere is
    /// checked through its tangential pairing).
    pub fn validate(&self, probes: &[Point]) -> Result<()> {
        for (name, form) in [("slow", &self.sigma_slow), ("fast", &self.sigma_fast)] {
            if form.degree() < self.chart.dim() {
                let d = crate::exterior::exterior_derivative(form)?;
                for m in probes {
                    let v = d.eval(m)?.max_abs();
                    if v > 1e-5 {
                        return Err(Error::NotClosed {
                            point: m.coords().to_vec(),
                            residual: v,
                        });
                    }
                }
            }
            let _ = name;
        }
        for m in probes {
            let s1 = self.block_matrix(&self.sigma_slow, m, 0, self.dim_slow)?;
            if s1.clone().lu().try_inverse().is_none() {
                return Err(Error::Nondegenerate {
                    point: m.coords().to_vec(),
                    what: "slow symplectic block is singular".into(),
                });
            }
            if self.fast_unit_block().is_none() {
                let s2 = self.block_matrix(&self.sigma_fast, m, self.dim_slow, self.dim_fast)?;
                if s2.clone().lu().try_inverse().is_none() {
                    return Err(Error::Nondegenerate {
                        point: m.coords().to_vec(),
                        what: "fast symplectic block is singular".into(),
                    });
                }
            }
        }
        Ok(())
    }

    fn fast_unit_block(&self) -> Option<(usize, usize)> {
        self.chart
            .unit_block()
            .filter(|&(start, _)| start >= self.dim_slow)
    }

    /// The antisymmetric matrix of a 2-form on a coordinate block.
    pub fn block_matrix(
        &self,
        form: &TensorField,
        m: &Point,
        start: usize,
        len: usize,
    ) -> Result<DMatrix<f64>> {
        let dim = self.chart.dim();
        let comps = form.eval(m)?;
        let sets = index_sets(dim, 2);
        let mut out = DMatrix::zeros(len, len);
        for (ci, set) in sets.iter().enumerate() {
            let (a, b) = (set[0], set[1]);
            if a >= start && a < start + len && b >= start && b < start + len {
                out[(a - start, b - start)] = comps.data[ci];
                out[(b - start, a - start)] = -comps.data[ci];
            }
        }
        Ok(out)
    }
}

/// Splits the differential of a scalar field into its slow and fast parts
/// (1-forms supported on the respective coordinate blocks).
pub fn partial_differentials(
    pps: &ProductPhaseSpace,
    h: &TensorField,
) -> Result<(TensorField, TensorField)> {
    if h.valence() != Valence::Scalar {
        return Err(Error::ValenceMismatch(
            "partial differentials expect a scalar field".into(),
        ));
    }
    let make = |slow: bool| -> TensorField {
        let h = h.clone();
        let n1 = pps.dim_slow;
        let dim = pps.chart.dim();
        TensorField::from_parts(
            pps.chart.clone(),
            Valence::Form(1),
            format!("d{}({})", if slow { "1" } else { "2" }, h.label()),
            h.fd_step(),
            Box::new(move |m: &Point| {
                let g = h.jacobian(m)?;
                let mut out = Components::zeros(dim, 1);
                for a in 0..dim {
                    if (a < n1) == slow {
                        out.data[a] = g.entry(0, a);
                    }
                }
                Ok(out)
            }),
            None,
        )
    };
    Ok((make(true), make(false)))
}

/// Zeroes the fast components of a 1-form (the horizontal projection with
/// respect to the slow projection). Pullbacks along skew-product flows keep
/// horizontal forms horizontal up to integration roundoff; masking enforces
/// the structure exactly.
pub fn horizontal_part(pps: &ProductPhaseSpace, eta: &TensorField) -> Result<TensorField> {
    if eta.valence() != Valence::Form(1) {
        return Err(Error::ValenceMismatch(
            "horizontal projection expects a 1-form".into(),
        ));
    }
    let n1 = pps.dim_slow;
    let dim = pps.chart.dim();
    let inner = eta.clone();
    let inner2 = eta.clone();
    Ok(TensorField::from_parts(
        pps.chart.clone(),
        Valence::Form(1),
        format!("hor({})", eta.label()),
        eta.fd_step(),
        Box::new(move |m: &Point| {
            let mut v = inner.eval(m)?;
            for a in n1..dim {
                v.data[a] = 0.0;
            }
            Ok(v)
        }),
        Some(Box::new(move |m: &Point| {
            let mut j = inner2.jacobian(m)?;
            for a in n1..dim {
                for ax in 0..dim {
                    *j.entry_mut(a, ax) = 0.0;
                }
            }
            Ok(j)
        })),
    ))
}

/// Max magnitude of the fast components of a 1-form over the probes (the
/// horizontality diagnostic reported alongside masked forms).
pub fn fast_component_ceiling(
    pps: &ProductPhaseSpace,
    eta: &TensorField,
    probes: &[Point],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for m in probes {
        let v = eta.eval(m)?;
        for a in pps.dim_slow..pps.chart.dim() {
            worst = worst.max(v.data[a].abs());
        }
    }
    Ok(worst)
}

/// Pointwise Hamiltonian splitting: the unique pair of vector fields tangent
/// to the factor slices with `i_{V1}(pi1* sigma1) = -d1 H` and
/// `i_{V2}(pi2* sigma2) = -d2 H`. An embedded-sphere fast factor solves the
/// tangential system through the cross product.
pub fn hamiltonian_split(
    pps: &Arc<ProductPhaseSpace>,
    h: &TensorField,
) -> Result<(TensorField, TensorField)> {
    if h.valence() != Valence::Scalar {
        return Err(Error::ValenceMismatch(
            "hamiltonian_split expects a scalar field".into(),
        ));
    }
    let make = |slow: bool| -> TensorField {
        let pps = pps.clone();
        let h = h.clone();
        let dim = pps.chart.dim();
        TensorField::from_parts(
            pps.chart.clone(),
            Valence::MultiVector(1),
            format!("V{}({})", if slow { "1" } else { "2" }, h.label()),
            1e-6,
            Box::new(move |m: &Point| {
                let g = h.jacobian(m)?;
                let (start, len) = if slow {
                    (0, pps.dim_slow)
                } else {
                    (pps.dim_slow, pps.dim_fast)
                };
                let mut out = Components::zeros(dim, 1);
                if !slow {
                    if let Some((bs, bl)) = pps.fast_unit_block() {
                        // tangential solve on the unit sphere block:
                        // V = x cross grad_2 H
                        debug_assert_eq!(bl, 3);
                        let x = &m.coords()[bs..bs + 3];
                        let gr = [g.entry(0, bs), g.entry(0, bs + 1), g.entry(0, bs + 2)];
                        out.data[bs] = x[1] * gr[2] - x[2] * gr[1];
                        out.data[bs + 1] = x[2] * gr[0] - x[0] * gr[2];
                        out.data[bs + 2] = x[0] * gr[1] - x[1] * gr[0];
                        return Ok(out);
                    }
                }
                let form = if slow { &pps.sigma_slow } else { &pps.sigma_fast };
                let s = pps.block_matrix(form, m, start, len)?;
                let mut rhs = DVector::zeros(len);
                for b in 0..len {
                    rhs[b] = -g.entry(0, start + b);
                }
                // sum_a v^a S[a, b] = -d_b H  <=>  S^T v = rhs_b form
                let sol = s.transpose().lu().solve(&rhs).ok_or(Error::Nondegenerate {
                    point: m.coords().to_vec(),
                    what: "symplectic block is singular".into(),
                })?;
                for a in 0..len {
                    out.data[start + a] = sol[a];
                }
                Ok(out)
            }),
            None,
        )
    };
    Ok((make(true), make(false)))
}

/// A perturbed Hamiltonian model on a slow-fast phase space:
/// `H_eps = f o pi1 + eps F` with unperturbed part `V = v_f-lift + V_F^(2)`
/// and perturbation `W = V_F^(1)`. Scenario builders supply the derived
/// fields analytically; `hamiltonian_split` provides the generic (and
/// cross-checking) route.
pub struct SlowFastSystem {
    pub pps: Arc<ProductPhaseSpace>,
    /// `f o pi1` on the product chart.
    pub slow_hamiltonian: TensorField,
    /// The coupling `F` on the product chart.
    pub coupling: TensorField,
    /// `v_f` on the slow factor chart (drives the base of the skew product).
    pub v_slow: TensorField,
    /// The lift of `v_f` to the product chart.
    pub v_slow_lift: TensorField,
    /// `V_F^(2)`, tangent to the fast slices.
    pub fast_part: TensorField,
    /// The unperturbed field `V`.
    pub unperturbed: TensorField,
    /// The perturbation `W = V_F^(1)`.
    pub perturbation: TensorField,
    /// Minimal-period frequency of the slow flow, on the slow chart.
    pub slow_frequency: Option<TensorField>,
}

impl SlowFastSystem {
    /// The slow frequency lifted to the product chart, divided by the
    /// resonance order k (the frequency function of the full flow).
    pub fn product_frequency(&self, k: usize) -> Result<TensorField> {
        let varpi = self.slow_frequency.as_ref().ok_or_else(|| {
            Error::Config("scenario provides no analytic slow frequency".into())
        })?;
        let n1 = self.pps.dim_slow;
        let dim = self.pps.chart.dim();
        let inner = varpi.clone();
        let inner2 = varpi.clone();
        let kf = k as f64;
        Ok(TensorField::from_parts(
            self.pps.chart.clone(),
            Valence::Scalar,
            format!("{}/{k} on product", varpi.label()),
            varpi.fd_step(),
            Box::new(move |m: &Point| {
                let slow = Point::new(m.coords()[..n1].to_vec())?;
                Ok(Components::scalar(dim, inner.eval(&slow)?.as_scalar() / kf))
            }),
            Some(Box::new(move |m: &Point| {
                let slow = Point::new(m.coords()[..n1].to_vec())?;
                let g = inner2.jacobian(&slow)?;
                let mut out = ComponentJacobian::zeros(dim, 0);
                for a in 0..n1 {
                    *out.entry_mut(0, a) = g.entry(0, a) / kf;
                }
                Ok(out)
            })),
        ))
    }
}

/// The fast-block Jacobian of the fast part at `(m1, m2_ref)`, used by the
/// monodromy integration for linear fast dynamics.
pub(crate) fn fast_block_jacobian(
    sfs: &SlowFastSystem,
    m1: &[f64],
    m2: &[f64],
) -> Result<DMatrix<f64>> {
    let n1 = sfs.pps.dim_slow;
    let n2 = sfs.pps.dim_fast;
    let mut coords = Vec::with_capacity(n1 + n2);
    coords.extend_from_slice(m1);
    coords.extend_from_slice(m2);
    let j = sfs.fast_part.jacobian(&Point::new(coords)?)?;
    let mut out = DMatrix::zeros(n2, n2);
    for a in 0..n2 {
        for b in 0..n2 {
            out[(a, b)] = j.entry(n1 + a, n1 + b);
        }
    }
    Ok(out)
}

/// Rank of a sorted index pair within the degree-2 component layout.
pub(crate) fn pair_rank(dim: usize, a: usize, b: usize) -> usize {
    rank(dim, &[a.min(b), a.max(b)])
}
