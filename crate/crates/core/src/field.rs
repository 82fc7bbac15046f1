//! Pointwise-evaluable tensor fields of scalar, multivector, or form valence.
//!
//! A field is an immutable handle wrapping an evaluation closure and an
//! optional analytic component-Jacobian closure; composition produces new
//! handles. Missing derivative data falls back to central differences with
//! the per-field step policy.

use crate::chart::{CoordChart, Point};
use crate::components::{ComponentJacobian, Components};
use crate::error::{Error, Result};
use crate::multiindex::binomial;
use std::sync::Arc;

/// Valence of a tensor field. Degree-0 multivectors and forms are both
/// represented by `Scalar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Valence {
    Scalar,
    /// k-multivector field, k >= 1 (k = 1 is an ordinary vector field).
    MultiVector(usize),
    /// k-form field, k >= 1.
    Form(usize),
}

impl Valence {
    pub fn degree(&self) -> usize {
        match self {
            Valence::Scalar => 0,
            Valence::MultiVector(k) | Valence::Form(k) => *k,
        }
    }

    pub fn is_covariant_family(&self) -> bool {
        matches!(self, Valence::Scalar | Valence::Form(_))
    }

    pub fn is_contravariant_family(&self) -> bool {
        matches!(self, Valence::Scalar | Valence::MultiVector(_))
    }

    /// Normalizes degree-0 variants to `Scalar`.
    pub fn normalized(family_covariant: bool, degree: usize) -> Valence {
        if degree == 0 {
            Valence::Scalar
        } else if family_covariant {
            Valence::Form(degree)
        } else {
            Valence::MultiVector(degree)
        }
    }
}

impl std::fmt::Display for Valence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Valence::Scalar => write!(f, "scalar"),
            Valence::MultiVector(k) => write!(f, "{k}-vector"),
            Valence::Form(k) => write!(f, "{k}-form"),
        }
    }
}

pub type EvalFn = dyn Fn(&Point) -> Result<Components> + Send + Sync;
pub type JacFn = dyn Fn(&Point) -> Result<ComponentJacobian> + Send + Sync;

pub(crate) struct FieldInner {
    pub chart: Arc<CoordChart>,
    pub valence: Valence,
    pub label: String,
    pub fd_step: f64,
    pub eval: Box<EvalFn>,
    pub jac: Option<Box<JacFn>>,
}

/// Handle to a pointwise-evaluable tensor field. Cloning is cheap.
#[derive(Clone)]
pub struct TensorField(pub(crate) Arc<FieldInner>);

pub const DEFAULT_FD_STEP: f64 = 1e-6;

impl TensorField {
    pub fn from_parts(
        chart: Arc<CoordChart>,
        valence: Valence,
        label: impl Into<String>,
        fd_step: f64,
        eval: Box<EvalFn>,
        jac: Option<Box<JacFn>>,
    ) -> Self {
        Self(Arc::new(FieldInner {
            chart,
            valence,
            label: label.into(),
            fd_step,
            eval,
            jac,
        }))
    }

    pub fn chart(&self) -> &Arc<CoordChart> {
        &self.0.chart
    }

    pub fn valence(&self) -> Valence {
        self.0.valence
    }

    pub fn degree(&self) -> usize {
        self.0.valence.degree()
    }

    pub fn dim(&self) -> usize {
        self.0.chart.dim()
    }

    pub fn label(&self) -> &str {
        &self.0.label
    }

    pub fn fd_step(&self) -> f64 {
        self.0.fd_step
    }

    pub fn with_fd_step(&self, step: f64) -> Self {
        let inner = self.0.clone();
        Self(Arc::new(FieldInner {
            chart: inner.chart.clone(),
            valence: inner.valence,
            label: inner.label.clone(),
            fd_step: step,
            eval: {
                let base = self.clone();
                Box::new(move |p| (base.0.eval)(p))
            },
            jac: self.0.jac.as_ref().map(|_| -> Box<JacFn> {
                let base = self.clone();
                Box::new(move |p| (base.0.jac.as_ref().unwrap())(p))
            }),
        }))
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.0.jac.is_some()
    }

    fn expected_len(&self) -> usize {
        binomial(self.dim(), self.degree())
    }

    /// Evaluates the field, enforcing chart membership (periodic coordinates
    /// are wrapped to their canonical representative first).
    pub fn eval(&self, p: &Point) -> Result<Components> {
        if p.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: p.dim(),
            });
        }
        let wrapped = Point::new(self.0.chart.wrap(p.coords()))?;
        self.0.chart.check_contains(wrapped.coords())?;
        let out = (self.0.eval)(&wrapped)?;
        debug_assert_eq!(out.data.len(), self.expected_len(), "{}", self.label());
        Ok(out)
    }

    /// Component-Jacobian: analytic when available, otherwise central finite
    /// differences with per-axis step `fd_step * max(1, |x_i|)`.
    pub fn jacobian(&self, p: &Point) -> Result<ComponentJacobian> {
        if let Some(jac) = &self.0.jac {
            let wrapped = Point::new(self.0.chart.wrap(p.coords()))?;
            self.0.chart.check_contains(wrapped.coords())?;
            return jac(&wrapped);
        }
        self.fd_jacobian(p)
    }

    pub fn fd_jacobian(&self, p: &Point) -> Result<ComponentJacobian> {
        let dim = self.dim();
        let ncomp = self.expected_len();
        let mut out = ComponentJacobian::zeros(dim, self.degree());
        let x = p.coords();
        for axis in 0..dim {
            let h = self.0.fd_step * x[axis].abs().max(1.0);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[axis] += h;
            xm[axis] -= h;
            let fp = self.eval(&Point::new(xp)?)?;
            let fm = self.eval(&Point::new(xm)?)?;
            for c in 0..ncomp {
                *out.entry_mut(c, axis) = (fp.data[c] - fm.data[c]) / (2.0 * h);
            }
        }
        Ok(out)
    }

    // ---- leaf constructors -------------------------------------------------

    /// Scalar field from a coordinate closure, optionally with its gradient.
    pub fn scalar_field<F>(
        chart: &Arc<CoordChart>,
        label: impl Into<String>,
        f: F,
        grad: Option<Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
    ) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let dim = chart.dim();
        Self::from_parts(
            chart.clone(),
            Valence::Scalar,
            label,
            DEFAULT_FD_STEP,
            Box::new(move |p: &Point| Ok(Components::scalar(p.dim(), f(p.coords())))),
            grad.map(|g| -> Box<JacFn> {
                Box::new(move |p: &Point| {
                    let mut j = ComponentJacobian::zeros(dim, 0);
                    j.data.copy_from_slice(&g(p.coords()));
                    Ok(j)
                })
            }),
        )
    }

    /// Field of arbitrary valence from component closures (components over
    /// the sorted multi-index set; Jacobian row-major `[comp * dim + axis]`).
    pub fn component_field<F>(
        chart: &Arc<CoordChart>,
        valence: Valence,
        label: impl Into<String>,
        f: F,
        jac: Option<Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
    ) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        let dim = chart.dim();
        let degree = valence.degree();
        Self::from_parts(
            chart.clone(),
            valence,
            label,
            DEFAULT_FD_STEP,
            Box::new(move |p: &Point| Components::from_values(p.dim(), degree, f(p.coords()))),
            jac.map(|g| -> Box<JacFn> {
                Box::new(move |p: &Point| {
                    let mut j = ComponentJacobian::zeros(dim, degree);
                    j.data.copy_from_slice(&g(p.coords()));
                    Ok(j)
                })
            }),
        )
    }

    /// Vector field from a component closure.
    pub fn vector_field<F>(
        chart: &Arc<CoordChart>,
        label: impl Into<String>,
        f: F,
        jac: Option<Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
    ) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::component_field(chart, Valence::MultiVector(1), label, f, jac)
    }

    /// 1-form field from a component closure.
    pub fn one_form<F>(
        chart: &Arc<CoordChart>,
        label: impl Into<String>,
        f: F,
        jac: Option<Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
    ) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::component_field(chart, Valence::Form(1), label, f, jac)
    }

    pub fn zero(chart: &Arc<CoordChart>, valence: Valence) -> Self {
        let degree = valence.degree();
        Self::from_parts(
            chart.clone(),
            valence,
            "0",
            DEFAULT_FD_STEP,
            Box::new(move |p: &Point| Ok(Components::zeros(p.dim(), degree))),
            Some({
                let dim = chart.dim();
                Box::new(move |_p: &Point| Ok(ComponentJacobian::zeros(dim, degree)))
            }),
        )
    }

    pub fn constant_scalar(chart: &Arc<CoordChart>, value: f64) -> Self {
        let dim = chart.dim();
        Self::from_parts(
            chart.clone(),
            Valence::Scalar,
            format!("{value}"),
            DEFAULT_FD_STEP,
            Box::new(move |p: &Point| Ok(Components::scalar(p.dim(), value))),
            Some(Box::new(move |_p: &Point| {
                Ok(ComponentJacobian::zeros(dim, 0))
            })),
        )
    }

    // ---- linear and scalar algebra ------------------------------------------

    pub fn same_chart(&self, other: &TensorField) -> Result<()> {
        if Arc::ptr_eq(&self.0.chart, &other.0.chart) {
            Ok(())
        } else {
            Err(Error::ChartMismatch)
        }
    }

    pub fn add(&self, other: &TensorField) -> Result<TensorField> {
        self.same_chart(other)?;
        if self.valence() != other.valence() {
            return Err(Error::ValenceMismatch(format!(
                "cannot add {} and {}",
                self.valence(),
                other.valence()
            )));
        }
        let (a, b) = (self.clone(), other.clone());
        let (a2, b2) = (self.clone(), other.clone());
        Ok(TensorField::from_parts(
            self.0.chart.clone(),
            self.valence(),
            format!("({} + {})", self.label(), other.label()),
            self.fd_step().max(other.fd_step()),
            Box::new(move |p| {
                let mut va = (a.0.eval)(p)?;
                let vb = (b.0.eval)(p)?;
                va.add_assign_scaled(&vb, 1.0);
                Ok(va)
            }),
            Some(Box::new(move |p| {
                let mut ja = a2.jacobian(p)?;
                let jb = b2.jacobian(p)?;
                ja.add_assign_scaled(&jb, 1.0);
                Ok(ja)
            })),
        ))
    }

    pub fn sub(&self, other: &TensorField) -> Result<TensorField> {
        self.add(&other.scale_const(-1.0))
    }

    pub fn scale_const(&self, factor: f64) -> TensorField {
        let a = self.clone();
        let a2 = self.clone();
        TensorField::from_parts(
            self.0.chart.clone(),
            self.valence(),
            format!("{factor}*{}", self.label()),
            self.fd_step(),
            Box::new(move |p| {
                let mut v = (a.0.eval)(p)?;
                v.scale(factor);
                Ok(v)
            }),
            Some(Box::new(move |p| {
                let mut j = a2.jacobian(p)?;
                for x in &mut j.data {
                    *x *= factor;
                }
                Ok(j)
            })),
        )
    }

    /// Pointwise multiplication by a scalar field (product rule Jacobian).
    pub fn scale_by(&self, scalar: &TensorField) -> Result<TensorField> {
        self.same_chart(scalar)?;
        if scalar.valence() != Valence::Scalar {
            return Err(Error::ValenceMismatch(format!(
                "scale_by expects a scalar field, got {}",
                scalar.valence()
            )));
        }
        let (f, s) = (self.clone(), scalar.clone());
        let (f2, s2) = (self.clone(), scalar.clone());
        let dim = self.dim();
        let degree = self.degree();
        Ok(TensorField::from_parts(
            self.0.chart.clone(),
            self.valence(),
            format!("({})*({})", scalar.label(), self.label()),
            self.fd_step().max(scalar.fd_step()),
            Box::new(move |p| {
                let sv = (s.0.eval)(p)?.as_scalar();
                let mut v = (f.0.eval)(p)?;
                v.scale(sv);
                Ok(v)
            }),
            Some(Box::new(move |p| {
                let sv = s2.eval(p)?.as_scalar();
                let sg = s2.jacobian(p)?;
                let fv = f2.eval(p)?;
                let fj = f2.jacobian(p)?;
                let mut out = ComponentJacobian::zeros(dim, degree);
                for c in 0..fv.data.len() {
                    for ax in 0..dim {
                        *out.entry_mut(c, ax) =
                            sv * fj.entry(c, ax) + sg.entry(0, ax) * fv.data[c];
                    }
                }
                Ok(out)
            })),
        ))
    }

    /// Pointwise reciprocal of a scalar field.
    pub fn reciprocal(&self) -> Result<TensorField> {
        if self.valence() != Valence::Scalar {
            return Err(Error::ValenceMismatch(
                "reciprocal expects a scalar field".into(),
            ));
        }
        let f = self.clone();
        let f2 = self.clone();
        let dim = self.dim();
        Ok(TensorField::from_parts(
            self.0.chart.clone(),
            Valence::Scalar,
            format!("1/({})", self.label()),
            self.fd_step(),
            Box::new(move |p| {
                let v = (f.0.eval)(p)?.as_scalar();
                Ok(Components::scalar(p.dim(), 1.0 / v))
            }),
            Some(Box::new(move |p| {
                let v = f2.eval(p)?.as_scalar();
                let g = f2.jacobian(p)?;
                let mut out = ComponentJacobian::zeros(dim, 0);
                for ax in 0..dim {
                    *out.entry_mut(0, ax) = -g.entry(0, ax) / (v * v);
                }
                Ok(out)
            })),
        ))
    }

    /// Integer power of a scalar field.
    pub fn powi(&self, n: i32) -> Result<TensorField> {
        if self.valence() != Valence::Scalar {
            return Err(Error::ValenceMismatch("powi expects a scalar field".into()));
        }
        let f = self.clone();
        let f2 = self.clone();
        let dim = self.dim();
        Ok(TensorField::from_parts(
            self.0.chart.clone(),
            Valence::Scalar,
            format!("({})^{n}", self.label()),
            self.fd_step(),
            Box::new(move |p| {
                let v = (f.0.eval)(p)?.as_scalar();
                Ok(Components::scalar(p.dim(), v.powi(n)))
            }),
            Some(Box::new(move |p| {
                let v = f2.eval(p)?.as_scalar();
                let g = f2.jacobian(p)?;
                let mut out = ComponentJacobian::zeros(dim, 0);
                let factor = f64::from(n) * v.powi(n - 1);
                for ax in 0..dim {
                    *out.entry_mut(0, ax) = factor * g.entry(0, ax);
                }
                Ok(out)
            })),
        ))
    }
}

impl std::fmt::Debug for TensorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TensorField[{} : {}]", self.label(), self.valence())
    }
}
