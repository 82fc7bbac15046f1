//! The scenario registry: named, fully analytic model systems used by the
//! command-line tools and the verification suites.
//!
//! Registry names (exact strings): `harmonic`, `quartic` (parameters: delta,
//! r, n, k), `cylinder`, `sphere`, `adiabatic-negative`.

use crate::chart::{CoordChart, Point};
use crate::error::{Error, Result};
use crate::field::{TensorField, Valence};
use crate::flow::{PeriodicFlow, PeriodicFlowConfig};
use crate::probe::{probe_points, ProbeBox};
use crate::quadrature::quartic_constant;
use crate::slow_fast::{
    monodromy, periodicity_certificate, CertifiedFlow, MonodromyConfig, ProductPhaseSpace,
    SlowFastSystem,
};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Registry names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Harmonic,
    Quartic,
    Cylinder,
    Sphere,
    AdiabaticNegative,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(Self::Harmonic),
            "quartic" => Ok(Self::Quartic),
            "cylinder" => Ok(Self::Cylinder),
            "sphere" => Ok(Self::Sphere),
            "adiabatic-negative" => Ok(Self::AdiabaticNegative),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected harmonic, quartic, cylinder, sphere, adiabatic-negative)"
            ))),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Harmonic => "harmonic",
            Self::Quartic => "quartic",
            Self::Cylinder => "cylinder",
            Self::Sphere => "sphere",
            Self::AdiabaticNegative => "adiabatic-negative",
        };
        write!(f, "{s}")
    }
}

/// Scenario construction parameters (flat key set mirrored by the CLI).
#[derive(Debug, Clone)]
pub struct ScenarioParams {
    /// Quartic coupling strength.
    pub delta: f64,
    /// Slow-fast scaling of the symplectic form.
    pub epsilon: f64,
    /// Cylinder forcing amplitude.
    pub gamma: f64,
    /// Operator node count for planar flows.
    pub slice_nodes: usize,
    /// Operator node count for product flows (above-slice dimension makes
    /// orbit sampling several times costlier; the aliasing guard still
    /// doubles on demand).
    pub product_nodes: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub seed: u64,
    pub probe_count: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            delta: 0.375,
            epsilon: 0.01,
            gamma: 0.3,
            slice_nodes: 256,
            product_nodes: 128,
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            seed: 0,
            probe_count: 20,
        }
    }
}

impl ScenarioParams {
    fn flow_config(&self, nodes: usize) -> PeriodicFlowConfig {
        PeriodicFlowConfig {
            integrator: crate::flow::IntegratorConfig {
                rel_tol: self.rel_tol,
                abs_tol: self.abs_tol,
                ..Default::default()
            },
            default_nodes: nodes,
            ..Default::default()
        }
    }
}

/// A planar flow scenario with named fields for the operator commands.
pub struct FlowScenario {
    pub flow: Arc<PeriodicFlow>,
    pub fields: BTreeMap<String, TensorField>,
    pub probe_box: ProbeBox,
    pub min_radius: f64,
}

impl FlowScenario {
    pub fn probes(&self, seed: u64, count: usize) -> Result<Vec<Point>> {
        let r2 = self.min_radius * self.min_radius;
        probe_points(&self.probe_box, seed, count, |x| {
            x[0] * x[0] + x[1] * x[1] > r2
        })
    }

    pub fn field(&self, name: &str) -> Result<&TensorField> {
        self.fields.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown field `{name}` (available: {})",
                self.fields.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}

/// A slow-fast scenario: the system, a certified (or directly constructed)
/// periodic flow of the unperturbed part, probe sets, and the gauge used by
/// the Hamiltonization when one is needed.
pub struct ProductScenario {
    pub system: SlowFastSystem,
    pub flow: Arc<PeriodicFlow>,
    pub k_used: usize,
    pub certificate: Option<CertifiedFlow>,
    pub product_probes: Vec<Point>,
    pub slow_points: Vec<Point>,
    pub hamiltonize_gauge: Option<TensorField>,
}

// ---------------------------------------------------------------- harmonic

fn planar_chart(extent: f64, hole: f64) -> Result<Arc<CoordChart>> {
    let r2 = hole * hole;
    CoordChart::with_excluded(
        &["q", "p"],
        &[-extent, -extent],
        &[extent, extent],
        move |x: &[f64]| x[0] * x[0] + x[1] * x[1] < r2,
    )
}

fn rotation_field(chart: &Arc<CoordChart>) -> TensorField {
    TensorField::vector_field(
        chart,
        "X",
        |x| vec![x[1], -x[0]],
        Some(Box::new(|_| vec![0.0, 1.0, -1.0, 0.0])),
    )
}

fn planar_fields(chart: &Arc<CoordChart>) -> BTreeMap<String, TensorField> {
    let mut m = BTreeMap::new();
    let mut put = |name: &str, f: TensorField| {
        m.insert(name.to_string(), f);
    };
    put(
        "q",
        TensorField::scalar_field(chart, "q", |x| x[0], Some(Box::new(|_| vec![1.0, 0.0]))),
    );
    put(
        "p",
        TensorField::scalar_field(chart, "p", |x| x[1], Some(Box::new(|_| vec![0.0, 1.0]))),
    );
    put(
        "q2",
        TensorField::scalar_field(
            chart,
            "q2",
            |x| x[0] * x[0],
            Some(Box::new(|x| vec![2.0 * x[0], 0.0])),
        ),
    );
    put(
        "qp",
        TensorField::scalar_field(
            chart,
            "qp",
            |x| x[0] * x[1],
            Some(Box::new(|x| vec![x[1], x[0]])),
        ),
    );
    put(
        "energy",
        TensorField::scalar_field(
            chart,
            "energy",
            |x| 0.5 * (x[0] * x[0] + x[1] * x[1]),
            Some(Box::new(|x| vec![x[0], x[1]])),
        ),
    );
    put(
        "sq",
        TensorField::vector_field(
            chart,
            "q d_q",
            |x| vec![x[0], 0.0],
            Some(Box::new(|_| vec![1.0, 0.0, 0.0, 0.0])),
        ),
    );
    put(
        "euler",
        TensorField::vector_field(
            chart,
            "euler",
            |x| vec![x[0], x[1]],
            Some(Box::new(|_| vec![1.0, 0.0, 0.0, 1.0])),
        ),
    );
    put(
        "mix",
        TensorField::vector_field(
            chart,
            "mix",
            |x| vec![x[1], 0.3 * x[0] * x[0]],
            Some(Box::new(|x| vec![0.0, 1.0, 0.6 * x[0], 0.0])),
        ),
    );
    put(
        "dq",
        TensorField::one_form(chart, "dq", |_| vec![1.0, 0.0], Some(Box::new(|_| vec![0.0; 4]))),
    );
    put(
        "qdq",
        TensorField::one_form(
            chart,
            "q dq",
            |x| vec![x[0], 0.0],
            Some(Box::new(|_| vec![1.0, 0.0, 0.0, 0.0])),
        ),
    );
    put(
        "pdq",
        TensorField::one_form(
            chart,
            "p dq",
            |x| vec![x[1], 0.0],
            Some(Box::new(|_| vec![0.0, 1.0, 0.0, 0.0])),
        ),
    );
    put(
        "area",
        TensorField::component_field(
            chart,
            Valence::Form(2),
            "(1+q^2) dq^dp",
            |x| vec![1.0 + x[0] * x[0]],
            Some(Box::new(|x| vec![2.0 * x[0], 0.0])),
        ),
    );
    m
}

/// The planar oscillator: constant frequency 1 on the punctured plane.
pub fn harmonic_slice(params: &ScenarioParams) -> Result<FlowScenario> {
    let chart = planar_chart(8.0, 1e-3)?;
    let x = rotation_field(&chart);
    let omega = TensorField::constant_scalar(&chart, 1.0);
    let flow = PeriodicFlow::new(
        &x,
        &omega,
        params.flow_config(params.slice_nodes),
        &[Point::new(vec![1.0, 0.0])?],
    )?;
    Ok(FlowScenario {
        flow,
        fields: planar_fields(&chart),
        probe_box: ProbeBox::new(vec![0.4, -0.6], vec![1.5, 0.6]),
        min_radius: 0.3,
    })
}

// ----------------------------------------------------------------- quartic

fn quartic_slice_field(chart: &Arc<CoordChart>) -> TensorField {
    TensorField::vector_field(
        chart,
        "Xq",
        |x| vec![x[1], -x[0] * x[0] * x[0]],
        Some(Box::new(|x| vec![0.0, 1.0, -3.0 * x[0] * x[0], 0.0])),
    )
}

/// Minimal-period frequency of the planar quartic oscillator. The closed
/// form is `(2 p^2 + q^4)^(1/4) / (2c)` with the lemniscatic constant c;
/// the period detector confirms the normalization (see the acceptance
/// suite).
pub fn quartic_slice_frequency(chart: &Arc<CoordChart>) -> TensorField {
    let c = quartic_constant();
    TensorField::scalar_field(
        chart,
        "omega_quartic",
        move |x| (2.0 * x[1] * x[1] + x[0].powi(4)).powf(0.25) / (2.0 * c),
        Some(Box::new(move |x| {
            let u = 2.0 * x[1] * x[1] + x[0].powi(4);
            let f = u.powf(-0.75) / (2.0 * c);
            vec![f * x[0].powi(3), f * x[1]]
        })),
    )
}

/// The planar quartic oscillator slice: a genuinely variable frequency.
pub fn quartic_slice(params: &ScenarioParams) -> Result<FlowScenario> {
    let chart = planar_chart(4.0, 1e-2)?;
    let x = quartic_slice_field(&chart);
    let omega = quartic_slice_frequency(&chart);
    let flow = PeriodicFlow::new(
        &x,
        &omega,
        params.flow_config(params.slice_nodes),
        &[Point::new(vec![1.0, 0.0])?, Point::new(vec![0.8, 0.3])?],
    )?;
    let mut fields = planar_fields(&chart);
    fields.insert(
        "energy".into(),
        TensorField::scalar_field(
            &chart,
            "quartic energy",
            |x| 0.5 * x[1] * x[1] + 0.25 * x[0].powi(4),
            Some(Box::new(|x| vec![x[0].powi(3), x[1]])),
        ),
    );
    fields.insert(
        "scaling".into(),
        TensorField::vector_field(
            &chart,
            "scaling",
            |x| vec![x[0], 2.0 * x[1]],
            Some(Box::new(|_| vec![1.0, 0.0, 0.0, 2.0])),
        ),
    );
    Ok(FlowScenario {
        flow,
        fields,
        probe_box: ProbeBox::new(vec![0.6, -0.45], vec![1.35, 0.45]),
        min_radius: 0.35,
    })
}

fn product_chart_4d(slow_extent: f64, fast_extent: f64, slow_hole: f64) -> Result<Arc<CoordChart>> {
    let r2 = slow_hole * slow_hole;
    CoordChart::with_excluded(
        &["q1", "p1", "q2", "p2"],
        &[-slow_extent, -slow_extent, -fast_extent, -fast_extent],
        &[slow_extent, slow_extent, fast_extent, fast_extent],
        move |x: &[f64]| x[0] * x[0] + x[1] * x[1] < r2,
    )
}

fn constant_two_form(
    chart: &Arc<CoordChart>,
    label: &str,
    pair: (usize, usize),
    value: f64,
) -> TensorField {
    let dim = chart.dim();
    let idx = crate::slow_fast::pair_rank(dim, pair.0, pair.1);
    let n = crate::multiindex::binomial(dim, 2);
    TensorField::component_field(
        chart,
        Valence::Form(2),
        label,
        move |_| {
            let mut v = vec![0.0; n];
            v[idx] = value;
            v
        },
        Some(Box::new(move |_| vec![0.0; n * dim])),
    )
}

/// The quartic slow-fast system (coupling delta) with its analytic fields.
/// Returns the system together with reference slow points and the monodromy
/// configuration; no periodicity is assumed.
pub fn quartic_system(params: &ScenarioParams) -> Result<(SlowFastSystem, Vec<Point>, MonodromyConfig)> {
    let delta = params.delta;
    let chart = product_chart_4d(4.0, 8.0, 1e-2)?;
    let slow_chart = planar_chart(4.0, 1e-2)?;
    let sigma_slow = constant_two_form(&chart, "dp1^dq1", (0, 1), -1.0);
    let sigma_fast = constant_two_form(&chart, "dp2^dq2", (2, 3), -1.0);
    let pps = Arc::new(ProductPhaseSpace::new(
        chart.clone(),
        slow_chart.clone(),
        2,
        sigma_slow,
        sigma_fast,
        params.epsilon,
    )?);

    let slow_hamiltonian = TensorField::scalar_field(
        &chart,
        "f o pi1",
        |x| 0.5 * x[1] * x[1] + 0.25 * x[0].powi(4),
        Some(Box::new(|x| vec![x[0].powi(3), x[1], 0.0, 0.0])),
    );
    let coupling = TensorField::scalar_field(
        &chart,
        "F",
        move |x| 0.5 * (x[3] * x[3] + delta * x[0] * x[0] * x[2] * x[2]),
        Some(Box::new(move |x| {
            vec![
                delta * x[0] * x[2] * x[2],
                0.0,
                delta * x[0] * x[0] * x[2],
                x[3],
            ]
        })),
    );
    let v_slow = quartic_slice_field(&slow_chart);
    let v_slow_lift = TensorField::vector_field(
        &chart,
        "vf-lift",
        |x| vec![x[1], -x[0].powi(3), 0.0, 0.0],
        Some(Box::new(|x| {
            let mut j = vec![0.0; 16];
            j[1] = 1.0; // d(q1dot)/dp1
            j[4] = -3.0 * x[0] * x[0]; // d(p1dot)/dq1
            j
        })),
    );
    let fast_part = TensorField::vector_field(
        &chart,
        "VF2",
        move |x| vec![0.0, 0.0, x[3], -delta * x[0] * x[0] * x[2]],
        Some(Box::new(move |x| {
            let mut j = vec![0.0; 16];
            j[2 * 4 + 3] = 1.0; // d(q2dot)/dp2
            j[3 * 4 + 0] = -2.0 * delta * x[0] * x[2]; // d(p2dot)/dq1
            j[3 * 4 + 2] = -delta * x[0] * x[0]; // d(p2dot)/dq2
            j
        })),
    );
    let unperturbed = v_slow_lift.add(&fast_part)?;
    let perturbation = TensorField::vector_field(
        &chart,
        "W",
        move |x| vec![0.0, -delta * x[0] * x[2] * x[2], 0.0, 0.0],
        Some(Box::new(move |x| {
            let mut j = vec![0.0; 16];
            j[1 * 4 + 0] = -delta * x[2] * x[2];
            j[1 * 4 + 2] = -2.0 * delta * x[0] * x[2];
            j
        })),
    );
    let slow_frequency = {
        let c = quartic_constant();
        TensorField::scalar_field(
            &slow_chart,
            "varpi",
            move |x| (2.0 * x[1] * x[1] + x[0].powi(4)).powf(0.25) / (2.0 * c),
            Some(Box::new(move |x| {
                let u = 2.0 * x[1] * x[1] + x[0].powi(4);
                let f = u.powf(-0.75) / (2.0 * c);
                vec![f * x[0].powi(3), f * x[1]]
            })),
        )
    };

    let system = SlowFastSystem {
        pps,
        slow_hamiltonian,
        coupling,
        v_slow,
        v_slow_lift,
        fast_part,
        unperturbed,
        perturbation,
        slow_frequency: Some(slow_frequency),
    };
    let slow_points = vec![
        Point::new(vec![1.0, 0.0])?,
        Point::new(vec![1.1, 0.0])?,
        Point::new(vec![0.9, 0.0])?,
    ];
    let cfg = MonodromyConfig::new(vec![0.5, 0.4]);
    Ok((system, slow_points, cfg))
}

/// Probe points in the product space of the quartic model.
fn quartic_product_probes(seed: u64, count: usize) -> Result<Vec<Point>> {
    let bx = ProbeBox::new(vec![0.6, -0.45, -0.8, -0.8], vec![1.35, 0.45, 0.8, 0.8]);
    probe_points(&bx, seed, count, |x| x[0] * x[0] + x[1] * x[1] > 0.1)
}

/// The certified quartic scenario: monodromy determines the resonance order
/// honestly, the flow closure checks pin the frequency normalization.
pub fn quartic_product(params: &ScenarioParams) -> Result<ProductScenario> {
    let (system, slow_points, mono_cfg) = quartic_system(params)?;
    let probe = monodromy(&system, &slow_points[0], 8, &mono_cfg)?;
    let k = probe.k_min.ok_or_else(|| {
        Error::CertificateFailed(format!(
            "no resonance order <= 8 at delta = {} (monodromy defects {:?})",
            params.delta, probe.power_defects
        ))
    })?;
    let product_probes = quartic_product_probes(params.seed, params.probe_count.min(8))?;
    let cert = periodicity_certificate(
        &system,
        &slow_points,
        k,
        &product_probes,
        &mono_cfg,
        params.flow_config(params.product_nodes),
    )?;
    let flow = cert.flow.clone();
    Ok(ProductScenario {
        system,
        flow,
        k_used: cert.k_used,
        certificate: Some(cert),
        product_probes: quartic_product_probes(params.seed, params.probe_count)?,
        slow_points,
        hamiltonize_gauge: None,
    })
}

// ------------------------------------------------- harmonic product (slow)

/// Harmonic slow factor coupled linearly to a free fast factor through
/// `F = q1 q2`: the averaged slow differential of F vanishes, so the
/// Hamiltonization needs no gauge.
pub fn harmonic_product(params: &ScenarioParams) -> Result<ProductScenario> {
    let chart = product_chart_4d(6.0, 8.0, 1e-3)?;
    let slow_chart = planar_chart(6.0, 1e-3)?;
    let sigma_slow = constant_two_form(&chart, "dp1^dq1", (0, 1), -1.0);
    let sigma_fast = constant_two_form(&chart, "dp2^dq2", (2, 3), -1.0);
    let pps = Arc::new(ProductPhaseSpace::new(
        chart.clone(),
        slow_chart.clone(),
        2,
        sigma_slow,
        sigma_fast,
        params.epsilon,
    )?);
    let slow_hamiltonian = TensorField::scalar_field(
        &chart,
        "f o pi1",
        |x| 0.5 * (x[0] * x[0] + x[1] * x[1]),
        Some(Box::new(|x| vec![x[0], x[1], 0.0, 0.0])),
    );
    let coupling = TensorField::scalar_field(
        &chart,
        "q1 q2",
        |x| x[0] * x[2],
        Some(Box::new(|x| vec![x[2], 0.0, x[0], 0.0])),
    );
    let v_slow = rotation_field(&slow_chart);
    let v_slow_lift = TensorField::vector_field(
        &chart,
        "vf-lift",
        |x| vec![x[1], -x[0], 0.0, 0.0],
        Some(Box::new(|_| {
            let mut j = vec![0.0; 16];
            j[1] = 1.0;
            j[4] = -1.0;
            j
        })),
    );
    let fast_part = TensorField::vector_field(
        &chart,
        "VF2",
        |x| vec![0.0, 0.0, 0.0, -x[0]],
        Some(Box::new(|_| {
            let mut j = vec![0.0; 16];
            j[3 * 4] = -1.0;
            j
        })),
    );
    let unperturbed = v_slow_lift.add(&fast_part)?;
    let perturbation = TensorField::vector_field(
        &chart,
        "W",
        |x| vec![0.0, -x[2], 0.0, 0.0],
        Some(Box::new(|_| {
            let mut j = vec![0.0; 16];
            j[1 * 4 + 2] = -1.0;
            j
        })),
    );
    let slow_frequency = TensorField::constant_scalar(&slow_chart, 1.0);
    let system = SlowFastSystem {
        pps,
        slow_hamiltonian,
        coupling,
        v_slow,
        v_slow_lift,
        fast_part,
        unperturbed,
        perturbation,
        slow_frequency: Some(slow_frequency),
    };
    let slow_points = vec![Point::new(vec![1.0, 0.0])?, Point::new(vec![0.7, 0.4])?];
    let bx = ProbeBox::new(vec![0.5, -0.5, -0.9, -0.9], vec![1.4, 0.5, 0.9, 0.9]);
    let product_probes = probe_points(&bx, params.seed, params.probe_count, |x| {
        x[0] * x[0] + x[1] * x[1] > 0.1
    })?;
    let mono_cfg = MonodromyConfig::new(vec![0.5, 0.4]);
    let cert = periodicity_certificate(
        &system,
        &slow_points,
        1,
        &product_probes[..product_probes.len().min(6)],
        &mono_cfg,
        params.flow_config(params.product_nodes),
    )?;
    let flow = cert.flow.clone();
    Ok(ProductScenario {
        system,
        flow,
        k_used: 1,
        certificate: Some(cert),
        product_probes,
        slow_points,
        hamiltonize_gauge: None,
    })
}

// ---------------------------------------------------------------- cylinder

/// Rotation-rate slow factor on the 2-cylinder driving an affinely forced
/// fast oscillator. The solvability gauge carries the stable closed form
/// `mu = <F_s> / (varpi varpi') d phi`.
pub fn cylinder(params: &ScenarioParams) -> Result<ProductScenario> {
    use std::f64::consts::TAU;
    let gamma = params.gamma;
    let chart = CoordChart::new(
        &["s", "phi", "q2", "p2"],
        &[0.3, 0.0, -8.0, -8.0],
        &[3.0, TAU, 8.0, 8.0],
    )?
    .with_periodic_axis(1, TAU);
    let slow_chart = CoordChart::new(&["s", "phi"], &[0.3, 0.0], &[3.0, TAU])?
        .with_periodic_axis(1, TAU);
    let sigma_slow = constant_two_form(&chart, "ds^dphi", (0, 1), 1.0);
    let sigma_fast = constant_two_form(&chart, "dp2^dq2", (2, 3), -1.0);
    let pps = Arc::new(ProductPhaseSpace::new(
        chart.clone(),
        slow_chart.clone(),
        2,
        sigma_slow,
        sigma_fast,
        params.epsilon,
    )?);
    let slow_hamiltonian = TensorField::scalar_field(
        &chart,
        "s^2/2",
        |x| 0.5 * x[0] * x[0],
        Some(Box::new(|x| vec![x[0], 0.0, 0.0, 0.0])),
    );
    // F = s (q2^2 + p2^2)/2 + gamma q2
    let coupling = TensorField::scalar_field(
        &chart,
        "F",
        move |x| 0.5 * x[0] * (x[2] * x[2] + x[3] * x[3]) + gamma * x[2],
        Some(Box::new(move |x| {
            vec![
                0.5 * (x[2] * x[2] + x[3] * x[3]),
                0.0,
                x[0] * x[2] + gamma,
                x[0] * x[3],
            ]
        })),
    );
    let v_slow = TensorField::vector_field(
        &slow_chart,
        "vf",
        |x| vec![0.0, x[0]],
        Some(Box::new(|_| vec![0.0, 0.0, 1.0, 0.0])),
    );
    let v_slow_lift = TensorField::vector_field(
        &chart,
        "vf-lift",
        |x| vec![0.0, x[0], 0.0, 0.0],
        Some(Box::new(|_| {
            let mut j = vec![0.0; 16];
            j[1 * 4] = 1.0;
            j
        })),
    );
    let fast_part = TensorField::vector_field(
        &chart,
        "VF2",
        move |x| vec![0.0, 0.0, x[0] * x[3], -(x[0] * x[2] + gamma)],
        Some(Box::new(move |x| {
            let mut j = vec![0.0; 16];
            j[2 * 4] = x[3];
            j[2 * 4 + 3] = x[0];
            j[3 * 4] = -x[2];
            j[3 * 4 + 2] = -x[0];
            j
        })),
    );
    let unperturbed = v_slow_lift.add(&fast_part)?;
    // W = V_F^(1) = F_s d_phi
    let perturbation = TensorField::vector_field(
        &chart,
        "W",
        |x| vec![0.0, 0.5 * (x[2] * x[2] + x[3] * x[3]), 0.0, 0.0],
        Some(Box::new(|x| {
            let mut j = vec![0.0; 16];
            j[1 * 4 + 2] = x[2];
            j[1 * 4 + 3] = x[3];
            j
        })),
    );
    let slow_frequency = TensorField::scalar_field(
        &slow_chart,
        "varpi",
        |x| x[0],
        Some(Box::new(|_| vec![1.0, 0.0])),
    );
    let system = SlowFastSystem {
        pps,
        slow_hamiltonian,
        coupling,
        v_slow,
        v_slow_lift,
        fast_part,
        unperturbed,
        perturbation,
        slow_frequency: Some(slow_frequency),
    };
    // the fast orbit is a full rotation about (-gamma/s, 0); its averaged
    // radial energy gives the gauge coefficient `<F_s> / (d varpi/ds) dphi`
    let mu = TensorField::one_form(
        &chart,
        "mu",
        move |x| {
            let s = x[0];
            let cx = -gamma / s;
            let avg_fs = 0.5 * (cx * cx + (x[2] - cx) * (x[2] - cx) + x[3] * x[3]);
            vec![0.0, avg_fs, 0.0, 0.0]
        },
        None,
    );
    let slow_points = vec![Point::new(vec![1.0, 0.0])?, Point::new(vec![1.7, 2.0])?];
    let bx = ProbeBox::new(vec![0.8, 0.0, -0.9, -0.9], vec![2.2, TAU, 0.9, 0.9]);
    let product_probes = probe_points(&bx, params.seed, params.probe_count, |_| true)?;
    let mono_cfg = MonodromyConfig::new(vec![0.5, 0.4]);
    let cert = periodicity_certificate(
        &system,
        &slow_points,
        1,
        &product_probes[..product_probes.len().min(6)],
        &mono_cfg,
        params.flow_config(params.product_nodes),
    )?;
    let flow = cert.flow.clone();
    Ok(ProductScenario {
        system,
        flow,
        k_used: 1,
        certificate: Some(cert),
        product_probes,
        slow_points,
        hamiltonize_gauge: Some(mu),
    })
}

// ------------------------------------------------------ adiabatic negative

/// The frozen-slow-factor model: the unperturbed field is purely fast (an
/// elliptic linear oscillator whose frequency depends on the slow point),
/// so the flow is periodic while the perturbation fails the normalization
/// condition — the documented negative test.
pub fn adiabatic_negative(params: &ScenarioParams) -> Result<ProductScenario> {
    let chart = CoordChart::with_excluded(
        &["q1", "p1", "q2", "p2"],
        &[-0.6, -0.6, -8.0, -8.0],
        &[0.6, 0.6, 8.0, 8.0],
        |x: &[f64]| x[2] * x[2] + x[3] * x[3] < 1e-4,
    )?;
    let slow_chart = CoordChart::new(&["q1", "p1"], &[-0.6, -0.6], &[0.6, 0.6])?;
    let sigma_slow = constant_two_form(&chart, "dp1^dq1", (0, 1), -1.0);
    let sigma_fast = constant_two_form(&chart, "dp2^dq2", (2, 3), -1.0);
    let pps = Arc::new(ProductPhaseSpace::new(
        chart.clone(),
        slow_chart.clone(),
        2,
        sigma_slow,
        sigma_fast,
        params.epsilon,
    )?);
    // fast Hamiltonian g(q1) E2 + kappa(p1) q2 p2 + lam(q1) q2: the elliptic
    // quadratic part fixes the frequency, the linear forcing makes F
    // non-invariant along the fast flow (a purely quadratic F would satisfy
    // the normalization condition by an averaging coincidence)
    let g = |x: &[f64]| 2.0 + x[0];
    let kap = |x: &[f64]| 0.5 * x[1];
    let lam = |x: &[f64]| 0.4 * x[0];
    let slow_hamiltonian = TensorField::constant_scalar(&chart, 0.0);
    let coupling = TensorField::scalar_field(
        &chart,
        "F",
        move |x| {
            0.5 * g(x) * (x[2] * x[2] + x[3] * x[3]) + kap(x) * x[2] * x[3] + lam(x) * x[2]
        },
        Some(Box::new(move |x| {
            vec![
                0.5 * (x[2] * x[2] + x[3] * x[3]) + 0.4 * x[2],
                0.5 * x[2] * x[3],
                g(x) * x[2] + kap(x) * x[3] + lam(x),
                g(x) * x[3] + kap(x) * x[2],
            ]
        })),
    );
    let v_slow = TensorField::zero(&slow_chart, Valence::MultiVector(1));
    let v_slow_lift = TensorField::zero(&chart, Valence::MultiVector(1));
    let fast_part = TensorField::vector_field(
        &chart,
        "VF2",
        move |x| {
            vec![
                0.0,
                0.0,
                g(x) * x[3] + kap(x) * x[2],
                -(g(x) * x[2] + kap(x) * x[3] + lam(x)),
            ]
        },
        Some(Box::new(move |x| {
            let mut j = vec![0.0; 16];
            j[2 * 4] = x[3]; // d(q2dot)/dq1 via g
            j[2 * 4 + 1] = 0.5 * x[2]; // via kappa
            j[2 * 4 + 2] = kap(x);
            j[2 * 4 + 3] = g(x);
            j[3 * 4] = -x[2] - 0.4;
            j[3 * 4 + 1] = -0.5 * x[3];
            j[3 * 4 + 2] = -g(x);
            j[3 * 4 + 3] = -kap(x);
            j
        })),
    );
    let unperturbed = fast_part.clone();
    // W = V_F^(1): i_W (dp1^dq1) = -d1 F
    let perturbation = TensorField::vector_field(
        &chart,
        "W",
        move |x| {
            vec![
                0.5 * x[2] * x[3],
                -(0.5 * (x[2] * x[2] + x[3] * x[3]) + 0.4 * x[2]),
                0.0,
                0.0,
            ]
        },
        Some(Box::new(move |x| {
            let mut j = vec![0.0; 16];
            j[2] = 0.5 * x[3];
            j[3] = 0.5 * x[2];
            j[1 * 4 + 2] = -x[2] - 0.4;
            j[1 * 4 + 3] = -x[3];
            j
        })),
    );
    // omega = sqrt(g^2 - kappa^2), a first integral of the purely fast flow
    let omega = TensorField::scalar_field(
        &chart,
        "omega",
        move |x| (g(x) * g(x) - kap(x) * kap(x)).sqrt(),
        Some(Box::new(move |x| {
            let w = (g(x) * g(x) - kap(x) * kap(x)).sqrt();
            vec![g(x) / w, -0.5 * kap(x) / w, 0.0, 0.0]
        })),
    );
    let bx = ProbeBox::new(vec![-0.4, -0.4, 0.3, 0.3], vec![0.4, 0.4, 1.0, 1.0]);
    let product_probes = probe_points(&bx, params.seed, params.probe_count, |_| true)?;
    let flow = PeriodicFlow::new(
        &unperturbed,
        &omega,
        params.flow_config(params.product_nodes),
        &product_probes[..product_probes.len().min(4)],
    )?;
    let system = SlowFastSystem {
        pps,
        slow_hamiltonian,
        coupling,
        v_slow,
        v_slow_lift,
        fast_part,
        unperturbed,
        perturbation,
        slow_frequency: None,
    };
    Ok(ProductScenario {
        system,
        flow,
        k_used: 1,
        certificate: None,
        product_probes,
        slow_points: vec![],
        hamiltonize_gauge: None,
    })
}

// ------------------------------------------------------------------ sphere

/// The sphere scenario for invariant symplectic structures: the fast factor
/// is the unit sphere, the action rotates it about a slow-dependent axis.
pub struct SphereScenario {
    pub pps: Arc<ProductPhaseSpace>,
    /// The momentum density `J = phi(m1) . x`.
    pub momentum_density: TensorField,
    /// Zero slow Hamiltonian (the action is purely fast).
    pub h_lift: TensorField,
    /// The action generator `-(phi x x) . d/dx`.
    pub generator: TensorField,
    /// The closed-form reference `(phi x x) . d1 phi`.
    pub beta_reference: TensorField,
    pub probes: Vec<Point>,
}

fn sphere_axis(a: f64, b: f64) -> [f64; 3] {
    [a.sin() * b.cos(), a.sin() * b.sin(), a.cos()]
}

fn sphere_axis_da(a: f64, b: f64) -> [f64; 3] {
    [a.cos() * b.cos(), a.cos() * b.sin(), -a.sin()]
}

fn sphere_axis_db(a: f64, b: f64) -> [f64; 3] {
    [-a.sin() * b.sin(), a.sin() * b.cos(), 0.0]
}

fn cross(u: &[f64], v: &[f64]) -> [f64; 3] {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

pub fn sphere(params: &ScenarioParams) -> Result<SphereScenario> {
    let chart = CoordChart::new(
        &["a", "b", "x1", "x2", "x3"],
        &[-1.6, -1.6, -1.2, -1.2, -1.2],
        &[1.6, 1.6, 1.2, 1.2, 1.2],
    )?
    .with_unit_block(2, 3);
    let slow_chart = CoordChart::new(&["a", "b"], &[-1.6, -1.6], &[1.6, 1.6])?;
    let sigma_slow = constant_two_form(&chart, "da^db", (0, 1), 1.0);
    // area form of the unit sphere, extended off the sphere as the closed
    // solid-angle form (the raw area extension has nonzero ambient d, which
    // would break the averaged-form representation; both agree at |x| = 1)
    let sigma_fast = TensorField::component_field(
        &chart,
        Valence::Form(2),
        "sphere area",
        |x| {
            let r2 = x[2] * x[2] + x[3] * x[3] + x[4] * x[4];
            let w = r2.powf(-1.5);
            let mut v = vec![0.0; 10];
            v[crate::slow_fast::pair_rank(5, 2, 3)] = x[4] * w; // x3 dx1^dx2
            v[crate::slow_fast::pair_rank(5, 2, 4)] = -x[3] * w; // -x2 dx1^dx3
            v[crate::slow_fast::pair_rank(5, 3, 4)] = x[2] * w; // x1 dx2^dx3
            v
        },
        Some(Box::new(|x| {
            let r2 = x[2] * x[2] + x[3] * x[3] + x[4] * x[4];
            let w = r2.powf(-1.5);
            let dw = |i: usize| -3.0 * x[2 + i] * r2.powf(-2.5);
            let mut j = vec![0.0; 50];
            let r = crate::slow_fast::pair_rank(5, 2, 3);
            for i in 0..3 {
                j[r * 5 + 2 + i] = x[4] * dw(i);
            }
            j[r * 5 + 4] += w;
            let r = crate::slow_fast::pair_rank(5, 2, 4);
            for i in 0..3 {
                j[r * 5 + 2 + i] = -x[3] * dw(i);
            }
            j[r * 5 + 3] -= w;
            let r = crate::slow_fast::pair_rank(5, 3, 4);
            for i in 0..3 {
                j[r * 5 + 2 + i] = x[2] * dw(i);
            }
            j[r * 5 + 2] += w;
            j
        })),
    );
    let pps = Arc::new(ProductPhaseSpace::new(
        chart.clone(),
        slow_chart,
        2,
        sigma_slow,
        sigma_fast,
        params.epsilon.max(0.05),
    )?);
    // J = phi . x extended 0-homogeneously off the sphere (paired with the
    // solid-angle extension this keeps the contraction identity ambient)
    let momentum_density = TensorField::scalar_field(
        &chart,
        "phi.x/|x|",
        |x| {
            let phi = sphere_axis(x[0], x[1]);
            let r = (x[2] * x[2] + x[3] * x[3] + x[4] * x[4]).sqrt();
            (phi[0] * x[2] + phi[1] * x[3] + phi[2] * x[4]) / r
        },
        Some(Box::new(|x| {
            let phi = sphere_axis(x[0], x[1]);
            let da = sphere_axis_da(x[0], x[1]);
            let db = sphere_axis_db(x[0], x[1]);
            let r2 = x[2] * x[2] + x[3] * x[3] + x[4] * x[4];
            let r = r2.sqrt();
            let dot = phi[0] * x[2] + phi[1] * x[3] + phi[2] * x[4];
            vec![
                (da[0] * x[2] + da[1] * x[3] + da[2] * x[4]) / r,
                (db[0] * x[2] + db[1] * x[3] + db[2] * x[4]) / r,
                phi[0] / r - dot * x[2] / (r2 * r),
                phi[1] / r - dot * x[3] / (r2 * r),
                phi[2] / r - dot * x[4] / (r2 * r),
            ]
        })),
    );
    let h_lift = TensorField::constant_scalar(&chart, 0.0);
    let generator = TensorField::vector_field(
        &chart,
        "axis rotation",
        |x| {
            let phi = sphere_axis(x[0], x[1]);
            let c = cross(&phi, &x[2..5]);
            vec![0.0, 0.0, -c[0], -c[1], -c[2]]
        },
        Some(Box::new(|x| {
            let phi = sphere_axis(x[0], x[1]);
            let da = sphere_axis_da(x[0], x[1]);
            let db = sphere_axis_db(x[0], x[1]);
            let ca = cross(&da, &x[2..5]);
            let cb = cross(&db, &x[2..5]);
            let mut j = vec![0.0; 25];
            for r in 0..3 {
                j[(2 + r) * 5] = -ca[r];
                j[(2 + r) * 5 + 1] = -cb[r];
            }
            // -d(phi x x)/dx = -[phi]_x cross-product matrix
            j[2 * 5 + 3] = phi[2];
            j[2 * 5 + 4] = -phi[1];
            j[3 * 5 + 2] = -phi[2];
            j[3 * 5 + 4] = phi[0];
            j[4 * 5 + 2] = phi[1];
            j[4 * 5 + 3] = -phi[0];
            j
        })),
    );
    let beta_reference = TensorField::one_form(
        &chart,
        "(phi x x).d1 phi",
        |x| {
            let phi = sphere_axis(x[0], x[1]);
            let da = sphere_axis_da(x[0], x[1]);
            let db = sphere_axis_db(x[0], x[1]);
            let c = cross(&phi, &x[2..5]);
            vec![
                c[0] * da[0] + c[1] * da[1] + c[2] * da[2],
                c[0] * db[0] + c[1] * db[1] + c[2] * db[2],
                0.0,
                0.0,
                0.0,
            ]
        },
        None,
    );
    // probes: slow point plus a unit fast vector away from the axis
    let bx = ProbeBox::new(
        vec![0.4, 0.2, -1.0, -1.0, -1.0],
        vec![1.2, 1.4, 1.0, 1.0, 1.0],
    );
    let mut probes = Vec::new();
    let mut index = 0usize;
    while probes.len() < params.probe_count && index < 4000 {
        let raw = crate::probe::halton_point(&bx, params.seed, index);
        index += 1;
        let norm = (raw[2] * raw[2] + raw[3] * raw[3] + raw[4] * raw[4]).sqrt();
        if norm < 0.2 {
            continue;
        }
        let x = [raw[2] / norm, raw[3] / norm, raw[4] / norm];
        let phi = sphere_axis(raw[0], raw[1]);
        let cos_axis = phi[0] * x[0] + phi[1] * x[1] + phi[2] * x[2];
        if cos_axis.abs() > 0.9 {
            continue;
        }
        probes.push(Point::new(vec![raw[0], raw[1], x[0], x[1], x[2]])?);
    }
    if probes.len() < params.probe_count {
        return Err(Error::Config("could not build sphere probe set".into()));
    }
    Ok(SphereScenario {
        pps,
        momentum_density,
        h_lift,
        generator,
        beta_reference,
        probes,
    })
}
