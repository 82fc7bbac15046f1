//! Exterior-algebra operations on tensor fields: wedge products, interior
//! products, the exterior derivative, and Lie derivatives in coordinates.

use crate::chart::Point;
use crate::components::{ComponentJacobian, Components};
use crate::error::{Error, Result};
use crate::field::{TensorField, Valence};
use crate::multiindex::{index_sets, merge_sign, rank, remove_position, sort_with_sign};

/// Wedge product. Operands must be in the same family (scalars combine with
/// either family); the result carries the alternating convention with unit
/// coefficient on sorted indices.
pub fn wedge(a: &TensorField, b: &TensorField) -> Result<TensorField> {
    a.same_chart(b)?;
    let dim = a.dim();
    let (p, q) = (a.degree(), b.degree());
    if p + q > dim {
        return Err(Error::DegreeOverflow {
            degree: p + q,
            dim,
        });
    }
    let covariant = match (a.valence(), b.valence()) {
        (Valence::Scalar, v) => v.is_covariant_family(),
        (v, Valence::Scalar) => v.is_covariant_family(),
        (Valence::Form(_), Valence::Form(_)) => true,
        (Valence::MultiVector(_), Valence::MultiVector(_)) => false,
        (va, vb) => {
            return Err(Error::ValenceMismatch(format!(
                "cannot wedge {va} with {vb}"
            )))
        }
    };
    if p == 0 {
        return b.scale_by(a);
    }
    if q == 0 {
        return a.scale_by(b);
    }
    let out_valence = Valence::normalized(covariant, p + q);
    let sets_a = index_sets(dim, p);
    let sets_b = index_sets(dim, q);
    // precompute the merge table: (ia, ib) -> (sign, out rank)
    let mut table = Vec::with_capacity(sets_a.len() * sets_b.len());
    for sa in &sets_a {
        for sb in &sets_b {
            table.push(merge_sign(sa, sb).map(|(s, m)| (s, rank(dim, &m))));
        }
    }
    let nb = sets_b.len();
    let (fa, fb) = (a.clone(), b.clone());
    let (fa2, fb2) = (a.clone(), b.clone());
    let table2 = table.clone();
    Ok(TensorField::from_parts(
        a.chart().clone(),
        out_valence,
        format!("({})^({})", a.label(), b.label()),
        a.fd_step().max(b.fd_step()),
        Box::new(move |pt: &Point| {
            let va = fa.eval(pt)?;
            let vb = fb.eval(pt)?;
            let mut out = Components::zeros(va.dim, p + q);
            for (ia, &x) in va.data.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (ib, &y) in vb.data.iter().enumerate() {
                    if let Some((sign, r)) = table[ia * nb + ib] {
                        out.data[r] += sign * x * y;
                    }
                }
            }
            Ok(out)
        }),
        Some(Box::new(move |pt: &Point| {
            let va = fa2.eval(pt)?;
            let vb = fb2.eval(pt)?;
            let ja = fa2.jacobian(pt)?;
            let jb = fb2.jacobian(pt)?;
            let mut out = ComponentJacobian::zeros(va.dim, p + q);
            for ia in 0..va.data.len() {
                for ib in 0..vb.data.len() {
                    if let Some((sign, r)) = table2[ia * nb + ib] {
                        for ax in 0..va.dim {
                            *out.entry_mut(r, ax) += sign
                                * (ja.entry(ia, ax) * vb.data[ib]
                                    + va.data[ia] * jb.entry(ib, ax));
                        }
                    }
                }
            }
            Ok(out)
        })),
    ))
}

/// Interior product of a vector field with a k-form (contraction of the
/// first slot); the degree drops by one, and a 1-form contracts to a scalar.
pub fn interior_form(y: &TensorField, eta: &TensorField) -> Result<TensorField> {
    y.same_chart(eta)?;
    if y.valence() != Valence::MultiVector(1) {
        return Err(Error::ValenceMismatch(format!(
            "interior_form expects a vector field, got {}",
            y.valence()
        )));
    }
    let k = match eta.valence() {
        Valence::Form(k) => k,
        v => {
            return Err(Error::ValenceMismatch(format!(
                "interior_form expects a k-form with k >= 1, got {v}"
            )))
        }
    };
    contraction(y, eta, k, true)
}

/// Interior product of a 1-form with a k-multivector. A 0-vector (scalar)
/// contracts to the zero scalar field by definition.
pub fn interior_multivector(alpha: &TensorField, a: &TensorField) -> Result<TensorField> {
    alpha.same_chart(a)?;
    if alpha.valence() != Valence::Form(1) {
        return Err(Error::ValenceMismatch(format!(
            "interior_multivector expects a 1-form, got {}",
            alpha.valence()
        )));
    }
    match a.valence() {
        Valence::Scalar => Ok(TensorField::zero(a.chart(), Valence::Scalar)),
        Valence::MultiVector(k) => contraction(alpha, a, k, false),
        v => Err(Error::ValenceMismatch(format!(
            "interior_multivector expects a multivector, got {v}"
        ))),
    }
}

/// Shared contraction kernel: `out[J] = sum_a probe^a big[sort(a,J)] sign`.
fn contraction(
    probe: &TensorField,
    big: &TensorField,
    k: usize,
    covariant_out: bool,
) -> Result<TensorField> {
    let dim = big.dim();
    let out_valence = Valence::normalized(covariant_out, k - 1);
    let sets_out = index_sets(dim, k - 1);
    // table[jout * dim + a] = Some((sign, rank of sort(a, J)))
    let mut table = vec![None; sets_out.len() * dim];
    for (jo, set) in sets_out.iter().enumerate() {
        for a in 0..dim {
            if let Some((sign, merged)) = merge_sign(&[a], set) {
                table[jo * dim + a] = Some((sign, rank(dim, &merged)));
            }
        }
    }
    let n_out = sets_out.len();
    let (fp, fb) = (probe.clone(), big.clone());
    let (fp2, fb2) = (probe.clone(), big.clone());
    let table2 = table.clone();
    Ok(TensorField::from_parts(
        big.chart().clone(),
        out_valence,
        format!("i_({})({})", probe.label(), big.label()),
        probe.fd_step().max(big.fd_step()),
        Box::new(move |pt: &Point| {
            let vp = fp.eval(pt)?;
            let vb = fb.eval(pt)?;
            let mut out = Components::zeros(vb.dim, k - 1);
            for jo in 0..n_out {
                let mut acc = 0.0;
                for a in 0..vb.dim {
                    if let Some((sign, r)) = table[jo * vb.dim + a] {
                        acc += sign * vp.data[a] * vb.data[r];
                    }
                }
                out.data[jo] = acc;
            }
            Ok(out)
        }),
        Some(Box::new(move |pt: &Point| {
            let vp = fp2.eval(pt)?;
            let vb = fb2.eval(pt)?;
            let jp = fp2.jacobian(pt)?;
            let jb = fb2.jacobian(pt)?;
            let mut out = ComponentJacobian::zeros(vb.dim, k - 1);
            for jo in 0..n_out {
                for a in 0..vb.dim {
                    if let Some((sign, r)) = table2[jo * vb.dim + a] {
                        for ax in 0..vb.dim {
                            *out.entry_mut(jo, ax) += sign
                                * (jp.entry(a, ax) * vb.data[r] + vp.data[a] * jb.entry(r, ax));
                        }
                    }
                }
            }
            Ok(out)
        })),
    ))
}

/// Exterior derivative via antisymmetrized component partials.
pub fn exterior_derivative(eta: &TensorField) -> Result<TensorField> {
    let k = match eta.valence() {
        Valence::Scalar => 0,
        Valence::Form(k) => k,
        v => {
            return Err(Error::ValenceMismatch(format!(
                "exterior derivative expects a form, got {v}"
            )))
        }
    };
    let dim = eta.dim();
    if k >= dim {
        return Err(Error::DegreeOverflow {
            degree: k + 1,
            dim,
        });
    }
    let sets_out = index_sets(dim, k + 1);
    // terms[out][r] = (sign, input component rank, axis)
    let mut terms: Vec<Vec<(f64, usize, usize)>> = Vec::with_capacity(sets_out.len());
    for set in &sets_out {
        let mut v = Vec::with_capacity(k + 1);
        for r in 0..=k {
            let (sign, rest) = remove_position(set, r);
            v.push((sign, rank(dim, &rest), set[r]));
        }
        terms.push(v);
    }
    let f = eta.clone();
    Ok(TensorField::from_parts(
        eta.chart().clone(),
        Valence::Form(k + 1),
        format!("d({})", eta.label()),
        eta.fd_step(),
        Box::new(move |pt: &Point| {
            let jac = f.jacobian(pt)?;
            let mut out = Components::zeros(jac.dim, k + 1);
            for (o, term_list) in terms.iter().enumerate() {
                let mut acc = 0.0;
                for &(sign, comp, axis) in term_list {
                    acc += sign * jac.entry(comp, axis);
                }
                out.data[o] = acc;
            }
            Ok(out)
        }),
        None,
    ))
}

/// Lie derivative along a vector field, by the coordinate formulas:
/// transport term plus degree-many connection terms with resorted indices.
pub fn lie_derivative(x: &TensorField, xi: &TensorField) -> Result<TensorField> {
    x.same_chart(xi)?;
    if x.valence() != Valence::MultiVector(1) {
        return Err(Error::ValenceMismatch(format!(
            "lie_derivative expects a vector field, got {}",
            x.valence()
        )));
    }
    let dim = xi.dim();
    let valence = xi.valence();
    let k = valence.degree();
    let sets = index_sets(dim, k);
    // replacement table: for sorted I, position r, axis m, the component
    // I[r -> m] resorted with sign (skipped when indices collide).
    let mut repl: Vec<Option<(f64, usize)>> = vec![None; sets.len() * k.max(1) * dim];
    if k > 0 {
        for (ci, set) in sets.iter().enumerate() {
            for r in 0..k {
                for m in 0..dim {
                    let mut replaced = set.clone();
                    replaced[r] = m;
                    if let Some(sign) = sort_with_sign(&mut replaced) {
                        repl[(ci * k + r) * dim + m] = Some((sign, rank(dim, &replaced)));
                    }
                }
            }
        }
    }
    let sets2 = sets.clone();
    let (fx, fxi) = (x.clone(), xi.clone());
    Ok(TensorField::from_parts(
        xi.chart().clone(),
        valence,
        format!("L_({})({})", x.label(), xi.label()),
        x.fd_step().max(xi.fd_step()),
        Box::new(move |pt: &Point| {
            let xv = fx.eval(pt)?;
            let xj = fx.jacobian(pt)?;
            let cv = fxi.eval(pt)?;
            let cj = fxi.jacobian(pt)?;
            let mut out = Components::zeros(dim, k);
            for (ci, set) in sets2.iter().enumerate() {
                // transport: X^a d_a Xi_I
                let mut acc = 0.0;
                for a in 0..dim {
                    acc += xv.data[a] * cj.entry(ci, a);
                }
                // connection terms
                for (r, &ir) in set.iter().enumerate() {
                    for m in 0..dim {
                        if let Some((sign, comp)) = repl[(ci * k + r) * dim + m] {
                            match valence {
                                Valence::MultiVector(_) => {
                                    // - dX^{i_r}/dx^m * A^{I[r->m]}
                                    acc -= xj.entry(ir, m) * cv.data[comp] * sign;
                                }
                                Valence::Form(_) => {
                                    // + dX^m/dx^{i_r} * eta_{I[r->m]}
                                    acc += xj.entry(m, ir) * cv.data[comp] * sign;
                                }
                                Valence::Scalar => unreachable!(),
                            }
                        }
                    }
                }
                out.data[ci] = acc;
            }
            Ok(out)
        }),
        None,
    ))
}

/// Lie bracket of vector fields, `[X, Z] = (DZ)X - (DX)Z`.
pub fn lie_bracket(x: &TensorField, z: &TensorField) -> Result<TensorField> {
    if z.valence() != Valence::MultiVector(1) {
        return Err(Error::ValenceMismatch(format!(
            "lie_bracket expects vector fields, got {}",
            z.valence()
        )));
    }
    lie_derivative(x, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::CoordChart;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn chart2() -> Arc<CoordChart> {
        CoordChart::new(&["q", "p"], &[-5.0, -5.0], &[5.0, 5.0]).unwrap()
    }

    fn chart3() -> Arc<CoordChart> {
        CoordChart::new(&["x", "y", "z"], &[-5.0, -5.0, -5.0], &[5.0, 5.0, 5.0]).unwrap()
    }

    fn pt(coords: &[f64]) -> Point {
        Point::from_slice(coords).unwrap()
    }

    /// Dense alternating-product oracle for wedge of a p-form and q-form:
    /// fills fully antisymmetric arrays and contracts on sorted indices.
    fn dense_wedge_oracle(
        _dim: usize,
        a: &Components,
        b: &Components,
        target: &[usize],
    ) -> f64 {
        // (a ^ b)(e_{t1}, .., e_{tk}) as a shuffle sum over all ways to pick
        // which slots feed a.
        let p = a.degree;
        let q = b.degree;
        let k = p + q;
        assert_eq!(target.len(), k);
        let mut acc = 0.0;
        for choice in index_sets(k, p) {
            let sa: Vec<usize> = choice.iter().map(|&i| target[i]).collect();
            let rest: Vec<usize> = (0..k)
                .filter(|i| !choice.contains(i))
                .map(|i| target[i])
                .collect();
            // shuffle parity: number of inversions of (choice, rest)
            let mut perm: Vec<usize> = choice.clone();
            perm.extend((0..k).filter(|i| !choice.contains(i)));
            let mut sign = 1.0;
            let mut perm_copy = perm.clone();
            sign *= sort_with_sign(&mut perm_copy).unwrap();
            acc += sign * a.get(&sa) * b.get(&rest);
        }
        acc
    }

    #[test]
    fn constant_coframe_wedge() {
        let chart = chart2();
        let dq = TensorField::one_form(&chart, "dq", |_| vec![1.0, 0.0], None);
        let dp = TensorField::one_form(&chart, "dp", |_| vec![0.0, 1.0], None);
        let w = wedge(&dq, &dp).unwrap();
        let v = w.eval(&pt(&[0.3, -0.8])).unwrap();
        assert_eq!(v.degree, 2);
        assert_abs_diff_eq!(v.data[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn one_form_self_wedge_vanishes() {
        let chart = chart2();
        let a = TensorField::one_form(&chart, "a", |x| vec![x[0] + 1.0, x[1] * x[0]], None);
        let w = wedge(&a, &a).unwrap();
        assert_abs_diff_eq!(w.eval(&pt(&[1.2, 0.4])).unwrap().data[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn qdp_wedge_pdq_matches_hand_expansion_and_dense_oracle() {
        let chart = chart2();
        let qdp = TensorField::one_form(&chart, "q dp", |x| vec![0.0, x[0]], None);
        let pdq = TensorField::one_form(&chart, "p dq", |x| vec![x[1], 0.0], None);
        let w = wedge(&qdp, &pdq).unwrap();
        let at = pt(&[2.0, 3.0]);
        let got = w.eval(&at).unwrap().data[0];
        assert_abs_diff_eq!(got, -6.0, epsilon = 1e-14);
        let a = qdp.eval(&at).unwrap();
        let b = pdq.eval(&at).unwrap();
        assert_abs_diff_eq!(got, dense_wedge_oracle(2, &a, &b, &[0, 1]), epsilon = 1e-14);
    }

    #[test]
    fn wedge_alternation_sign_in_three_dims() {
        let chart = chart3();
        let a = TensorField::one_form(&chart, "a", |x| vec![x[0], 1.0 + x[2], x[1] * x[1]], None);
        let b = TensorField::component_field(
            &chart,
            Valence::Form(2),
            "b",
            |x| vec![x[1], x[0] * x[2], 2.0 - x[0]],
            None,
        );
        let ab = wedge(&a, &b).unwrap();
        let ba = wedge(&b, &a).unwrap();
        let at = pt(&[0.7, -0.4, 1.1]);
        let va = ab.eval(&at).unwrap().data[0];
        let vb = ba.eval(&at).unwrap().data[0];
        // p*q = 2, so a^b = b^a
        assert_abs_diff_eq!(va, vb, epsilon = 1e-13);
        let oracle = dense_wedge_oracle(3, &a.eval(&at).unwrap(), &b.eval(&at).unwrap(), &[0, 1, 2]);
        assert_abs_diff_eq!(va, oracle, epsilon = 1e-13);
    }

    #[test]
    fn interior_form_examples() {
        let chart = chart2();
        let dq = TensorField::one_form(&chart, "dq", |_| vec![1.0, 0.0], None);
        let dp = TensorField::one_form(&chart, "dp", |_| vec![0.0, 1.0], None);
        let area = wedge(&dq, &dp).unwrap();
        let eq = TensorField::vector_field(&chart, "eq", |_| vec![1.0, 0.0], None);
        // i_{dq-direction}(dq^dp) = dp
        let res = interior_form(&eq, &area).unwrap();
        let v = res.eval(&pt(&[0.2, 0.9])).unwrap();
        assert_abs_diff_eq!(v.data[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.data[1], 1.0, epsilon = 1e-15);

        // i_X(dq^dp) with X = p dq - q dp gives q dq + p dp
        let x = TensorField::vector_field(&chart, "X", |x| vec![x[1], -x[0]], None);
        let res = interior_form(&x, &area).unwrap();
        let v = res.eval(&pt(&[1.0, 2.0])).unwrap();
        assert_abs_diff_eq!(v.data[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.data[1], 2.0, epsilon = 1e-15);

        // zero vector contracts to the zero field
        let zero = TensorField::zero(&chart, Valence::MultiVector(1));
        let res = interior_form(&zero, &area).unwrap();
        assert_abs_diff_eq!(res.eval(&pt(&[1.0, 2.0])).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn interior_multivector_examples() {
        let chart = chart2();
        // 0-vector contracts to zero by definition
        let scalar = TensorField::scalar_field(&chart, "f", |x| x[0] * x[1], None);
        let dq = TensorField::one_form(&chart, "dq", |_| vec![1.0, 0.0], None);
        let z = interior_multivector(&dq, &scalar).unwrap();
        assert_eq!(z.valence(), Valence::Scalar);
        assert_abs_diff_eq!(z.eval(&pt(&[1.0, 1.0])).unwrap().as_scalar(), 0.0);

        // i_dq (eq ^ ep) = ep
        let eq = TensorField::vector_field(&chart, "eq", |_| vec![1.0, 0.0], None);
        let ep = TensorField::vector_field(&chart, "ep", |_| vec![0.0, 1.0], None);
        let biv = wedge(&eq, &ep).unwrap();
        let res = interior_multivector(&dq, &biv).unwrap();
        let v = res.eval(&pt(&[0.4, 0.1])).unwrap();
        assert_abs_diff_eq!(v.data[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.data[1], 1.0, epsilon = 1e-15);

        // i_{dH0} X = 0 for the tangent rotation field
        let dh0 = TensorField::one_form(&chart, "dH0", |x| vec![x[0], x[1]], None);
        let x = TensorField::vector_field(&chart, "X", |x| vec![x[1], -x[0]], None);
        let res = interior_multivector(&dh0, &x).unwrap();
        assert_abs_diff_eq!(res.eval(&pt(&[1.0, 1.0])).unwrap().as_scalar(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exterior_derivative_examples() {
        let chart = chart2();
        // d(q dp) = dq ^ dp
        let qdp = TensorField::one_form(
            &chart,
            "q dp",
            |x| vec![0.0, x[0]],
            Some(Box::new(|_| vec![0.0, 0.0, 1.0, 0.0])),
        );
        let d = exterior_derivative(&qdp).unwrap();
        assert_abs_diff_eq!(d.eval(&pt(&[0.7, 0.2])).unwrap().data[0], 1.0, epsilon = 1e-12);

        // d(dH0) = 0 for H0 = (q^2+p^2)/2, through the FD policy
        let h0 = TensorField::scalar_field(&chart, "H0", |x| 0.5 * (x[0] * x[0] + x[1] * x[1]), None);
        let dh0 = exterior_derivative(&h0).unwrap();
        let dd = exterior_derivative(&dh0).unwrap();
        assert!(dd.eval(&pt(&[1.0, -0.6])).unwrap().max_abs() < 1e-5);
    }

    #[test]
    fn lie_bracket_examples() {
        let chart = chart2();
        let x = TensorField::vector_field(
            &chart,
            "X",
            |x| vec![x[1], -x[0]],
            Some(Box::new(|_| vec![0.0, 1.0, -1.0, 0.0])),
        );
        // [d_q, d_p] = 0
        let eq = TensorField::vector_field(&chart, "eq", |_| vec![1.0, 0.0], None);
        let ep = TensorField::vector_field(&chart, "ep", |_| vec![0.0, 1.0], None);
        let b = lie_bracket(&eq, &ep).unwrap();
        assert!(b.eval(&pt(&[0.5, 0.5])).unwrap().max_abs() < 1e-9);

        // [X, q d_q] at (1,0) = (p, q)|_(1,0) = (0, 1)
        let qq = TensorField::vector_field(
            &chart,
            "q dq-dir",
            |x| vec![x[0], 0.0],
            Some(Box::new(|_| vec![1.0, 0.0, 0.0, 0.0])),
        );
        let b = lie_bracket(&x, &qq).unwrap();
        let v = b.eval(&pt(&[1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(v.data[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.data[1], 1.0, epsilon = 1e-12);
        // FD-oracle route (no analytic Jacobians) agrees
        let x_fd = TensorField::vector_field(&chart, "X", |x| vec![x[1], -x[0]], None);
        let qq_fd = TensorField::vector_field(&chart, "qdq", |x| vec![x[0], 0.0], None);
        let b_fd = lie_bracket(&x_fd, &qq_fd).unwrap();
        let v_fd = b_fd.eval(&pt(&[1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(v.data[0], v_fd.data[0], epsilon = 1e-8);
        assert_abs_diff_eq!(v.data[1], v_fd.data[1], epsilon = 1e-8);

        // [X, X] = 0
        let b = lie_bracket(&x, &x).unwrap();
        assert!(b.eval(&pt(&[1.3, -0.2])).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn lie_derivative_of_form_matches_cartan_formula() {
        let chart = chart2();
        let x = TensorField::vector_field(
            &chart,
            "X",
            |x| vec![x[1], -x[0]],
            Some(Box::new(|_| vec![0.0, 1.0, -1.0, 0.0])),
        );
        let eta = TensorField::one_form(
            &chart,
            "eta",
            |x| vec![x[0] * x[1], x[1] * x[1]],
            Some(Box::new(|x| vec![x[1], x[0], 0.0, 2.0 * x[1]])),
        );
        let lhs = lie_derivative(&x, &eta).unwrap();
        let cartan = {
            let d_eta = exterior_derivative(&eta).unwrap();
            let a = interior_form(&x, &d_eta).unwrap();
            let b = exterior_derivative(&interior_form(&x, &eta).unwrap()).unwrap();
            a.add(&b).unwrap()
        };
        let at = pt(&[0.8, -0.5]);
        let v1 = lhs.eval(&at).unwrap();
        let v2 = cartan.eval(&at).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(v1.data[i], v2.data[i], epsilon = 1e-7);
        }
    }
}
