//! Resonance bookkeeping for the quartic slow-fast model: the relation
//! `sqrt(2) cos((pi/4) sqrt(1 + 8 delta)) = cos(pi n/k)` characterizing the
//! coupling strengths with periodic monodromy, and the parametrization
//! `delta = r(r+1)/2` over rationals in the windows `(4s, 4s+1)`.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

/// Left-minus-right of the resonance relation for given coupling and ratio.
pub fn resonance_mismatch(delta: f64, n: u32, k: u32) -> f64 {
    let lhs = SQRT_2 * (FRAC_PI_4 * (1.0 + 8.0 * delta).sqrt()).cos();
    let rhs = (PI * n as f64 / k as f64).cos();
    (lhs - rhs).abs()
}

/// Whether `(delta, n/k)` satisfies the resonance relation within `tol`.
/// Requires `0 < n < k` coprime.
pub fn is_resonant(delta: f64, n: u32, k: u32, tol: f64) -> bool {
    n > 0 && n < k && gcd(n, k) == 1 && resonance_mismatch(delta, n, k) < tol
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Coupling strength from the rational parameter: `delta = r (r + 1) / 2`.
pub fn delta_from_ratio(num: i64, den: i64) -> f64 {
    let r = num as f64 / den as f64;
    r * (r + 1.0) / 2.0
}

/// Whether r lies in one of the windows `(4s, 4s+1)`, s >= 0.
pub fn ratio_in_window(num: i64, den: i64) -> bool {
    let r = num as f64 / den as f64;
    if r <= 0.0 {
        return false;
    }
    let s = (r / 4.0).floor();
    let base = 4.0 * s;
    r > base && r < base + 1.0
}

/// One row of the resonance table.
#[derive(Debug, Clone)]
pub struct ResonanceRow {
    pub r_num: i64,
    pub r_den: i64,
    pub delta: f64,
    /// The ratio `arccos(sqrt(2) cos(pi (2r+1)/4)) / pi` implied by the
    /// relation.
    pub nu: f64,
    /// Small-denominator rational matching nu to 1e-9, when one exists.
    pub rational: Option<(u32, u32)>,
}

/// Enumerates reduced fractions `r = num/den` in (0, 1) with `den <= max_den`
/// (the first window), evaluating the implied ratio and flagging rational
/// hits — the monodromy of those couplings is a root of unity.
pub fn resonance_table(max_den: i64) -> Vec<ResonanceRow> {
    let mut rows = Vec::new();
    for den in 2..=max_den {
        for num in 1..den {
            if gcd(num as u32, den as u32) != 1 {
                continue;
            }
            if !ratio_in_window(num, den) {
                continue;
            }
            let r = num as f64 / den as f64;
            let delta = delta_from_ratio(num, den);
            let x = SQRT_2 * (FRAC_PI_4 * (2.0 * r + 1.0)).cos();
            let nu = x.clamp(-1.0, 1.0).acos() / PI;
            rows.push(ResonanceRow {
                r_num: num,
                r_den: den,
                delta,
                nu,
                rational: rational_approx(nu, 64, 1e-9),
            });
        }
    }
    rows.sort_by(|a, b| a.delta.partial_cmp(&b.delta).unwrap());
    rows
}

/// Best small-denominator rational approximation within `tol`, by continued
/// fractions.
pub fn rational_approx(x: f64, max_den: u32, tol: f64) -> Option<(u32, u32)> {
    if !(0.0..=1.0).contains(&x) {
        return None;
    }
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut frac = x;
    for _ in 0..32 {
        let a = frac.floor() as u64;
        let p2 = a * p1 + p0;
        let q2 = a * q1 + q0;
        if q2 > max_den as u64 {
            break;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        if (x - p1 as f64 / q1 as f64).abs() < tol {
            return Some((p1 as u32, q1 as u32));
        }
        let rem = frac - a as f64;
        if rem.abs() < 1e-15 {
            break;
        }
        frac = 1.0 / rem;
    }
    if q1 > 0 && (x - p1 as f64 / q1 as f64).abs() < tol {
        Some((p1 as u32, q1 as u32))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn the_half_ratio_coupling_is_resonant_to_machine_precision() {
        // r = 1/2 gives delta = 3/8 and sqrt(1 + 8 delta) = 2: both sides of
        // the relation are cos(pi/2)
        assert_abs_diff_eq!(delta_from_ratio(1, 2), 0.375);
        assert!(resonance_mismatch(0.375, 1, 2) < 1e-15);
        assert!(is_resonant(0.375, 1, 2, 1e-12));
        // delta = 1 corresponds to r = 1, outside the open window
        assert!(!ratio_in_window(1, 1));
        assert!(!is_resonant(1.0, 1, 2, 1e-6));
    }

    #[test]
    fn table_contains_the_half_ratio_with_rational_hit() {
        let rows = resonance_table(8);
        let half = rows
            .iter()
            .find(|r| r.r_num == 1 && r.r_den == 2)
            .expect("r = 1/2 missing");
        assert_abs_diff_eq!(half.delta, 0.375);
        assert_eq!(half.rational, Some((1, 2)));
        // the windows exclude integers
        assert!(rows.iter().all(|r| r.r_num % r.r_den != 0));
    }

    #[test]
    fn rational_approx_recovers_simple_fractions() {
        assert_eq!(rational_approx(0.5, 16, 1e-9), Some((1, 2)));
        assert_eq!(rational_approx(1.0 / 3.0, 16, 1e-9), Some((1, 3)));
        assert_eq!(rational_approx(0.123456789, 16, 1e-9), None);
    }
}
