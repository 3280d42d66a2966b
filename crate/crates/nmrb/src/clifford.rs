//! The 24-element single-qubit Clifford group, generated from {H, S} and
//! deduplicated up to global phase.

use std::sync::OnceLock;

use crate::core::{c, cr, CMat, C_ONE, C_ZERO};

fn canonical_phase(u: &CMat) -> CMat {
    // Divide by the phase of the first entry with non-negligible magnitude
    // (row-major scan) so that equality up to global phase becomes equality.
    for i in 0..u.nrows() {
        for j in 0..u.ncols() {
            let z = u[(i, j)];
            if z.norm() > 1e-9 {
                return u * (z.conj() / z.norm());
            }
        }
    }
    u.clone()
}

fn key(u: &CMat) -> Vec<(i64, i64)> {
    let scale = 1e7;
    u.iter()
        .map(|z| ((z.re * scale).round() as i64, (z.im * scale).round() as i64))
        .collect()
}

fn generate() -> Vec<CMat> {
    let s2 = 1.0 / 2.0_f64.sqrt();
    let h = CMat::from_row_slice(2, 2, &[cr(s2), cr(s2), cr(s2), cr(-s2)]);
    let s = CMat::from_row_slice(2, 2, &[C_ONE, C_ZERO, C_ZERO, c(0.0, 1.0)]);

    let mut elems: Vec<CMat> = vec![canonical_phase(&CMat::identity(2, 2))];
    let mut seen = std::collections::HashSet::new();
    seen.insert(key(&elems[0]));
    let mut frontier = elems.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for u in &frontier {
            for g in [&h, &s] {
                let v = canonical_phase(&(g * u));
                if seen.insert(key(&v)) {
                    next.push(v.clone());
                    elems.push(v);
                }
            }
        }
        frontier = next;
    }
    assert_eq!(elems.len(), 24, "single-qubit Clifford closure must have 24 elements");
    elems
}

/// The 24 canonical single-qubit Clifford unitaries (global-phase fixed).
pub fn clifford_24() -> &'static [CMat] {
    static GROUP: OnceLock<Vec<CMat>> = OnceLock::new();
    GROUP.get_or_init(generate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{approx_eq, identity, max_abs_diff};

    #[test]
    fn has_24_unitary_elements() {
        let g = clifford_24();
        assert_eq!(g.len(), 24);
        for u in g {
            assert!(max_abs_diff(&(u.adjoint() * u), &identity(2)) < 1e-12);
        }
    }

    #[test]
    fn closed_under_multiplication_up_to_phase() {
        let g = clifford_24();
        for a in g.iter().take(6) {
            for b in g.iter().take(6) {
                let prod = canonical_phase(&(a * b));
                assert!(
                    g.iter().any(|u| approx_eq(&canonical_phase(u), &prod, 1e-8)),
                    "product escaped the group"
                );
            }
        }
    }

    #[test]
    fn forms_a_2_design_for_the_twirl() {
        // 1/24 sum_G G ρ G† = I/2 (1-design is implied by 2-design; cheap check)
        let g = clifford_24();
        let rho = crate::core::proj(2, 0);
        let mut acc = CMat::zeros(2, 2);
        for u in g {
            acc += u * &rho * u.adjoint();
        }
        acc *= cr(1.0 / 24.0);
        assert!(approx_eq(&acc, &(identity(2) * cr(0.5)), 1e-12));
    }
}
