use capres::analysis::absorption_identity_check;
use capres::model::{make_grid, PiecewisePotential, SemiclassicalModel};
use capres::operators::{
    assemble_p_dirichlet, assemble_p_theta, assemble_q_cap, CapProfile, ScalingProfile,
};
use capres::oracle::{transfer_determinant, transfer_determinant_on, Branch};
use capres::spectra::{eig_dense, min_singular_value};
use capres::{c64, Complex64};
use proptest::prelude::*;

fn potential() -> impl Strategy<Value = PiecewisePotential> {
    (1usize..5, prop::collection::vec(0.1f64..1.0, 5), prop::collection::vec(0.0f64..3.0, 5)).prop_map(
        |(k, widths, values)| {
            let mut bps = vec![-1.5];
            for w in &widths[..k] {
                let last = *bps.last().unwrap();
                bps.push(last + w);
            }
            PiecewisePotential::new(bps, values[..k].to_vec()).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn refinement_is_idempotent_and_preserves_values(v in potential(), x in -2.0f64..2.0) {
        let once = v.refined_at(x);
        prop_assert_eq!(once.refined_at(x), once.clone());
        for k in 0..41 {
            let t = -2.0 + 0.1 * k as f64;
            prop_assert_eq!(once.eval(t), v.eval(t));
        }
    }

    #[test]
    fn min_singular_value_is_one_lipschitz(
        re in 0.0f64..2.0, im in -0.5f64..0.5, dre in -0.1f64..0.1, dim in -0.1f64..0.1,
    ) {
        let m = SemiclassicalModel::double_barrier(0.1);
        let q = assemble_q_cap(&m, &make_grid(6.0, 99).unwrap(), &CapProfile::benchmark()).unwrap();
        let (z, w) = (c64::new(re, im), c64::new(re + dre, im + dim));
        let gap = (min_singular_value(&q, z).unwrap() - min_singular_value(&q, w).unwrap()).abs();
        prop_assert!(gap <= (z - w).norm() * (1.0 + 1e-10) + 1e-13);
    }

    #[test]
    fn determinant_is_conjugate_symmetric(v in potential(), re in 0.2f64..2.0, im in -0.3f64..0.3) {
        let m = SemiclassicalModel::new(0.1, v, 1.0, 1.5, 0.5, 1.5);
        let z = Complex64::new(re, im);
        let d = transfer_determinant(&m, z).unwrap();
        let e = transfer_determinant_on(&m, z.conj(), Branch::Incoming).unwrap();
        prop_assert!((d.conj() - e).norm() <= 1e-12 * d.norm().max(1.0));
    }

    #[test]
    fn determinant_is_translation_invariant(v in potential(), shift in -0.4f64..0.4, re in 0.2f64..2.0) {
        let moved = PiecewisePotential::new(
            v.breakpoints().iter().map(|b| b + shift).collect(),
            v.values().to_vec(),
        ).unwrap();
        let z = Complex64::new(re, -0.05);
        let a = transfer_determinant(&SemiclassicalModel::new(0.1, v, 1.6, 2.0, 0.5, 1.5), z).unwrap();
        let b = transfer_determinant(&SemiclassicalModel::new(0.1, moved, 1.6, 2.0, 0.5, 1.5), z).unwrap();
        prop_assert!((a - b).norm() <= 1e-10 * a.norm().max(1.0));
    }

    #[test]
    fn absorption_identity_holds_for_admissible_caps(
        strength in 0.1f64..5.0, power in 1u32..4, r1 in 2.2f64..3.0, width in 0.3f64..1.5,
    ) {
        let m = SemiclassicalModel::double_barrier(0.1);
        let c = CapProfile { r1, r2: r1 + width, strength, power, ..CapProfile::benchmark() };
        let q = assemble_q_cap(&m, &make_grid(5.0, 79).unwrap(), &c).unwrap();
        let s = eig_dense(&q, true).unwrap();
        let worst = absorption_identity_check(&q, &s, &c).unwrap().into_iter().fold(0.0, f64::max);
        prop_assert!(worst <= 1e-10, "{}", worst);
    }

    #[test]
    fn cap_spectrum_lies_in_the_closed_lower_half_plane(strength in 0.0f64..5.0, n in 20usize..80) {
        let m = SemiclassicalModel::double_barrier(0.1);
        let c = CapProfile { strength, ..CapProfile::benchmark() };
        let q = assemble_q_cap(&m, &make_grid(5.0, n).unwrap(), &c).unwrap();
        let s = eig_dense(&q, false).unwrap();
        prop_assert!(s.eigenvalues.iter().all(|z| z.im <= 1e-10 * (1.0 + z.norm())));
    }
}

#[test]
fn unperturbed_operators_coincide_with_the_dirichlet_one() {
    let m = SemiclassicalModel::double_barrier(0.1);
    let g = make_grid(6.0, 149).unwrap();
    let p = assemble_p_dirichlet(&m, &g).unwrap();
    let q = assemble_q_cap(&m, &g, &CapProfile::none(3.0, 4.0)).unwrap();
    let s = assemble_p_theta(&m, &g, &ScalingProfile::smooth_step(3.0, 1.0, 0.0).unwrap()).unwrap();
    assert_eq!(p.matrix, q.matrix);
    assert_eq!(p.matrix, s.matrix);
}
