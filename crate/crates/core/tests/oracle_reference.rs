//! The transfer-matrix oracle against resonances of the continuum double
//! barrier computed independently at 40 significant digits.

#![allow(clippy::excessive_precision)]

use capres::model::SemiclassicalModel;
use capres::oracle::{find_resonances, newton_refine};
use capres::spectra::Rect;
use capres::Complex64;

const H010: [(f64, f64); 6] = [
    (0.3429546991301312590, -4.0710468560634753e-13),
    (0.5344638733848350127, -3.231131396895838e-12),
    (0.7668564986481323955, -3.4375432177818095e-11),
    (1.038544268114784698, -5.6178753199716305e-10),
    (1.346536170131043239, -1.7298321887350371e-8),
    (1.683615888368271640, -1.5272775961295546e-6),
];

const H007: [(f64, f64); 6] = [
    (0.5352802081849006329, -7.29418071777357e-17),
    (0.6979083376694755346, -6.941689152481734e-16),
    (0.8813217206710249606, -9.133205668501112e-15),
    (1.084937164678081061, -1.8207923367578278e-13),
    (1.307786640513309411, -6.344084777475036e-12),
    (1.548012538785825566, -5.020207174215091e-10),
];

const H005: [(f64, f64); 7] = [
    (0.5732760272330509612, -1.0574472327056144e-22),
    (0.6930045239833360803, -9.969921076414019e-22),
    (0.8238029812577600005, -1.2147624090256982e-20),
    (0.9655220651967716685, -2.0059026095323277e-19),
    (1.117950689246971654, -4.79140457643925e-18),
    (1.280772855340723633, -1.8224923332561175e-16),
    (1.453473042001291657, -1.289093041720859e-14),
];

fn check(h: f64, re_range: (f64, f64), expected: &[(f64, f64)]) {
    let m = SemiclassicalModel::double_barrier(h);
    let rect = Rect { re_min: re_range.0, re_max: re_range.1, im_min: -1e-3, im_max: 1e-2 };
    let search = find_resonances(&m, &rect, 64).unwrap();
    let found = search.points();
    assert_eq!(found.len(), expected.len(), "h = {h}: {found:?}");
    for (z, &(re, im)) in found.iter().zip(expected) {
        assert!((z.re - re).abs() <= 1e-14 * re, "h = {h}: {z} vs {re}");
        // absolute part: the double-double working precision relative to |z|
        assert!((z.im - im).abs() <= 1e-8 * im.abs() + 1e-26, "h = {h}: {z} vs {im:e}");
    }
}

#[test]
fn resonances_at_h_0_1() {
    check(0.1, (0.3, 1.7), &H010);
}

#[test]
fn resonances_at_h_0_07() {
    check(0.07, (0.45, 1.6), &H007);
}

#[test]
fn resonances_at_h_0_05() {
    check(0.05, (0.5, 1.5), &H005);
}

#[test]
fn newton_from_a_nearby_guess() {
    let m = SemiclassicalModel::double_barrier(0.1);
    let r = newton_refine(&m, Complex64::new(0.77, -1e-6)).unwrap();
    assert!((r.z.re - H010[2].0).abs() <= 1e-14);
    assert!((r.z.im - H010[2].1).abs() <= 1e-8 * H010[2].1.abs());
    assert!(r.winding_verified);
    assert_eq!(r.multiplicity, 1);
}
