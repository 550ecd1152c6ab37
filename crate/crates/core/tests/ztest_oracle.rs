//! Two-proportion z-test against an independent tail computation and
//! against frozen 40-digit reference values.

use audit_core::stats::{two_proportion_z, Stars};

/// Two-sided normal tail by composite Simpson integration of the density
/// over [|z|, |z| + 40].
fn tail_by_quadrature(z: f64) -> f64 {
    let (a, b, n) = (z.abs(), z.abs() + 40.0, 400_000usize);
    let h = (b - a) / n as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(a) + pdf(b);
    for i in 1..n {
        s += pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * s * h / 3.0
}

fn pooled_z(x1: f64, n1: f64, x2: f64, n2: f64) -> f64 {
    let p = (x1 + x2) / (n1 + n2);
    (x1 / n1 - x2 / n2) / (p * (1.0 - p) * (1.0 / n1 + 1.0 / n2)).sqrt()
}

// (x1, n1, x2, n2, z, p) computed at 40 significant digits.
const FROZEN: [(u64, u64, u64, u64, f64, f64); 11] = [
    (3, 7, 2, 21, 1.9941944725133751, 0.046130805990429332),
    (58, 301, 19, 214, 3.2587563257824952, 0.0011190173697996014),
    (1, 21, 2, 7, -1.7638342073763937, 0.077759896439329458),
    (2, 6, 86, 509, 1.0634511414041305, 0.2875774110077645),
    (49, 208, 28, 307, 4.5082101912728602, 6.537679201669124e-6),
    (136, 148, 5, 89, 13.101902528830558, 3.2110625998454999e-39),
    (154, 240, 12, 326, 15.620365824324411, 5.2901240306181209e-55),
    (40, 45, 10, 192, 12.383682067575949, 3.2030347599288558e-35),
    (214, 233, 82, 333, 15.757404270414029, 6.1091101869276812e-56),
    (41, 44, 0, 193, 14.746548446827131, 3.2380677469244042e-49),
    (82, 93, 4, 473, 21.446471943040402, 4.9262897860172694e-102),
];

#[test]
fn matches_frozen_values() {
    for (x1, n1, x2, n2, z, p) in FROZEN {
        let t = two_proportion_z(x1, n1, x2, n2).unwrap();
        assert!((t.z - z).abs() < 1e-9, "{x1}/{n1} vs {x2}/{n2}: z {}", t.z);
        assert!(((t.p_value - p) / p).abs() < 1e-6, "{x1}/{n1} vs {x2}/{n2}: p {}", t.p_value);
    }
}

#[test]
fn matches_quadrature_tail() {
    for &(x1, n1, x2, n2, _, _) in &FROZEN[..5] {
        let t = two_proportion_z(x1, n1, x2, n2).unwrap();
        let z = pooled_z(x1 as f64, n1 as f64, x2 as f64, n2 as f64);
        assert!((t.z - z).abs() < 1e-12);
        assert!((t.p_value - tail_by_quadrature(z)).abs() < 1e-6);
    }
}

#[test]
fn star_categories_of_reference_cases() {
    let stars = |c: (u64, u64, u64, u64)| two_proportion_z(c.0, c.1, c.2, c.3).unwrap().stars;
    assert_eq!(stars((3, 7, 2, 21)), Stars::One);
    assert_eq!(stars((58, 301, 19, 214)), Stars::Two);
    assert_eq!(stars((1, 21, 2, 7)), Stars::None);
    assert_eq!(stars((2, 6, 86, 509)), Stars::None);
    assert_eq!(stars((49, 208, 28, 307)), Stars::Three);
}

#[test]
fn identical_proportions_are_null() {
    for (k, n) in [(0, 1), (1, 1), (3, 10), (50, 77)] {
        let t = two_proportion_z(k, n, k, n).unwrap();
        assert_eq!((t.z, t.p_value, t.stars), (0.0, 1.0, Stars::None));
    }
}
