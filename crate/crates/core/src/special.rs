//! Gamma and Beta functions via the Lanczos approximation.
//!
//! All arguments in this crate are real and positive (kernel exponents,
//! half-integer dimension combinations), so no reflection formula is
//! needed. The g = 7, n = 9 coefficient set gives ~1e-14 relative
//! accuracy across (0, 50), comfortably inside the 1e-12 budget.

const LANCZOS_G: f64 = 7.0;

const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for x > 0.
pub fn gamma(x: f64) -> f64 {
    assert!(x > 0.0, "gamma requires a positive argument, got {x}");
    if x < 0.5 {
        // One reflection step keeps the series argument >= 0.5; the sine
        // is safe since 0 < x < 0.5 here.
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let z = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
    }
}

/// Beta function B(a, b) = Γ(a)Γ(b)/Γ(a+b) for a, b > 0.
pub fn beta(a: f64, b: f64) -> f64 {
    gamma(a) * gamma(b) / gamma(a + b)
}

/// Surface area of the unit (n-1)-sphere in R^n: 2 π^{n/2} / Γ(n/2).
///
/// For n = 1 this is 2, the counting measure of S^0 = {-1, +1}.
pub fn sphere_area(n: u32) -> f64 {
    let nh = n as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(nh) / gamma(nh)
}
