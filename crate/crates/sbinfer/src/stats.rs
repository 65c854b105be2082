//! Standard normal quantile and CDF.
//!
//! The quantile is Wichura's PPND16 rational approximation (Algorithm
//! AS 241), accurate to ~1e-15 absolute. The CDF goes through Cody's
//! rational erfc. Both are deterministic scalar functions; coefficients
//! are transcribed verbatim from the published algorithms.

use crate::error::{Error, Result};

// PPND16 coefficient blocks, highest degree first.
const PPND_A: [f64; 8] = [
    2.509_080_928_730_122_7e3,
    3.343_057_558_358_813e4,
    6.726_577_092_700_87e4,
    4.592_195_393_154_987e4,
    1.373_169_376_550_946e4,
    1.971_590_950_306_551_3e3,
    1.331_416_678_917_843_8e2,
    3.387_132_872_796_366_5,
];
const PPND_B: [f64; 8] = [
    5.226_495_278_852_545_5e3,
    2.872_908_573_572_194_3e4,
    3.930_789_580_009_271e4,
    2.121_379_430_158_659_7e4,
    5.394_196_021_424_751e3,
    6.871_870_074_920_579e2,
    4.231_333_070_160_091e1,
    1.0,
];
const PPND_C: [f64; 8] = [
    7.745_450_142_783_414e-4,
    2.272_384_498_926_918_4e-2,
    2.417_807_251_774_506e-1,
    1.270_458_252_452_368_4,
    3.647_848_324_763_204_5,
    5.769_497_221_460_691,
    4.630_337_846_156_546,
    1.423_437_110_749_683_5,
];
const PPND_D: [f64; 8] = [
    1.050_750_071_644_416_9e-9,
    5.475_938_084_995_345e-4,
    1.519_866_656_361_645_7e-2,
    1.481_039_764_274_800_8e-1,
    6.897_673_349_851e-1,
    1.676_384_830_183_803_8,
    2.053_191_626_637_758_3,
    1.0,
];
const PPND_E: [f64; 8] = [
    2.010_334_399_292_288_1e-7,
    2.711_555_568_743_487_6e-5,
    1.242_660_947_388_078_4e-3,
    2.653_218_952_657_612_3e-2,
    2.965_605_718_285_048_7e-1,
    1.784_826_539_917_291_3,
    5.463_784_911_164_114,
    6.657_904_643_501_103,
];
const PPND_F: [f64; 8] = [
    2.044_263_103_389_939_7e-15,
    1.421_511_758_316_446e-7,
    1.846_318_317_510_054_8e-5,
    7.868_691_311_456_132e-4,
    1.487_536_129_085_061_5e-2,
    1.369_298_809_227_358e-1,
    5.998_322_065_558_88e-1,
    1.0,
];

fn horner(coeffs: &[f64; 8], x: f64) -> f64 {
    let mut acc = coeffs[0];
    for c in &coeffs[1..] {
        acc = acc * x + c;
    }
    acc
}

/// Inverse standard normal CDF (PPND16).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::config(format!(
            "normal_quantile requires 0 < p < 1, got {p}"
        )));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * horner(&PPND_A, r) / horner(&PPND_B, r));
    }
    let r0 = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r0.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        horner(&PPND_C, r) / horner(&PPND_D, r)
    } else {
        r -= 5.0;
        horner(&PPND_E, r) / horner(&PPND_F, r)
    };
    Ok(if q < 0.0 { -val } else { val })
}

/// Standard normal CDF via Cody's erfc.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Two-sided normal tail probability of |Z| ≥ |z|.
pub fn two_sided_p(z: f64) -> f64 {
    (erfc(z.abs() * std::f64::consts::FRAC_1_SQRT_2)).min(1.0)
}

/// Complementary error function (Cody 1969 rational approximations).
pub fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 0.46875 {
        return 1.0 - erf_small(x);
    }
    let v = if ax <= 4.0 {
        erfc_mid(ax)
    } else {
        erfc_large(ax)
    };
    if x < 0.0 {
        2.0 - v
    } else {
        v
    }
}

fn erf_small(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.161_123_743_870_565_6,
        1.138_641_541_510_501_6e2,
        3.774_852_376_853_020_3e2,
        3.209_377_589_138_469_4e3,
        1.857_777_061_846_031_5e-1,
    ];
    const B: [f64; 4] = [
        2.360_129_095_234_412e1,
        2.440_246_379_344_441_6e2,
        1.282_616_526_077_372_3e3,
        2.844_236_833_439_171e3,
    ];
    let z = x * x;
    let mut num = A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + A[i]) * z;
        den = (den + B[i]) * z;
    }
    num = (num + A[3]) * x;
    den += B[3];
    num / den
}

fn erfc_mid(x: f64) -> f64 {
    const C: [f64; 9] = [
        5.641_884_969_886_7e-1,
        8.883_149_794_388_377,
        6.611_919_063_714_163e1,
        2.986_351_381_974_001e2,
        8.819_522_212_417_69e2,
        1.712_047_612_634_070_6e3,
        2.051_078_377_826_071_6e3,
        1.230_339_354_797_997_2e3,
        2.153_115_354_744_038_3e-8,
    ];
    const D: [f64; 8] = [
        1.574_492_611_070_983_5e1,
        1.176_939_508_913_125e2,
        5.371_811_018_620_098e2,
        1.621_389_574_566_690_3e3,
        3.290_799_235_733_459_7e3,
        4.362_619_090_143_247e3,
        3.439_367_674_143_721_6e3,
        1.230_339_354_803_749_4e3,
    ];
    let mut num = C[8] * x;
    let mut den = x;
    for i in 0..7 {
        num = (num + C[i]) * x;
        den = (den + D[i]) * x;
    }
    num += C[7];
    den += D[7];
    (-x * x).exp() * num / den
}

fn erfc_large(x: f64) -> f64 {
    const P: [f64; 6] = [
        3.053_266_349_612_323_4e-1,
        3.603_448_999_498_044_4e-1,
        1.257_817_261_112_292_4e-1,
        1.608_378_514_874_227_7e-2,
        6.587_491_615_298_378e-4,
        1.631_538_713_730_209_8e-2,
    ];
    const Q: [f64; 5] = [
        2.568_520_192_289_822_4,
        1.872_952_849_923_460_4,
        5.279_051_029_514_284e-1,
        6.051_834_131_244_132e-2,
        2.335_204_976_268_691_8e-3,
    ];
    if x >= 26.5 {
        return 0.0;
    }
    let z = 1.0 / (x * x);
    let mut num = P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + P[i]) * z;
        den = (den + Q[i]) * z;
    }
    num += P[4];
    den += Q[4];
    let r = z * num / den;
    ((-x * x).exp() / x) * (FRAC_1_SQRT_PI - r)
}

// 1/sqrt(pi); not yet stable in std::f64::consts.
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values frozen from a standard normal table oracle.
    const QUANTILE_TABLE: &[(f64, f64)] = &[
        (0.5, 0.0),
        (0.975, 1.959963984540054),
        (0.995, 2.5758293035489004),
        (0.9999, 3.719016485455709),
        (0.0001, -3.7190164854556804),
        (0.3, -0.5244005127080409),
        (0.842, 1.0027116650265493),
        (1e-9, -5.9978070150076865),
    ];

    const CDF_TABLE: &[(f64, f64)] = &[
        (0.0, 0.5),
        (1.0, 0.8413447460685429),
        (-1.0, 0.15865525393145707),
        (1.959963984540054, 0.975),
        (2.5758293035489004, 0.995),
        (-3.5, 0.00023262907903552502),
        (5.0, 0.9999997133484281),
        (0.123456, 0.5491269927023119),
    ];

    #[test]
    fn quantile_matches_table() {
        for &(p, want) in QUANTILE_TABLE {
            let got = normal_quantile(p).unwrap();
            assert!(
                (got - want).abs() < 1e-8,
                "quantile({p}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn cdf_matches_table() {
        for &(x, want) in CDF_TABLE {
            let got = normal_cdf(x);
            assert!((got - want).abs() < 1e-12, "cdf({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn quantile_is_antisymmetric() {
        let mut p = 0.013;
        for _ in 0..100 {
            let a = normal_quantile(p).unwrap();
            let b = normal_quantile(1.0 - p).unwrap();
            assert!((a + b).abs() < 1e-9, "p = {p}: {a} vs {b}");
            p = (p * 1.83).fract().max(1e-6).min(1.0 - 1e-6);
        }
    }

    #[test]
    fn quantile_and_cdf_are_inverse() {
        for i in 1..60 {
            let x = -4.5 + 0.15 * i as f64;
            let p = normal_cdf(x);
            let back = normal_quantile(p).unwrap();
            assert!((back - x).abs() < 1e-7, "x = {x}, back = {back}");
        }
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(-0.5).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn two_sided_p_is_a_probability() {
        for z in [-8.0, -2.0, -0.5, 0.0, 0.3, 1.96, 10.0] {
            let p = two_sided_p(z);
            assert!((0.0..=1.0).contains(&p), "p({z}) = {p}");
        }
        assert!((two_sided_p(1.959963984540054) - 0.05).abs() < 1e-10);
        assert_eq!(two_sided_p(0.0), 1.0);
    }
}
