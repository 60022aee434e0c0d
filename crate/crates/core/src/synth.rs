//! The two one-dimensional Gaussian simulation settings, with their exact
//! conditional mean and noise scale and the resulting oracle intervals.
//!
//! Setting 1: `X ~ U[-2, 2]`, `mu(x) = 3 sin x`, and a piecewise noise
//! scale with breakpoints at -0.8, 0.1 and 1.4 (half-open on the right).
//!
//! Setting 2: `X` uniform on `[-2, -0.5) U (0.8, 2]` (each branch chosen
//! with probability proportional to its length), with a linear mean and
//! constant noise on the left branch and `2 sin 3x`, `0.2 + 0.5 x^2` on the
//! right.

use std::fmt;
use std::str::FromStr;

use crate::conformal::PredictionInterval;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamRng};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    Heteroscedastic1,
    GapSupport2,
}

impl Setting {
    pub fn in_support(self, x: f64) -> bool {
        match self {
            Setting::Heteroscedastic1 => (-2.0..=2.0).contains(&x),
            Setting::GapSupport2 => (-2.0..-0.5).contains(&x) || (x > 0.8 && x <= 2.0),
        }
    }

    fn check(self, x: f64) -> Result<()> {
        if self.in_support(x) {
            Ok(())
        } else {
            Err(Error::Support { x })
        }
    }

    /// Segment labels in ascending order.
    pub fn segments(self) -> &'static [Segment] {
        match self {
            Setting::Heteroscedastic1 => &[Segment(1), Segment(2), Segment(3), Segment(4)],
            Setting::GapSupport2 => &[Segment(1), Segment(2)],
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Heteroscedastic1 => "setting1",
            Setting::GapSupport2 => "setting2",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "setting1" | "heteroscedastic_1" | "heteroscedastic" => {
                Ok(Setting::Heteroscedastic1)
            }
            "2" | "setting2" | "gap_support_2" | "gap" => Ok(Setting::GapSupport2),
            other => Err(Error::Config(format!(
                "unknown data-generating process `{other}`"
            ))),
        }
    }
}

/// Noise band (setting 1) or support branch (setting 2), numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Segment(pub u8);

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "seg{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DgpSpec {
    pub setting: Setting,
    pub n: usize,
    pub seed: u64,
}

pub fn mean_fn<T: Real>(setting: Setting, x: T) -> Result<T> {
    let xf = x.as_f64();
    setting.check(xf)?;
    let m = match setting {
        Setting::Heteroscedastic1 => 3.0 * xf.sin(),
        Setting::GapSupport2 if xf < -0.5 => -2.0 * xf - 1.0,
        Setting::GapSupport2 => 2.0 * (3.0 * xf).sin(),
    };
    Ok(T::lit(m))
}

pub fn sigma_fn<T: Real>(setting: Setting, x: T) -> Result<T> {
    let xf = x.as_f64();
    setting.check(xf)?;
    let s = match setting {
        Setting::Heteroscedastic1 => {
            if xf < -0.8 {
                0.8
            } else if xf < 0.1 {
                2.0
            } else if xf < 1.4 {
                1.0
            } else {
                xf * xf
            }
        }
        Setting::GapSupport2 if xf < -0.5 => 0.3,
        Setting::GapSupport2 => 0.2 + 0.5 * xf * xf,
    };
    Ok(T::lit(s))
}

pub fn segment_label(setting: Setting, x: f64) -> Result<Segment> {
    setting.check(x)?;
    Ok(match setting {
        Setting::Heteroscedastic1 => {
            if x < -0.8 {
                Segment(1)
            } else if x < 0.1 {
                Segment(2)
            } else if x < 1.4 {
                Segment(3)
            } else {
                Segment(4)
            }
        }
        Setting::GapSupport2 if x < -0.5 => Segment(1),
        Setting::GapSupport2 => Segment(2),
    })
}

fn draw_x(setting: Setting, g: &mut StreamRng) -> f64 {
    match setting {
        Setting::Heteroscedastic1 => -2.0 + 4.0 * g.unit(),
        Setting::GapSupport2 => {
            // one uniform over total length 2.7: [0, 1.5) -> [-2, -0.5), [1.5, 2.7) -> (0.8, 2]
            let u = 2.7 * g.unit();
            if u < 1.5 {
                -2.0 + u
            } else {
                2.0 - (u - 1.5)
            }
        }
    }
}

/// Draws `spec.n` points. Each point uses two uniforms from the `"dgp"`
/// stream: one for `X`, one mapped through the normal quantile for the noise.
pub fn sample<T: Real>(spec: &DgpSpec) -> Result<Dataset<T>> {
    if spec.n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    let mut g = RngStream::new(spec.seed).derive("dgp").generator();
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x = draw_x(spec.setting, &mut g);
        let z = normal_quantile(g.open01());
        let y = mean_fn::<f64>(spec.setting, x)? + sigma_fn::<f64>(spec.setting, x)? * z;
        xs.push(T::lit(x));
        ys.push(T::lit(y));
    }
    Dataset::from_columns(xs, ys)?.with_feature_names(vec!["x".into()])
}

/// Exact `1 - alpha` conditional interval `mu(x) +- z sigma(x)` with `z` the
/// standard normal `1 - alpha/2` quantile.
pub fn oracle_interval<T: Real>(
    setting: Setting,
    x: T,
    alpha: f64,
) -> Result<PredictionInterval<T>> {
    Ok(gaussian_interval(
        mean_fn(setting, x)?,
        sigma_fn(setting, x)?,
        alpha,
    ))
}

pub fn gaussian_interval<T: Real>(mu: T, sigma: T, alpha: f64) -> PredictionInterval<T> {
    let z = T::lit(normal_quantile(1.0 - alpha / 2.0));
    PredictionInterval::symmetric(mu, z * sigma)
}

/// Standard normal quantile by Wichura's AS 241 (PPND16) rational
/// approximations, relative accuracy about 1e-16 on (0, 1).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        133.141_667_891_784_377_45,
        1_971.590_950_306_551_442_7,
        13_731.693_765_509_461_125,
        45_921.953_931_549_871_457,
        67_265.770_927_008_700_853,
        33_430.575_583_588_128_105,
        2_509.080_928_730_122_672_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_911_252,
        687.187_007_492_057_908_3,
        5_394.196_021_424_751_107_7,
        21_213.794_301_586_595_867,
        39_307.895_800_092_710_61,
        28_729.085_735_721_942_674,
        5_226.495_278_852_545_925,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        0.241_780_725_177_450_611_77,
        0.022_723_844_989_269_184_583_3,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        0.689_767_334_985_100_004_55,
        0.148_103_976_427_480_074_59,
        0.015_198_666_563_616_457_196_6,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        0.296_560_571_828_504_891_23,
        0.026_532_189_526_576_123_093,
        0.001_242_660_947_388_078_438_6,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_937_69,
        0.136_929_880_922_735_805_31,
        0.014_875_361_290_850_614_852_5,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn ratio(num: &[f64; 8], den: &[f64; 8], r: f64) -> f64 {
        let n = num.iter().rev().fold(0.0, |acc, &c| acc * r + c);
        let d = den.iter().rev().fold(0.0, |acc, &c| acc * r + c);
        n / d
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * ratio(&A, &B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let v = if r <= 5.0 {
        ratio(&C, &D, r - 1.6)
    } else {
        ratio(&E, &F, r - 5.0)
    };
    if q < 0.0 {
        -v
    } else {
        v
    }
}
