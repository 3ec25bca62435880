//! Quasi-static Rayleigh fading, AWGN and the uplink superposition model.
//!
//! Noise is circularly-symmetric with total complex variance `n0`
//! (`n0 / 2` per real dimension). A [`ChannelPair`] is drawn once per frame.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::baseband::Cx;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPair {
    /// Near-user (UE1) coefficient.
    pub h1: Cx,
    /// Far-user (UE2) coefficient.
    pub h2: Cx,
    /// Noise power spectral density, linear.
    pub n0: f64,
}

impl ChannelPair {
    pub fn new(h1: Cx, h2: Cx, n0: f64) -> Result<Self> {
        if !(n0 > 0.0 && n0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "n0 must be positive, got {n0}"
            )));
        }
        if !(h1.is_finite() && h2.is_finite()) {
            return Err(Error::InvalidParameter(
                "channel coefficients must be finite".into(),
            ));
        }
        Ok(Self { h1, h2, n0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    pub p1: f64,
    pub p2: f64,
}

impl PowerConfig {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        for (name, p) in [("p1", p1), ("p2", p2)] {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {p}"
                )));
            }
        }
        Ok(Self { p1, p2 })
    }

    pub fn unit() -> Self {
        Self { p1: 1.0, p2: 1.0 }
    }
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self::unit()
    }
}

/// Noise density for a per-user transmit SNR `P / N0` with `P = 1`.
pub fn n0_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Cx {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Cx::new(s * re, s * im)
}

pub fn draw_channel<R: Rng + ?Sized>(
    sigma1_sq: f64,
    sigma2_sq: f64,
    n0: f64,
    rng: &mut R,
) -> Result<ChannelPair> {
    for (name, v) in [("sigma1_sq", sigma1_sq), ("sigma2_sq", sigma2_sq)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let h1 = complex_gaussian(sigma1_sq, rng);
    let h2 = complex_gaussian(sigma2_sq, rng);
    ChannelPair::new(h1, h2, n0)
}

pub fn awgn<R: Rng + ?Sized>(n0: f64, rng: &mut R) -> Result<Cx> {
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "n0 must be positive, got {n0}"
        )));
    }
    Ok(complex_gaussian(n0, rng))
}

/// `sqrt(p1) x1 h1 + sqrt(p2) x2 h2 + noise`; with pilot symbols this is the
/// superposed pilot observation.
#[inline]
pub fn superpose(x1: Cx, x2: Cx, ch: &ChannelPair, pw: &PowerConfig, noise: Cx) -> Cx {
    x1 * ch.h1 * pw.p1.sqrt() + x2 * ch.h2 * pw.p2.sqrt() + noise
}

/// Single-user pilot slot `sqrt(p) xp h + noise`.
#[inline]
pub fn pilot_slot(xp: Cx, h: Cx, p: f64, noise: Cx) -> Cx {
    xp * h * p.sqrt() + noise
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn c(re: f64, im: f64) -> Cx {
        Cx::new(re, im)
    }

    #[test]
    fn superpose_examples() {
        let ch = ChannelPair::new(c(1.0, 0.0), c(1.0, 0.0), 1.0).unwrap();
        let pw = PowerConfig::unit();
        assert_eq!(
            superpose(c(1.0, 0.0), c(1.0, 0.0), &ch, &pw, Cx::default()),
            c(2.0, 0.0)
        );

        let ch = ChannelPair::new(c(0.0, 1.0), c(0.3, 0.2), 1.0).unwrap();
        let pw = PowerConfig::new(4.0, 1.0).unwrap();
        assert_eq!(
            superpose(c(1.0, 0.0), c(0.0, 0.0), &ch, &pw, Cx::default()),
            c(0.0, 2.0)
        );
    }

    #[test]
    fn superpose_matches_recomputation() {
        let mut rng = stream(11, &[]);
        for _ in 0..100 {
            let ch = draw_channel(10.0, 1.0, 0.5, &mut rng).unwrap();
            let x1 = complex_gaussian(1.0, &mut rng);
            let x2 = complex_gaussian(1.0, &mut rng);
            let noise = awgn(0.5, &mut rng).unwrap();
            let pw = PowerConfig::new(0.7, 1.3).unwrap();
            let got = superpose(x1, x2, &ch, &pw, noise);
            let want = x1 * ch.h1 * 0.7f64.sqrt() + x2 * ch.h2 * 1.3f64.sqrt() + noise;
            assert_eq!(got, want);
        }
    }

    #[test]
    fn pilot_slot_examples() {
        let h = c(0.5, -0.5);
        assert_eq!(pilot_slot(c(1.0, 0.0), h, 1.0, Cx::default()), h);
        let noise = c(0.1, -0.2);
        assert_eq!(pilot_slot(c(1.0, 0.0), h, 0.0, noise), noise);
        let ch = ChannelPair::new(h, c(3.0, 1.0), 1.0).unwrap();
        let pw = PowerConfig::new(2.0, 0.0).unwrap();
        assert_eq!(
            pilot_slot(c(1.0, 0.0), h, 2.0, noise),
            superpose(c(1.0, 0.0), c(1.0, 0.0), &ch, &pw, noise)
        );
    }

    #[test]
    fn linearity_in_near_symbol() {
        let ch = ChannelPair::new(c(0.3, -1.2), c(0.4, 0.1), 1.0).unwrap();
        let pw = PowerConfig::new(2.0, 0.5).unwrap();
        let (x1, x1p, x2) = (c(0.5, 0.25), c(-0.75, 0.5), c(1.0, 0.0));
        let d = superpose(x1 + x1p, x2, &ch, &pw, Cx::default())
            - superpose(x1p, x2, &ch, &pw, Cx::default());
        let want = x1 * ch.h1 * 2f64.sqrt();
        assert!((d - want).norm() < 1e-15);
    }

    #[test]
    fn channel_variances() {
        let mut rng = stream(1, &[]);
        let (mut s1, mut s2) = (0.0, 0.0);
        let draws = 1_000_000;
        for _ in 0..draws {
            let ch = draw_channel(10.0, 1.0, 1.0, &mut rng).unwrap();
            s1 += ch.h1.norm_sqr();
            s2 += ch.h2.norm_sqr();
        }
        let (m1, m2) = (s1 / draws as f64, s2 / draws as f64);
        assert!((9.9..=10.1).contains(&m1), "{m1}");
        assert!((0.99..=1.01).contains(&m2), "{m2}");
    }

    #[test]
    fn seeded_draws_repeat() {
        let a: Vec<_> = {
            let mut rng = stream(42, &[]);
            (0..10)
                .map(|_| draw_channel(10.0, 1.0, 1.0, &mut rng).unwrap())
                .collect()
        };
        let b: Vec<_> = {
            let mut rng = stream(42, &[]);
            (0..10)
                .map(|_| draw_channel(10.0, 1.0, 1.0, &mut rng).unwrap())
                .collect()
        };
        assert_eq!(a, b);
        let mut r1 = stream(5, &[]);
        let mut r2 = stream(5, &[]);
        assert_eq!(awgn(0.3, &mut r1).unwrap(), awgn(0.3, &mut r2).unwrap());
    }

    #[test]
    fn awgn_statistics() {
        let mut rng = stream(2, &[]);
        let draws = 1_000_000usize;
        let (mut sre, mut sim, mut sxy) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let w = awgn(2.0, &mut rng).unwrap();
            sre += w.re * w.re;
            sim += w.im * w.im;
            sxy += w.re * w.im;
        }
        let var_re = sre / draws as f64;
        assert!((0.99..=1.01).contains(&var_re), "{var_re}");
        let corr = sxy / (sre * sim).sqrt();
        assert!(corr.abs() < 3.0 / (draws as f64).sqrt(), "{corr}");
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = stream(0, &[]);
        assert!(draw_channel(0.0, 1.0, 1.0, &mut rng).is_err());
        assert!(draw_channel(1.0, -1.0, 1.0, &mut rng).is_err());
        assert!(awgn(0.0, &mut rng).is_err());
        assert!(ChannelPair::new(Cx::default(), Cx::default(), -1.0).is_err());
        assert!(PowerConfig::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn rayleigh_magnitude_ks() {
        // |h| / sigma ~ Rayleigh(1/sqrt 2), CDF 1 - exp(-r^2).
        let mut rng = stream(9, &[]);
        let n = 100_000;
        let mut r: Vec<f64> = (0..n)
            .map(|_| draw_channel(10.0, 1.0, 1.0, &mut rng).unwrap().h1.norm() / 10f64.sqrt())
            .collect();
        r.sort_by(f64::total_cmp);
        let d = r
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - (-x * x).exp();
                (f - i as f64 / n as f64)
                    .abs()
                    .max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // Critical value at alpha = 0.01.
        assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    }
}
