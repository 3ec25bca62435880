//! Classical baselines: joint ML for the near user, SIC then ML for the far
//! user, and per-user least-squares channel estimates from three-slot pilots.
//!
//! All minimisations scan hypotheses in index order and keep the first
//! minimum, so ties resolve to the lowest index (lowest `(x1, x2)` pair in
//! lexicographic order for the joint search).

use crate::baseband::{demap_all, Constellation, Cx};
use crate::channel::{ChannelPair, PowerConfig};
use crate::error::{Error, Result};
use crate::framing::{Frame, User, PILOT_SYMBOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    /// True channel coefficients.
    PerfectCsi,
    /// Least-squares estimates from the three-slot pilots.
    LsCsi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub sym_hat_u1: Vec<Cx>,
    pub sym_hat_u2: Vec<Cx>,
    pub bits_hat_u1: Vec<u8>,
    pub bits_hat_u2: Vec<u8>,
}

impl DetectionResult {
    pub fn bits(&self, user: User) -> &[u8] {
        match user {
            User::Ue1 => &self.bits_hat_u1,
            User::Ue2 => &self.bits_hat_u2,
        }
    }
}

pub fn ls_estimate(pilot_obs: &[Cx], xp: Cx, p: f64) -> Result<Cx> {
    if pilot_obs.is_empty() {
        return Err(Error::EmptyObservation);
    }
    if xp.norm_sqr() == 0.0 || p <= 0.0 {
        return Err(Error::ZeroPilot);
    }
    let mean = pilot_obs.iter().sum::<Cx>() / pilot_obs.len() as f64;
    Ok(mean / (xp * p.sqrt()))
}

/// Joint ML search over `c1 x c2`; returns the winning point indices.
pub fn ml_joint_indices(
    y: Cx,
    ch: &ChannelPair,
    pw: &PowerConfig,
    c1: &Constellation,
    c2: &Constellation,
) -> (usize, usize) {
    let g1 = ch.h1 * pw.p1.sqrt();
    let g2 = ch.h2 * pw.p2.sqrt();
    let mut best = (0, 0);
    let mut best_d = f64::INFINITY;
    for (i, &a) in c1.points().iter().enumerate() {
        let r = y - g1 * a;
        for (j, &b) in c2.points().iter().enumerate() {
            let d = (r - g2 * b).norm_sqr();
            if d < best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    best
}

pub fn ml_detect_near(
    y: Cx,
    ch: &ChannelPair,
    pw: &PowerConfig,
    c1: &Constellation,
    c2: &Constellation,
) -> Cx {
    c1.points()[ml_joint_indices(y, ch, pw, c1, c2).0]
}

pub fn sic_far_index(
    y: Cx,
    x1_hat: Cx,
    ch: &ChannelPair,
    pw: &PowerConfig,
    c2: &Constellation,
) -> usize {
    let residual = y - ch.h1 * pw.p1.sqrt() * x1_hat;
    let g2 = ch.h2 * pw.p2.sqrt();
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, &b) in c2.points().iter().enumerate() {
        let d = (residual - g2 * b).norm_sqr();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

pub fn sic_detect_far(
    y: Cx,
    x1_hat: Cx,
    ch: &ChannelPair,
    pw: &PowerConfig,
    c2: &Constellation,
) -> Cx {
    c2.points()[sic_far_index(y, x1_hat, ch, pw, c2)]
}

/// Channel the classical detector works with for this frame.
pub fn receiver_channel(frame: &Frame, mode: CsiMode) -> Result<ChannelPair> {
    match mode {
        CsiMode::PerfectCsi => Ok(frame.channel),
        CsiMode::LsCsi => {
            let h1 = ls_estimate(frame.user_pilots(User::Ue1)?, PILOT_SYMBOL, frame.power.p1)?;
            let h2 = ls_estimate(frame.user_pilots(User::Ue2)?, PILOT_SYMBOL, frame.power.p2)?;
            Ok(ChannelPair {
                h1,
                h2,
                n0: frame.channel.n0,
            })
        }
    }
}

/// Near user by joint ML, far user by SIC on the near decision.
pub fn detect_frame_classical(frame: &Frame, mode: CsiMode) -> Result<DetectionResult> {
    let ch = receiver_channel(frame, mode)?;
    let c1 = User::Ue1.constellation();
    let c2 = User::Ue2.constellation();
    let pw = &frame.power;
    let mut sym_hat_u1 = Vec::with_capacity(frame.rx_data.len());
    let mut sym_hat_u2 = Vec::with_capacity(frame.rx_data.len());
    for &y in &frame.rx_data {
        let x1 = ml_detect_near(y, &ch, pw, &c1, &c2);
        sym_hat_u1.push(x1);
        sym_hat_u2.push(sic_detect_far(y, x1, &ch, pw, &c2));
    }
    Ok(DetectionResult {
        bits_hat_u1: demap_all(&sym_hat_u1, &c1),
        bits_hat_u2: demap_all(&sym_hat_u2, &c2),
        sym_hat_u1,
        sym_hat_u2,
    })
}
