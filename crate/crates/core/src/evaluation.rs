//! BER counting, SNR sweeps and achievable rates.
//!
//! Sweeps use common random numbers: at one `(n, snr)` point, frame `k` is
//! generated from the same stream for every detector, and the two-slot and
//! three-slot versions of a frame share bits, channel and every noise sample.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::baseband::{Bit, Cx};
use crate::channel::{draw_channel, n0_from_snr_db, ChannelPair, PowerConfig};
use crate::classical::{ml_joint_indices, sic_far_index};
use crate::error::{Error, Result};
use crate::framing::{assemble_frame, features, Frame, Scheme, User};
use crate::neural::forward;
use crate::rng::stream;
use crate::training::ModelArtifact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Detector {
    /// Joint ML with the true channel.
    MlCsi,
    /// Joint ML for UE1, then SIC and ML for UE2, true channel.
    SicMlCsi,
    DlTwoSlot,
    DlThreeSlot,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Detector::MlCsi => "ml-csi",
            Detector::SicMlCsi => "sic-ml-csi",
            Detector::DlTwoSlot => "dl-two-slot",
            Detector::DlThreeSlot => "dl-three-slot",
        }
    }

    /// Pilot scheme of a learned detector.
    pub fn scheme(self) -> Option<Scheme> {
        match self {
            Detector::DlTwoSlot => Some(Scheme::TwoSlot),
            Detector::DlThreeSlot => Some(Scheme::ThreeSlot),
            _ => None,
        }
    }
}

impl std::str::FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml-csi" | "ml" => Ok(Detector::MlCsi),
            "sic-ml-csi" | "sic-ml" | "sic" => Ok(Detector::SicMlCsi),
            "dl-two-slot" | "dl2" => Ok(Detector::DlTwoSlot),
            "dl-three-slot" | "dl3" => Ok(Detector::DlThreeSlot),
            other => Err(Error::InvalidParameter(format!(
                "unknown detector '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bits: u64,
    pub errors: u64,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        self.errors as f64 / self.bits as f64
    }

    /// Binomial standard deviation of the BER estimate.
    pub fn std_dev(&self) -> f64 {
        let p = self.ber();
        (p * (1.0 - p) / self.bits as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerCurve {
    pub detector: Detector,
    pub user: User,
    pub n: usize,
    pub points: Vec<BerPoint>,
}

impl BerCurve {
    pub fn at(&self, snr_db: f64) -> Option<&BerPoint> {
        self.points.iter().find(|p| p.snr_db == snr_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub prefactor: f64,
    pub sinr1: f64,
    pub sinr2: f64,
    pub r1: f64,
    pub r2: f64,
}

/// Returns `(errors, bits)`.
pub fn ber(sent: &[Bit], detected: &[Bit]) -> Result<(u64, u64)> {
    if sent.len() != detected.len() {
        return Err(Error::InvalidParameter(format!(
            "sent {} bits but detected {}",
            sent.len(),
            detected.len()
        )));
    }
    let errors = sent.iter().zip(detected).filter(|(a, b)| a != b).count();
    Ok((errors as u64, sent.len() as u64))
}

/// Achievable rates for the uplink pair: the near user sees the far user as
/// interference, the far user is decoded after cancellation. Rates scale by
/// the fraction of slots carrying data.
pub fn rates(ch: &ChannelPair, pw: &PowerConfig, scheme: Scheme) -> RateReport {
    let g1 = pw.p1 * ch.h1.norm_sqr();
    let g2 = pw.p2 * ch.h2.norm_sqr();
    let sinr1 = g1 / (g2 + ch.n0);
    let sinr2 = g2 / ch.n0;
    let prefactor = scheme.rate_prefactor();
    RateReport {
        prefactor,
        sinr1,
        sinr2,
        r1: prefactor * (1.0 + sinr1).log2(),
        r2: prefactor * (1.0 + sinr2).log2(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserDetection {
    pub user: User,
    pub symbols: Vec<Cx>,
    pub bits: Vec<Bit>,
}

/// Runs the learned detector on one frame and hard-demaps its regression
/// output against the user's constellation.
pub fn dl_detect_frame(artifact: &ModelArtifact, frame: &Frame) -> Result<UserDetection> {
    let user = artifact.config.user;
    artifact.ensure_matches(frame.scheme, user, frame.n)?;
    let pred = forward(&artifact.net, &features(frame))?;
    let c = user.constellation();
    let mut symbols = Vec::with_capacity(pred.rows());
    let mut bits = Vec::with_capacity(pred.rows() * c.bits_per_symbol());
    for t in 0..pred.rows() {
        let r = pred.row(t);
        let idx = c.nearest_index(Cx::new(r[0], r[1]));
        symbols.push(c.points()[idx]);
        bits.extend_from_slice(c.label(idx));
    }
    Ok(UserDetection {
        user,
        symbols,
        bits,
    })
}

/// Trained models keyed by `(scheme, user, n)`.
#[derive(Debug, Clone, Default)]
pub struct ArtifactSet {
    models: BTreeMap<(u8, User, usize), ModelArtifact>,
}

fn scheme_key(s: Scheme) -> u8 {
    match s {
        Scheme::TwoSlot => 2,
        Scheme::ThreeSlot => 3,
    }
}

impl ArtifactSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, artifact: ModelArtifact) {
        let c = &artifact.config;
        self.models
            .insert((scheme_key(c.scheme), c.user, c.n), artifact);
    }

    pub fn get(&self, scheme: Scheme, user: User, n: usize) -> Result<&ModelArtifact> {
        self.models
            .get(&(scheme_key(scheme), user, n))
            .ok_or_else(|| {
                Error::MissingArtifact(format!("{} {} n={n}", scheme.name(), user.name()))
            })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub detectors: Vec<Detector>,
    pub users: Vec<User>,
    pub n_values: Vec<usize>,
    pub snr_db: Vec<f64>,
    /// Minimum bits counted per curve point for the user with the fewest
    /// bits per frame.
    pub min_bits: u64,
    /// Cap on frames per `(n, snr)` point.
    pub max_frames: u64,
    pub seed: u64,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub power: PowerConfig,
}

impl SweepConfig {
    pub fn new(
        detectors: Vec<Detector>,
        users: Vec<User>,
        n_values: Vec<usize>,
        snr_db: Vec<f64>,
    ) -> Self {
        Self {
            detectors,
            users,
            n_values,
            snr_db,
            min_bits: 2_000_000,
            max_frames: 5_000_000,
            seed: 0,
            sigma1_sq: 10.0,
            sigma2_sq: 1.0,
            power: PowerConfig::unit(),
        }
    }

    /// Frames simulated at each `(n, snr)` point.
    pub fn frames_per_point(&self, n: usize) -> u64 {
        let min_bits_per_frame = self
            .users
            .iter()
            .map(|u| (n / 2 * u.modulation().bits_per_symbol()) as u64)
            .min()
            .unwrap_or(1)
            .max(1);
        self.min_bits
            .div_ceil(min_bits_per_frame)
            .clamp(1, self.max_frames.max(1))
    }

    fn validate(&self, artifacts: &ArtifactSet) -> Result<()> {
        if self.detectors.is_empty()
            || self.users.is_empty()
            || self.n_values.is_empty()
            || self.snr_db.is_empty()
        {
            return Err(Error::InvalidParameter(
                "sweep needs detectors, users, n values and SNRs".into(),
            ));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("SNR grid must be finite".into()));
        }
        for &n in &self.n_values {
            for d in &self.detectors {
                let scheme = d.scheme().unwrap_or(Scheme::TwoSlot);
                scheme.validate_n(n)?;
                if let Some(scheme) = d.scheme() {
                    for &u in &self.users {
                        artifacts.get(scheme, u, n)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-frame bit errors in `detectors x users` order.
fn frame_errors(
    cfg: &SweepConfig,
    artifacts: &ArtifactSet,
    n: usize,
    snr_idx: usize,
    frame_idx: u64,
    n0: f64,
) -> Result<Vec<u64>> {
    let mut rng = stream(cfg.seed, &[n as u64, snr_idx as u64, frame_idx]);
    let ch = draw_channel(cfg.sigma1_sq, cfg.sigma2_sq, n0, &mut rng)?;
    let half = n / 2;
    let b1: Vec<Bit> = (0..2 * half).map(|_| rng.random_range(0..2u8)).collect();
    let b2: Vec<Bit> = (0..half).map(|_| rng.random_range(0..2u8)).collect();
    let data_noise = (0..half)
        .map(|_| crate::channel::awgn(n0, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let pilot_noise = (0..half)
        .map(|_| crate::channel::awgn(n0, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let needs = |s: Scheme| cfg.detectors.iter().any(|d| d.scheme() == Some(s));
    let build = |s: Scheme| {
        assemble_frame(
            s,
            n,
            &b1,
            &b2,
            &ch,
            &cfg.power,
            data_noise.clone(),
            pilot_noise.clone(),
        )
    };
    let two = if needs(Scheme::TwoSlot) || !needs(Scheme::ThreeSlot) {
        Some(build(Scheme::TwoSlot)?)
    } else {
        None
    };
    let three = if needs(Scheme::ThreeSlot) {
        Some(build(Scheme::ThreeSlot)?)
    } else {
        None
    };
    let any = two.as_ref().or(three.as_ref()).expect("at least one frame");

    let classical = if cfg.detectors.iter().any(|d| d.scheme().is_none()) {
        let c1 = User::Ue1.constellation();
        let c2 = User::Ue2.constellation();
        let mut ml1 = Vec::with_capacity(2 * half);
        let mut ml2 = Vec::with_capacity(half);
        let mut sic2 = Vec::with_capacity(half);
        for &y in &any.rx_data {
            let (i, j) = ml_joint_indices(y, &ch, &cfg.power, &c1, &c2);
            ml1.extend_from_slice(c1.label(i));
            ml2.extend_from_slice(c2.label(j));
            sic2.extend_from_slice(c2.label(sic_far_index(
                y,
                c1.points()[i],
                &ch,
                &cfg.power,
                &c2,
            )));
        }
        Some((ml1, ml2, sic2))
    } else {
        None
    };

    let mut out = Vec::with_capacity(cfg.detectors.len() * cfg.users.len());
    for d in &cfg.detectors {
        for &u in &cfg.users {
            let sent = any.tx_bits(u);
            let detected: Vec<Bit> = match (d, u) {
                (Detector::MlCsi | Detector::SicMlCsi, User::Ue1) => {
                    classical.as_ref().unwrap().0.clone()
                }
                (Detector::MlCsi, User::Ue2) => classical.as_ref().unwrap().1.clone(),
                (Detector::SicMlCsi, User::Ue2) => classical.as_ref().unwrap().2.clone(),
                (Detector::DlTwoSlot, _) => {
                    dl_detect_frame(artifacts.get(Scheme::TwoSlot, u, n)?, two.as_ref().unwrap())?
                        .bits
                }
                (Detector::DlThreeSlot, _) => {
                    dl_detect_frame(
                        artifacts.get(Scheme::ThreeSlot, u, n)?,
                        three.as_ref().unwrap(),
                    )?
                    .bits
                }
            };
            out.push(ber(sent, &detected)?.0);
        }
    }
    Ok(out)
}

/// Monte-Carlo BER for every `(detector, user, n)` over the SNR grid. Curves
/// come back in `detectors x users x n_values` order with points sorted by
/// SNR.
pub fn sweep(cfg: &SweepConfig, artifacts: &ArtifactSet) -> Result<Vec<BerCurve>> {
    cfg.validate(artifacts)?;
    let mut grid: Vec<(usize, f64)> = cfg.snr_db.iter().copied().enumerate().collect();
    grid.sort_by(|a, b| a.1.total_cmp(&b.1));
    let pairs = cfg.detectors.len() * cfg.users.len();

    // errors[n_idx][grid_idx][pair]
    let mut errors = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let frames = cfg.frames_per_point(n);
        let mut per_snr = Vec::with_capacity(grid.len());
        for &(snr_idx, snr_db) in &grid {
            let n0 = n0_from_snr_db(snr_db);
            let counts = (0..frames)
                .into_par_iter()
                .map(|k| frame_errors(cfg, artifacts, n, snr_idx, k, n0))
                .try_fold(
                    || vec![0u64; pairs],
                    |mut acc, e| {
                        let e = e?;
                        acc.iter_mut().zip(e).for_each(|(a, b)| *a += b);
                        Ok::<_, Error>(acc)
                    },
                )
                .try_reduce(
                    || vec![0u64; pairs],
                    |mut a, b| {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        Ok(a)
                    },
                )?;
            per_snr.push((frames, counts));
        }
        errors.push(per_snr);
    }

    let mut curves = Vec::new();
    for (di, &detector) in cfg.detectors.iter().enumerate() {
        for (ui, &user) in cfg.users.iter().enumerate() {
            for (ni, &n) in cfg.n_values.iter().enumerate() {
                let bits_per_frame = (n / 2 * user.modulation().bits_per_symbol()) as u64;
                let points = grid
                    .iter()
                    .zip(&errors[ni])
                    .map(|(&(_, snr_db), (frames, counts))| BerPoint {
                        snr_db,
                        bits: frames * bits_per_frame,
                        errors: counts[di * cfg.users.len() + ui],
                    })
                    .collect();
                curves.push(BerCurve {
                    detector,
                    user,
                    n,
                    points,
                });
            }
        }
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::{train, TrainConfig};

    #[test]
    fn ber_examples() {
        assert_eq!(ber(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap(), (0, 4));
        assert_eq!(ber(&[0, 1, 1, 0], &[1, 0, 0, 1]).unwrap(), (4, 4));
        assert_eq!(ber(&[0, 1, 1, 0], &[0, 0, 1, 1]).unwrap(), (2, 4));
        assert!(ber(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn rate_examples() {
        let ch = ChannelPair::new(Cx::new(1.0, 0.0), Cx::new(0.0, 1.0), 1.0).unwrap();
        let pw = PowerConfig::unit();
        let three = rates(&ch, &pw, Scheme::ThreeSlot);
        assert!((three.r1 - 1.5f64.log2() / 3.0).abs() < 1e-12);
        assert!((three.r1 - 0.195).abs() < 1e-3);
        let two = rates(&ch, &pw, Scheme::TwoSlot);
        assert!((two.r1 / three.r1 - 1.5).abs() < 1e-12);
        assert!((two.r2 / three.r2 - 1.5).abs() < 1e-12);

        let ch = ChannelPair::new(Cx::new(2.0, 0.0), Cx::default(), 0.5).unwrap();
        let r = rates(&ch, &pw, Scheme::TwoSlot);
        assert_eq!(r.sinr2, 0.0);
        assert_eq!(r.r2, 0.0);
        assert_eq!(r.sinr1, 4.0 / 0.5);
    }

    fn tiny_artifact(scheme: Scheme, user: User) -> ModelArtifact {
        train(&TrainConfig {
            frames: 16,
            batch: 16,
            ..TrainConfig::new(scheme, user, 8)
        })
        .unwrap()
    }

    #[test]
    fn dl_output_layout_and_guard() {
        let art = tiny_artifact(Scheme::TwoSlot, User::Ue1);
        let mut rng = stream(0, &[]);
        let ch = draw_channel(10.0, 1.0, 0.1, &mut rng).unwrap();
        let f = crate::framing::build_frame(
            Scheme::TwoSlot,
            8,
            &[0; 8],
            &[1; 4],
            &ch,
            &PowerConfig::unit(),
            &mut rng,
        )
        .unwrap();
        let det = dl_detect_frame(&art, &f).unwrap();
        assert_eq!(det.bits.len(), 8);
        let f3 = crate::framing::build_frame(
            Scheme::ThreeSlot,
            8,
            &[0; 8],
            &[1; 4],
            &ch,
            &PowerConfig::unit(),
            &mut rng,
        )
        .unwrap();
        assert!(matches!(
            dl_detect_frame(&art, &f3),
            Err(Error::ModelMismatch(_))
        ));
        let art2 = tiny_artifact(Scheme::TwoSlot, User::Ue2);
        assert_eq!(dl_detect_frame(&art2, &f).unwrap().bits.len(), 4);
    }

    #[test]
    fn dl_tie_break_on_bpsk_boundary() {
        // A zero network predicts 0 + 0j, exactly between the BPSK points.
        let mut art = tiny_artifact(Scheme::TwoSlot, User::Ue2);
        art.net = crate::neural::Network::zeros(4, 80, 60, 2);
        let mut rng = stream(1, &[]);
        let ch = draw_channel(10.0, 1.0, 0.1, &mut rng).unwrap();
        let f = crate::framing::build_frame(
            Scheme::TwoSlot,
            8,
            &[1; 8],
            &[1; 4],
            &ch,
            &PowerConfig::unit(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(dl_detect_frame(&art, &f).unwrap().bits, vec![0; 4]);
    }

    #[test]
    fn missing_artifact_reported() {
        let cfg = SweepConfig::new(
            vec![Detector::DlTwoSlot],
            vec![User::Ue1],
            vec![8],
            vec![10.0],
        );
        assert!(matches!(
            sweep(&cfg, &ArtifactSet::new()),
            Err(Error::MissingArtifact(_))
        ));
    }

    #[test]
    fn sweep_counts_and_order() {
        let mut cfg = SweepConfig::new(
            vec![Detector::MlCsi, Detector::SicMlCsi],
            vec![User::Ue1, User::Ue2],
            vec![8],
            vec![20.0, 0.0],
        );
        cfg.min_bits = 4000;
        let curves = sweep(&cfg, &ArtifactSet::new()).unwrap();
        assert_eq!(curves.len(), 4);
        assert_eq!(curves[0].points[0].snr_db, 0.0);
        // 1000 frames: 8 bits per frame for UE1, 4 for UE2.
        assert_eq!(curves[0].points[0].bits, 8000);
        assert_eq!(curves[1].points[0].bits, 4000);
        // Near-user decisions are the same joint-ML decisions for both.
        assert_eq!(curves[0].points, curves[2].points);
        for c in &curves {
            assert!(c.points.iter().all(|p| p.errors <= p.bits));
            assert!(c.points[0].ber() > c.points[1].ber());
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let mut cfg = SweepConfig::new(
            vec![Detector::SicMlCsi],
            vec![User::Ue2],
            vec![8, 16],
            vec![5.0, 15.0],
        );
        cfg.min_bits = 2000;
        cfg.seed = 9;
        assert_eq!(
            sweep(&cfg, &ArtifactSet::new()).unwrap(),
            sweep(&cfg, &ArtifactSet::new()).unwrap()
        );
    }
}
