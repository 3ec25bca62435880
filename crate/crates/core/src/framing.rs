//! Frame assembly for both pilot schemes and the detector feature layout.
//!
//! A frame of `n` symbols carries `n / 2` data slots and `n / 2` pilot slots.
//! In the two-slot scheme every pilot slot is the superposition of both
//! users' pilots. In the three-slot scheme the first `n / 4` pilot slots carry
//! UE1 alone and the next `n / 4` carry UE2 alone.
//!
//! Noise is drawn in a fixed order (all data slots, then all pilot slots), so
//! two frames built from equal RNG states share every noise sample whatever
//! their scheme.

use rand::Rng;

use crate::baseband::{modulate, Bit, Constellation, Cx, Modulation};
use crate::channel::{awgn, pilot_slot, superpose, ChannelPair, PowerConfig};
use crate::error::{Error, Result};

/// Known pilot value sent by both users.
pub const PILOT_SYMBOL: Cx = Cx::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    ThreeSlot,
    TwoSlot,
}

impl Scheme {
    pub fn feature_dim(self) -> usize {
        match self {
            Scheme::TwoSlot => 4,
            Scheme::ThreeSlot => 6,
        }
    }

    /// Fraction of slots carrying data in the rate formulas.
    pub fn rate_prefactor(self) -> f64 {
        match self {
            Scheme::TwoSlot => 1.0 / 2.0,
            Scheme::ThreeSlot => 1.0 / 3.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::TwoSlot => "two-slot",
            Scheme::ThreeSlot => "three-slot",
        }
    }

    pub fn validate_n(self, n: usize) -> Result<()> {
        let ok = match self {
            Scheme::TwoSlot => n >= 2 && n.is_multiple_of(2),
            Scheme::ThreeSlot => n >= 4 && n.is_multiple_of(4),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "frame length {n} is invalid for the {} scheme",
                self.name()
            )))
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "two-slot" | "two_slot" | "twoslot" | "2" => Ok(Scheme::TwoSlot),
            "three-slot" | "three_slot" | "threeslot" | "3" => Ok(Scheme::ThreeSlot),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum User {
    /// Near user, QPSK.
    Ue1,
    /// Far user, BPSK.
    Ue2,
}

impl User {
    pub fn modulation(self) -> Modulation {
        match self {
            User::Ue1 => Modulation::Qpsk,
            User::Ue2 => Modulation::Bpsk,
        }
    }

    pub fn constellation(self) -> Constellation {
        Constellation::new(self.modulation())
    }

    pub fn name(self) -> &'static str {
        match self {
            User::Ue1 => "ue1",
            User::Ue2 => "ue2",
        }
    }
}

impl std::str::FromStr for User {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ue1" | "1" | "near" => Ok(User::Ue1),
            "ue2" | "2" | "far" => Ok(User::Ue2),
            other => Err(Error::InvalidParameter(format!("unknown user '{other}'"))),
        }
    }
}

/// One coherence block. Stores the noise it was built with so every received
/// sample can be regenerated from the other fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub n: usize,
    pub scheme: Scheme,
    pub tx_bits_u1: Vec<Bit>,
    pub tx_bits_u2: Vec<Bit>,
    pub tx_syms_u1: Vec<Cx>,
    pub tx_syms_u2: Vec<Cx>,
    pub rx_pilot: Vec<Cx>,
    pub rx_data: Vec<Cx>,
    pub channel: ChannelPair,
    pub power: PowerConfig,
    pub data_noise: Vec<Cx>,
    pub pilot_noise: Vec<Cx>,
}

impl Frame {
    pub fn data_len(&self) -> usize {
        self.n / 2
    }

    pub fn tx_bits(&self, user: User) -> &[Bit] {
        match user {
            User::Ue1 => &self.tx_bits_u1,
            User::Ue2 => &self.tx_bits_u2,
        }
    }

    pub fn tx_syms(&self, user: User) -> &[Cx] {
        match user {
            User::Ue1 => &self.tx_syms_u1,
            User::Ue2 => &self.tx_syms_u2,
        }
    }

    /// Pilot observations belonging to one user in the three-slot layout.
    pub fn user_pilots(&self, user: User) -> Result<&[Cx]> {
        if self.scheme != Scheme::ThreeSlot {
            return Err(Error::UnidentifiablePilots);
        }
        let q = self.n / 4;
        Ok(match user {
            User::Ue1 => &self.rx_pilot[..q],
            User::Ue2 => &self.rx_pilot[q..],
        })
    }
}

fn mean(xs: &[Cx]) -> Cx {
    xs.iter().sum::<Cx>() / xs.len() as f64
}

pub fn build_frame<R: Rng + ?Sized>(
    scheme: Scheme,
    n: usize,
    bits_u1: &[Bit],
    bits_u2: &[Bit],
    ch: &ChannelPair,
    pw: &PowerConfig,
    rng: &mut R,
) -> Result<Frame> {
    scheme.validate_n(n)?;
    let data_noise = (0..n / 2)
        .map(|_| awgn(ch.n0, rng))
        .collect::<Result<Vec<_>>>()?;
    let pilot_noise = (0..n / 2)
        .map(|_| awgn(ch.n0, rng))
        .collect::<Result<Vec<_>>>()?;
    assemble_frame(scheme, n, bits_u1, bits_u2, ch, pw, data_noise, pilot_noise)
}

/// Builds a frame from explicit noise samples (`n / 2` for data, `n / 2`
/// for pilots).
#[allow(clippy::too_many_arguments)]
pub fn assemble_frame(
    scheme: Scheme,
    n: usize,
    bits_u1: &[Bit],
    bits_u2: &[Bit],
    ch: &ChannelPair,
    pw: &PowerConfig,
    data_noise: Vec<Cx>,
    pilot_noise: Vec<Cx>,
) -> Result<Frame> {
    scheme.validate_n(n)?;
    let data_len = n / 2;
    if data_noise.len() != data_len || pilot_noise.len() != data_len {
        return Err(Error::InvalidParameter(format!(
            "a frame of {n} symbols needs {data_len} data and {data_len} pilot noise samples"
        )));
    }
    let c1 = User::Ue1.constellation();
    let c2 = User::Ue2.constellation();
    for (bits, c, user) in [(bits_u1, &c1, User::Ue1), (bits_u2, &c2, User::Ue2)] {
        let want = data_len * c.bits_per_symbol();
        if bits.len() != want {
            return Err(Error::InvalidParameter(format!(
                "{} needs {want} bits for a frame of {n} symbols, got {}",
                user.name(),
                bits.len()
            )));
        }
    }
    let x1 = modulate(bits_u1, &c1)?;
    let x2 = modulate(bits_u2, &c2)?;

    let rx_data = x1
        .iter()
        .zip(&x2)
        .zip(&data_noise)
        .map(|((&a, &b), &w)| superpose(a, b, ch, pw, w))
        .collect();
    let q = n / 4;
    let rx_pilot = pilot_noise
        .iter()
        .enumerate()
        .map(|(k, &w)| match scheme {
            Scheme::TwoSlot => superpose(PILOT_SYMBOL, PILOT_SYMBOL, ch, pw, w),
            Scheme::ThreeSlot if k < q => pilot_slot(PILOT_SYMBOL, ch.h1, pw.p1, w),
            Scheme::ThreeSlot => pilot_slot(PILOT_SYMBOL, ch.h2, pw.p2, w),
        })
        .collect();

    Ok(Frame {
        n,
        scheme,
        tx_bits_u1: bits_u1.to_vec(),
        tx_bits_u2: bits_u2.to_vec(),
        tx_syms_u1: x1,
        tx_syms_u2: x2,
        rx_pilot,
        rx_data,
        channel: *ch,
        power: *pw,
        data_noise,
        pilot_noise,
    })
}

/// Per-step detector input: one row per data slot, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f64>,
    feature_dim: usize,
}

impl FeatureSequence {
    pub fn from_rows(data: Vec<f64>, feature_dim: usize) -> Result<Self> {
        if feature_dim == 0 || !data.len().is_multiple_of(feature_dim) {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form rows of width {feature_dim}",
                data.len()
            )));
        }
        Ok(Self { data, feature_dim })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.feature_dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn step(&self, k: usize) -> &[f64] {
        &self.data[k * self.feature_dim..(k + 1) * self.feature_dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Data sample `(I, Q)` followed by the frame's pilot summary: the mean
/// superposed pilot (two-slot) or both per-user pilot means (three-slot).
pub fn features(frame: &Frame) -> FeatureSequence {
    let summary: Vec<f64> = match frame.scheme {
        Scheme::TwoSlot => {
            let p = mean(&frame.rx_pilot);
            vec![p.re, p.im]
        }
        Scheme::ThreeSlot => {
            let q = frame.n / 4;
            let p1 = mean(&frame.rx_pilot[..q]);
            let p2 = mean(&frame.rx_pilot[q..]);
            vec![p1.re, p1.im, p2.re, p2.im]
        }
    };
    let dim = frame.scheme.feature_dim();
    let mut data = Vec::with_capacity(frame.rx_data.len() * dim);
    for y in &frame.rx_data {
        data.push(y.re);
        data.push(y.im);
        data.extend_from_slice(&summary);
    }
    FeatureSequence {
        data,
        feature_dim: dim,
    }
}
