//! Complex baseband samples and the two constellations used by the users.
//!
//! Bit labels are the binary expansion of the point index, most significant
//! bit first. BPSK maps bit 0 to +1 and bit 1 to -1. QPSK is Gray coded with
//! the first bit selecting the sign of I and the second the sign of Q, so
//! index order is `(+,+), (+,-), (-,+), (-,-)` scaled by `1/sqrt(2)`.

use std::f64::consts::FRAC_1_SQRT_2;

pub use num_complex::Complex64 as Cx;

use crate::error::{Error, Result};

pub type Bit = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modulation {
    Bpsk,
    Qpsk,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    modulation: Modulation,
    points: Vec<Cx>,
    labels: Vec<Vec<Bit>>,
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        let points = match modulation {
            Modulation::Bpsk => vec![Cx::new(1.0, 0.0), Cx::new(-1.0, 0.0)],
            Modulation::Qpsk => vec![
                Cx::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
                Cx::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
                Cx::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
                Cx::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
            ],
        };
        let k = modulation.bits_per_symbol();
        let labels = (0..points.len())
            .map(|idx| (0..k).rev().map(|b| ((idx >> b) & 1) as Bit).collect())
            .collect();
        Self {
            modulation,
            points,
            labels,
        }
    }

    pub fn bpsk() -> Self {
        Self::new(Modulation::Bpsk)
    }

    pub fn qpsk() -> Self {
        Self::new(Modulation::Qpsk)
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn points(&self) -> &[Cx] {
        &self.points
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.modulation.bits_per_symbol()
    }

    pub fn label(&self, index: usize) -> &[Bit] {
        &self.labels[index]
    }

    /// Index of the point carrying `bits` (one symbol's worth, MSB first).
    pub fn index_of(&self, bits: &[Bit]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
    }

    /// Index of the closest point; ties go to the lowest index.
    pub fn nearest_index(&self, y: Cx) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

pub fn modulate(bits: &[Bit], c: &Constellation) -> Result<Vec<Cx>> {
    let k = c.bits_per_symbol();
    if !bits.len().is_multiple_of(k) {
        return Err(Error::BitLength {
            len: bits.len(),
            bits_per_symbol: k,
        });
    }
    Ok(bits
        .chunks_exact(k)
        .map(|chunk| c.points[c.index_of(chunk)])
        .collect())
}

pub fn demap_nearest(y: Cx, c: &Constellation) -> &[Bit] {
    c.label(c.nearest_index(y))
}

/// Demaps a whole symbol sequence into a flat bit vector.
pub fn demap_all(symbols: &[Cx], c: &Constellation) -> Vec<Bit> {
    let mut out = Vec::with_capacity(symbols.len() * c.bits_per_symbol());
    for &s in symbols {
        out.extend_from_slice(demap_nearest(s, c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bpsk_sign_map() {
        let c = Constellation::bpsk();
        assert_eq!(modulate(&[0], &c).unwrap(), vec![Cx::new(1.0, 0.0)]);
        assert_eq!(modulate(&[1], &c).unwrap(), vec![Cx::new(-1.0, 0.0)]);
        assert_eq!(
            modulate(&[0, 1, 0], &c).unwrap(),
            vec![Cx::new(1.0, 0.0), Cx::new(-1.0, 0.0), Cx::new(1.0, 0.0)]
        );
    }

    #[test]
    fn qpsk_corner_and_energy() {
        let c = Constellation::qpsk();
        let s = modulate(&[0, 0], &c).unwrap();
        assert_eq!(s, vec![Cx::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2)]);
        for c in [Constellation::bpsk(), Constellation::qpsk()] {
            let e: f64 =
                c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / c.points().len() as f64;
            assert!((e - 1.0).abs() < 1e-15);
            assert_eq!(c.points().len(), 1 << c.bits_per_symbol());
        }
    }

    #[test]
    fn odd_length_rejected() {
        let err = modulate(&[0, 1, 1], &Constellation::qpsk()).unwrap_err();
        assert!(matches!(
            err,
            Error::BitLength {
                len: 3,
                bits_per_symbol: 2
            }
        ));
    }

    #[test]
    fn hard_decisions() {
        let b = Constellation::bpsk();
        assert_eq!(demap_nearest(Cx::new(0.3, 0.9), &b), &[0]);
        assert_eq!(demap_nearest(Cx::new(0.0, 0.0), &b), b.label(0));
        let q = Constellation::qpsk();
        assert_eq!(demap_nearest(Cx::new(-5.0, -0.1), &q), &[1, 1]);
    }

    #[test]
    fn qpsk_gray_neighbours() {
        let q = Constellation::qpsk();
        // Decision-region neighbours share one coordinate sign.
        for i in 0..4 {
            for j in 0..4 {
                let (a, b) = (q.points()[i], q.points()[j]);
                let adjacent = (a.re == b.re) ^ (a.im == b.im);
                if adjacent {
                    let diff = q
                        .label(i)
                        .iter()
                        .zip(q.label(j))
                        .filter(|(x, y)| x != y)
                        .count();
                    assert_eq!(diff, 1, "points {i} and {j}");
                }
            }
        }
    }

    #[test]
    fn empirical_energy() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let q = Constellation::qpsk();
        let bits: Vec<Bit> = (0..200_000).map(|_| rng.random_range(0..2u8)).collect();
        let s = modulate(&bits, &q).unwrap();
        let e = s.iter().map(|x| x.norm_sqr()).sum::<f64>() / s.len() as f64;
        assert!((e - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn noiseless_round_trip(bits in proptest::collection::vec(0u8..2, 0..64), qpsk in any::<bool>()) {
            let c = if qpsk { Constellation::qpsk() } else { Constellation::bpsk() };
            let mut bits = bits;
            bits.truncate(bits.len() / c.bits_per_symbol() * c.bits_per_symbol());
            let syms = modulate(&bits, &c).unwrap();
            prop_assert_eq!(syms.len(), bits.len() / c.bits_per_symbol());
            prop_assert_eq!(demap_all(&syms, &c), bits);
        }
    }
}
