//! Offline training of per-(user, scheme) detector networks.
//!
//! Every minibatch is freshly simulated: for each frame an SNR is drawn
//! uniformly in dB, then the channel, both users' bits and the noise. The
//! detector only ever sees [`features`] of the frame; the true channel stays
//! inside the simulator. Batch `k` is drawn from its own RNG stream, and
//! per-frame gradients are reduced in a fixed chunk order, so a run is
//! bit-reproducible for a given seed regardless of the thread count.

mod format;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{draw_channel, n0_from_snr_db, PowerConfig};
use crate::error::{Error, Result};
use crate::framing::{build_frame, features, FeatureSequence, Scheme, User};
use crate::neural::{adam_step, backward, forward_cached, AdamState, Gradients, Network, Tensor};
use crate::rng::{stream, SimRng};

pub use format::{load, save, FORMAT_VERSION, MAGIC};

/// Frame lengths the detector is defined for.
pub const FRAME_LENGTHS: [usize; 5] = [8, 16, 32, 64, 128];
/// The loss trace keeps one entry (the window mean) per this many steps.
pub const TRACE_EVERY: usize = 100;
/// Frames per gradient-accumulation chunk.
const CHUNK: usize = 16;
/// Work (frames x data slots) above which a run counts as long.
const LONG_RUN_SLOTS: u64 = 10_000_000;

/// Conventional file name for a trained model.
pub fn model_file_name(scheme: Scheme, user: User, n: usize) -> String {
    format!("model_{}_{}_n{n}.bin", scheme.name(), user.name())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub scheme: Scheme,
    pub user: User,
    pub n: usize,
    /// Total training frames.
    pub frames: u64,
    pub batch: usize,
    pub lr: f64,
    pub snr_db_range: (f64, f64),
    pub seed: u64,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub power: PowerConfig,
}

impl TrainConfig {
    /// Defaults: 10^7 frames in batches of 10000, lr 0.01, training SNR
    /// uniform over [0, 30] dB, channel variances 10 and 1, unit powers.
    pub fn new(scheme: Scheme, user: User, n: usize) -> Self {
        Self {
            scheme,
            user,
            n,
            frames: 10_000_000,
            batch: 10_000,
            lr: 0.01,
            snr_db_range: (0.0, 30.0),
            seed: 0,
            sigma1_sq: 10.0,
            sigma2_sq: 1.0,
            power: PowerConfig::unit(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !FRAME_LENGTHS.contains(&self.n) {
            return Err(Error::InvalidParameter(format!(
                "frame length {} not in {FRAME_LENGTHS:?}",
                self.n
            )));
        }
        self.scheme.validate_n(self.n)?;
        if self.batch == 0 || (self.frames > 0 && self.batch as u64 > self.frames) {
            return Err(Error::InvalidParameter(format!(
                "batch {} must be in 1..={}",
                self.batch, self.frames
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        let (lo, hi) = self.snr_db_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!(
                "bad SNR range [{lo}, {hi}]"
            )));
        }
        if !(self.sigma1_sq > 0.0 && self.sigma2_sq > 0.0) {
            return Err(Error::InvalidParameter(
                "channel variances must be positive".into(),
            ));
        }
        PowerConfig::new(self.power.p1, self.power.p2)?;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.frames.div_ceil(self.batch as u64)
    }

    pub fn is_long_running(&self) -> bool {
        self.frames.saturating_mul(self.n as u64 / 2) > LONG_RUN_SLOTS
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub net: Network,
    pub config: TrainConfig,
    pub format_version: u32,
    pub training_loss_trace: Vec<f64>,
}

impl ModelArtifact {
    pub fn ensure_matches(&self, scheme: Scheme, user: User, n: usize) -> Result<()> {
        let c = &self.config;
        if c.scheme != scheme || c.user != user || c.n != n {
            return Err(Error::ModelMismatch(format!(
                "model is for {} {} n={}, requested {} {} n={n}",
                c.scheme.name(),
                c.user.name(),
                c.n,
                scheme.name(),
                user.name()
            )));
        }
        Ok(())
    }
}

/// Detector inputs and regression targets (`[n/2, 2]`, I then Q).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Vec<FeatureSequence>,
    pub targets: Vec<Tensor>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

fn random_bits<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(0..2u8)).collect()
}

/// Simulates `size` independent frames for `cfg.user`.
pub fn generate_batch<R: Rng + ?Sized>(
    cfg: &TrainConfig,
    size: usize,
    rng: &mut R,
) -> Result<Batch> {
    let half = cfg.n / 2;
    let (lo, hi) = cfg.snr_db_range;
    let mut batch = Batch {
        features: Vec::with_capacity(size),
        targets: Vec::with_capacity(size),
    };
    for _ in 0..size {
        let snr_db = if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        };
        let ch = draw_channel(cfg.sigma1_sq, cfg.sigma2_sq, n0_from_snr_db(snr_db), rng)?;
        let b1 = random_bits(2 * half, rng);
        let b2 = random_bits(half, rng);
        let frame = build_frame(cfg.scheme, cfg.n, &b1, &b2, &ch, &cfg.power, rng)?;
        let target: Vec<f64> = frame
            .tx_syms(cfg.user)
            .iter()
            .flat_map(|s| [s.re, s.im])
            .collect();
        batch.features.push(features(&frame));
        batch.targets.push(Tensor::from_vec(&[half, 2], target)?);
    }
    Ok(batch)
}

/// Mean-over-batch HMSE and its gradient. Every frame's loss gradient is
/// divided by the total symbol count, so the result is the gradient of the
/// batch loss.
pub fn batch_gradients(net: &Network, batch: &Batch) -> Result<(f64, Gradients)> {
    let symbols: usize = batch.targets.iter().map(|t| t.rows()).sum();
    let scale = 1.0 / symbols as f64;
    let idx: Vec<usize> = (0..batch.len()).collect();
    let partial: Vec<Result<(f64, Gradients)>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut sq = 0.0;
            let mut acc = Gradients::zeros_like(net);
            for &i in chunk {
                let (pred, cache) = forward_cached(net, &batch.features[i])?;
                let target = &batch.targets[i];
                let mut dout = Vec::with_capacity(pred.len());
                for (p, t) in pred.data().iter().zip(target.data()) {
                    sq += (p - t) * (p - t);
                    dout.push((p - t) * scale);
                }
                let g = backward(net, &cache, &Tensor::from_vec(pred.shape(), dout)?)?;
                acc.add_assign(&g);
            }
            Ok((sq, acc))
        })
        .collect();
    let mut total = Gradients::zeros_like(net);
    let mut sq = 0.0;
    for p in partial {
        let (s, g) = p?;
        sq += s;
        total.add_assign(&g);
    }
    Ok((0.5 * sq * scale, total))
}

/// Progress snapshot passed to [`train_with`] observers.
#[derive(Debug, Clone, Copy)]
pub struct TrainProgress {
    pub step: u64,
    pub steps: u64,
    pub loss: f64,
}

pub fn train(cfg: &TrainConfig) -> Result<ModelArtifact> {
    train_with(cfg, |_| {})
}

pub fn initial_network(cfg: &TrainConfig) -> Network {
    let mut rng: SimRng = stream(cfg.seed, &[u64::MAX]);
    Network::new(cfg.scheme.feature_dim(), 2, &mut rng)
}

/// Training loop; `observe` is called after every optimizer step.
pub fn train_with(
    cfg: &TrainConfig,
    mut observe: impl FnMut(TrainProgress),
) -> Result<ModelArtifact> {
    cfg.validate()?;
    let mut net = initial_network(cfg);
    let mut adam = AdamState::new(net.params(), cfg.lr);
    let steps = cfg.steps();
    let mut trace = Vec::new();
    let mut window = (0.0, 0usize);

    for step in 0..steps {
        let remaining = cfg.frames - step * cfg.batch as u64;
        let size = remaining.min(cfg.batch as u64) as usize;
        let mut rng = stream(cfg.seed, &[step]);
        let batch = generate_batch(cfg, size, &mut rng)?;
        let (loss, grads) = batch_gradients(&net, &batch)?;
        if !loss.is_finite() || grads.flat().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                step: step as usize,
            });
        }
        adam_step(&mut net.params_mut(), &grads.tensors, &mut adam)?;

        window.0 += loss;
        window.1 += 1;
        if window.1 == TRACE_EVERY {
            trace.push(window.0 / window.1 as f64);
            window = (0.0, 0);
        }
        observe(TrainProgress {
            step: step + 1,
            steps,
            loss,
        });
    }
    if window.1 > 0 {
        trace.push(window.0 / window.1 as f64);
    }

    Ok(ModelArtifact {
        net,
        config: cfg.clone(),
        format_version: FORMAT_VERSION,
        training_loss_trace: trace,
    })
}
