use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use super::backprop::bptt_gradients;
use super::loss::{episode_loss, LossConfig, DEFAULT_LAMBDA};
use super::optim::{rmsprop_update, OptimizerState, DEFAULT_CLIP_NORM, DEFAULT_RMSPROP_DECAY, DEFAULT_RMSPROP_EPSILON};
use super::schedule::{LrSchedule, LrScheduleKind, DEFAULT_ETA0, DEFAULT_GAMMA, DEFAULT_PERIOD};
use crate::codec::{CodedImage, Encoder, BLOCK};
use crate::error::{Error, Result};
use crate::estimator::{run_episode, ContextBatch, EstimatorConfig, EstimatorKind, EstimatorParams, State, DEFAULT_HIDDEN};
use crate::harness::short_hash;
use crate::image::GrayImage;
use crate::numerics::{Matrix, Rng, Stream, RNG_ALGORITHM};
use crate::patching::{decompose, get_neighbors, scan_path, Corner, PatchGrid};
use crate::scalar::Scalar;

pub const DEFAULT_BATCH: usize = 8;
pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_K: usize = 3;
pub const DEFAULT_VAL_FRACTION: f64 = 0.1;
pub const DEFAULT_QUALITY_RANGE: (u32, u32) = (20, 60);

/// How the batch is laid out: lanes are whole images advancing through their
/// scan paths in lockstep.
pub const BATCH_LAYOUT: &str = "image-lanes-synchronized-scan";

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub estimator: EstimatorConfig,
    pub k: usize,
    pub lambda: f64,
    pub normalize_mae_by_batch: bool,
    pub schedule: LrScheduleKind,
    pub eta0: f64,
    pub gamma: f64,
    pub lr_noise_is_std: bool,
    /// Epochs between learning-rate drops.
    pub lr_period: usize,
    pub epochs: usize,
    /// Image lanes per batch.
    pub batch: usize,
    /// Inclusive quality range sampled per image per epoch.
    pub quality_min: u32,
    pub quality_max: u32,
    pub seed: u64,
    pub val_fraction: f64,
    pub clip_norm: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            estimator: EstimatorConfig::new(EstimatorKind::DeltaRnn, DEFAULT_HIDDEN, BLOCK),
            k: DEFAULT_K,
            lambda: DEFAULT_LAMBDA,
            normalize_mae_by_batch: false,
            schedule: LrScheduleKind::Stochastic,
            eta0: DEFAULT_ETA0,
            gamma: DEFAULT_GAMMA,
            lr_noise_is_std: false,
            lr_period: DEFAULT_PERIOD,
            epochs: DEFAULT_EPOCHS,
            batch: DEFAULT_BATCH,
            quality_min: DEFAULT_QUALITY_RANGE.0,
            quality_max: DEFAULT_QUALITY_RANGE.1,
            seed: 0,
            val_fraction: DEFAULT_VAL_FRACTION,
            clip_norm: DEFAULT_CLIP_NORM,
            rmsprop_decay: DEFAULT_RMSPROP_DECAY,
            rmsprop_epsilon: DEFAULT_RMSPROP_EPSILON,
        }
    }
}

impl TrainConfig {
    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            k: self.k,
            normalize_mae_by_batch: self.normalize_mae_by_batch,
        }
    }

    pub fn lr_schedule(&self) -> LrSchedule {
        let mut s = LrSchedule::new(self.schedule, self.eta0);
        s.gamma = self.gamma;
        s.noise_is_std = self.lr_noise_is_std;
        s.period = self.lr_period;
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        self.loss().validate()?;
        self.lr_schedule().validate()?;
        if self.estimator.d != BLOCK {
            return Err(Error::Config(format!(
                "training images are coded in {BLOCK}x{BLOCK} blocks; d must be {BLOCK}"
            )));
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epoch count must be positive".into()));
        }
        if self.quality_min < 1 || self.quality_max > 100 || self.quality_min > self.quality_max {
            return Err(Error::Config(format!(
                "invalid quality range {}..={}",
                self.quality_min, self.quality_max
            )));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; the config hash is taken over it.
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("kind", self.estimator.kind.name().to_string()),
            ("hidden", self.estimator.hidden.to_string()),
            ("d", self.estimator.d.to_string()),
            ("neighbors", (self.estimator.slots - 1).to_string()),
            ("tied", self.estimator.tied.to_string()),
            ("input_divisor", self.estimator.input_divisor.to_string()),
            ("k", self.k.to_string()),
            ("lambda", self.lambda.to_string()),
            ("normalize_mae_by_batch", self.normalize_mae_by_batch.to_string()),
            ("schedule", self.schedule.to_string()),
            ("eta0", self.eta0.to_string()),
            ("gamma", self.gamma.to_string()),
            ("lr_noise_is_std", self.lr_noise_is_std.to_string()),
            ("lr_period", self.lr_period.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("quality_min", self.quality_min.to_string()),
            ("quality_max", self.quality_max.to_string()),
            ("seed", self.seed.to_string()),
            ("val_fraction", self.val_fraction.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("rmsprop_decay", self.rmsprop_decay.to_string()),
            ("rmsprop_epsilon", self.rmsprop_epsilon.to_string()),
        ]
    }

    /// Short SHA-256 digest of [`to_kv`](Self::to_kv).
    pub fn config_hash(&self) -> String {
        let text: String = self.to_kv().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        short_hash(text.as_bytes())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub eta: f64,
    pub train_loss: f64,
    /// `NaN` when there is no validation split.
    pub val_loss: f64,
    /// Mean global gradient norm before clipping.
    pub grad_norm_pre_clip: f64,
    pub wall_time_s: f64,
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub config_hash: String,
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
}

pub const LOG_HEADER: &str = "epoch,eta,train_loss,val_loss,grad_norm_pre_clip,wall_time_s";

impl TrainingLog {
    /// CSV with a leading `#` provenance line. Without timing the
    /// `wall_time_s` column is left out so reruns compare byte for byte.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = format!(
            "# iterefine training log config_hash={} seed={} rng={RNG_ALGORITHM} batch_layout={BATCH_LAYOUT}\n",
            self.config_hash, self.seed
        );
        if with_timing {
            out.push_str(LOG_HEADER);
        } else {
            out.push_str(LOG_HEADER.trim_end_matches(",wall_time_s"));
        }
        out.push('\n');
        for e in &self.epochs {
            let _ = write!(out, "{},{},{},{},{}", e.epoch, e.eta, e.train_loss, e.val_loss, e.grad_norm_pre_clip);
            if with_timing {
                let _ = write!(out, ",{:.3}", e.wall_time_s);
            }
            out.push('\n');
        }
        out
    }
}

/// Same-sized images decoded as parallel lanes along their own scan paths.
#[derive(Debug, Clone)]
pub struct TrainBatch<'a, T> {
    pub targets: Vec<&'a PatchGrid<T>>,
    pub coded: Vec<&'a CodedImage>,
    pub corners: Vec<Corner>,
    paths: Vec<Vec<usize>>,
}

impl<'a, T: Scalar> TrainBatch<'a, T> {
    pub fn new(targets: Vec<&'a PatchGrid<T>>, coded: Vec<&'a CodedImage>, corners: Vec<Corner>) -> Result<Self> {
        if targets.is_empty() || targets.len() != coded.len() || targets.len() != corners.len() {
            return Err(Error::Param("batch needs matching, non-empty targets, codes and corners".into()));
        }
        let g = targets[0].geometry;
        for (t, c) in targets.iter().zip(&coded) {
            if t.geometry != g || (c.width, c.height) != (t.width, t.height) || c.d != t.d {
                return Err(Error::Param("all images in a batch must share their dimensions".into()));
            }
        }
        let paths = corners.iter().map(|&c| scan_path(c, g.rows, g.cols).order).collect();
        Ok(TrainBatch {
            targets,
            coded,
            corners,
            paths,
        })
    }

    pub fn lanes(&self) -> usize {
        self.targets.len()
    }

    /// Scan positions, i.e. episodes per lane.
    pub fn episodes(&self) -> usize {
        self.targets[0].geometry.len()
    }

    pub fn contexts(&self, pos: usize, divisor: f64) -> Result<ContextBatch<T>> {
        let g = self.targets[0].geometry;
        let ctx: Vec<_> = (0..self.lanes())
            .map(|b| get_neighbors(self.paths[b][pos], g, &self.coded[b].blocks))
            .collect();
        ContextBatch::from_contexts(&ctx.iter().collect::<Vec<_>>(), divisor)
    }

    /// True patches at scan position `pos` (`d^2 x B`).
    pub fn target_matrix(&self, pos: usize) -> Result<Matrix<T>> {
        let cols: Vec<&[T]> = (0..self.lanes())
            .map(|b| self.targets[b].patches[self.paths[b][pos]].as_slice())
            .collect();
        Matrix::from_columns(&cols)
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: EstimatorParams<T>,
    pub log: TrainingLog,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Mean episode loss and update count for one pass over a batch.
struct PassStats {
    loss_sum: f64,
    norm_sum: f64,
    episodes: usize,
}

fn run_batch<T: Scalar>(
    batch: &TrainBatch<'_, T>,
    params: &mut EstimatorParams<T>,
    opt: Option<(&mut OptimizerState<T>, f64)>,
    loss_cfg: &LossConfig,
) -> Result<PassStats> {
    let mut stats = PassStats {
        loss_sum: 0.0,
        norm_sum: 0.0,
        episodes: 0,
    };
    let mut state = State::zeros(params.kind(), params.config.hidden, batch.lanes());
    let mut opt = opt;
    for pos in 0..batch.episodes() {
        let ctx = batch.contexts(pos, params.config.input_divisor)?;
        let targets = batch.target_matrix(pos)?;
        let trace = run_episode(ctx, state, loss_cfg.k, params)?;
        let loss = episode_loss(&targets, &trace, loss_cfg)?.total.as_f64();
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss became non-finite at scan position {pos}")));
        }
        stats.loss_sum += loss;
        stats.episodes += 1;
        if let Some((opt, eta)) = opt.as_mut() {
            let grads = bptt_gradients(&targets, &trace, params, loss_cfg)?;
            let upd = rmsprop_update(params, &grads, opt, *eta)?;
            stats.norm_sum += upd.norm_pre_clip;
        }
        // carried forward without a gradient path
        state = trace.final_state().clone();
    }
    Ok(stats)
}

/// Groups indices by image size (first appearance order), then cuts each group
/// into batches of at most `batch` lanes.
fn make_batches(order: &[usize], dims: &[(usize, usize)], batch: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    for &i in order {
        match groups.iter_mut().find(|(d, _)| *d == dims[i]) {
            Some((_, g)) => g.push(i),
            None => groups.push((dims[i], vec![i])),
        }
    }
    groups
        .into_iter()
        .flat_map(|(_, g)| g.chunks(batch).map(<[usize]>::to_vec).collect::<Vec<_>>())
        .collect()
}

struct CodeCache {
    map: HashMap<(usize, u32), CodedImage>,
}

impl CodeCache {
    fn get(&mut self, images: &[GrayImage], i: usize, q: u32) -> Result<()> {
        if let std::collections::hash_map::Entry::Vacant(slot) = self.map.entry((i, q)) {
            slot.insert(Encoder::with_quality(q)?.encode(&images[i])?);
        }
        Ok(())
    }
}

/// Learns decoder parameters from raw images.
///
/// Each epoch shuffles the training images, draws a scan corner and a coding
/// quality per image, and runs every batch episode by episode with one
/// optimiser step per episode. State carries across episodes within an image
/// and resets between batches.
pub fn train<T: Scalar>(images: &[GrayImage], cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Param("training needs at least one image".into()));
    }
    let master = Rng::new(cfg.seed);
    let mut params = EstimatorParams::<T>::init(cfg.estimator, &mut master.substream(Stream::Init))?;
    let mut opt = OptimizerState::new(&params);
    opt.decay = cfg.rmsprop_decay;
    opt.epsilon = cfg.rmsprop_epsilon;
    opt.clip_norm = cfg.clip_norm;
    opt.validate()?;
    let mut schedule = cfg.lr_schedule();
    let mut lr_rng = master.substream(Stream::LearningRate);
    let loss_cfg = cfg.loss();

    let targets: Vec<PatchGrid<T>> = images.iter().map(|img| decompose(img, cfg.estimator.d)).collect::<Result<_>>()?;
    let dims: Vec<(usize, usize)> = images.iter().map(|i| (i.width(), i.height())).collect();

    let mut order: Vec<usize> = (0..images.len()).collect();
    master.substream(Stream::Split).shuffle(&mut order);
    let n_val = (images.len() as f64 * cfg.val_fraction).floor() as usize;
    let mut val_indices = order[..n_val].to_vec();
    let mut train_indices = order[n_val..].to_vec();
    val_indices.sort_unstable();
    train_indices.sort_unstable();
    if train_indices.is_empty() {
        return Err(Error::Param("validation split leaves no training images".into()));
    }

    let mut cache = CodeCache { map: HashMap::new() };
    let mut val_rng = master.split(Stream::Quality, 0);
    let val_quality: Vec<u32> = val_indices
        .iter()
        .map(|_| val_rng.range_inclusive(cfg.quality_min, cfg.quality_max))
        .collect();
    for (&i, &q) in val_indices.iter().zip(&val_quality) {
        cache.get(images, i, q)?;
    }

    let mut log = TrainingLog {
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let eta = schedule.rate_for_epoch(epoch);
        let mut shuffle = master.split(Stream::Shuffle, epoch as u64);
        let mut epoch_order = train_indices.clone();
        shuffle.shuffle(&mut epoch_order);
        let mut corner_of = vec![Corner::TopLeft; images.len()];
        for &i in &epoch_order {
            corner_of[i] = Corner::from_index(shuffle.below(4));
        }
        let mut q_rng = master.split(Stream::Quality, epoch as u64);
        let mut quality_of = vec![0u32; images.len()];
        for &i in &epoch_order {
            quality_of[i] = q_rng.range_inclusive(cfg.quality_min, cfg.quality_max);
            cache.get(images, i, quality_of[i])?;
        }

        let mut loss_sum = 0.0;
        let mut norm_sum = 0.0;
        let mut updates = 0;
        for lanes in make_batches(&epoch_order, &dims, cfg.batch) {
            let batch = TrainBatch::new(
                lanes.iter().map(|&i| &targets[i]).collect(),
                lanes.iter().map(|&i| &cache.map[&(i, quality_of[i])]).collect(),
                lanes.iter().map(|&i| corner_of[i]).collect(),
            )?;
            let stats = run_batch(&batch, &mut params, Some((&mut opt, eta)), &loss_cfg)?;
            loss_sum += stats.loss_sum;
            norm_sum += stats.norm_sum;
            updates += stats.episodes;
        }

        let mut val_sum = 0.0;
        let mut val_eps = 0;
        for (&i, &q) in val_indices.iter().zip(&val_quality) {
            let batch = TrainBatch::new(vec![&targets[i]], vec![&cache.map[&(i, q)]], vec![Corner::TopLeft])?;
            let stats = run_batch(&batch, &mut params, None, &loss_cfg)?;
            val_sum += stats.loss_sum;
            val_eps += stats.episodes;
        }

        schedule.next_lr(epoch, &mut lr_rng)?;
        let row = EpochLog {
            epoch,
            eta,
            train_loss: loss_sum / updates as f64,
            val_loss: if val_eps > 0 { val_sum / val_eps as f64 } else { f64::NAN },
            grad_norm_pre_clip: norm_sum / updates as f64,
            wall_time_s: started.elapsed().as_secs_f64(),
            updates,
        };
        log::info!(
            "epoch {epoch}: eta={:.3e} train={:.5} val={:.5} |g|={:.4}",
            row.eta,
            row.train_loss,
            row.val_loss,
            row.grad_norm_pre_clip
        );
        log.epochs.push(row);
    }
    Ok(TrainOutcome {
        params,
        log,
        train_indices,
        val_indices,
    })
}
