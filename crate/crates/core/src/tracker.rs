//! Tracking by detection on learned patch features.
//!
//! Per frame: sample candidate boxes on a disc around the previous estimate,
//! score each with the linear classifier on its pyramid-pooled codes, keep
//! the best, then collect labeled samples around it for the reservoir.
//! The classifier is refit periodically; the dictionary is refined with
//! online dictionary learning when the appearance trigger fires (or every
//! frame, or never, depending on the update mode).

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dictlearn::{self, basis_weights, init_dictionary, Dictionary, InitMethod, OdlState, UpdatePolicy};
use crate::encode::{CodeMatrix, EncoderMethod, Encoder, EncoderSpec};
use crate::error::{Error, Result};
use crate::lasso::default_lambda;
use crate::lssvm::{self, BiasMode, LabeledSample, LinearModel, Reservoir};
use crate::metrics::{vor, TrackRecord};
use crate::patchgrid::{extract_normalized, normalize_column, read_patch, PatchGridSpec};
use crate::pyrpool::{PoolLayout, PooledFeature, PyramidSpec};
use crate::seqio::{BoundingBox, GrayFrame, Sequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DictUpdateMode {
    Off,
    #[default]
    Triggered,
    Always,
}

impl std::str::FromStr for DictUpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "triggered" => Ok(Self::Triggered),
            "always" => Ok(Self::Always),
            other => Err(Error::InvalidParameter(format!("unknown dictionary update mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for DictUpdateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Off => "off",
            Self::Triggered => "triggered",
            Self::Always => "always",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub search_radius_track: i32,
    pub search_radius_train: i32,
    pub candidate_stride: i32,
    pub retrain_every: usize,
    pub negatives_per_frame: usize,
    pub neg_vor_max: f64,
    pub jitter_positives: usize,
    pub dict_update_mode: DictUpdateMode,
    /// Patch grid; picked from the target size when `None`.
    pub grid: Option<PatchGridSpec>,
    pub encoder: EncoderSpec,
    pub pyramid: PyramidSpec,
    pub gamma: f64,
    pub bias: BiasMode,
    pub seed: u64,
    pub dict_size: usize,
    pub dict_method: InitMethod,
    pub dict_epochs: usize,
    /// ODL λ; `1.2/√m` when `None`.
    pub dict_lambda: Option<f64>,
    pub update_batch: usize,
    pub overlap_threshold: f64,
    pub head_keep: usize,
    pub tail_keep: usize,
    /// Use the true frame-2 box (when known) instead of detecting it.
    pub gt_frame2: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            search_radius_track: 30,
            search_radius_train: 60,
            candidate_stride: 2,
            retrain_every: 4,
            negatives_per_frame: 40,
            neg_vor_max: 0.3,
            jitter_positives: 4,
            dict_update_mode: DictUpdateMode::Triggered,
            grid: None,
            encoder: EncoderSpec::default(),
            pyramid: PyramidSpec::default(),
            gamma: lssvm::DEFAULT_GAMMA,
            bias: BiasMode::Corrected,
            seed: 0,
            dict_size: 100,
            dict_method: InitMethod::Odl,
            dict_epochs: 5,
            dict_lambda: None,
            update_batch: dictlearn::DEFAULT_BATCH,
            overlap_threshold: dictlearn::DEFAULT_OVERLAP_THRESHOLD,
            head_keep: lssvm::HEAD_KEEP,
            tail_keep: lssvm::TAIL_KEEP,
            gt_frame2: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.search_radius_track <= 0 || self.search_radius_train <= 0 {
            return bad("search radii must be > 0");
        }
        if self.candidate_stride < 1 {
            return bad("candidate stride must be ≥ 1");
        }
        if self.retrain_every < 1 {
            return bad("retrain_every must be ≥ 1");
        }
        if !(0.0..1.0).contains(&self.neg_vor_max) {
            return bad("neg_vor_max must be in [0, 1)");
        }
        if self.negatives_per_frame == 0 {
            return bad("negatives_per_frame must be ≥ 1");
        }
        if self.dict_size == 0 || self.update_batch == 0 {
            return bad("dictionary size and update batch must be ≥ 1");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma must be > 0");
        }
        self.encoder.validate(self.dict_size)
    }

    pub fn grid_for(&self, target: &BoundingBox) -> PatchGridSpec {
        self.grid.unwrap_or_else(|| PatchGridSpec::for_target(target.w, target.h))
    }
}

/// Boxes of the same size whose offsets lie on the stride grid inside the
/// disc `dx² + dy² ≤ radius²`, ordered by `dy` then `dx`.
pub fn sample_candidates(center_box: &BoundingBox, radius: i32, stride: i32) -> Vec<BoundingBox> {
    let stride = stride.max(1);
    let reach = radius.max(0) / stride;
    let r2 = radius as i64 * radius as i64;
    let mut out = Vec::new();
    for i in -reach..=reach {
        for j in -reach..=reach {
            let (dy, dx) = (i * stride, j * stride);
            if (dx as i64).pow(2) + (dy as i64).pow(2) <= r2 {
                out.push(center_box.translate(dx, dy));
            }
        }
    }
    out
}

/// Positive offsets: the `count` nearest nonzero lattice shifts.
fn jitter_offsets(count: usize) -> Vec<(i32, i32)> {
    let mut radius = 1;
    loop {
        let mut shifts: Vec<(i32, i32)> = sample_candidates(&BoundingBox { x: 0, y: 0, w: 1, h: 1 }, radius, 1)
            .into_iter()
            .map(|b| (b.x, b.y))
            .filter(|&o| o != (0, 0))
            .collect();
        if shifts.len() >= count {
            shifts.sort_by_key(|&(x, y)| x * x + y * y);
            shifts.truncate(count);
            return shifts;
        }
        radius += 1;
    }
}

fn grid_admits(b: &BoundingBox, frame: &GrayFrame, grid: &PatchGridSpec) -> bool {
    b.clip(frame.width(), frame.height())
        .is_some_and(|r| r.w as usize >= grid.patch_size && r.h as usize >= grid.patch_size)
}

/// Positive and negative boxes for one frame around the estimate.
pub fn training_boxes(
    frame: &GrayFrame,
    est_box: &BoundingBox,
    cfg: &TrackerConfig,
    grid: &PatchGridSpec,
    rng: &mut impl rand::Rng,
) -> Result<Vec<(BoundingBox, f64)>> {
    if !grid_admits(est_box, frame, grid) {
        return Err(Error::RegionTooSmall {
            w: est_box.w as i64,
            h: est_box.h as i64,
            patch: grid.patch_size,
        });
    }
    let mut out = vec![(*est_box, 1.0)];
    for (dx, dy) in jitter_offsets(cfg.jitter_positives) {
        let b = est_box.translate(dx, dy);
        if grid_admits(&b, frame, grid) {
            out.push((b, 1.0));
        }
    }
    let pool: Vec<BoundingBox> = sample_candidates(est_box, cfg.search_radius_train, cfg.candidate_stride)
        .into_iter()
        .filter(|b| vor(b, est_box) < cfg.neg_vor_max && grid_admits(b, frame, grid))
        .collect();
    if pool.is_empty() {
        return Err(Error::NoNegatives(est_box.to_string()));
    }
    let take = cfg.negatives_per_frame.min(pool.len());
    let mut picks = rand::seq::index::sample(rng, pool.len(), take).into_vec();
    picks.sort_unstable();
    out.extend(picks.into_iter().map(|i| (pool[i], -1.0)));
    Ok(out)
}

const MISSING: u32 = u32::MAX;

/// Codes of every patch touched in one frame, keyed by absolute position.
/// Overlapping candidate boxes share patch encodes.
pub struct FrameCodes<'a> {
    frame: &'a GrayFrame,
    encoder: Encoder<'a>,
    grid: PatchGridSpec,
    pyramid: &'a PyramidSpec,
    st_threshold: Option<f64>,
    n: usize,
    index: Vec<u32>,
    codes: Vec<f64>,
    layouts: HashMap<(usize, usize), PoolLayout>,
}

impl<'a> FrameCodes<'a> {
    /// For ST, the threshold is fixed from the patches of `threshold_window`.
    pub fn new(
        frame: &'a GrayFrame,
        dict: &'a Dictionary,
        spec: EncoderSpec,
        grid: PatchGridSpec,
        pyramid: &'a PyramidSpec,
        threshold_window: &BoundingBox,
    ) -> Result<Self> {
        let encoder = Encoder::new(dict, spec)?;
        let st_threshold = if spec.method == EncoderMethod::SoftThreshold {
            let patches = extract_normalized(frame, threshold_window, &grid)?;
            Some(encoder.st_threshold(&patches.data))
        } else {
            None
        };
        Ok(Self {
            frame,
            encoder,
            grid,
            pyramid,
            st_threshold,
            n: dict.size(),
            index: vec![MISSING; frame.width() * frame.height()],
            codes: Vec::new(),
            layouts: HashMap::new(),
        })
    }

    pub fn st_threshold(&self) -> Option<f64> {
        self.st_threshold
    }

    /// Clipped region and absolute top-left patch positions of its grid.
    fn grid_of(&self, b: &BoundingBox) -> Option<(BoundingBox, Vec<(usize, usize)>)> {
        let r = b.clip(self.frame.width(), self.frame.height())?;
        let rows = self.grid.count_along(r.h as usize);
        let cols = self.grid.count_along(r.w as usize);
        if rows == 0 || cols == 0 {
            return None;
        }
        let q = self.grid.stride;
        let mut pos = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                pos.push((r.x as usize + j * q, r.y as usize + i * q));
            }
        }
        Some((r, pos))
    }

    fn ensure(&mut self, positions: impl Iterator<Item = (usize, usize)>) -> Result<()> {
        let w = self.frame.width();
        let mut missing: Vec<(usize, usize)> = Vec::new();
        for (x, y) in positions {
            let slot = &mut self.index[y * w + x];
            if *slot == MISSING {
                // mark as pending so duplicates are added once
                *slot = MISSING - 1;
                missing.push((x, y));
            }
        }
        if missing.is_empty() {
            return Ok(());
        }
        let p = self.grid.patch_size;
        let mut data = DMatrix::zeros(p * p, missing.len());
        for (k, &(x, y)) in missing.iter().enumerate() {
            let col = data.column_mut(k);
            let slice = col.data.into_slice_mut();
            read_patch(self.frame, x, y, p, slice);
            normalize_column(slice);
        }
        let encoded = self.encoder.encode_matrix_with_threshold(&data, self.st_threshold)?;
        let base = self.codes.len() / self.n;
        self.codes.extend_from_slice(encoded.as_slice());
        for (k, &(x, y)) in missing.iter().enumerate() {
            self.index[y * w + x] = (base + k) as u32;
        }
        Ok(())
    }

    fn code_at(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index[y * self.frame.width() + x] as usize;
        &self.codes[i * self.n..(i + 1) * self.n]
    }

    /// Pooled features of `boxes`; `None` where a box admits no patch grid.
    pub fn features(&mut self, boxes: &[BoundingBox]) -> Result<Vec<Option<PooledFeature>>> {
        let grids: Vec<_> = boxes.iter().map(|b| self.grid_of(b)).collect();
        self.ensure(grids.iter().flatten().flat_map(|(_, pos)| pos.iter().copied()))?;
        let mut out = Vec::with_capacity(boxes.len());
        for g in &grids {
            let Some((r, pos)) = g else {
                out.push(None);
                continue;
            };
            let key = (r.w as usize, r.h as usize);
            if !self.layouts.contains_key(&key) {
                let rel: Vec<(usize, usize)> = pos
                    .iter()
                    .map(|&(x, y)| (y - r.y as usize, x - r.x as usize))
                    .collect();
                let layout = PoolLayout::new(&rel, key.0, key.1, self.grid.patch_size, self.pyramid)?;
                self.layouts.insert(key, layout);
            }
            let layout = &self.layouts[&key];
            out.push(Some(layout.pool(self.n, |k| self.code_at(pos[k].0, pos[k].1))));
        }
        Ok(out)
    }

    pub fn feature(&mut self, b: &BoundingBox) -> Result<Option<PooledFeature>> {
        Ok(self.features(std::slice::from_ref(b))?.pop().flatten())
    }

    /// Code matrix of one box, columns in grid order.
    pub fn code_matrix(&mut self, b: &BoundingBox) -> Result<Option<CodeMatrix>> {
        let Some((r, pos)) = self.grid_of(b) else {
            return Ok(None);
        };
        self.ensure(pos.iter().copied())?;
        let mut data = DMatrix::zeros(self.n, pos.len());
        for (k, &(x, y)) in pos.iter().enumerate() {
            data.column_mut(k).copy_from_slice(self.code_at(x, y));
        }
        Ok(Some(CodeMatrix {
            data,
            positions: pos.iter().map(|&(x, y)| (y - r.y as usize, x - r.x as usize)).collect(),
            region: r,
        }))
    }
}

/// Best candidate by score; ties go to the smaller displacement, then to
/// the earlier candidate.
pub fn select_best(prev: &BoundingBox, scored: &[(BoundingBox, f64)]) -> Option<(BoundingBox, f64)> {
    let disp = |b: &BoundingBox| {
        let (dx, dy) = ((b.x - prev.x) as i64, (b.y - prev.y) as i64);
        dx * dx + dy * dy
    };
    let mut best: Option<(BoundingBox, f64)> = None;
    for &(b, s) in scored {
        best = match best {
            None => Some((b, s)),
            Some((bb, bs)) if s > bs || (s == bs && disp(&b) < disp(&bb)) => Some((b, s)),
            keep => keep,
        };
    }
    best
}

/// Scores every candidate around `prev` and returns the argmax.
pub fn detect(
    codes: &mut FrameCodes<'_>,
    model: &LinearModel,
    prev: &BoundingBox,
    radius: i32,
    stride: i32,
) -> Result<(BoundingBox, f64)> {
    let candidates = sample_candidates(prev, radius, stride);
    let feats = codes.features(&candidates)?;
    let mut scored = Vec::with_capacity(candidates.len());
    for (b, f) in candidates.iter().zip(feats) {
        if let Some(f) = f {
            scored.push((*b, model.predict(&f)?));
        }
    }
    select_best(prev, &scored).ok_or(Error::NoValidCandidate)
}

#[derive(Debug, Clone)]
struct Snapshot {
    frame: Arc<GrayFrame>,
    threshold_window: BoundingBox,
    boxes: Vec<(BoundingBox, f64)>,
}

/// Outcome of one tracked frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameResult {
    pub bbox: BoundingBox,
    pub score: f64,
    pub dictionary_updated: bool,
    pub retrained: bool,
}

/// Single-target tracker state. Box size is fixed at initialization.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    grid: PatchGridSpec,
    lambda: f64,
    dict: Dictionary,
    odl: OdlState,
    policy: UpdatePolicy,
    model: LinearModel,
    reservoir: Reservoir,
    snapshots: BTreeMap<usize, Snapshot>,
    current: BoundingBox,
    frame_index: usize,
    rng: ChaCha8Rng,
    updates: usize,
    /// Reservoir features predate the current dictionary.
    stale: bool,
}

impl Tracker {
    /// Learns the initial dictionary from frame 1 and fits a provisional
    /// classifier on frame-1 samples.
    pub fn new(first: &GrayFrame, init_box: BoundingBox, cfg: TrackerConfig) -> Result<Self> {
        Self::with_dictionary(first, init_box, cfg, None)
    }

    pub fn with_dictionary(
        first: &GrayFrame,
        init_box: BoundingBox,
        cfg: TrackerConfig,
        dictionary: Option<Dictionary>,
    ) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid_for(&init_box);
        if !grid_admits(&init_box, first, &grid) {
            return Err(Error::RegionTooSmall {
                w: init_box.w as i64,
                h: init_box.h as i64,
                patch: grid.patch_size,
            });
        }
        let lambda = cfg.dict_lambda.unwrap_or_else(|| default_lambda(grid.dim()));
        let (dict, mut odl) = match dictionary {
            Some(d) => {
                if d.dim() != grid.dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "dictionary dimension {} vs patch dimension {}",
                        d.dim(),
                        grid.dim()
                    )));
                }
                let (m, n) = (d.dim(), d.size());
                (d, OdlState::zeros(m, n, cfg.update_batch))
            }
            None => {
                let window = init_box.expand(cfg.search_radius_train);
                let mut patches = extract_normalized(first, &window, &grid)?;
                if patches.len() < cfg.dict_size {
                    let whole = BoundingBox::new(0, 0, first.width() as i32, first.height() as i32)?;
                    patches = extract_normalized(first, &whole, &grid)?;
                }
                init_dictionary(cfg.dict_method, &patches.data, cfg.dict_size, cfg.dict_epochs, lambda, cfg.seed)?
            }
        };
        odl.eta = cfg.update_batch;
        cfg.encoder.validate(dict.size())?;
        let policy = UpdatePolicy::new(cfg.overlap_threshold)?;
        let reservoir = Reservoir::new(cfg.head_keep, cfg.tail_keep);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
        let feature_dim = cfg.pyramid.feature_dim(dict.size());
        let mut tracker = Self {
            grid,
            lambda,
            dict,
            odl,
            policy,
            model: LinearModel {
                w: nalgebra::DVector::zeros(feature_dim),
                b: 0.0,
                gamma: cfg.gamma,
            },
            reservoir,
            snapshots: BTreeMap::new(),
            current: init_box,
            frame_index: 0,
            rng,
            updates: 0,
            stale: false,
            cfg,
        };
        tracker.observe_frame(first, init_box, init_box)?;
        tracker.retrain()?;
        Ok(tracker)
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn grid(&self) -> PatchGridSpec {
        self.grid
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn odl_state(&self) -> &OdlState {
        &self.odl
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    pub fn current_box(&self) -> BoundingBox {
        self.current
    }

    /// Frames processed so far (1 after construction).
    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    /// Dictionary updates performed after initialization.
    pub fn update_count(&self) -> usize {
        self.updates
    }

    fn frame_codes<'a>(&'a self, frame: &'a GrayFrame, threshold_window: &BoundingBox) -> Result<FrameCodes<'a>> {
        FrameCodes::new(frame, &self.dict, self.cfg.encoder, self.grid, &self.cfg.pyramid, threshold_window)
    }

    /// Feature of `b` in `frame` under the current dictionary, with the ST
    /// threshold taken from the training window around `reference`.
    pub fn feature_for(&self, frame: &GrayFrame, reference: &BoundingBox, b: &BoundingBox) -> Result<Option<PooledFeature>> {
        let window = reference.expand(self.cfg.search_radius_train);
        self.frame_codes(frame, &window)?.feature(b)
    }

    /// Records training samples of one frame around `est` and updates the
    /// trigger state. Returns the trigger decision.
    fn observe_frame(&mut self, frame: &GrayFrame, reference: BoundingBox, est: BoundingBox) -> Result<bool> {
        self.frame_index += 1;
        let window = reference.expand(self.cfg.search_radius_train);
        let boxes = training_boxes(frame, &est, &self.cfg, &self.grid, &mut self.rng)?;
        let (samples, weights) = {
            let mut codes = self.frame_codes(frame, &window)?;
            let samples = labeled_features(&mut codes, &boxes)?;
            let weights = match self.cfg.dict_update_mode {
                DictUpdateMode::Triggered => codes.code_matrix(&est)?.map(|c| basis_weights(&c.data)),
                _ => None,
            };
            (samples, weights)
        };
        self.reservoir.push(self.frame_index, samples)?;
        self.snapshots.insert(
            self.frame_index,
            Snapshot {
                frame: Arc::new(frame.clone()),
                threshold_window: window,
                boxes,
            },
        );
        let kept = self.reservoir.frames();
        self.snapshots.retain(|k, _| kept.binary_search(k).is_ok());
        let fired = match weights {
            Some(w) => self.policy.should_update(&w),
            None => false,
        };
        Ok(fired)
    }

    fn retrain(&mut self) -> Result<()> {
        let (x, y) = self.reservoir.training_set()?;
        self.model = lssvm::train_matrix(&x, &y, self.cfg.gamma, self.cfg.bias)?;
        Ok(())
    }

    /// One ODL step on a mini-batch drawn from the training window around
    /// `est`. Reservoir features go stale until the next refit.
    fn update_dictionary(&mut self, frame: &GrayFrame, est: &BoundingBox) -> Result<()> {
        let window = est.expand(self.cfg.search_radius_train);
        let patches = extract_normalized(frame, &window, &self.grid)?;
        let take = self.cfg.update_batch.min(patches.len());
        let mut cols = rand::seq::index::sample(&mut self.rng, patches.len(), take).into_vec();
        cols.sort_unstable();
        let batch = patches.data.select_columns(&cols);
        dictlearn::odl_step(&mut self.dict, &mut self.odl, &batch, self.lambda)?;
        self.updates += 1;
        self.stale = true;
        Ok(())
    }

    /// Re-encodes every retained reservoir frame under the current dictionary.
    fn reencode_reservoir(&mut self) -> Result<()> {
        let frames: Vec<(usize, Snapshot)> = self.snapshots.iter().map(|(k, s)| (*k, s.clone())).collect();
        for (index, snap) in frames {
            let samples = {
                let mut codes = self.frame_codes(&snap.frame, &snap.threshold_window)?;
                labeled_features(&mut codes, &snap.boxes)?
            };
            self.reservoir.replace(index, samples);
        }
        self.stale = false;
        Ok(())
    }

    /// Tracks one more frame.
    pub fn step(&mut self, frame: &GrayFrame) -> Result<FrameResult> {
        self.step_with_label(frame, None)
    }

    /// Tracks one more frame; a given `label` replaces detection (its center
    /// is kept, the tracker's box size is not changed).
    pub fn step_with_label(&mut self, frame: &GrayFrame, label: Option<BoundingBox>) -> Result<FrameResult> {
        let prev = self.current;
        let t = self.frame_index + 1;
        let (bbox, score) = {
            let window = prev.expand(self.cfg.search_radius_train);
            let mut codes = self.frame_codes(frame, &window)?;
            match label {
                Some(g) => {
                    let b = BoundingBox {
                        x: g.x + (g.w - prev.w) / 2,
                        y: g.y + (g.h - prev.h) / 2,
                        w: prev.w,
                        h: prev.h,
                    };
                    let f = codes.feature(&b)?.ok_or(Error::NoValidCandidate)?;
                    (b, self.model.predict(&f)?)
                }
                None => detect(
                    &mut codes,
                    &self.model,
                    &prev,
                    self.cfg.search_radius_track,
                    self.cfg.candidate_stride,
                )?,
            }
        };
        self.current = bbox;
        let fired = self.observe_frame(frame, prev, bbox)?;
        let update = match self.cfg.dict_update_mode {
            DictUpdateMode::Off => false,
            DictUpdateMode::Always => true,
            DictUpdateMode::Triggered => fired && t >= 3,
        };
        if update {
            self.update_dictionary(frame, &bbox)?;
            if self.cfg.dict_update_mode == DictUpdateMode::Triggered {
                // compare the next frame against this one under the new bases
                let window = prev.expand(self.cfg.search_radius_train);
                let weights = self.frame_codes(frame, &window)?.code_matrix(&bbox)?.map(|c| basis_weights(&c.data));
                if let Some(w) = weights {
                    self.policy.observe(&w);
                }
            }
        }
        let retrain = t == 2 || (t > 2 && (t - 2).is_multiple_of(self.cfg.retrain_every));
        if retrain {
            if self.stale {
                self.reencode_reservoir()?;
            }
            self.retrain()?;
        }
        log::debug!("frame {t}: {bbox} score {score:.4} update {update} retrain {retrain}");
        Ok(FrameResult {
            bbox,
            score,
            dictionary_updated: update,
            retrained: retrain,
        })
    }
}

fn labeled_features(codes: &mut FrameCodes<'_>, boxes: &[(BoundingBox, f64)]) -> Result<Vec<LabeledSample>> {
    let just_boxes: Vec<BoundingBox> = boxes.iter().map(|b| b.0).collect();
    let feats = codes.features(&just_boxes)?;
    Ok(feats
        .into_iter()
        .zip(boxes)
        .filter_map(|(f, (_, y))| f.map(|f| (f, *y)))
        .collect())
}

/// Runs the tracker over a whole sequence. Frame 1 reports `init_box`.
pub fn track_sequence(seq: &Sequence, init_box: BoundingBox, cfg: &TrackerConfig) -> Result<Vec<TrackRecord>> {
    track_sequence_with(seq, init_box, cfg, None).map(|(records, _)| records)
}

/// As [`track_sequence`], optionally starting from a given dictionary, and
/// returning the final tracker state.
pub fn track_sequence_with(
    seq: &Sequence,
    init_box: BoundingBox,
    cfg: &TrackerConfig,
    dictionary: Option<Dictionary>,
) -> Result<(Vec<TrackRecord>, Tracker)> {
    let first = seq
        .frames
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty sequence".into()))?;
    let mut tracker = Tracker::with_dictionary(first, init_box, cfg.clone(), dictionary).map_err(|e| e.at_frame(1))?;
    let first_score = tracker
        .feature_for(first, &init_box, &init_box)
        .and_then(|f| tracker.model().predict(&f.ok_or(Error::NoValidCandidate)?))
        .map_err(|e| e.at_frame(1))?;
    let mut records = vec![TrackRecord {
        frame: 1,
        bbox: init_box,
        score: first_score,
    }];
    for (i, frame) in seq.frames.iter().enumerate().skip(1) {
        let label = match (&seq.truth, cfg.gt_frame2 && i == 1) {
            (Some(truth), true) => Some(truth[1]),
            _ => None,
        };
        let r = tracker.step_with_label(frame, label).map_err(|e| e.at_frame(i + 1))?;
        records.push(TrackRecord {
            frame: i + 1,
            bbox: r.bbox,
            score: r.score,
        });
    }
    Ok((records, tracker))
}
