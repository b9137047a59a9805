//! Seeded synthetic scenarios: ground truth, noisy detections, point tracks,
//! simulated cursor paths and box annotations.
//!
//! Objects move along piecewise-linear trajectories inside a rectangular
//! arena. Detections are jittered copies of the ground truth with scores
//! that follow their overlap, plus uniformly scattered false positives.
//! Point tracks ride on the objects at fixed relative positions and die
//! with a per-frame probability. The simulated annotator trails the object
//! with a lag and a mean-reverting offset kept inside the box, with
//! occasional excursions outside.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::model::{
    box_iou, BBox, BoxAnnotation, Detection, DetectionId, GroundTruth, PathAnnotation, PathId, Point, PointTrack,
    TrackId,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_objects: usize,
    pub n_frames: u32,
    pub fps: f64,

    pub arena_width: f64,
    pub arena_height: f64,
    /// Object width range in pixels; height is width times the aspect.
    pub object_width_min: f64,
    pub object_width_max: f64,
    pub aspect_min: f64,
    pub aspect_max: f64,
    /// Relative size change between an object's first and last frame.
    pub size_drift: f64,
    /// Shortest object lifetime as a fraction of the video.
    pub min_lifetime_fraction: f64,
    /// Mean duration of one straight motion segment.
    pub waypoint_seconds: f64,
    /// Speed range in pixels per second.
    pub speed_min: f64,
    pub speed_max: f64,

    pub miss_rate: f64,
    /// Mean number of false positives per frame.
    pub fp_rate: f64,
    /// Center jitter standard deviation as a fraction of box size.
    pub center_jitter: f64,
    /// Size jitter standard deviation as a fraction of box size.
    pub size_jitter: f64,
    pub score_slope: f64,
    pub score_midpoint: f64,
    pub score_noise: f64,
    pub fp_score_mean: f64,
    pub fp_score_std: f64,

    pub points_per_object: usize,
    pub track_survival: f64,
    pub background_tracks: usize,
    /// Track position noise in pixels.
    pub track_noise: f64,

    pub cursor_lag_frames: u32,
    /// Stationary spread of the cursor offset, as a fraction of box size.
    pub cursor_noise: f64,
    /// Per-frame pull of the offset back toward the box center.
    pub cursor_reversion: f64,
    /// Probability per frame of starting an excursion outside the box.
    pub excursion_probability: f64,
    pub excursion_frames: u32,
    /// Path annotation time relative to real-time playback.
    pub playback_slowdown: f64,
    pub boxes_per_object: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_objects: 5,
            n_frames: 300,
            fps: 10.0,
            arena_width: 960.0,
            arena_height: 540.0,
            object_width_min: 30.0,
            object_width_max: 60.0,
            aspect_min: 1.8,
            aspect_max: 2.6,
            size_drift: 0.3,
            min_lifetime_fraction: 0.5,
            waypoint_seconds: 3.0,
            speed_min: 20.0,
            speed_max: 70.0,
            miss_rate: 0.15,
            fp_rate: 0.5,
            center_jitter: 0.05,
            size_jitter: 0.05,
            score_slope: 10.0,
            score_midpoint: 0.5,
            score_noise: 0.05,
            fp_score_mean: 0.3,
            fp_score_std: 0.15,
            points_per_object: 12,
            track_survival: 0.97,
            background_tracks: 60,
            track_noise: 0.5,
            cursor_lag_frames: 2,
            cursor_noise: 0.15,
            cursor_reversion: 0.1,
            excursion_probability: 0.005,
            excursion_frames: 5,
            playback_slowdown: 1.33,
            boxes_per_object: 3,
        }
    }
}

impl SynthConfig {
    /// No misses, no false positives, no jitter, a cursor on the box center.
    pub fn noiseless() -> Self {
        Self {
            miss_rate: 0.0,
            fp_rate: 0.0,
            center_jitter: 0.0,
            size_jitter: 0.0,
            score_noise: 0.0,
            track_survival: 1.0,
            background_tracks: 0,
            track_noise: 0.0,
            cursor_lag_frames: 0,
            cursor_noise: 0.0,
            excursion_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        f64::from(self.n_frames) / self.fps
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig::with_fps(self.fps)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidConfig(m));
        let probabilities = [
            ("miss_rate", self.miss_rate),
            ("track_survival", self.track_survival),
            ("excursion_probability", self.excursion_probability),
            ("cursor_reversion", self.cursor_reversion),
            ("min_lifetime_fraction", self.min_lifetime_fraction),
        ];
        for (name, p) in probabilities {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} must be a probability, got {p}"));
            }
        }
        let non_negative = [
            ("fp_rate", self.fp_rate),
            ("center_jitter", self.center_jitter),
            ("size_jitter", self.size_jitter),
            ("score_noise", self.score_noise),
            ("fp_score_std", self.fp_score_std),
            ("track_noise", self.track_noise),
            ("cursor_noise", self.cursor_noise),
            ("size_drift", self.size_drift),
            ("speed_min", self.speed_min),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return err(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.fps > 0.0 && self.waypoint_seconds > 0.0 && self.playback_slowdown > 0.0) {
            return err("fps, waypoint_seconds and playback_slowdown must be positive".into());
        }
        if self.n_frames < 2 {
            return err("n_frames must be at least 2".into());
        }
        if !(self.object_width_min > 0.0 && self.object_width_min <= self.object_width_max) {
            return err("object width range is empty".into());
        }
        if !(self.aspect_min > 0.0 && self.aspect_min <= self.aspect_max) {
            return err("aspect range is empty".into());
        }
        if self.speed_min > self.speed_max {
            return err("speed range is empty".into());
        }
        if self.size_drift >= 1.0 {
            return err("size_drift must be below 1".into());
        }
        let max_h = self.object_width_max * self.aspect_max * (1.0 + self.size_drift);
        if self.arena_width <= self.object_width_max * (1.0 + self.size_drift) || self.arena_height <= max_h {
            return err("arena is smaller than the largest object".into());
        }
        Ok(())
    }
}

/// A generated video-as-data.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SynthConfig,
    pub ground_truth: Vec<GroundTruth>,
    pub detections: Vec<Detection>,
    pub tracks: Vec<PointTrack>,
    pub paths: Vec<PathAnnotation>,
    pub boxes: Vec<BoxAnnotation>,
    /// Number of path samples generated during excursions.
    pub excursion_samples: usize,
}

/// `k` frames spread uniformly over `first..=last`: the middle frame for one,
/// both ends included for two or more, every frame once `k` covers the span.
pub fn uniform_frames(first: u32, last: u32, k: usize) -> Vec<u32> {
    let len = (last - first + 1) as usize;
    match k {
        0 => Vec::new(),
        1 => vec![first + (last - first) / 2],
        _ if k >= len => (first..=last).collect(),
        _ => {
            let step = f64::from(last - first) / (k - 1) as f64;
            let mut frames: Vec<u32> = (0..k).map(|i| first + (i as f64 * step).round() as u32).collect();
            frames.dedup();
            frames
        }
    }
}

/// Ground-truth boxes at `k` uniformly spread frames of every object.
pub fn uniform_boxes(ground_truth: &[GroundTruth], k: usize) -> Vec<BoxAnnotation> {
    let mut out = Vec::new();
    for gt in ground_truth {
        let (Some(first), Some(last)) = (gt.first_frame(), gt.last_frame()) else {
            continue;
        };
        for f in uniform_frames(first, last, k) {
            out.push(BoxAnnotation {
                path_id: gt.path_id,
                frame: f,
                bbox: gt.boxes[&f],
            });
        }
    }
    out
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("finite non-negative std")
}

struct ObjectMotion {
    first: u32,
    boxes: Vec<BBox>,
}

fn simulate_motion(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> ObjectMotion {
    let n = cfg.n_frames;
    let min_len = ((cfg.min_lifetime_fraction * f64::from(n)).ceil() as u32).clamp(2, n);
    let len = rng.random_range(min_len..=n);
    let first = rng.random_range(0..=n - len);

    let w0 = rng.random_range(cfg.object_width_min..=cfg.object_width_max);
    let aspect = rng.random_range(cfg.aspect_min..=cfg.aspect_max);
    let w1 = w0 * (1.0 + rng.random_range(-cfg.size_drift..=cfg.size_drift));

    let max_w = w0.max(w1);
    let max_h = max_w * aspect;
    let (lo_x, hi_x) = (max_w / 2.0, cfg.arena_width - max_w / 2.0);
    let (lo_y, hi_y) = (max_h / 2.0, cfg.arena_height - max_h / 2.0);
    let mut cx = rng.random_range(lo_x..=hi_x);
    let mut cy = rng.random_range(lo_y..=hi_y);

    let mean_segment = (cfg.waypoint_seconds * cfg.fps).max(1.0);
    let mut remaining = 0u32;
    let (mut vx, mut vy) = (0.0, 0.0);
    let mut boxes = Vec::with_capacity(len as usize);
    for k in 0..len {
        if remaining == 0 {
            remaining = (mean_segment * rng.random_range(0.5..1.5)).round().max(1.0) as u32;
            let speed = rng.random_range(cfg.speed_min..=cfg.speed_max) / cfg.fps;
            let heading = rng.random_range(0.0..std::f64::consts::TAU);
            vx = speed * heading.cos();
            vy = speed * heading.sin();
        }
        let t = if len > 1 {
            f64::from(k) / f64::from(len - 1)
        } else {
            0.0
        };
        let w = w0 + (w1 - w0) * t;
        let h = w * aspect;
        boxes.push(BBox::from_center(cx, cy, w, h).expect("positive size"));

        cx += vx;
        cy += vy;
        if cx < lo_x || cx > hi_x {
            vx = -vx;
            cx = cx.clamp(lo_x, hi_x);
        }
        if cy < lo_y || cy > hi_y {
            vy = -vy;
            cy = cy.clamp(lo_y, hi_y);
        }
        remaining -= 1;
    }
    ObjectMotion { first, boxes }
}

fn detection_score(cfg: &SynthConfig, iou: f64, rng: &mut ChaCha8Rng) -> f64 {
    let base = 1.0 / (1.0 + (-cfg.score_slope * (iou - cfg.score_midpoint)).exp());
    (base + normal(cfg.score_noise).sample(rng)).clamp(0.01, 0.99)
}

/// Simulated cursor trace for one object. Returns the samples and how many
/// were taken during excursions.
fn simulate_cursor(cfg: &SynthConfig, motion: &ObjectMotion, rng: &mut ChaCha8Rng) -> (Vec<Point>, usize) {
    let theta = cfg.cursor_reversion;
    // innovation scale that gives a stationary spread of `cursor_noise`
    let step = cfg.cursor_noise * (1.0 - (1.0 - theta).powi(2)).max(0.0).sqrt();
    let noise = normal(step);
    let (mut ox, mut oy) = (0.0f64, 0.0f64);
    let mut excursion_left = 0u32;
    let mut excursion_dir = (1.0, 0.0);
    let mut excursions = 0;
    let mut samples = Vec::with_capacity(motion.boxes.len());
    for (k, b) in motion.boxes.iter().enumerate() {
        ox = (1.0 - theta) * ox + noise.sample(rng);
        oy = (1.0 - theta) * oy + noise.sample(rng);
        ox = ox.clamp(-0.45, 0.45);
        oy = oy.clamp(-0.45, 0.45);
        if excursion_left == 0 && cfg.excursion_probability > 0.0 && rng.random_bool(cfg.excursion_probability) {
            excursion_left = cfg.excursion_frames;
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            excursion_dir = (a.cos(), a.sin());
        }
        let c = b.center();
        if excursion_left > 0 {
            excursion_left -= 1;
            excursions += 1;
            // push past the nearest edge along the excursion direction
            let reach = 0.6 / excursion_dir.0.abs().max(excursion_dir.1.abs());
            samples.push(Point::new(
                c.x + excursion_dir.0 * reach * b.w,
                c.y + excursion_dir.1 * reach * b.h,
            ));
            continue;
        }
        let lagged = motion.boxes[k.saturating_sub(cfg.cursor_lag_frames as usize)];
        let target = lagged.center();
        let (mx, my) = (0.02 * b.w, 0.02 * b.h);
        samples.push(Point::new(
            (target.x + ox * b.w).clamp(b.x + mx, b.x + b.w - mx),
            (target.y + oy * b.h).clamp(b.y + my, b.y + b.h - my),
        ));
    }
    (samples, excursions)
}

/// Generates a full scenario. Identical configs give identical scenarios.
pub fn generate_scenario(cfg: &SynthConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let motions: Vec<ObjectMotion> = (0..cfg.n_objects).map(|_| simulate_motion(cfg, &mut rng)).collect();
    let ground_truth: Vec<GroundTruth> = motions
        .iter()
        .enumerate()
        .map(|(k, m)| GroundTruth {
            path_id: PathId(k as u64),
            boxes: m
                .boxes
                .iter()
                .enumerate()
                .map(|(i, b)| (m.first + i as u32, *b))
                .collect(),
        })
        .collect();

    // detections, frame-major
    let jitter_c = normal(cfg.center_jitter);
    let jitter_s = normal(cfg.size_jitter);
    let fp_score = Normal::new(cfg.fp_score_mean, cfg.fp_score_std).expect("valid fp score model");
    let fp_count = (cfg.fp_rate > 0.0).then(|| Poisson::new(cfg.fp_rate).expect("positive rate"));
    let mut detections = Vec::new();
    let mut next_id = 0u64;
    for f in 0..cfg.n_frames {
        for gt in &ground_truth {
            let Some(truth) = gt.boxes.get(&f) else { continue };
            if cfg.miss_rate > 0.0 && rng.random_bool(cfg.miss_rate) {
                continue;
            }
            let c = truth.center();
            let w = (truth.w * (1.0 + jitter_s.sample(&mut rng))).max(1.0);
            let h = (truth.h * (1.0 + jitter_s.sample(&mut rng))).max(1.0);
            let cx = c.x + truth.w * jitter_c.sample(&mut rng);
            let cy = c.y + truth.h * jitter_c.sample(&mut rng);
            let bbox = if w == truth.w && h == truth.h && cx == c.x && cy == c.y {
                *truth
            } else {
                BBox::from_center(cx, cy, w, h)?
            };
            let score = detection_score(cfg, box_iou(&bbox, truth), &mut rng);
            detections.push(Detection::new(DetectionId(next_id), f, bbox, score)?);
            next_id += 1;
        }
        if let Some(dist) = &fp_count {
            let count = dist.sample(&mut rng) as usize;
            for _ in 0..count {
                let w = rng.random_range(cfg.object_width_min..=cfg.object_width_max);
                let h = w * rng.random_range(cfg.aspect_min..=cfg.aspect_max);
                let x = rng.random_range(0.0..=(cfg.arena_width - w).max(0.0));
                let y = rng.random_range(0.0..=(cfg.arena_height - h).max(0.0));
                let score = fp_score.sample(&mut rng).clamp(0.01, 0.99);
                detections.push(Detection::new(DetectionId(next_id), f, BBox::new(x, y, w, h)?, score)?);
                next_id += 1;
            }
        }
    }

    // point tracks riding on objects
    let track_jitter = normal(cfg.track_noise);
    let mut tracks = Vec::new();
    let mut next_track = 0u64;
    for m in &motions {
        for _ in 0..cfg.points_per_object {
            let mut k = 0usize;
            while k < m.boxes.len() {
                let (u, v) = (rng.random_range(0.15..0.85), rng.random_range(0.15..0.85));
                let start = k;
                let mut points = Vec::new();
                loop {
                    let b = &m.boxes[k];
                    points.push(Point::new(
                        b.x + u * b.w + track_jitter.sample(&mut rng),
                        b.y + v * b.h + track_jitter.sample(&mut rng),
                    ));
                    k += 1;
                    if k >= m.boxes.len() || (cfg.track_survival < 1.0 && !rng.random_bool(cfg.track_survival)) {
                        break;
                    }
                }
                tracks.push(PointTrack::new(TrackId(next_track), m.first + start as u32, points)?);
                next_track += 1;
            }
        }
    }
    for _ in 0..cfg.background_tracks {
        let start = rng.random_range(0..cfg.n_frames);
        let len = rng.random_range(1..=cfg.n_frames - start);
        let (x, y) = (
            rng.random_range(0.0..cfg.arena_width),
            rng.random_range(0.0..cfg.arena_height),
        );
        let points = (0..len)
            .map(|_| Point::new(x + track_jitter.sample(&mut rng), y + track_jitter.sample(&mut rng)))
            .collect();
        tracks.push(PointTrack::new(TrackId(next_track), start, points)?);
        next_track += 1;
    }

    // annotator
    let mut paths = Vec::with_capacity(motions.len());
    let mut excursion_samples = 0;
    for (k, m) in motions.iter().enumerate() {
        let (samples, excursions) = simulate_cursor(cfg, m, &mut rng);
        excursion_samples += excursions;
        paths.push(PathAnnotation::new(PathId(k as u64), m.first, samples)?);
    }
    let boxes = uniform_boxes(&ground_truth, cfg.boxes_per_object);

    Ok(Scenario {
        config: cfg.clone(),
        ground_truth,
        detections,
        tracks,
        paths,
        boxes,
        excursion_samples,
    })
}
