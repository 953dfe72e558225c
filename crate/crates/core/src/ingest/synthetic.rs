use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::model::{normalize_angle, AgentId, GroupAnnotation, Trajectory, TrajectoryPoint};

const HEADING_PERIOD_MS: i64 = 5_000;
const MAX_TURN_RAD: f64 = PI / 3.0;
const FACE_NOISE_RAD: f64 = 0.15;
const SPEED_RANGE_MM_S: (f64, f64) = (900.0, 1500.0);

/// Parameters of the synthetic crowd generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_flocks: usize,
    /// `(flock size, relative weight)`; sizes must be at least 2.
    pub flock_size_distribution: Vec<(usize, f64)>,
    pub n_singletons: usize,
    pub duration_ms: i64,
    pub sample_period_ms: i64,
    pub cohesion_radius_mm: f64,
    pub noise_std_mm: f64,
    pub rng_seed: u64,
    /// Entity start times are drawn uniformly from `[0, start_spread_ms)`.
    pub start_spread_ms: i64,
    /// Side of the square walking area.
    pub arena_mm: f64,
    pub start_time_ms: i64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_flocks: 40,
            flock_size_distribution: vec![(2, 1.0)],
            n_singletons: 80,
            duration_ms: 240_000,
            sample_period_ms: 500,
            cohesion_radius_mm: 600.0,
            noise_std_mm: 40.0,
            rng_seed: 7,
            start_spread_ms: 120_000,
            arena_mm: 60_000.0,
            start_time_ms: 1_368_000_000_000,
        }
    }
}

impl SyntheticConfig {
    // negated comparisons so that NaN fails them
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.sample_period_ms <= 0 {
            return Err(Error::invalid_config("sample_period_ms must be positive"));
        }
        if self.duration_ms < 0 || self.start_spread_ms < 0 {
            return Err(Error::invalid_config("durations must be non-negative"));
        }
        if self.start_spread_ms > self.duration_ms {
            return Err(Error::invalid_config("start_spread_ms exceeds duration_ms"));
        }
        if self.n_flocks > 0 {
            let total: f64 = self.flock_size_distribution.iter().map(|(_, w)| w).sum();
            if !(total > 0.0) || self.flock_size_distribution.iter().any(|(_, w)| *w < 0.0) {
                return Err(Error::invalid_config(
                    "flock size weights must be non-negative and sum to a positive value",
                ));
            }
            if self.flock_size_distribution.iter().any(|(s, _)| *s < 2) {
                return Err(Error::invalid_config("flock sizes must be at least 2"));
            }
        }
        if !(self.cohesion_radius_mm > 0.0) || !(self.noise_std_mm >= 0.0) || !(self.arena_mm > 0.0) {
            return Err(Error::invalid_config(
                "cohesion radius and arena must be positive, noise non-negative",
            ));
        }
        Ok(())
    }

    /// Parses `key = value` lines; unknown keys are an error, missing keys
    /// keep their defaults. `flock_size_distribution` is written as
    /// `2:0.6, 3:0.4`.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid_config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::invalid_config(format!("{key}: cannot parse '{v}'")))
        }
        match key {
            "n_flocks" => self.n_flocks = num(key, value)?,
            "n_singletons" => self.n_singletons = num(key, value)?,
            "duration_ms" => self.duration_ms = num(key, value)?,
            "sample_period_ms" => self.sample_period_ms = num(key, value)?,
            "cohesion_radius_mm" => self.cohesion_radius_mm = num(key, value)?,
            "noise_std_mm" => self.noise_std_mm = num(key, value)?,
            "rng_seed" | "seed" => self.rng_seed = num(key, value)?,
            "start_spread_ms" => self.start_spread_ms = num(key, value)?,
            "arena_mm" => self.arena_mm = num(key, value)?,
            "start_time_ms" => self.start_time_ms = num(key, value)?,
            "flock_size_distribution" => {
                self.flock_size_distribution = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|entry| {
                        let (s, w) = entry.split_once(':').ok_or_else(|| {
                            Error::invalid_config(format!("flock_size_distribution entry '{entry}'"))
                        })?;
                        Ok((num(key, s.trim())?, num(key, w.trim())?))
                    })
                    .collect::<Result<_>>()?;
            }
            other => return Err(Error::invalid_config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let dist: Vec<String> = self
            .flock_size_distribution
            .iter()
            .map(|(size, w)| format!("{size}:{w}"))
            .collect();
        let _ = writeln!(s, "n_flocks = {}", self.n_flocks);
        let _ = writeln!(s, "flock_size_distribution = {}", dist.join(","));
        let _ = writeln!(s, "n_singletons = {}", self.n_singletons);
        let _ = writeln!(s, "duration_ms = {}", self.duration_ms);
        let _ = writeln!(s, "sample_period_ms = {}", self.sample_period_ms);
        let _ = writeln!(s, "cohesion_radius_mm = {}", self.cohesion_radius_mm);
        let _ = writeln!(s, "noise_std_mm = {}", self.noise_std_mm);
        let _ = writeln!(s, "rng_seed = {}", self.rng_seed);
        let _ = writeln!(s, "start_spread_ms = {}", self.start_spread_ms);
        let _ = writeln!(s, "arena_mm = {}", self.arena_mm);
        let _ = writeln!(s, "start_time_ms = {}", self.start_time_ms);
        s
    }
}

/// A point walker: constant speed, heading perturbed every few seconds,
/// reflected at the arena walls.
struct Walker {
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    next_turn_ms: i64,
}

impl Walker {
    fn spawn(rng: &mut ChaCha8Rng, arena: f64) -> Self {
        Self {
            x: rng.random_range(0.0..arena),
            y: rng.random_range(0.0..arena),
            heading: rng.random_range(-PI..PI),
            speed: rng.random_range(SPEED_RANGE_MM_S.0..SPEED_RANGE_MM_S.1),
            next_turn_ms: HEADING_PERIOD_MS,
        }
    }

    /// Advances from elapsed time `t_ms - dt_ms` to `t_ms`.
    fn step(&mut self, rng: &mut ChaCha8Rng, t_ms: i64, dt_ms: i64, arena: f64) {
        if t_ms >= self.next_turn_ms {
            self.heading += rng.random_range(-MAX_TURN_RAD..MAX_TURN_RAD);
            self.next_turn_ms += HEADING_PERIOD_MS;
        }
        let d = self.speed * dt_ms as f64 / 1000.0;
        self.x += d * self.heading.cos();
        self.y += d * self.heading.sin();
        if self.x < 0.0 || self.x > arena {
            self.x = self.x.clamp(0.0, arena);
            self.heading = PI - self.heading;
        }
        if self.y < 0.0 || self.y > arena {
            self.y = self.y.clamp(0.0, arena);
            self.heading = -self.heading;
        }
        self.heading = normalize_angle(self.heading).unwrap_or(0.0);
    }
}

fn gaussian(rng: &mut ChaCha8Rng, normal: &Option<Normal<f64>>) -> f64 {
    normal.as_ref().map_or(0.0, |n| n.sample(rng))
}

/// Turns raw positions into trajectory points with derived velocity and
/// angles.
fn kinematics(
    rng: &mut ChaCha8Rng,
    agent: AgentId,
    times: &[i64],
    positions: &[(f64, f64)],
    fallback: (f64, f64),
) -> Trajectory {
    let face_noise = Normal::new(0.0, FACE_NOISE_RAD).expect("valid std");
    let n = positions.len();
    let mut pts = Vec::with_capacity(n);
    for k in 0..n {
        let (v, heading) = if n < 2 {
            fallback
        } else {
            let (a, b) = if k == 0 { (0, 1) } else { (k - 1, k) };
            let (dx, dy) = (positions[b].0 - positions[a].0, positions[b].1 - positions[a].1);
            let dt = (times[b] - times[a]) as f64 / 1000.0;
            ((dx * dx + dy * dy).sqrt() / dt, dy.atan2(dx))
        };
        let face = heading + face_noise.sample(rng);
        pts.push(
            TrajectoryPoint::new(times[k], agent, positions[k].0, positions[k].1, v, heading, face)
                .expect("generated values are finite"),
        );
    }
    Trajectory::new(agent, pts).expect("generated timestamps increase")
}

/// Generates a deterministic synthetic crowd: flocks move as one walker with
/// per-member formation offsets and noise, kept within the cohesion radius of
/// their centroid; singletons are independent walkers. Ground-truth group
/// annotations are emitted for every flock.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let noise = (config.noise_std_mm > 0.0)
        .then(|| Normal::new(0.0, config.noise_std_mm).expect("valid std"));
    let sizes = if config.n_flocks > 0 {
        let w = WeightedIndex::new(config.flock_size_distribution.iter().map(|(_, w)| *w))
            .map_err(|e| Error::invalid_config(e.to_string()))?;
        (0..config.n_flocks)
            .map(|_| config.flock_size_distribution[w.sample(&mut rng)].0)
            .collect()
    } else {
        Vec::new()
    };

    let arena = config.arena_mm;
    let period = config.sample_period_ms;
    let timeline = |rng: &mut ChaCha8Rng| -> Vec<i64> {
        let offset = if config.start_spread_ms > 0 {
            rng.random_range(0..config.start_spread_ms)
        } else {
            0
        };
        (offset..config.duration_ms)
            .step_by(period as usize)
            .map(|t| config.start_time_ms + t)
            .collect()
    };

    let mut trajectories = BTreeMap::new();
    let mut groups = Vec::new();
    let mut next_id: AgentId = 1;

    for size in sizes {
        let ids: Vec<AgentId> = (next_id..next_id + size as AgentId).collect();
        next_id += size as AgentId;
        let times = timeline(&mut rng);
        let mut centre = Walker::spawn(&mut rng, arena);
        let radius = config.cohesion_radius_mm;
        let offsets: Vec<(f64, f64)> = (0..size)
            .map(|_| {
                let r = 0.5 * radius * rng.random::<f64>().sqrt();
                let a = rng.random_range(-PI..PI);
                (r * a.cos(), r * a.sin())
            })
            .collect();
        let mut tracks = vec![Vec::with_capacity(times.len()); size];
        for (k, _) in times.iter().enumerate() {
            if k > 0 {
                centre.step(&mut rng, k as i64 * period, period, arena);
            }
            let mut pos: Vec<(f64, f64)> = offsets
                .iter()
                .map(|(ox, oy)| {
                    (
                        centre.x + ox + gaussian(&mut rng, &noise),
                        centre.y + oy + gaussian(&mut rng, &noise),
                    )
                })
                .collect();
            let mx = pos.iter().map(|p| p.0).sum::<f64>() / size as f64;
            let my = pos.iter().map(|p| p.1).sum::<f64>() / size as f64;
            let far = pos
                .iter()
                .map(|p| ((p.0 - mx).powi(2) + (p.1 - my).powi(2)).sqrt())
                .fold(0.0, f64::max);
            if far > radius {
                // shrink toward the centroid; the centroid itself is unchanged
                let s = radius / far;
                for p in &mut pos {
                    *p = (mx + s * (p.0 - mx), my + s * (p.1 - my));
                }
            }
            for (track, p) in tracks.iter_mut().zip(pos) {
                track.push(p);
            }
        }
        for (i, &id) in ids.iter().enumerate() {
            let partners: Vec<AgentId> = ids.iter().copied().filter(|&o| o != id).collect();
            trajectories.insert(
                id,
                kinematics(&mut rng, id, &times, &tracks[i], (centre.speed, centre.heading)),
            );
            groups.push(GroupAnnotation::new(id, size, partners.clone(), partners)?);
        }
    }

    for _ in 0..config.n_singletons {
        let id = next_id;
        next_id += 1;
        let times = timeline(&mut rng);
        let mut walker = Walker::spawn(&mut rng, arena);
        let mut track = Vec::with_capacity(times.len());
        for (k, _) in times.iter().enumerate() {
            if k > 0 {
                walker.step(&mut rng, k as i64 * period, period, arena);
            }
            track.push((
                walker.x + gaussian(&mut rng, &noise),
                walker.y + gaussian(&mut rng, &noise),
            ));
        }
        trajectories.insert(
            id,
            kinematics(&mut rng, id, &times, &track, (walker.speed, walker.heading)),
        );
    }

    Ok(Dataset::new(
        format!("synthetic-seed-{}", config.rng_seed),
        trajectories,
        groups,
    ))
}
