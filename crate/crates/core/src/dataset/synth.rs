//! Seeded synthetic crowds: straight-line walkers, random-waypoint walkers
//! and stationary loiterers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DatasetError, RawTrajectory, TrajectoryStore};
use crate::grid::{PixelPoint, SceneSpec};
use crate::kv::KvFile;

/// Generator parameters. Fractions select the motion kind of each
/// pedestrian; whatever remains after `straight_fraction + loiter_fraction`
/// is random-waypoint walkers.
#[derive(Debug, Clone, PartialEq)]
pub struct CrowdConfig {
    pub pedestrians: usize,
    pub frames: usize,
    pub seed: u64,
    pub straight_fraction: f64,
    pub loiter_fraction: f64,
    pub speed_px_mean: f64,
    pub speed_px_std: f64,
    pub scene: SceneSpec,
    /// Lifetime range (frames) for waypoint walkers and loiterers.
    pub min_lifetime: usize,
    pub max_lifetime: usize,
}

impl Default for CrowdConfig {
    fn default() -> Self {
        Self {
            pedestrians: 400,
            frames: 1000,
            seed: 0,
            straight_fraction: 0.7,
            loiter_fraction: 0.1,
            speed_px_mean: 35.0,
            speed_px_std: 10.0,
            scene: SceneSpec::default(),
            min_lifetime: 10,
            max_lifetime: 120,
        }
    }
}

impl CrowdConfig {
    pub const KEYS: [&'static str; 7] =
        ["pedestrians", "frames", "seed", "straight_fraction", "loiter_fraction", "speed_px_mean", "speed_px_std"];

    /// Reads the generator `key=value` file; absent keys keep their defaults.
    pub fn from_kv(kv: &KvFile) -> Result<Self, DatasetError> {
        kv.check_keys(&Self::KEYS)?;
        let d = Self::default();
        let cfg = Self {
            pedestrians: kv.get("pedestrians")?.unwrap_or(d.pedestrians),
            frames: kv.get("frames")?.unwrap_or(d.frames),
            seed: kv.get("seed")?.unwrap_or(d.seed),
            straight_fraction: kv.get("straight_fraction")?.unwrap_or(d.straight_fraction),
            loiter_fraction: kv.get("loiter_fraction")?.unwrap_or(d.loiter_fraction),
            speed_px_mean: kv.get("speed_px_mean")?.unwrap_or(d.speed_px_mean),
            speed_px_std: kv.get("speed_px_std")?.unwrap_or(d.speed_px_std),
            ..d
        };
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        Self::from_kv(&KvFile::parse(text)?)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "pedestrians={}\nframes={}\nseed={}\nstraight_fraction={}\nloiter_fraction={}\nspeed_px_mean={}\nspeed_px_std={}\n",
            self.pedestrians,
            self.frames,
            self.seed,
            self.straight_fraction,
            self.loiter_fraction,
            self.speed_px_mean,
            self.speed_px_std
        )
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InvalidConfig(m.to_string()));
        if self.frames == 0 {
            return bad("frames must be at least 1");
        }
        let fracs = [self.straight_fraction, self.loiter_fraction];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || fracs.iter().sum::<f64>() > 1.0 {
            return bad("straight_fraction and loiter_fraction must lie in [0, 1] and sum to at most 1");
        }
        if !(self.speed_px_mean >= 0.0) || !(self.speed_px_std >= 0.0) {
            return bad("speed mean and std must be non-negative");
        }
        if self.min_lifetime < 2 || self.max_lifetime < self.min_lifetime {
            return bad("lifetimes must satisfy 2 <= min <= max");
        }
        Ok(())
    }
}

/// Generates a crowd. The same `(config, seed)` always yields the same store.
pub fn synth_crowd(config: &CrowdConfig, seed: u64) -> Result<TrajectoryStore, DatasetError> {
    config.validate()?;
    let scene = config.scene;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speed_dist = Normal::new(config.speed_px_mean, config.speed_px_std)
        .map_err(|e| DatasetError::InvalidConfig(e.to_string()))?;
    let frames = config.frames as i64;

    let mut out = Vec::with_capacity(config.pedestrians);
    for i in 0..config.pedestrians {
        let id = i as u64 + 1;
        let kind: f64 = rng.random();
        let spawn = rng.random_range(0..frames);
        let speed = speed_dist.sample(&mut rng).max(1.0);
        let budget = (frames - spawn) as usize;
        let traj = if kind < config.straight_fraction {
            let (start, target) = edge_to_edge(&scene, &mut rng);
            let d = start.distance(target).max(1e-9);
            let v = ((target.x - start.x) / d * speed, (target.y - start.y) / d * speed);
            straight_walker(id, spawn, start, v, budget, &scene)
        } else {
            let lifetime = rng.random_range(config.min_lifetime..=config.max_lifetime).min(budget);
            let start = PixelPoint::new(rng.random_range(0.0..scene.width), rng.random_range(0.0..scene.height));
            if kind < config.straight_fraction + config.loiter_fraction {
                RawTrajectory::from_positions(id, spawn, &vec![start; lifetime])
            } else {
                waypoint_walker(id, spawn, start, speed, lifetime, &scene, &mut rng)
            }
        };
        if traj.len() >= 2 {
            out.push(traj);
        }
    }
    TrajectoryStore::new(scene, out)
}

/// Constant-velocity walk from `start`, stopping at the scene edge or after `max_frames` points.
pub fn straight_walker(
    pedestrian_id: u64,
    first_frame: i64,
    start: PixelPoint,
    velocity: (f64, f64),
    max_frames: usize,
    scene: &SceneSpec,
) -> RawTrajectory {
    let positions: Vec<PixelPoint> = (0..max_frames)
        .map(|k| start.offset(velocity.0 * k as f64, velocity.1 * k as f64))
        .take_while(|p| scene.contains(*p) && p.x < scene.width && p.y < scene.height)
        .collect();
    RawTrajectory::from_positions(pedestrian_id, first_frame, &positions)
}

fn waypoint_walker(
    id: u64,
    first_frame: i64,
    start: PixelPoint,
    speed: f64,
    lifetime: usize,
    scene: &SceneSpec,
    rng: &mut ChaCha8Rng,
) -> RawTrajectory {
    let mut pos = start;
    let mut target = random_point(scene, rng);
    let mut positions = Vec::with_capacity(lifetime);
    for _ in 0..lifetime {
        positions.push(pos);
        let d = pos.distance(target);
        if d <= speed {
            pos = target;
            target = random_point(scene, rng);
        } else {
            pos = pos.offset((target.x - pos.x) / d * speed, (target.y - pos.y) / d * speed);
        }
    }
    RawTrajectory::from_positions(id, first_frame, &positions)
}

fn random_point(scene: &SceneSpec, rng: &mut ChaCha8Rng) -> PixelPoint {
    PixelPoint::new(rng.random_range(0.0..scene.width), rng.random_range(0.0..scene.height))
}

/// A point on one scene edge and a target on a different edge.
fn edge_to_edge(scene: &SceneSpec, rng: &mut ChaCha8Rng) -> (PixelPoint, PixelPoint) {
    let side = rng.random_range(0..4u8);
    let other = (side + rng.random_range(1..4u8)) % 4;
    (edge_point(scene, side, rng), edge_point(scene, other, rng))
}

fn edge_point(scene: &SceneSpec, side: u8, rng: &mut ChaCha8Rng) -> PixelPoint {
    let inset = 1.0;
    match side {
        0 => PixelPoint::new(rng.random_range(0.0..scene.width), inset),
        1 => PixelPoint::new(scene.width - inset, rng.random_range(0.0..scene.height)),
        2 => PixelPoint::new(rng.random_range(0.0..scene.width), scene.height - inset),
        _ => PixelPoint::new(inset, rng.random_range(0.0..scene.height)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::to_grid;
    use crate::grid::{CellIndex, GridSpec};

    #[test]
    fn zero_pedestrians_is_empty() {
        let cfg = CrowdConfig { pedestrians: 0, ..Default::default() };
        assert!(synth_crowd(&cfg, 1).unwrap().is_empty());
    }

    #[test]
    fn zero_frames_is_rejected() {
        let cfg = CrowdConfig { frames: 0, ..Default::default() };
        assert!(matches!(synth_crowd(&cfg, 1), Err(DatasetError::InvalidConfig(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = CrowdConfig { pedestrians: 50, frames: 200, ..Default::default() };
        assert_eq!(synth_crowd(&cfg, 9).unwrap(), synth_crowd(&cfg, 9).unwrap());
        assert_ne!(synth_crowd(&cfg, 9).unwrap(), synth_crowd(&cfg, 10).unwrap());
    }

    #[test]
    fn horizontal_walker_grid_path() {
        let scene = SceneSpec::default();
        let t = straight_walker(1, 0, PixelPoint::new(15.0, 15.0), (30.0, 0.0), 10, &scene);
        let g = to_grid(&t, &GridSpec::for_scene(&scene));
        let cells: Vec<_> = g.cells.iter().map(|c| c.1).collect();
        let expected: Vec<_> = (0..10).map(|c| CellIndex::new(c, 0)).collect();
        assert_eq!(cells, expected);
    }

    #[test]
    fn walker_stops_at_scene_edge() {
        let scene = SceneSpec::default();
        let t = straight_walker(1, 0, PixelPoint::new(1850.0, 15.0), (30.0, 0.0), 10, &scene);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn kv_round_trip() {
        let cfg = CrowdConfig { pedestrians: 12, speed_px_std: 2.5, ..Default::default() };
        assert_eq!(CrowdConfig::parse(&cfg.to_kv_string()).unwrap(), cfg);
        assert!(CrowdConfig::parse("colour=red").is_err());
    }
}
