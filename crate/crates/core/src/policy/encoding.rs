//! Fixed-length joint state: the robot relative to its goal, then the three
//! nearest pedestrians relative to the robot.

use crate::grid::{PixelPoint, SceneSpec};

pub const ROBOT_BLOCK: usize = 6;
pub const PED_BLOCK: usize = 7;
pub const NEARBY: usize = 3;
pub const JOINT_STATE_LEN: usize = ROBOT_BLOCK + NEARBY * PED_BLOCK;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentObservation {
    pub position: PixelPoint,
    /// Pixels per step.
    pub velocity: (f64, f64),
    pub radius: f64,
}

impl AgentObservation {
    pub fn new(position: PixelPoint, velocity: (f64, f64), radius: f64) -> Self {
        Self { position, velocity, radius }
    }
}

/// Layout:
///
/// * robot: `(gx - px)/X, (gy - py)/Y, vx/X, vy/Y, r/X, |goal - p|`
/// * per pedestrian, nearest first: `(qx - px)/X, (qy - py)/Y, vx/X, vy/Y, r/X, |q - p|, present`
///
/// Distances are Euclidean norms of the already normalized offsets. Missing
/// pedestrians are all zeros.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointStateEncoding(pub [f64; JOINT_STATE_LEN]);

impl JointStateEncoding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn pedestrian_block(&self, k: usize) -> &[f64] {
        let start = ROBOT_BLOCK + k * PED_BLOCK;
        &self.0[start..start + PED_BLOCK]
    }

    pub fn present(&self, k: usize) -> bool {
        self.pedestrian_block(k)[PED_BLOCK - 1] == 1.0
    }
}

pub fn encode_joint_state(
    robot: &AgentObservation,
    goal: PixelPoint,
    peds: &[AgentObservation],
    scene: &SceneSpec,
) -> JointStateEncoding {
    let (sx, sy) = (scene.width, scene.height);
    let p = robot.position;
    let mut out = [0.0; JOINT_STATE_LEN];
    let (gx, gy) = ((goal.x - p.x) / sx, (goal.y - p.y) / sy);
    out[..ROBOT_BLOCK].copy_from_slice(&[
        gx,
        gy,
        robot.velocity.0 / sx,
        robot.velocity.1 / sy,
        robot.radius / sx,
        gx.hypot(gy),
    ]);

    let mut order: Vec<(f64, usize)> = peds.iter().enumerate().map(|(i, q)| (p.distance(q.position), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (k, &(_, i)) in order.iter().take(NEARBY).enumerate() {
        let q = &peds[i];
        let (rx, ry) = ((q.position.x - p.x) / sx, (q.position.y - p.y) / sy);
        let start = ROBOT_BLOCK + k * PED_BLOCK;
        out[start..start + PED_BLOCK].copy_from_slice(&[
            rx,
            ry,
            q.velocity.0 / sx,
            q.velocity.1 / sy,
            q.radius / sx,
            rx.hypot(ry),
            1.0,
        ]);
    }
    JointStateEncoding(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(x: f64, y: f64) -> AgentObservation {
        AgentObservation::new(PixelPoint::new(x, y), (0.0, 0.0), 15.0)
    }

    #[test]
    fn empty_crowd_and_robot_at_goal() {
        let s = SceneSpec::default();
        let e = encode_joint_state(&agent(100.0, 100.0), PixelPoint::new(100.0, 100.0), &[], &s);
        assert_eq!(&e.0[..2], &[0.0, 0.0]);
        assert_eq!(e.0[5], 0.0);
        assert!(e.0[ROBOT_BLOCK..].iter().all(|&v| v == 0.0));
        assert!(!(0..NEARBY).any(|k| e.present(k)));
    }

    #[test]
    fn normalization() {
        let s = SceneSpec::new(200.0, 100.0, 1.0).unwrap();
        let robot = AgentObservation::new(PixelPoint::new(50.0, 50.0), (10.0, -5.0), 20.0);
        let e = encode_joint_state(&robot, PixelPoint::new(150.0, 0.0), &[agent(70.0, 60.0)], &s);
        assert_eq!(&e.0[..5], &[0.5, -0.5, 0.05, -0.05, 0.1]);
        assert!((e.0[5] - 0.5f64.hypot(0.5)).abs() < 1e-15);
        assert_eq!(&e.pedestrian_block(0)[..2], &[0.1, 0.1]);
        assert!(e.present(0) && !e.present(1));
    }
}
