//! Oriented-box overlap via the separating-axis test.

use super::{Episode, Trajectory};

pub const EGO_LENGTH: f64 = 4.0;
pub const EGO_WIDTH: f64 = 1.85;

/// Rectangle centred at (cx, cy) whose length runs along `heading`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.heading.sin_cos();
        [(c, s), (-s, c)]
    }

    fn corners(&self) -> [(f64, f64); 4] {
        let [(ux, uy), (vx, vy)] = self.axes();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let mut out = [(0.0, 0.0); 4];
        for (i, (a, b)) in [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)].into_iter().enumerate() {
            out[i] = (self.cx + a * ux + b * vx, self.cy + a * uy + b * vy);
        }
        out
    }

    fn project(&self, axis: (f64, f64)) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (x, y) in self.corners() {
            let p = x * axis.0 + y * axis.1;
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }
}

/// True when the boxes share interior area; touching edges do not count.
pub fn boxes_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    for axis in a.axes().into_iter().chain(b.axes()) {
        let (a0, a1) = a.project(axis);
        let (b0, b1) = b.project(axis);
        if a1 <= b0 || b1 <= a0 {
            return false;
        }
    }
    true
}

/// Ego footprint at waypoint `i`, heading taken from the segment arriving
/// there (the origin precedes waypoint 0). A near-zero segment keeps the
/// previous heading, starting from straight ahead.
pub fn ego_box_at(traj: &Trajectory, i: usize) -> OrientedBox {
    let mut heading = std::f64::consts::FRAC_PI_2;
    let mut prev = [0.0, 0.0];
    for p in &traj.waypoints[..=i] {
        let (dx, dy) = (p[0] - prev[0], p[1] - prev[1]);
        if dx.hypot(dy) > 1e-6 {
            heading = dy.atan2(dx);
        }
        prev = *p;
    }
    let p = traj.waypoints[i];
    OrientedBox {
        cx: p[0],
        cy: p[1],
        heading,
        length: EGO_LENGTH,
        width: EGO_WIDTH,
    }
}

/// Does the ego footprint along `traj` hit any agent at a waypoint whose
/// timestamp is at most `horizon_s`?
pub fn occupancy_collision(traj: &Trajectory, episode: &Episode, horizon_s: f64) -> bool {
    (0..traj.len())
        .take_while(|&i| traj.time_of(i) <= horizon_s + 1e-9)
        .any(|i| {
            let ego = ego_box_at(traj, i);
            let t = traj.time_of(i);
            episode.agents.iter().any(|a| boxes_overlap(&ego, &a.box_at(t)))
        })
}
