use super::{wrap_tau, Action, AgentPose, Scene, Vec2, AGENT_RADIUS, FORWARD_STEP, TURN_ANGLE};

/// Distance from a point to the closed box `[lo, hi]`.
fn point_box_distance(p: Vec2, lo: Vec2, hi: Vec2) -> f64 {
    let dx = (lo.x - p.x).max(0.0).max(p.x - hi.x);
    let dy = (lo.y - p.y).max(0.0).max(p.y - hi.y);
    dx.hypot(dy)
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Liang-Barsky clip test: does segment `a..b` touch the box?
fn segment_hits_box(a: Vec2, b: Vec2, lo: Vec2, hi: Vec2) -> bool {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-d.x, a.x - lo.x), (d.x, hi.x - a.x), (-d.y, a.y - lo.y), (d.y, hi.y - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Exact distance between segment `a..b` and a box; in 2D the minimum over
/// disjoint convex shapes sits at a vertex of one of them.
fn segment_box_distance(a: Vec2, b: Vec2, lo: Vec2, hi: Vec2) -> f64 {
    if segment_hits_box(a, b, lo, hi) {
        return 0.0;
    }
    let corners = [lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)];
    corners
        .iter()
        .map(|&c| point_segment_distance(c, a, b))
        .chain([point_box_distance(a, lo, hi), point_box_distance(b, lo, hi)])
        .fold(f64::INFINITY, f64::min)
}

/// True when a disc of `radius` swept from `a` to `b` stays clear of walls.
pub fn segment_clear(scene: &Scene, a: Vec2, b: Vec2, radius: f64) -> bool {
    let c0 = (a.x.min(b.x) - radius).floor() as i64;
    let c1 = (a.x.max(b.x) + radius).floor() as i64;
    let r0 = (a.y.min(b.y) - radius).floor() as i64;
    let r1 = (a.y.max(b.y) + radius).floor() as i64;
    for r in r0..=r1 {
        for c in c0..=c1 {
            if scene.is_wall(c, r) {
                let lo = Vec2::new(c as f64, r as f64);
                let hi = Vec2::new(c as f64 + 1.0, r as f64 + 1.0);
                if segment_box_distance(a, b, lo, hi) < radius {
                    return false;
                }
            }
        }
    }
    true
}

pub fn forward_blocked(scene: &Scene, pose: &AgentPose) -> bool {
    let to = pose.position + Vec2::from_angle(pose.theta) * FORWARD_STEP;
    !segment_clear(scene, pose.position, to, AGENT_RADIUS)
}

/// Applies one action. A blocked `Forward` leaves the pose untouched and
/// reports a collision.
pub fn step_agent(scene: &Scene, pose: &AgentPose, action: Action) -> (AgentPose, bool) {
    match action {
        Action::Forward => {
            if forward_blocked(scene, pose) {
                (*pose, true)
            } else {
                let p = pose.position + Vec2::from_angle(pose.theta) * FORWARD_STEP;
                (AgentPose { position: p, theta: pose.theta }, false)
            }
        }
        Action::TurnLeft => (AgentPose { position: pose.position, theta: wrap_tau(pose.theta + TURN_ANGLE) }, false),
        Action::TurnRight => (AgentPose { position: pose.position, theta: wrap_tau(pose.theta - TURN_ANGLE) }, false),
        Action::Stop => (*pose, false),
    }
}
