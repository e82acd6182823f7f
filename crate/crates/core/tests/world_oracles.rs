use std::f64::consts::PI;

use navfield::rng;
use navfield::world::*;
use proptest::prelude::*;
use rand::Rng as _;

/// Walks along the ray in fixed increments until the point enters a wall.
fn march(scene: &Scene, o: Vec2, dir: f64, step: f64, far: f64) -> f64 {
    let d = Vec2::from_angle(dir);
    let mut t = 0.0;
    while t < far {
        t += step;
        if !scene.is_free_point(o + d * t) {
            return t;
        }
    }
    far
}

fn random_free_point(scene: &Scene, r: &mut rng::Rng) -> Vec2 {
    let free = scene.free_cells();
    let (c, row) = free[r.gen_range(0..free.len())];
    Vec2::new(c as f64 + r.gen_range(0.05..0.95), row as f64 + r.gen_range(0.05..0.95))
}

#[test]
fn raycast_matches_fine_marching() {
    let mut r = rng::seeded(123);
    let mut worst: f64 = 0.0;
    for i in 0..1000u64 {
        let scene = Scene::generate(i % 25, &SceneConfig::default()).unwrap();
        let o = random_free_point(&scene, &mut r);
        let angle = r.gen_range(0.0..2.0 * PI);
        let far = scene.diagonal();
        let hit = cast_ray(&scene, o, Vec2::from_angle(angle), far).unwrap();
        let oracle = march(&scene, o, angle, 1e-4, far);
        worst = worst.max((hit.distance - oracle).abs());
    }
    assert!(worst < 1e-3, "worst disagreement {worst}");
}

/// All-pairs shortest paths by Floyd-Warshall on an independently built
/// 8-connected graph without corner cutting.
fn floyd(scene: &Scene) -> (Vec<(i64, i64)>, Vec<Vec<f64>>) {
    let cells = scene.free_cells();
    let n = cells.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        d[i][i] = 0.0;
        for j in 0..n {
            let (a, b) = (cells[i], cells[j]);
            let (dc, dr) = (b.0 - a.0, b.1 - a.1);
            if dc.abs() + dr.abs() == 1 {
                d[i][j] = 1.0;
            } else if dc.abs() == 1 && dr.abs() == 1 && !scene.is_wall(a.0 + dc, a.1) && !scene.is_wall(a.0, a.1 + dr) {
                d[i][j] = 2f64.sqrt();
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    (cells, d)
}

#[test]
fn geodesic_matches_exhaustive_oracle() {
    for seed in 0..20 {
        let cfg = SceneConfig { height: 10, width: 10, wall_density: 0.25 };
        let scene = Scene::generate(seed, &cfg).unwrap();
        let (cells, d) = floyd(&scene);
        for (i, a) in cells.iter().enumerate() {
            for (j, b) in cells.iter().enumerate() {
                let g = geodesic_distance(&scene, Scene::cell_center(a.0, a.1), Scene::cell_center(b.0, b.1)).unwrap();
                assert!((g - d[i][j]).abs() < 1e-9, "seed {seed} {a:?}->{b:?}: {g} vs {}", d[i][j]);
            }
        }
    }
}

#[test]
fn expert_reaches_target_within_step_bound() {
    let mut r = rng::seeded(77);
    let mut count = 0;
    for s in 0..17u64 {
        let scene = Scene::generate(s, &SceneConfig::default()).unwrap();
        let cam = Camera::for_scene(&scene, 8);
        for tier in Tier::ALL {
            count += 1;
            let ep = sample_episode(&scene, tier, &cam, &mut r).unwrap();
            let field = DistanceField::from_cell(&scene, scene.cell_of(ep.target)).unwrap();
            let path = field.path_to_source(&scene, scene.cell_of(ep.start.position)).unwrap();
            let dirs: Vec<(i64, i64)> = path.windows(2).map(|w| (w[1].0 - w[0].0, w[1].1 - w[0].1)).collect();
            let bends = dirs.windows(2).filter(|w| w[0] != w[1]).count();
            let first = (dirs[0].1 as f64).atan2(dirs[0].0 as f64);
            let initial = (wrap_pi(first - ep.start.theta).abs() / TURN_ANGLE - 1e-9).ceil() as usize;
            let turns_needed = (initial + bends).max(1);
            let bound = (ep.shortest / FORWARD_STEP).ceil() as usize + 4 * turns_needed;

            let mut pose = ep.start;
            let mut steps = 0;
            while geodesic_distance(&scene, pose.position, ep.target).unwrap() > SUCCESS_RADIUS {
                assert!(steps <= bound, "seed {s} {tier}: exceeded {bound} steps");
                let a = expert_action(&scene, &pose, ep.target).unwrap();
                pose = step_agent(&scene, &pose, a).0;
                steps += 1;
            }
            assert!(steps <= bound);
        }
    }
    assert!(count >= 50);
}

fn any_action() -> impl Strategy<Value = Action> {
    (0usize..3).prop_map(|i| Action::from_index(i).unwrap())
}

proptest! {
    #[test]
    fn agent_never_enters_walls(seed in 0u64..50, actions in prop::collection::vec(any_action(), 1..300)) {
        let scene = Scene::generate(seed, &SceneConfig::default()).unwrap();
        let (c, r) = scene.free_cells()[0];
        let mut pose = AgentPose::new(c as f64 + 0.5, r as f64 + 0.5, 0.0);
        for a in actions {
            pose = step_agent(&scene, &pose, a).0;
            prop_assert!(scene.is_free_point(pose.position));
            prop_assert!((0.0..2.0 * PI).contains(&pose.theta));
            for (dx, dy) in [(0.099, 0.0), (-0.099, 0.0), (0.0, 0.099), (0.0, -0.099)] {
                prop_assert!(scene.is_free_point(pose.position + Vec2::new(dx, dy)));
            }
        }
    }

    #[test]
    fn geodesic_is_a_metric(seed in 0u64..30, k in 0u64..1000) {
        let scene = Scene::generate(seed, &SceneConfig::default()).unwrap();
        let mut r = rng::seeded(k);
        let a = random_free_point(&scene, &mut r);
        let b = random_free_point(&scene, &mut r);
        let c = random_free_point(&scene, &mut r);
        let ab = geodesic_distance(&scene, a, b).unwrap();
        let ba = geodesic_distance(&scene, b, a).unwrap();
        let bc = geodesic_distance(&scene, b, c).unwrap();
        let ac = geodesic_distance(&scene, a, c).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(geodesic_distance(&scene, a, a).unwrap(), 0.0);
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!(ab >= a.distance(b) - 1e-9, "never shorter than the straight line");
    }

    #[test]
    fn scene_text_roundtrip_preserves_rays(seed in 0u64..100) {
        let scene = Scene::generate(seed, &SceneConfig::default()).unwrap();
        let back = Scene::parse(&scene.to_text()).unwrap();
        let (c, r) = scene.free_cells()[0];
        let pose = AgentPose::new(c as f64 + 0.5, r as f64 + 0.5, 1.0);
        let cam = Camera::for_scene(&scene, 16);
        prop_assert_eq!(render_observation(&scene, &pose, &cam).unwrap(), render_observation(&back, &pose, &cam).unwrap());
    }
}
