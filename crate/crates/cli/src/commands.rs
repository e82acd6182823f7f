use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use navfield::config::RunConfig;
use navfield::eval::{
    evaluate_config, exploration_pair, grid_to_csv, run_episode_with_dumps, sample_grid_episodes, EpisodeSpec,
    GridRow, GridSettings, PolicyController, RolloutConfig,
};
use navfield::policy::{
    load_training_state, save_policy, save_training_state, train_policy, AblationConfig, PolicyNet, TrainLogRow,
    TrainingState,
};
use navfield::world::{Scene, Tier};
use navfield::{rng, viz};
use serde_json::json;

use crate::io::{self, load_run, load_scenes, write_atomic, Run, Splits};
use crate::Common;

/// Defaults, then the config file, then command-line overrides.
pub fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::parse(&io::read_text(p)?).with_context(|| format!("in {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(a) = &common.ablate {
        cfg.ablation = a.parse::<AblationConfig>()?;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(n) = common.dump_viz {
        cfg.dump_episodes = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn generate_scenes(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let mut manifest = String::new();
    for (split, count) in [("train", cfg.train_scenes), ("val", cfg.val_scenes)] {
        for i in 0..count {
            let seed = rng::derive_seed(cfg.seed, &format!("scene-{split}"), i as u64);
            let scene = Scene::generate(seed, &cfg.scene).with_context(|| format!("generating {split} scene {i}"))?;
            let rel = format!("{split}/scene_{i:03}.txt");
            write_atomic(&dir.join(&rel), scene.to_text().as_bytes())?;
            let _ = writeln!(manifest, "{split} {rel}");
        }
    }
    write_atomic(&dir.join(io::MANIFEST), manifest.as_bytes())
}

pub fn gen_scenes(common: &Common) -> Result<()> {
    let cfg = resolve(common)?;
    generate_scenes(&cfg, &common.out)?;
    println!("wrote {} train and {} validation scenes to {}", cfg.train_scenes, cfg.val_scenes, common.out.display());
    Ok(())
}

fn scenes_for(common: &Common) -> Result<Splits> {
    match &common.scenes {
        Some(dir) => load_scenes(dir),
        None => bail!("pass --scenes with a directory written by gen-scenes"),
    }
}

fn log_csv(log: &[TrainLogRow]) -> String {
    let mut s = format!("{}\n", TrainLogRow::CSV_HEADER);
    for r in log {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

fn save_progress(dir: &Path, net: &PolicyNet, state: &TrainingState) -> navfield::Result<()> {
    let mut bytes = Vec::new();
    save_training_state(net, state, &mut bytes)?;
    let write = |name: &str, data: &[u8]| write_atomic(&dir.join(name), data).map_err(|e| navfield::Error::Io(format!("{e:#}")));
    write(io::TRAIN_STATE, &bytes)?;
    write(io::TRAIN_LOG, log_csv(&state.log).as_bytes())
}

/// Trains into `dir`, resuming from its checkpoint when the stored config
/// matches.
pub fn train_run(cfg: &RunConfig, scenes: &[Scene], dir: &Path) -> Result<PathBuf> {
    let snapshot = cfg.to_text();
    let snap_path = dir.join(io::SNAPSHOT);
    let state_path = dir.join(io::TRAIN_STATE);
    if state_path.exists() {
        let existing = io::read_text(&snap_path)?;
        if existing != snapshot {
            bail!("{} holds a run with a different config; use a fresh --out", dir.display());
        }
    }
    write_atomic(&snap_path, snapshot.as_bytes())?;

    let mut net = PolicyNet::new(cfg.policy, cfg.ablation, &mut rng::stream(cfg.seed, "policy-init", 0))?;
    let mut state = if state_path.exists() {
        let f = fs::File::open(&state_path)?;
        let s = load_training_state(&mut net, std::io::BufReader::new(f))
            .with_context(|| format!("resuming from {}", state_path.display()))?;
        eprintln!("resuming `{}` at episode {}", cfg.ablation, s.episode);
        s
    } else {
        TrainingState::new(&net)
    };
    let every = cfg.checkpoint_every;
    let total = cfg.train.episodes;
    train_policy(&mut net, scenes, &cfg.train, &cfg.rollout, cfg.seed, &mut state, |net, st| {
        if st.episode % every == 0 || st.episode == total {
            save_progress(dir, net, st)?;
            let r = st.log.last().expect("one episode logged");
            eprintln!("[{}] episode {}/{} ce {:.4} aux {:.4}", cfg.ablation, st.episode, total, r.ce_loss, r.aux_loss);
        }
        Ok(())
    })?;
    save_progress(dir, &net, &state)?;
    let mut bytes = Vec::new();
    save_policy(&net, &mut bytes)?;
    write_atomic(&dir.join(io::POLICY), &bytes)?;
    Ok(dir.to_path_buf())
}

pub fn train(common: &Common) -> Result<()> {
    let cfg = resolve(common)?;
    let splits = scenes_for(common)?;
    train_run(&cfg, &splits.train, &common.out)?;
    println!("trained `{}` into {}", cfg.ablation, common.out.display());
    Ok(())
}

fn settings_for(eval_cfg: &RunConfig, run: &Run) -> GridSettings {
    GridSettings {
        rollout: RolloutConfig { max_steps: eval_cfg.rollout.max_steps, ..run.config.rollout },
        mode: eval_cfg.eval_mode,
        workers: eval_cfg.workers,
    }
}

fn shared_episodes(cfg: &RunConfig, runs: &[Run], val: &[Scene]) -> Result<Vec<EpisodeSpec>> {
    let first = &runs[0].config.rollout;
    if runs.iter().any(|r| r.config.rollout.width != first.width || r.config.rollout.fov != first.fov) {
        bail!("runs use different camera settings and cannot share episodes");
    }
    Ok(sample_grid_episodes(val, &cfg.eval_tiers, cfg.eval_episodes_per_tier, first, cfg.seed)?)
}

fn dump_episode(run: &Run, scene: &Scene, spec: &EpisodeSpec, settings: &GridSettings, dir: &Path) -> Result<()> {
    let mut controller = PolicyController { net: &run.net, mode: settings.mode, capture: true };
    let mut dumps = Vec::new();
    let result = run_episode_with_dumps(&mut controller, scene, &spec.episode, &settings.rollout, spec.seed, Some(&mut dumps))?;
    let (unc, sal) = viz::dump_images(&dumps, 2);
    write_atomic(&dir.join("uncertainty.ppm"), &unc.to_ppm())?;
    write_atomic(&dir.join("saliency.ppm"), &sal.to_ppm())?;
    write_atomic(&dir.join("trajectory.csv"), viz::episode_trajectory_csv(&result).as_bytes())?;
    write_atomic(&dir.join("field_loss.csv"), viz::field_loss_csv(&dumps).as_bytes())?;
    write_atomic(&dir.join("target.ppm"), &viz::rgb_strip(&spec.episode.target_image.rgb, 16).to_ppm())?;
    let map = viz::scene_map(scene, &result.poses(), Some(spec.episode.target), 16);
    write_atomic(&dir.join("map.ppm"), &map.to_ppm())?;
    Ok(())
}

/// Evaluates every run on the same episodes; writes the metrics table,
/// per-episode records and optional dumps under `out`.
pub fn eval_runs(cfg: &RunConfig, runs: &[Run], val: &[Scene], out: &Path) -> Result<Vec<GridRow>> {
    let specs = shared_episodes(cfg, runs, val)?;
    let mut rows = Vec::new();
    let mut records = String::new();
    let mut labels: Vec<String> = Vec::new();
    for run in runs {
        let mut label = run.label();
        if labels.contains(&label) {
            label = format!("{label}@{}", run.dir.display());
        }
        labels.push(label.clone());
        let settings = settings_for(cfg, run);
        let results = evaluate_config(&run.net, val, &specs, &settings)
            .with_context(|| format!("evaluating `{label}`"))?;
        for (i, (spec, r)) in specs.iter().zip(&results).enumerate() {
            let rec = json!({
                "config": label,
                "episode": i,
                "tier": spec.episode.tier.name(),
                "scene": spec.scene_index,
                "success": r.success,
                "steps": r.steps,
                "path_length": r.path_length,
                "shortest": r.shortest,
                "final_distance": r.final_distance,
                "collisions": r.collisions,
            });
            let _ = writeln!(records, "{rec}");
        }
        rows.extend(navfield::eval::summarize_rows(&label, &specs, &results)?);
        for (i, spec) in specs.iter().take(cfg.dump_episodes).enumerate() {
            let dir = out.join("viz").join(&label).join(format!("episode_{i:03}"));
            dump_episode(run, &val[spec.scene_index], spec, &settings, &dir)?;
        }
    }
    write_atomic(&out.join("metrics.csv"), grid_to_csv(&rows).as_bytes())?;
    write_atomic(&out.join("episodes.jsonl"), records.as_bytes())?;
    Ok(rows)
}

pub fn eval(common: &Common, dirs: &[PathBuf]) -> Result<()> {
    let cfg = resolve(common)?;
    let splits = scenes_for(common)?;
    let runs = dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    let rows = eval_runs(&cfg, &runs, &splits.val, &common.out)?;
    print!("{}", grid_to_csv(&rows));
    Ok(())
}

pub fn ablate(common: &Common) -> Result<()> {
    let cfg = resolve(common)?;
    let scene_dir = common.scenes.clone().unwrap_or_else(|| common.out.join("scenes"));
    if !scene_dir.join(io::MANIFEST).exists() {
        generate_scenes(&cfg, &scene_dir)?;
    }
    let splits = load_scenes(&scene_dir)?;
    let mut runs = Vec::new();
    for row in AblationConfig::TABLE {
        let row_cfg = RunConfig { ablation: row, ..cfg.clone() };
        let dir = train_run(&row_cfg, &splits.train, &common.out.join(row.label()))?;
        runs.push(load_run(&dir)?);
    }
    let rows = eval_runs(&cfg, &runs, &splits.val, &common.out)?;
    print!("{}", grid_to_csv(&rows));
    Ok(())
}

pub fn viz(common: &Common, run_dir: &Path) -> Result<()> {
    let cfg = resolve(common)?;
    let splits = scenes_for(common)?;
    let run = load_run(run_dir)?;
    let count = cfg.dump_episodes.max(1);
    let specs = sample_grid_episodes(&splits.val, &Tier::ALL, count, &run.config.rollout, cfg.seed)?;
    let settings = settings_for(&cfg, &run);
    for (i, spec) in specs.iter().enumerate() {
        let dir = common.out.join(format!("{}_{i:03}", spec.episode.tier.name()));
        dump_episode(&run, &splits.val[spec.scene_index], spec, &settings, &dir)?;
    }
    for (i, scene) in splits.val.iter().enumerate() {
        write_atomic(&common.out.join(format!("scene_{i:03}.ppm")), &viz::scene_map(scene, &[], None, 16).to_ppm())?;
    }
    println!("wrote dumps for {} episodes to {}", specs.len(), common.out.display());
    Ok(())
}

pub fn explore(common: &Common, pairs: u64) -> Result<()> {
    let cfg = resolve(common)?;
    let mut csv = String::from("seed,greedy,random\n");
    let (mut g_sum, mut r_sum, mut wins) = (0.0, 0.0, 0);
    for s in 0..pairs {
        let p = exploration_pair(&cfg.scene, &cfg.rollout, cfg.explore_steps, rng::derive_seed(cfg.seed, "explore", s))?;
        let _ = writeln!(csv, "{},{:.6},{:.6}", s, p.greedy, p.random);
        g_sum += p.greedy;
        r_sum += p.random;
        wins += usize::from(p.greedy > p.random);
    }
    write_atomic(&common.out.join("exploration.csv"), csv.as_bytes())?;
    let n = pairs.max(1) as f64;
    println!(
        "greedy coverage {:.4}, random coverage {:.4}, ratio {:.3}, greedy ahead in {wins}/{pairs}",
        g_sum / n,
        r_sum / n,
        if r_sum > 0.0 { g_sum / r_sum } else { f64::INFINITY }
    );
    Ok(())
}
