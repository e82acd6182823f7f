use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use navfield::config::RunConfig;
use navfield::policy::{load_policy, PolicyNet};
use navfield::world::Scene;

pub const MANIFEST: &str = "manifest.txt";
pub const SNAPSHOT: &str = "config.txt";
pub const POLICY: &str = "policy.ckpt";
pub const TRAIN_STATE: &str = "train_state.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";

/// Writes through a temporary file so readers never see half a file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("moving {} into place", path.display()))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub struct Splits {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
}

/// Loads the scenes listed in `dir/manifest.txt`.
pub fn load_scenes(dir: &Path) -> Result<Splits> {
    let manifest = read_text(&dir.join(MANIFEST))?;
    let mut splits = Splits { train: Vec::new(), val: Vec::new() };
    for (i, line) in manifest.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (split, rel) = line
            .split_once(' ')
            .with_context(|| format!("{}: line {} is not `split path`", dir.join(MANIFEST).display(), i + 1))?;
        let path = dir.join(rel.trim());
        let scene = Scene::parse(&read_text(&path)?).with_context(|| format!("parsing {}", path.display()))?;
        match split {
            "train" => splits.train.push(scene),
            "val" => splits.val.push(scene),
            other => bail!("{}: unknown split `{other}`", dir.join(MANIFEST).display()),
        }
    }
    if splits.train.is_empty() || splits.val.is_empty() {
        bail!("{} lists no train or no validation scenes", dir.join(MANIFEST).display());
    }
    Ok(splits)
}

/// A trained run: its resolved config and policy.
pub struct Run {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub net: PolicyNet,
}

impl Run {
    pub fn label(&self) -> String {
        self.config.ablation.label()
    }
}

pub fn load_run(dir: &Path) -> Result<Run> {
    let snapshot = dir.join(SNAPSHOT);
    let config = RunConfig::parse(&read_text(&snapshot)?).with_context(|| format!("parsing {}", snapshot.display()))?;
    let ckpt = dir.join(POLICY);
    if !ckpt.exists() {
        bail!("no checkpoint for config `{}`: {} is missing", config.ablation.label(), ckpt.display());
    }
    let file = fs::File::open(&ckpt).with_context(|| format!("opening {}", ckpt.display()))?;
    let net = load_policy(config.policy, config.ablation, std::io::BufReader::new(file))
        .with_context(|| format!("loading {}", ckpt.display()))?;
    Ok(Run { dir: dir.to_path_buf(), config, net })
}
