//! Replays the fuzz corpus plus every prefix and single-byte mutation of
//! each seed through the fuzz targets' properties.

use std::fs;
use std::path::PathBuf;

use navfield::config::RunConfig;
use navfield::tensor::checkpoint;
use navfield::world::Scene;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files.iter().map(|p| fs::read(p).unwrap()).collect()
}

fn variants(seed: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![seed.to_vec()];
    for n in 0..seed.len() {
        out.push(seed[..n].to_vec());
    }
    for i in 0..seed.len() {
        for flip in [0x01u8, 0x20, 0x80, 0xff] {
            let mut v = seed.to_vec();
            v[i] ^= flip;
            out.push(v);
        }
    }
    out
}

#[test]
fn checkpoint_decode() {
    let mut decoded = 0;
    for seed in seeds("checkpoint_decode") {
        for data in variants(&seed) {
            if let Ok(entries) = checkpoint::decode(&data) {
                decoded += 1;
                assert_eq!(checkpoint::encode(entries.iter().map(|(n, t)| (n.as_str(), t))), data);
            }
        }
    }
    assert!(decoded > 0);
}

#[test]
fn scene_parse() {
    let mut parsed = 0;
    for seed in seeds("scene_parse") {
        for data in variants(&seed) {
            let Ok(text) = std::str::from_utf8(&data) else { continue };
            if let Ok(scene) = Scene::parse(text) {
                parsed += 1;
                assert!(scene.is_connected());
                assert_eq!(Scene::parse(&scene.to_text()).unwrap(), scene);
            }
        }
    }
    assert!(parsed > 0);
}

#[test]
fn config_parse() {
    let mut parsed = 0;
    for seed in seeds("config_parse") {
        for data in variants(&seed) {
            let Ok(text) = std::str::from_utf8(&data) else { continue };
            if let Ok(cfg) = RunConfig::parse(text) {
                parsed += 1;
                let back = RunConfig::parse(&cfg.to_text()).unwrap();
                assert_eq!(back.to_text(), cfg.to_text());
            }
        }
    }
    assert!(parsed > 0);
}
