#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use flare_core::harness::config::ExperimentConfig;

/// A desk config shrunk until a learned frame takes well under a second.
pub const TINY: &str = "\
profile = desk
n_ues = 12
k_max = 3
max_cluster_size = 12
frames = 2
episodes = 2
steps = 25
hidden = 8,8
batch_size = 8
warmup = 16
update_interval = 2
replay_capacity = 1000
seeds = 5,9
";

pub fn tiny(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::parse(TINY).unwrap();
    c.out_dir = out.to_path_buf();
    c
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(root, &p, out);
        } else {
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.insert(rel, fs::read(&p).unwrap());
        }
    }
}
