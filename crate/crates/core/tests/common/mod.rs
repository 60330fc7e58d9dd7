#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use beeformer::dataio::matfile::{self, MatrixHeader, Precision};
use beeformer::sparse::Interaction;
use beeformer::{InteractionMatrix, ItemCorpus};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Items split evenly into token-defined clusters; each user picks one
/// cluster and interacts with `per_user` of its items.
pub struct ClusterData {
    pub x: InteractionMatrix,
    pub corpus: ItemCorpus,
    pub cluster_of: Vec<usize>,
}

pub fn cluster_dataset(
    n_items: usize,
    n_clusters: usize,
    n_users: usize,
    per_user: usize,
    seed: u64,
) -> ClusterData {
    let mut r = rng(seed);
    let cluster_of: Vec<usize> = (0..n_items).map(|i| i % n_clusters).collect();
    let texts: Vec<String> = (0..n_items)
        .map(|i| {
            let c = cluster_of[i];
            let mut words: Vec<String> =
                (0..4).map(|_| format!("c{c}t{}", r.gen_range(0..6))).collect();
            words.extend((0..2).map(|_| format!("noise{}", r.gen_range(0..500))));
            words.join(" ")
        })
        .collect();
    let members: Vec<Vec<usize>> = (0..n_clusters)
        .map(|c| (0..n_items).filter(|&i| cluster_of[i] == c).collect())
        .collect();
    let rows: Vec<Vec<usize>> = (0..n_users)
        .map(|_| {
            let c = r.gen_range(0..n_clusters);
            members[c].choose_multiple(&mut r, per_user).copied().collect()
        })
        .collect();
    let x = InteractionMatrix::from_user_rows(n_items, &rows).unwrap();
    let corpus = ItemCorpus::new(x.item_ids().to_vec(), texts).unwrap();
    ClusterData { x, corpus, cluster_of }
}

/// Random user rows over `n_items` with 1..=max_per_user items each.
pub fn random_matrix(r: &mut ChaCha8Rng, n_users: usize, n_items: usize, max_per_user: usize) -> InteractionMatrix {
    let all: Vec<usize> = (0..n_items).collect();
    let rows: Vec<Vec<usize>> = (0..n_users)
        .map(|_| {
            let n = r.gen_range(1..=max_per_user.min(n_items));
            all.choose_multiple(r, n).copied().collect()
        })
        .collect();
    InteractionMatrix::from_user_rows(n_items, &rows).unwrap()
}

pub fn word_corpus(n_items: usize) -> ItemCorpus {
    let words = ["red", "green", "blue", "cyan", "amber", "ivory", "olive", "teal"];
    ItemCorpus::new(
        (0..n_items).map(|i| format!("i{i}")).collect(),
        (0..n_items)
            .map(|i| format!("{} {} {}", words[i % 8], words[(i / 8) % 8], words[(i * 5 + 1) % 8]))
            .collect(),
    )
    .unwrap()
}

/// Random frozen embeddings aligned with `i0..i{n-1}`.
pub fn frozen_file(dir: &Path, n_items: usize, e: usize, seed: u64) -> PathBuf {
    let mut r = rng(seed);
    let data: Vec<f64> = (0..n_items * e).map(|_| r.gen_range(-1.0..1.0)).collect();
    let path = dir.join(format!("frozen-{seed}.bin"));
    let header = MatrixHeader::new(
        matfile::KIND_EMBEDDINGS,
        n_items,
        e,
        Precision::F64,
        (0..n_items).map(|i| format!("i{i}")).collect(),
        false,
    );
    matfile::write(&path, &header, &data).unwrap();
    path
}

/// Raw CSV interactions with ratings and timestamps plus JSONL item texts.
/// Ratings below 4 and the text-less item `m99` are filtered out by `prepare`;
/// items `m{i}` and `m{i+15}` share a text.
pub fn write_raw_fixture(dir: &Path, n_users: usize, seed: u64) -> (PathBuf, PathBuf) {
    let mut r = rng(seed);
    let n_items = 30;
    let inter = dir.join("interactions.csv");
    let mut f = std::fs::File::create(&inter).unwrap();
    writeln!(f, "user_id,item_id,rating,timestamp").unwrap();
    for u in 0..n_users {
        let c = u % 3;
        for _ in 0..9 {
            let i = c + 3 * r.gen_range(0..n_items / 3);
            let rating = if r.gen_bool(0.8) { 5 } else { 2 };
            let t = 1_600_000_000 + r.gen_range(0..100_000i64);
            writeln!(f, "user{u},m{i},{rating},{t}").unwrap();
        }
        if u % 4 == 0 {
            writeln!(f, "user{u},m99,5,1600000000").unwrap();
        }
    }
    let items = dir.join("items.jsonl");
    let mut f = std::fs::File::create(&items).unwrap();
    let genre = ["space opera starship", "haunted manor ghost", "detective murder clue"];
    for i in 0..n_items {
        let text = format!("{} volume {}", genre[i % 3], (i / 3) % 5);
        writeln!(f, "{}", serde_json::json!({"item_id": format!("m{i}"), "text": text})).unwrap();
    }
    (inter, items)
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_beeformer"))
}

pub fn run_ok(args: &[&str]) -> PathBuf {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "beeformer {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    run_dir(&out)
}

pub fn run_dir(out: &Output) -> PathBuf {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout
        .lines()
        .find_map(|l| l.strip_prefix("run_dir="))
        .expect("run_dir line");
    PathBuf::from(line)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn interactions_of(x: &InteractionMatrix) -> Vec<Interaction> {
    x.interactions()
}
