use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::raw::FilterStage;
use crate::encoders::ItemCorpus;
use crate::error::{Error, Result};
use crate::sparse::{Interaction, InteractionMatrix};

pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const ITEMS_FILE: &str = "items.jsonl";
pub const METADATA_FILE: &str = "metadata.json";
pub const FILTER_REPORT_FILE: &str = "filter_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub density: f64,
    pub has_timestamps: bool,
    pub sources: Vec<String>,
    pub filters: serde_json::Value,
}

/// Aligned interactions and item texts, as written by `prepare`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub interactions: InteractionMatrix,
    pub corpus: ItemCorpus,
    pub metadata: BundleMetadata,
    pub filter_report: Vec<FilterStage>,
}

#[derive(Serialize, Deserialize)]
struct ItemLine {
    item_id: String,
    text: String,
}

impl DatasetBundle {
    pub fn new(
        interactions: InteractionMatrix,
        corpus: ItemCorpus,
        sources: Vec<String>,
        filters: serde_json::Value,
        filter_report: Vec<FilterStage>,
    ) -> Result<Self> {
        corpus.check_aligned(&interactions)?;
        let metadata = BundleMetadata {
            n_users: interactions.n_users(),
            n_items: interactions.n_items(),
            n_interactions: interactions.nnz(),
            density: interactions.density(),
            has_timestamps: interactions.has_timestamps(),
            sources,
            filters,
        };
        Ok(Self {
            interactions,
            corpus,
            metadata,
            filter_report,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let x = &self.interactions;

        let path = dir.join(INTERACTIONS_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        if x.has_timestamps() {
            w.write_record(["user_id", "item_id", "timestamp"]).map_err(csv_err)?;
        } else {
            w.write_record(["user_id", "item_id"]).map_err(csv_err)?;
        }
        for it in x.interactions() {
            let user = &x.user_ids()[it.user];
            let item = &x.item_ids()[it.item];
            match it.timestamp {
                Some(t) => w.write_record([user, item, &t.to_string()]),
                None => w.write_record([user, item]),
            }
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join(ITEMS_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for (id, text) in self.corpus.item_ids().iter().zip(self.corpus.texts()) {
            let line = serde_json::to_string(&ItemLine {
                item_id: id.clone(),
                text: text.clone(),
            })
            .expect("item line serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        write_json(&dir.join(METADATA_FILE), &self.metadata)?;
        write_json(&dir.join(FILTER_REPORT_FILE), &self.filter_report)
    }

    /// Reads a bundle back. Users are indexed in order of first appearance,
    /// items in `items.jsonl` order; counts must agree with the metadata.
    pub fn load(dir: &Path) -> Result<Self> {
        let metadata: BundleMetadata = read_json(&dir.join(METADATA_FILE))?;
        let filter_report: Vec<FilterStage> = read_json(&dir.join(FILTER_REPORT_FILE))?;

        let path = dir.join(ITEMS_FILE);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let (mut item_ids, mut texts) = (Vec::new(), Vec::new());
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.is_empty() {
                continue;
            }
            let it: ItemLine = serde_json::from_str(&line)
                .map_err(|e| Error::corrupt(&path, e.to_string()))?;
            item_ids.push(it.item_id);
            texts.push(it.text);
        }
        let corpus = ItemCorpus::new(item_ids.clone(), texts)?;
        let item_index: std::collections::HashMap<&str, usize> =
            item_ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();

        let path = dir.join(INTERACTIONS_FILE);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let with_ts = r
            .headers()
            .map_err(|e| Error::corrupt(&path, e.to_string()))?
            .len()
            == 3;
        let mut user_index = std::collections::HashMap::new();
        let mut user_ids: Vec<String> = Vec::new();
        let mut interactions = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::corrupt(&path, e.to_string()))?;
            let user = rec[0].to_owned();
            let item = *item_index
                .get(&rec[1])
                .ok_or_else(|| Error::corrupt(&path, format!("unknown item {:?}", &rec[1])))?;
            let timestamp = if with_ts {
                Some(rec[2].parse().map_err(|_| Error::corrupt(&path, "bad timestamp"))?)
            } else {
                None
            };
            let u = *user_index.entry(user.clone()).or_insert_with(|| {
                user_ids.push(user);
                user_ids.len() - 1
            });
            interactions.push(Interaction { user: u, item, timestamp });
        }
        let x = InteractionMatrix::from_interactions(user_ids, item_ids, &interactions)?;
        if (x.n_users(), x.n_items(), x.nnz())
            != (metadata.n_users, metadata.n_items, metadata.n_interactions)
        {
            return Err(Error::corrupt(dir, "bundle contents disagree with metadata counts"));
        }
        Ok(Self {
            interactions: x,
            corpus,
            metadata,
            filter_report,
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::corrupt(path, e.to_string()))
}
