//! Raw interaction files, explicit-to-implicit conversion and text joins.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoders::ItemCorpus;
use crate::error::{Error, Result};
use crate::sparse::{Interaction, InteractionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimited {
    Csv,
    Tsv,
}

impl Delimited {
    fn byte(self) -> u8 {
        match self {
            Delimited::Csv => b',',
            Delimited::Tsv => b'\t',
        }
    }

    /// `.tsv` files are tab separated, everything else comma separated.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("tsv") => Delimited::Tsv,
            _ => Delimited::Csv,
        }
    }
}

impl FromStr for Delimited {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Delimited::Csv),
            "tsv" => Ok(Delimited::Tsv),
            _ => Err(Error::Config(format!("unknown interaction format {s:?}"))),
        }
    }
}

/// Header names of the interaction columns. Rating and timestamp are read
/// only when named.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub user: String,
    pub item: String,
    pub rating: Option<String>,
    pub timestamp: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            user: "user_id".into(),
            item: "item_id".into(),
            rating: None,
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub user: String,
    pub item: String,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalformedLine {
    /// 1-based line number, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInteractions {
    pub records: Vec<RawRecord>,
    pub data_lines: u64,
    pub malformed: Vec<MalformedLine>,
}

pub const DEFAULT_MAX_MALFORMED: f64 = 0.01;

/// Streams a delimited interaction file. Malformed lines are skipped and
/// reported; more than `max_malformed` (a fraction of data lines) is an error.
pub fn load_interactions(
    path: &Path,
    format: Delimited,
    columns: &ColumnMap,
    max_malformed: f64,
) -> Result<RawInteractions> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.byte())
        .flexible(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: unreadable header: {e}", path.display())))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("{}: missing column {name:?}", path.display())))
    };
    let user_col = find(&columns.user)?;
    let item_col = find(&columns.item)?;
    let rating_col = columns.rating.as_deref().map(find).transpose()?;
    let ts_col = columns.timestamp.as_deref().map(find).transpose()?;

    let mut out = RawInteractions {
        records: Vec::new(),
        data_lines: 0,
        malformed: Vec::new(),
    };
    for (k, rec) in reader.records().enumerate() {
        out.data_lines += 1;
        let line = k as u64 + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.malformed.push(MalformedLine { line, reason: e.to_string() });
                continue;
            }
        };
        match parse_record(&rec, headers.len(), user_col, item_col, rating_col, ts_col) {
            Ok(r) => out.records.push(r),
            Err(reason) => out.malformed.push(MalformedLine { line, reason }),
        }
    }
    if out.data_lines == 0 {
        log::warn!("{}: no interaction records", path.display());
    }
    let bad = out.malformed.len() as f64;
    if bad > 0.0 && bad > max_malformed * out.data_lines as f64 {
        let first = &out.malformed[0];
        return Err(Error::Data(format!(
            "{}: {} of {} lines malformed (first at line {}: {})",
            path.display(),
            out.malformed.len(),
            out.data_lines,
            first.line,
            first.reason
        )));
    }
    for m in &out.malformed {
        log::warn!("{}:{}: skipped: {}", path.display(), m.line, m.reason);
    }
    Ok(out)
}

fn parse_record(
    rec: &csv::StringRecord,
    n_fields: usize,
    user_col: usize,
    item_col: usize,
    rating_col: Option<usize>,
    ts_col: Option<usize>,
) -> std::result::Result<RawRecord, String> {
    if rec.len() != n_fields {
        return Err(format!("expected {n_fields} fields, found {}", rec.len()));
    }
    let field = |c: usize| rec.get(c).unwrap_or("").trim();
    let user = field(user_col);
    let item = field(item_col);
    if user.is_empty() || item.is_empty() {
        return Err("empty user or item id".into());
    }
    let rating = rating_col
        .map(|c| {
            let v: f64 = field(c).parse().map_err(|_| format!("bad rating {:?}", field(c)))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite rating {v}"))
            }
        })
        .transpose()?;
    let timestamp = ts_col
        .map(|c| field(c).parse::<i64>().map_err(|_| format!("bad timestamp {:?}", field(c))))
        .transpose()?;
    Ok(RawRecord {
        user: user.to_owned(),
        item: item.to_owned(),
        rating,
        timestamp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Ratings below this are dropped; `None` keeps every record.
    pub rating_threshold: Option<f64>,
    pub min_user_interactions: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            rating_threshold: Some(4.0),
            min_user_interactions: 5,
        }
    }
}

/// Counts after one filtering stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStage {
    pub stage: String,
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
}

impl FilterStage {
    fn of(stage: &str, x: &InteractionMatrix) -> Self {
        Self {
            stage: stage.to_owned(),
            users: x.n_users(),
            items: x.n_items(),
            interactions: x.nnz(),
        }
    }
}

/// Thresholds ratings, collapses duplicates (earliest timestamp wins) and
/// drops users below the interaction minimum. IDs are indexed in order of
/// first appearance.
pub fn implicitize(
    raw: &RawInteractions,
    cfg: &FilterConfig,
) -> Result<(InteractionMatrix, Vec<FilterStage>)> {
    let mut kept: Vec<&RawRecord> = Vec::with_capacity(raw.records.len());
    for r in &raw.records {
        match (cfg.rating_threshold, r.rating) {
            (None, _) => kept.push(r),
            (Some(t), Some(v)) => {
                if v >= t {
                    kept.push(r)
                }
            }
            (Some(_), None) => {
                return Err(Error::Data(
                    "rating threshold set but records carry no ratings".into(),
                ))
            }
        }
    }
    let x = index_records(&kept)?;
    let mut stages = vec![FilterStage {
        stage: "input".into(),
        users: count_distinct(raw.records.iter().map(|r| r.user.as_str())),
        items: count_distinct(raw.records.iter().map(|r| r.item.as_str())),
        interactions: raw.records.len(),
    }];
    stages.push(FilterStage::of("rating-threshold+dedup", &x));
    let x = filter_users(&x, cfg.min_user_interactions)?;
    stages.push(FilterStage::of("min-user-interactions", &x));
    if x.nnz() == 0 {
        return Err(Error::Data("no interactions survive filtering".into()));
    }
    Ok((x, stages))
}

fn count_distinct<'a>(it: impl Iterator<Item = &'a str>) -> usize {
    it.collect::<std::collections::HashSet<_>>().len()
}

fn index_records(records: &[&RawRecord]) -> Result<InteractionMatrix> {
    let mut users: HashMap<&str, usize> = HashMap::new();
    let mut items: HashMap<&str, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut interactions = Vec::with_capacity(records.len());
    for r in records {
        let u = *users.entry(&r.user).or_insert_with(|| {
            user_ids.push(r.user.clone());
            user_ids.len() - 1
        });
        let i = *items.entry(&r.item).or_insert_with(|| {
            item_ids.push(r.item.clone());
            item_ids.len() - 1
        });
        interactions.push(Interaction {
            user: u,
            item: i,
            timestamp: r.timestamp,
        });
    }
    InteractionMatrix::from_interactions(user_ids, item_ids, &interactions)
}

/// Drops users with fewer than `min` interactions, then items left without
/// any interaction. Neither removal can push a remaining user below `min`.
pub fn filter_users(x: &InteractionMatrix, min: usize) -> Result<InteractionMatrix> {
    let keep_user: Vec<bool> = (0..x.n_users()).map(|u| x.user_items(u).len() >= min.max(1)).collect();
    let counts = {
        let mut c = vec![0usize; x.n_items()];
        for u in (0..x.n_users()).filter(|&u| keep_user[u]) {
            for &i in x.user_items(u) {
                c[i] += 1;
            }
        }
        c
    };
    let user_map = remap(&keep_user);
    let item_map = remap(&counts.iter().map(|&c| c > 0).collect::<Vec<_>>());
    let interactions: Vec<Interaction> = x
        .interactions()
        .into_iter()
        .filter_map(|it| {
            Some(Interaction {
                user: user_map[it.user]?,
                item: item_map[it.item]?,
                timestamp: it.timestamp,
            })
        })
        .collect();
    let pick = |ids: &[String], map: &[Option<usize>]| -> Vec<String> {
        ids.iter()
            .zip(map)
            .filter(|(_, m)| m.is_some())
            .map(|(id, _)| id.clone())
            .collect()
    };
    InteractionMatrix::from_interactions(
        pick(x.user_ids(), &user_map),
        pick(x.item_ids(), &item_map),
        &interactions,
    )
}

fn remap(keep: &[bool]) -> Vec<Option<usize>> {
    let mut next = 0;
    keep.iter()
        .map(|&k| {
            k.then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextFormat {
    Csv,
    Jsonl,
}

impl TextFormat {
    /// `.jsonl`/`.json` files are JSON lines, everything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => TextFormat::Jsonl,
            _ => TextFormat::Csv,
        }
    }
}

#[derive(Debug, Deserialize)]
struct TextRow {
    item_id: String,
    text: String,
}

/// Reads `item_id → text` from a CSV (`item_id,text` header) or JSON-lines
/// file of `{"item_id": .., "text": ..}` objects. Later entries win.
pub fn load_texts(path: &Path, format: TextFormat) -> Result<HashMap<String, String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    match format {
        TextFormat::Csv => {
            let mut r = csv::Reader::from_reader(file);
            for (k, row) in r.deserialize::<TextRow>().enumerate() {
                let row = row.map_err(|e| {
                    Error::Data(format!("{}: line {}: {e}", path.display(), k + 2))
                })?;
                out.insert(row.item_id, row.text);
            }
        }
        TextFormat::Jsonl => {
            for (k, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: TextRow = serde_json::from_str(&line).map_err(|e| {
                    Error::Data(format!("{}: line {}: {e}", path.display(), k + 1))
                })?;
                out.insert(row.item_id, row.text);
            }
        }
    }
    Ok(out)
}

/// Removes items without a nonempty description, re-applies the user
/// minimum and returns the matrix with its aligned corpus.
pub fn join_texts(
    x: &InteractionMatrix,
    texts: &HashMap<String, String>,
    min_user_interactions: usize,
) -> Result<(InteractionMatrix, ItemCorpus, Vec<FilterStage>)> {
    let with_text: Vec<usize> = (0..x.n_items())
        .filter(|&i| texts.get(&x.item_ids()[i]).is_some_and(|t| !t.trim().is_empty()))
        .collect();
    if with_text.is_empty() {
        return Err(Error::Data("no item has a description".into()));
    }
    let restricted = x.restrict_items(&with_text)?;
    let mut stages = vec![FilterStage::of("items-with-text", &restricted)];
    let filtered = filter_users(&restricted, min_user_interactions)?;
    stages.push(FilterStage::of("min-user-interactions", &filtered));
    if filtered.nnz() == 0 {
        return Err(Error::Data("no interactions survive the text join".into()));
    }
    let corpus = ItemCorpus::new(
        filtered.item_ids().to_vec(),
        filtered.item_ids().iter().map(|id| texts[id].clone()).collect(),
    )?;
    Ok((filtered, corpus, stages))
}
