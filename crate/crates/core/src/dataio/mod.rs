//! Data ingestion and file formats.

pub mod bundle;
pub mod matfile;
pub mod raw;

use std::path::Path;

pub use bundle::{BundleMetadata, DatasetBundle};
pub use raw::{
    filter_users, implicitize, join_texts, load_interactions, load_texts, ColumnMap, Delimited, DEFAULT_MAX_MALFORMED,
    FilterConfig, FilterStage, RawInteractions, RawRecord, TextFormat,
};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::recsys::EmbeddingMatrix;
use matfile::{MatrixHeader, Precision};

pub fn export_embeddings(emb: &EmbeddingMatrix, path: &Path, precision: Precision) -> Result<()> {
    let header = MatrixHeader::new(
        matfile::KIND_EMBEDDINGS,
        emb.n_items(),
        emb.dim(),
        precision,
        emb.item_ids.clone(),
        emb.normalized,
    );
    matfile::write(path, &header, emb.a.as_slice())
}

/// Reads an embedding file together with its stored precision.
pub fn import_embeddings(path: &Path) -> Result<(EmbeddingMatrix, Precision)> {
    let (header, data) = matfile::read(path)?;
    if header.kind != matfile::KIND_EMBEDDINGS {
        return Err(Error::corrupt(
            path,
            format!("expected embeddings, found {}", header.kind),
        ));
    }
    if header.item_ids.len() != header.n_rows {
        return Err(Error::corrupt(path, "embedding file lacks item ids"));
    }
    let emb = EmbeddingMatrix {
        a: DenseMatrix::from_vec(header.n_rows, header.n_cols, data)?,
        item_ids: header.item_ids,
        normalized: header.normalized,
    };
    Ok((emb, header.precision))
}

/// Like [`import_embeddings`] but fails unless the file covers exactly
/// `item_ids`, in that order.
pub fn import_embeddings_for(path: &Path, item_ids: &[String]) -> Result<EmbeddingMatrix> {
    let (emb, _) = import_embeddings(path)?;
    if emb.item_ids != item_ids {
        let first = emb
            .item_ids
            .iter()
            .zip(item_ids)
            .position(|(a, b)| a != b)
            .unwrap_or(emb.item_ids.len().min(item_ids.len()));
        return Err(Error::Data(format!(
            "embedding catalog ({} items) does not match the dataset ({} items); first difference at row {first}",
            emb.item_ids.len(),
            item_ids.len()
        )));
    }
    Ok(emb)
}
