use super::representations::RepresentationSet;
use crate::error::{Error, Result};

fn unit_rows(set: &RepresentationSet, what: &str) -> Result<Vec<Vec<f64>>> {
    (0..set.len())
        .map(|i| {
            let r = set.row(i);
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::numeric(format!("{what} row {i} has zero norm")));
            }
            Ok(r.iter().map(|v| v / norm).collect())
        })
        .collect()
}

/// Index of the most cosine-similar gallery row for every query; ties go to the lowest index.
pub fn nearest_neighbours(queries: &RepresentationSet, gallery: &RepresentationSet) -> Result<Vec<usize>> {
    if gallery.is_empty() {
        return Err(Error::usage("retrieval gallery is empty"));
    }
    if queries.dim() != gallery.dim() {
        return Err(Error::contract("query and gallery widths differ"));
    }
    let g = unit_rows(gallery, "gallery")?;
    let q = unit_rows(queries, "query")?;
    Ok(q.iter()
        .map(|q| {
            let mut best = (0, f64::NEG_INFINITY);
            for (j, g) in g.iter().enumerate() {
                let s: f64 = q.iter().zip(g).map(|(a, b)| a * b).sum();
                if s > best.1 {
                    best = (j, s);
                }
            }
            best.0
        })
        .collect())
}

/// Top-1 accuracy: a query is correct when its nearest gallery row shares its label.
pub fn knn_retrieve(queries: &RepresentationSet, gallery: &RepresentationSet) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::usage("no retrieval queries"));
    }
    let nn = nearest_neighbours(queries, gallery)?;
    let hits = nn.iter().enumerate().filter(|(i, j)| queries.labels[*i] == gallery.labels[**j]).count();
    Ok(hits as f64 / queries.len() as f64)
}
