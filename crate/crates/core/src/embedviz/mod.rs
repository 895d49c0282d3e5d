//! Analysis of the learned condition embeddings: exact t-SNE to 2-D, k-means
//! clustering of the projection, and per-cluster EOL/ECL annotation.

mod kmeans;
mod tsne;

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use kmeans::{cluster, KMeansResult, MAX_ITERATIONS, MOVEMENT_TOLERANCE};
pub use tsne::{
    conditional_affinities, pairwise_sq_distances, tsne_2d, TsneConfig, TsneResult, ENTROPY_TOLERANCE,
};

use crate::labels::{EmbeddingTable, LabelKey, LabelVocab};
use crate::numcore::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAnnotation {
    pub cluster: usize,
    pub members: Vec<LabelKey>,
    pub mean_eol: f64,
    pub mean_ecl: f64,
    /// Label distance of `(mean_eol, mean_ecl)` from the `(0, 0)` condition.
    pub origin_distance: f64,
}

/// Groups the vocabulary by cluster and averages EOL and ECL per group.
/// Cluster ids below the largest one that have no members are dropped with a
/// warning.
pub fn annotate(assignments: &[usize], vocab: &LabelVocab, weight: f64) -> Result<Vec<ClusterAnnotation>> {
    if assignments.len() != vocab.len() {
        return Err(Error::Dimension(format!(
            "{} assignments for {} labels",
            assignments.len(),
            vocab.len()
        )));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<LabelKey>> = vec![Vec::new(); k];
    for (&a, key) in assignments.iter().zip(vocab.keys()) {
        groups[a].push(*key);
    }
    let mut out = Vec::with_capacity(k);
    for (cluster, members) in groups.into_iter().enumerate() {
        if members.is_empty() {
            log::warn!("cluster {cluster} is empty; dropped from the annotation");
            continue;
        }
        let n = members.len() as f64;
        let mean_eol = members.iter().map(|m| f64::from(m.eol)).sum::<f64>() / n;
        let mean_ecl = members.iter().map(|m| f64::from(m.ecl)).sum::<f64>() / n;
        out.push(ClusterAnnotation {
            cluster,
            members,
            mean_eol,
            mean_ecl,
            origin_distance: weight * mean_eol + (1.0 - weight) * mean_ecl,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeConfig {
    pub tsne: TsneConfig,
    pub clusters: usize,
    pub cluster_seed: u64,
    pub match_weight: f64,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            tsne: TsneConfig::default(),
            clusters: 6,
            cluster_seed: 0,
            match_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingAnalysis {
    pub projection: TsneResult,
    pub clustering: KMeansResult,
    pub annotations: Vec<ClusterAnnotation>,
}

/// Projects the embedding rows, clusters the projection and annotates it.
pub fn analyze(table: &EmbeddingTable, vocab: &LabelVocab, cfg: &AnalyzeConfig) -> Result<EmbeddingAnalysis> {
    if table.len() != vocab.len() {
        return Err(Error::Dimension(format!(
            "{} embedding rows for {} labels",
            table.len(),
            vocab.len()
        )));
    }
    let projection = tsne_2d(&table.weights, &cfg.tsne)?;
    let clustering = cluster(&projection.points, cfg.clusters, cfg.cluster_seed)?;
    let annotations = annotate(&clustering.assignments, vocab, cfg.match_weight)?;
    Ok(EmbeddingAnalysis {
        projection,
        clustering,
        annotations,
    })
}

/// `label,x,y,cluster`, one row per vocabulary label.
pub fn write_points_csv<W: Write>(out: W, vocab: &LabelVocab, points: &Matrix, assignments: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "x", "y", "cluster"])?;
    for (i, key) in vocab.keys().iter().enumerate() {
        w.write_record([
            key.to_string(),
            points.get(i, 0).to_string(),
            points.get(i, 1).to_string(),
            assignments[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `cluster,mean_eol,mean_ecl,origin_distance,size`.
pub fn write_annotations_csv<W: Write>(out: W, annotations: &[ClusterAnnotation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cluster", "mean_eol", "mean_ecl", "origin_distance", "size"])?;
    for a in annotations {
        w.write_record([
            a.cluster.to_string(),
            a.mean_eol.to_string(),
            a.mean_ecl.to_string(),
            a.origin_distance.to_string(),
            a.members.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Scatter plot of the projection coloured by cluster, with each cluster's
/// mean EOL/ECL written at its centroid.
pub fn render_svg(points: &Matrix, assignments: &[usize], annotations: &[ClusterAnnotation]) -> String {
    const SIZE: f64 = 640.0;
    const MARGIN: f64 = 40.0;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for r in 0..points.rows() {
        for c in 0..2 {
            lo[c] = lo[c].min(points.get(r, c));
            hi[c] = hi[c].max(points.get(r, c));
        }
    }
    let project = |v: f64, c: usize| {
        let span = (hi[c] - lo[c]).max(1e-12);
        let t = (v - lo[c]) / span;
        MARGIN + (SIZE - 2.0 * MARGIN) * if c == 0 { t } else { 1.0 - t }
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (r, &a) in assignments.iter().enumerate() {
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.8\"/>",
            project(points.get(r, 0), 0),
            project(points.get(r, 1), 1),
            PALETTE[a % PALETTE.len()]
        );
    }
    for ann in annotations {
        let rows: Vec<usize> = (0..assignments.len()).filter(|&r| assignments[r] == ann.cluster).collect();
        let n = rows.len() as f64;
        let cx = rows.iter().map(|&r| points.get(r, 0)).sum::<f64>() / n;
        let cy = rows.iter().map(|&r| points.get(r, 1)).sum::<f64>() / n;
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">C{}: EOL {:.0}, ECL {:.0}</text>",
            project(cx, 0),
            project(cy, 1),
            ann.cluster,
            ann.mean_eol,
            ann.mean_ecl
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn vocab(pairs: &[(u32, u32)]) -> LabelVocab {
        let keys: Vec<LabelKey> = pairs.iter().map(|&(e, c)| LabelKey::new(e, c).unwrap()).collect();
        LabelVocab::build(&keys).unwrap()
    }

    #[test]
    fn annotation_arithmetic() {
        let v = vocab(&[(800, 10), (900, 30)]);
        let a = annotate(&[0, 0], &v, 0.5).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!((a[0].mean_eol, a[0].mean_ecl, a[0].origin_distance), (850.0, 20.0, 435.0));
    }

    #[test]
    fn single_member_and_partition() {
        let v = vocab(&[(800, 10), (900, 30), (1200, 5)]);
        let a = annotate(&[1, 0, 1], &v, 0.5).unwrap();
        let single = a.iter().find(|c| c.members.len() == 1).unwrap();
        let k = single.members[0];
        assert_eq!((single.mean_eol, single.mean_ecl), (f64::from(k.eol), f64::from(k.ecl)));
        let mut union: Vec<LabelKey> = a.iter().flat_map(|c| c.members.clone()).collect();
        union.sort();
        let mut all = v.keys().to_vec();
        all.sort();
        assert_eq!(union, all);
    }

    #[test]
    fn empty_cluster_dropped() {
        let v = vocab(&[(800, 10), (900, 30)]);
        let a = annotate(&[0, 2], &v, 0.5).unwrap();
        assert_eq!(a.iter().map(|c| c.cluster).collect::<Vec<_>>(), vec![0, 2]);
        assert!(annotate(&[0], &v, 0.5).is_err());
    }

    #[test]
    fn blobs_survive_projection_and_clustering() {
        let mut rng = Rng::seed_from(6);
        let mut e = Matrix::zeros(20, 16);
        for r in 0..20 {
            let offset = if r < 10 { 0.0 } else { 25.0 };
            for c in 0..16 {
                e.set(r, c, offset + rng.normal());
            }
        }
        let same = |i: usize, j: usize| (i < 10) == (j < 10);
        for seed in 0..4 {
            let cfg = TsneConfig {
                perplexity: 5.0,
                seed,
                ..Default::default()
            };
            let y = tsne_2d(&e, &cfg).unwrap().points;
            let d = |i: usize, j: usize| ((y.get(i, 0) - y.get(j, 0)).powi(2) + (y.get(i, 1) - y.get(j, 1)).powi(2)).sqrt();
            let pairs = (0..20).flat_map(|i| (0..20).map(move |j| (i, j))).filter(|&(i, j)| i != j);
            let max_intra = pairs.clone().filter(|&(i, j)| same(i, j)).map(|(i, j)| d(i, j)).fold(0.0, f64::max);
            let min_inter = pairs.filter(|&(i, j)| !same(i, j)).map(|(i, j)| d(i, j)).fold(f64::INFINITY, f64::min);
            assert!(min_inter > max_intra, "seed {seed}: inter {min_inter} intra {max_intra}");
            let k = cluster(&y, 2, seed).unwrap().assignments;
            assert!(k[..10].iter().all(|&a| a == k[0]) && k[10..].iter().all(|&a| a != k[0]));
        }
    }

    #[test]
    fn outputs_have_headers() {
        let v = vocab(&[(800, 10), (900, 30)]);
        let pts = Matrix::from_rows(&[&[0.0, 1.0], &[2.0, 3.0]]).unwrap();
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &v, &pts, &[0, 1]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("label,x,y,cluster\n800_10,0,1,0\n"));
        let ann = annotate(&[0, 1], &v, 0.5).unwrap();
        let mut buf = Vec::new();
        write_annotations_csv(&mut buf, &ann).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("cluster,mean_eol,mean_ecl,origin_distance,size\n0,800,10,405,1\n"));
        let svg = render_svg(&pts, &[0, 1], &ann);
        assert!(svg.starts_with("<svg") && svg.contains("C1: EOL 900, ECL 30"));
    }
}
