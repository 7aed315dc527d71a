//! Topic-model diagnostics: LDA over the EDU text of a corpus, a 2-D
//! projection of the document-topic vectors and an SVG scatter plot.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::Record;

pub const STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Bag-of-words corpus over a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct BagOfWords {
    pub vocab: Vec<String>,
    /// Word ids per document, in text order.
    pub docs: Vec<Vec<usize>>,
}

impl BagOfWords {
    pub fn token_count(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }
}

pub fn stopword_set() -> HashSet<String> {
    STOPWORDS
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(str::split_whitespace)
        .map(str::to_string)
        .collect()
}

/// Lowercases, strips punctuation, drops stop words and words seen fewer
/// than `min_count` times in the whole corpus.
pub fn preprocess(texts: &[String], stopwords: &HashSet<String>, min_count: usize) -> BagOfWords {
    let tokenized: Vec<Vec<String>> = texts
        .iter()
        .map(|t| {
            t.to_lowercase()
                .split(|c: char| !c.is_alphanumeric())
                .filter(|w| !w.is_empty() && !stopwords.contains(*w) && !w.chars().all(|c| c.is_numeric()))
                .map(str::to_string)
                .collect()
        })
        .collect();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for d in &tokenized {
        for w in d {
            *counts.entry(w.as_str()).or_default() += 1;
        }
    }
    let vocab: Vec<String> = counts
        .iter()
        .filter(|(_, c)| **c >= min_count)
        .map(|(w, _)| w.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let docs = tokenized
        .iter()
        .map(|d| d.iter().filter_map(|w| index.get(w.as_str()).copied()).collect())
        .collect();
    BagOfWords { vocab, docs }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            k: 5,
            iterations: 1000,
            alpha: 0.1,
            beta: 0.01,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub vocab: Vec<String>,
    /// Topic-word distributions, `k × V`.
    pub phi: Vec<Vec<f64>>,
    /// Document-topic distributions, `D × k`.
    pub theta: Vec<Vec<f64>>,
    /// Tokens assigned to each topic by the final sweep.
    pub topic_tokens: Vec<usize>,
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

/// LDA by collapsed Gibbs sampling.
pub fn fit_lda(bow: &BagOfWords, cfg: &LdaConfig) -> Result<TopicModel> {
    let (k, v) = (cfg.k, bow.vocab.len());
    if k == 0 {
        return Err(Error::Analysis("need at least one topic".into()));
    }
    if v == 0 || bow.token_count() == 0 {
        return Err(Error::Analysis("empty vocabulary after preprocessing".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut n_dk = vec![vec![0usize; k]; bow.docs.len()];
    let mut n_kw = vec![vec![0usize; v]; k];
    let mut n_k = vec![0usize; k];
    let mut z: Vec<Vec<usize>> = bow
        .docs
        .iter()
        .enumerate()
        .map(|(d, words)| {
            words
                .iter()
                .map(|&w| {
                    let t = rng.gen_range(0..k);
                    n_dk[d][t] += 1;
                    n_kw[t][w] += 1;
                    n_k[t] += 1;
                    t
                })
                .collect()
        })
        .collect();
    let vbeta = v as f64 * cfg.beta;
    let mut p = vec![0.0; k];
    for _ in 0..cfg.iterations {
        for (d, words) in bow.docs.iter().enumerate() {
            for (i, &w) in words.iter().enumerate() {
                let old = z[d][i];
                n_dk[d][old] -= 1;
                n_kw[old][w] -= 1;
                n_k[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (n_dk[d][t] as f64 + cfg.alpha) * (n_kw[t][w] as f64 + cfg.beta)
                        / (n_k[t] as f64 + vbeta);
                    p[t] = total;
                }
                let u = rng.gen::<f64>() * total;
                let new = p.iter().position(|&c| u < c).unwrap_or(k - 1);
                z[d][i] = new;
                n_dk[d][new] += 1;
                n_kw[new][w] += 1;
                n_k[new] += 1;
            }
        }
    }
    let phi = (0..k)
        .map(|t| {
            let mut row: Vec<f64> = n_kw[t].iter().map(|&c| c as f64 + cfg.beta).collect();
            normalize(&mut row);
            row
        })
        .collect();
    let theta = n_dk
        .iter()
        .map(|counts| {
            let mut row: Vec<f64> = counts.iter().map(|&c| c as f64 + cfg.alpha).collect();
            normalize(&mut row);
            row
        })
        .collect();
    Ok(TopicModel {
        k,
        vocab: bow.vocab.clone(),
        phi,
        theta,
        topic_tokens: n_k,
    })
}

/// The `n` most probable words of `topic`; ties are broken alphabetically.
pub fn top_keywords(model: &TopicModel, topic: usize, n: usize) -> Result<Vec<String>> {
    let row = model
        .phi
        .get(topic)
        .ok_or_else(|| Error::Analysis(format!("topic {topic} out of range (k = {})", model.k)))?;
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then_with(|| model.vocab[a].cmp(&model.vocab[b])));
    Ok(idx.into_iter().take(n).map(|i| model.vocab[i].clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    Pca,
    Tsne,
}

impl std::str::FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(Projection::Pca),
            "tsne" => Ok(Projection::Tsne),
            other => Err(Error::Config(format!("unknown projection {other:?}"))),
        }
    }
}

/// Projects rows to 2-D.
pub fn project_2d(rows: &[Vec<f64>], method: Projection, seed: u64) -> Result<Vec<[f64; 2]>> {
    if rows.len() < 3 {
        return Err(Error::Analysis(format!(
            "projection needs at least 3 documents, got {}",
            rows.len()
        )));
    }
    let out = match method {
        Projection::Pca => pca(rows),
        Projection::Tsne => tsne(rows, 30.0, 1000, seed),
    };
    if out.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite projection coordinate".into()));
    }
    Ok(out)
}

/// Projection onto the two leading principal axes. Each axis is signed so
/// that its largest-magnitude loading is positive.
pub fn pca(rows: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let (n, d) = (rows.len(), rows[0].len());
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = x.transpose() * &x / (n as f64);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axis = |c: usize| -> Option<Vec<f64>> {
        let col = order.get(c)?;
        let mut v: Vec<f64> = eig.eigenvectors.column(*col).iter().copied().collect();
        let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        Some(v)
    };
    let (a, b) = (axis(0), axis(1));
    (0..n)
        .map(|i| {
            let proj = |ax: &Option<Vec<f64>>| {
                ax.as_ref()
                    .map_or(0.0, |v| (0..d).map(|j| x[(i, j)] * v[j]).sum())
            };
            [proj(&a), proj(&b)]
        })
        .collect()
}

/// Exact t-SNE with early exaggeration and adaptive gains.
pub fn tsne(rows: &[Vec<f64>], perplexity: f64, iterations: usize, seed: u64) -> Vec<[f64; 2]> {
    let n = rows.len();
    let perplexity = perplexity.min((n as f64 - 1.0) / 3.0).max(1.0);
    let d2: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect()
        })
        .collect();
    // Conditional probabilities with per-point bandwidth matched to the perplexity.
    let target = perplexity.ln();
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        let (mut lo, mut hi, mut beta) = (0.0, f64::INFINITY, 1.0);
        for _ in 0..100 {
            let mut sum = 0.0;
            let mut hsum = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let v = (-beta * d2[i][j]).exp();
                p[i][j] = v;
                sum += v;
                hsum += beta * d2[i][j] * v;
            }
            if sum == 0.0 {
                hi = beta;
                beta = (lo + hi) / 2.0;
                continue;
            }
            let entropy = sum.ln() + hsum / sum;
            p[i].iter_mut().for_each(|v| *v /= sum);
            if (entropy - target).abs() < 1e-5 {
                break;
            }
            if entropy > target {
                lo = beta;
                beta = if hi.is_infinite() { beta * 2.0 } else { (lo + hi) / 2.0 };
            } else {
                hi = beta;
                beta = (lo + hi) / 2.0;
            }
        }
        p[i][i] = 0.0;
    }
    let mut pij = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            pij[i][j] = ((p[i][j] + p[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.gen_range(-1e-4..1e-4), rng.gen_range(-1e-4..1e-4)])
        .collect();
    let mut vel = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    let lr = 200.0;
    for it in 0..iterations {
        let exaggeration = if it < 250 { 12.0 } else { 1.0 };
        let momentum = if it < 250 { 0.5 } else { 0.8 };
        let mut num = vec![vec![0.0; n]; n];
        let mut z = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i][j] = q;
                num[j][i] = q;
                z += 2.0 * q;
            }
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in (0..n).filter(|&j| j != i) {
                let mult = 4.0 * (exaggeration * pij[i][j] - num[i][j] / z) * num[i][j];
                grad[0] += mult * (y[i][0] - y[j][0]);
                grad[1] += mult * (y[i][1] - y[j][1]);
            }
            for c in 0..2 {
                gains[i][c] = if (grad[c] > 0.0) != (vel[i][c] > 0.0) {
                    gains[i][c] + 0.2
                } else {
                    (gains[i][c] * 0.8f64).max(0.01)
                };
                vel[i][c] = momentum * vel[i][c] - lr * gains[i][c] * grad[c];
            }
        }
        for i in 0..n {
            y[i][0] += vel[i][0];
            y[i][1] += vel[i][1];
        }
        let cx = y.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let cy = y.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        y.iter_mut().for_each(|p| {
            p[0] -= cx;
            p[1] -= cy;
        });
    }
    y
}

/// Mean silhouette coefficient of labeled 2-D points.
pub fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> f64 {
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mean_to = |c: usize| {
            let ds: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i && labels[*j] == c)
                .map(|(_, q)| dist(p, q))
                .collect();
            (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64)
        };
        let Some(a) = mean_to(labels[i]) else { continue };
        let b = clusters
            .iter()
            .filter(|&&c| c != labels[i])
            .filter_map(|&c| mean_to(c))
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() && a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / points.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub doc_id: String,
    /// Treebank the document came from.
    pub label: String,
    pub x: f64,
    pub y: f64,
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the points as an SVG scatter plot, one color per label, with a
/// label legend and one keyword line per topic.
pub fn render_scatter(points: &[ProjectedPoint], keywords: &[Vec<String>]) -> Result<String> {
    if points.is_empty() {
        return Err(Error::Contract("scatter plot needs at least one point".into()));
    }
    let labels: Vec<&str> = points
        .iter()
        .map(|p| p.label.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let color: HashMap<&str, &str> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (*l, PALETTE[i % PALETTE.len()]))
        .collect();
    let (w, h, pad) = (640.0, 480.0, 40.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let sx = |x: f64| pad + if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.5 } * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - if y1 > y0 { (y - y0) / (y1 - y0) } else { 0.5 } * (h - 2.0 * pad);
    let legend_h = 20.0 * (labels.len() + keywords.len()) as f64 + 20.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{}" font-family="sans-serif" font-size="12">"#,
        h + legend_h
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for p in points {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}" fill-opacity="0.8"><title>{}</title></circle>"#,
            sx(p.x),
            sy(p.y),
            color[p.label.as_str()],
            escape(&p.doc_id)
        );
    }
    let mut y = h + 10.0;
    for l in &labels {
        let _ = writeln!(
            svg,
            r#"<g class="legend"><rect x="{pad}" y="{y}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text></g>"#,
            color[l],
            pad + 16.0,
            y + 9.0,
            escape(l)
        );
        y += 20.0;
    }
    for (t, words) in keywords.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text class="topic" x="{pad}" y="{}">Topic {}: {}</text>"#,
            y + 9.0,
            t + 1,
            escape(&words.join(", "))
        );
        y += 20.0;
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_scatter(points: &[ProjectedPoint], keywords: &[Vec<String>], out: &Path) -> Result<()> {
    let svg = render_scatter(points, keywords)?;
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub lda: LdaConfig,
    pub projection: Projection,
    pub min_count: usize,
    pub keywords: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            lda: LdaConfig::default(),
            projection: Projection::Tsne,
            min_count: 3,
            keywords: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentTopics {
    pub doc_id: String,
    pub label: String,
    pub theta: Vec<f64>,
    pub x: f64,
    pub y: f64,
}

/// Contents of `topics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub k: usize,
    pub keywords: Vec<Vec<String>>,
    pub documents: Vec<DocumentTopics>,
}

impl AnalysisResult {
    pub fn points(&self) -> Vec<ProjectedPoint> {
        self.documents
            .iter()
            .map(|d| ProjectedPoint {
                doc_id: d.doc_id.clone(),
                label: d.label.clone(),
                x: d.x,
                y: d.y,
            })
            .collect()
    }
}

/// Treebank label of a record: its source treebank, else its language.
pub fn treebank_label(r: &Record) -> String {
    if r.doc.source_treebank.is_empty() {
        r.doc.lang.clone()
    } else {
        r.doc.source_treebank.clone()
    }
}

/// Fits topics over the documents' EDU text and projects them to 2-D.
pub fn analyze_corpus(corpus: &[Record], cfg: &AnalysisConfig) -> Result<AnalysisResult> {
    let texts: Vec<String> = corpus.iter().map(|r| r.doc.edu_texts().join(" ")).collect();
    let bow = preprocess(&texts, &stopword_set(), cfg.min_count);
    let model = fit_lda(&bow, &cfg.lda)?;
    let coords = project_2d(&model.theta, cfg.projection, cfg.lda.seed)?;
    let keywords = (0..model.k)
        .map(|t| top_keywords(&model, t, cfg.keywords))
        .collect::<Result<_>>()?;
    let documents = corpus
        .iter()
        .zip(model.theta)
        .zip(coords)
        .map(|((r, theta), c)| DocumentTopics {
            doc_id: r.doc.doc_id.clone(),
            label: treebank_label(r),
            theta,
            x: c[0],
            y: c[1],
        })
        .collect();
    Ok(AnalysisResult {
        k: model.k,
        keywords,
        documents,
    })
}

/// Majority-topic purity of documents against planted classes.
pub fn purity(theta: &[Vec<f64>], classes: &[usize]) -> f64 {
    let mut table: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (row, &c) in theta.iter().zip(classes) {
        let topic = crate::model::tape::argmax(row);
        *table.entry(topic).or_default().entry(c).or_default() += 1;
    }
    let hits: usize = table.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    hits as f64 / theta.len() as f64
}
