//! Per-query attended-key sets.

use std::collections::BTreeSet;

use crate::error::{param_err, shape_err, Error, Result};
use crate::tensor::Tensor;

/// The support of an attention pattern: for each query row, the strictly
/// increasing list of key indices it may attend to. Soft masks (adaptive
/// span) additionally carry one weight in `[0, 1]` per attended key.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    n_queries: usize,
    n_keys: usize,
    rows: Vec<Vec<usize>>,
    soft: Option<Vec<Vec<f64>>>,
}

impl AttentionMask {
    /// Builds a hard mask, sorting and de-duplicating each row.
    pub fn from_rows(n_keys: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut clean = Vec::with_capacity(rows.len());
        for (q, row) in rows.into_iter().enumerate() {
            let set: BTreeSet<usize> = row.into_iter().collect();
            if let Some(&k) = set.iter().next_back() {
                if k >= n_keys {
                    return Err(shape_err(
                        "AttentionMask",
                        format!("row {q} references key {k} >= {n_keys}"),
                    ));
                }
            }
            clean.push(set.into_iter().collect());
        }
        Ok(Self {
            n_queries: clean.len(),
            n_keys,
            rows: clean,
            soft: None,
        })
    }

    /// Builds a soft mask from `(key, weight)` rows. Keys must be strictly
    /// increasing within a row.
    pub fn from_weighted_rows(n_keys: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut keys = Vec::with_capacity(rows.len());
        let mut weights = Vec::with_capacity(rows.len());
        for (q, row) in rows.into_iter().enumerate() {
            let mut prev = None;
            let mut ks = Vec::with_capacity(row.len());
            let mut ws = Vec::with_capacity(row.len());
            for (k, w) in row {
                if k >= n_keys || prev.is_some_and(|p| p >= k) {
                    return Err(shape_err(
                        "AttentionMask",
                        format!("row {q} keys must be increasing and < {n_keys}"),
                    ));
                }
                if !(0.0..=1.0).contains(&w) {
                    return Err(param_err(format!("soft weight {w} outside [0, 1]")));
                }
                prev = Some(k);
                ks.push(k);
                ws.push(w);
            }
            keys.push(ks);
            weights.push(ws);
        }
        Ok(Self {
            n_queries: keys.len(),
            n_keys,
            rows: keys,
            soft: Some(weights),
        })
    }

    pub fn full(n_queries: usize, n_keys: usize) -> Self {
        Self {
            n_queries,
            n_keys,
            rows: vec![(0..n_keys).collect(); n_queries],
            soft: None,
        }
    }

    pub fn empty(n_queries: usize, n_keys: usize) -> Self {
        Self {
            n_queries,
            n_keys,
            rows: vec![Vec::new(); n_queries],
            soft: None,
        }
    }

    /// Lower-triangular mask used by decoder self-attention.
    pub fn causal(n: usize) -> Self {
        Self {
            n_queries: n,
            n_keys: n,
            rows: (0..n).map(|i| (0..=i).collect()).collect(),
            soft: None,
        }
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    pub fn n_keys(&self) -> usize {
        self.n_keys
    }

    pub fn row(&self, q: usize) -> &[usize] {
        &self.rows[q]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn soft_row(&self, q: usize) -> Option<&[f64]> {
        self.soft.as_ref().map(|s| s[q].as_slice())
    }

    pub fn is_soft(&self) -> bool {
        self.soft.is_some()
    }

    pub fn contains(&self, q: usize, k: usize) -> bool {
        self.rows[q].binary_search(&k).is_ok()
    }

    /// Total number of attended (query, key) cells.
    pub fn cell_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn check_non_empty(&self) -> Result<()> {
        match self.rows.iter().position(Vec::is_empty) {
            Some(row) => Err(Error::EmptyRow { row }),
            None => Ok(()),
        }
    }

    /// Set union of two hard masks of identical dimensions.
    pub fn union(&self, other: &AttentionMask) -> Result<AttentionMask> {
        if (self.n_queries, self.n_keys) != (other.n_queries, other.n_keys) {
            return Err(shape_err(
                "union",
                format!(
                    "{}x{} vs {}x{}",
                    self.n_queries, self.n_keys, other.n_queries, other.n_keys
                ),
            ));
        }
        if self.is_soft() || other.is_soft() {
            return Err(param_err("union of soft masks is undefined"));
        }
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| merge_sorted(a, b))
            .collect();
        Ok(AttentionMask {
            n_queries: self.n_queries,
            n_keys: self.n_keys,
            rows,
            soft: None,
        })
    }

    /// Adds `keys` to query row `q`.
    pub(crate) fn extend_row(&mut self, q: usize, keys: &[usize]) {
        debug_assert!(self.soft.is_none());
        let merged = merge_sorted(&self.rows[q], keys);
        self.rows[q] = merged;
    }

    /// Toggles one (query, key) cell. Used for fault injection.
    pub fn flip(&mut self, q: usize, k: usize) {
        let row = &mut self.rows[q];
        match row.binary_search(&k) {
            Ok(pos) => {
                row.remove(pos);
                if let Some(soft) = &mut self.soft {
                    soft[q].remove(pos);
                }
            }
            Err(pos) => {
                row.insert(pos, k);
                if let Some(soft) = &mut self.soft {
                    soft[q].insert(pos, 1.0);
                }
            }
        }
    }

    /// Dense 0/1 (or soft-weight) matrix view.
    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.n_queries, self.n_keys);
        for (q, row) in self.rows.iter().enumerate() {
            for (pos, &k) in row.iter().enumerate() {
                let w = self.soft.as_ref().map_or(1.0, |s| s[q][pos]);
                t.set(q, k, w);
            }
        }
        t
    }

    /// Text grid: one line per query, `#` attended, `.` not.
    pub fn render_text(&self) -> String {
        let mut out = String::with_capacity(self.n_queries * (self.n_keys + 1));
        for row in &self.rows {
            let mut line = vec![b'.'; self.n_keys];
            for &k in row {
                line[k] = b'#';
            }
            out.push_str(std::str::from_utf8(&line).expect("ascii"));
            out.push('\n');
        }
        out
    }

    /// Binary PGM (P5, maxval 255): 0 not attended, 255 hard-attended, soft
    /// weights scaled and rounded to the nearest level.
    pub fn render_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.n_keys, self.n_queries).into_bytes();
        let dense = self.to_dense();
        out.extend(dense.data().iter().map(|&w| (w * 255.0).round() as u8));
        out
    }
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Row softmax restricted to each row's attended keys.
///
/// Masked-out entries never enter the exponential, so the output support is
/// exactly the mask support. Soft weights multiply the shifted exponentials
/// before renormalization.
pub fn softmax_masked(scores: &Tensor, mask: &AttentionMask) -> Result<Tensor> {
    if scores.shape() != (mask.n_queries(), mask.n_keys()) {
        return Err(shape_err(
            "softmax_masked",
            format!(
                "scores {:?} vs mask {}x{}",
                scores.shape(),
                mask.n_queries(),
                mask.n_keys()
            ),
        ));
    }
    let mut out = Tensor::zeros(scores.rows(), scores.cols());
    for q in 0..mask.n_queries() {
        let keys = mask.row(q);
        let probs = softmax_row(scores.row(q), keys, mask.soft_row(q))
            .map_err(|_| Error::EmptyRow { row: q })?;
        let dst = out.row_mut(q);
        for (&k, p) in keys.iter().zip(probs) {
            dst[k] = p;
        }
    }
    Ok(out)
}

/// Softmax over `scores[keys]`, optionally weighted. Returns one probability
/// per entry of `keys`. Errors when the row has no (positively weighted) key.
pub(crate) fn softmax_row(
    scores: &[f64],
    keys: &[usize],
    weights: Option<&[f64]>,
) -> std::result::Result<Vec<f64>, ()> {
    let gathered: Vec<f64> = keys.iter().map(|&k| scores[k]).collect();
    softmax_gathered(&gathered, weights)
}

pub(crate) fn softmax_gathered(
    scores: &[f64],
    weights: Option<&[f64]>,
) -> std::result::Result<Vec<f64>, ()> {
    if scores.is_empty() {
        return Err(());
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    if let Some(w) = weights {
        for (e, w) in exps.iter_mut().zip(w) {
            *e *= w;
        }
    }
    let total: f64 = exps.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(());
    }
    for e in &mut exps {
        *e /= total;
    }
    Ok(exps)
}
