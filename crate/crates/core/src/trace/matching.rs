use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::uot::{uniform_masses, uot_mm, TransportPlan, UotOptions};
use crate::error::{Error, Result};
use crate::linalg::sym_eigen;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub src: usize,
    pub dst: usize,
    pub w: f64,
}

/// Classification of every source topic as matched or new.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAssignment {
    pub t: usize,
    pub matches: Vec<Match>,
    #[serde(rename = "new")]
    pub new_topics: Vec<usize>,
    /// `None` when nothing was compared (the first timestep).
    pub threshold: Option<f64>,
}

impl TopicAssignment {
    /// Every listed source is new (first timestep).
    pub fn all_new(t: usize, sources: impl IntoIterator<Item = usize>) -> Self {
        Self {
            t,
            matches: Vec::new(),
            new_topics: sources.into_iter().collect(),
            threshold: None,
        }
    }

    pub fn target_of(&self, src: usize) -> Option<usize> {
        self.matches.iter().find(|m| m.src == src).map(|m| m.dst)
    }

    pub fn sources(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.matches.iter().map(|m| m.src).chain(self.new_topics.iter().copied()).collect();
        s.sort_unstable();
        s
    }

    /// Rewrites local row indices through the given index maps.
    pub fn reindex(mut self, src_ids: &[usize], dst_ids: &[usize]) -> Self {
        for m in &mut self.matches {
            m.src = src_ids[m.src];
            m.dst = dst_ids[m.dst];
        }
        for s in &mut self.new_topics {
            *s = src_ids[*s];
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    pub epsilon: f64,
    pub relaxation: f64,
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            relaxation: 0.09,
            ridge: 1e-6,
            max_iter: 1000,
            tol: 1e-9,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !(self.relaxation > 0.0) || !(self.ridge >= 0.0) || !(self.tol > 0.0) {
            return Err(Error::Config("trace epsilon/ridge must be ≥ 0, relaxation and tol > 0".into()));
        }
        Ok(())
    }

    pub fn uot(&self) -> UotOptions {
        UotOptions {
            relaxation: self.relaxation,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

pub fn cosine_cost(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Input("embedding sets differ in dimension".into()));
    }
    let norms = |m: &Array2<f64>| m.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let (na, nb) = (norms(a), norms(b));
    if na.iter().chain(nb.iter()).any(|&n| !(n > 0.0)) {
        return Err(Error::Input("cosine cost of a zero-norm embedding".into()));
    }
    let dots = a.dot(&b.t());
    Ok(Array2::from_shape_fn(dots.raw_dim(), |(i, j)| {
        (1.0 - dots[[i, j]] / (na[i] * nb[j])).clamp(0.0, 2.0)
    }))
}

/// Largest eigenvalue of the stacked sample covariance plus `ridge`, via the Gram
/// matrix of centered rows.
pub fn stacked_top_eigenvalue(alpha_t: &Array2<f64>, alpha_prev: &Array2<f64>, ridge: f64) -> Result<f64> {
    if alpha_t.ncols() != alpha_prev.ncols() {
        return Err(Error::Input("embedding sets differ in dimension".into()));
    }
    let stacked = ndarray::concatenate(Axis(0), &[alpha_t.view(), alpha_prev.view()]).unwrap();
    let n = stacked.nrows();
    if n < 2 {
        return Err(Error::Input("threshold needs at least 2 stacked rows".into()));
    }
    let centered = &stacked - &stacked.mean_axis(Axis(0)).unwrap();
    let gram = centered.dot(&centered.t()) / (n - 1) as f64;
    let (vals, _) = sym_eigen(&gram);
    Ok(vals[0].max(0.0) + ridge)
}

pub fn match_threshold(alpha_t: &Array2<f64>, alpha_prev: &Array2<f64>, epsilon: f64, ridge: f64) -> Result<f64> {
    Ok(stacked_top_eigenvalue(alpha_t, alpha_prev, ridge)?.sqrt() * epsilon)
}

/// Index and value of the row maximum; ties go to the lowest index.
fn row_argmax(row: ndarray::ArrayView1<'_, f64>) -> (usize, f64) {
    let mut best = (0, row[0]);
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (j, v);
        }
    }
    best
}

/// Transport-weight threshold matching of `alpha_t` rows against `alpha_prev` rows.
pub fn trace_step(
    alpha_t: &Array2<f64>,
    alpha_prev: &Array2<f64>,
    t: usize,
    cfg: &TraceConfig,
) -> Result<(TopicAssignment, TransportPlan)> {
    if alpha_t.nrows() == 0 || alpha_prev.nrows() == 0 {
        return Err(Error::Input("trace_step needs nonempty topic sets".into()));
    }
    let cost = cosine_cost(alpha_t, alpha_prev)?;
    let plan = uot_mm(&cost, &uniform_masses(alpha_t.nrows()), &uniform_masses(alpha_prev.nrows()), cfg.uot())?;
    let threshold = match_threshold(alpha_t, alpha_prev, cfg.epsilon, cfg.ridge)?;
    let mut out = TopicAssignment {
        t,
        matches: Vec::new(),
        new_topics: Vec::new(),
        threshold: Some(threshold),
    };
    for (i, row) in plan.plan.rows().into_iter().enumerate() {
        let (j, w) = row_argmax(row);
        if w >= threshold {
            out.matches.push(Match { src: i, dst: j, w });
        } else {
            out.new_topics.push(i);
        }
    }
    Ok((out, plan))
}

/// Greedy matching under squared Euclidean distance: closest pairs first, each
/// target used once, pairs farther than `epsilon` left unmatched. `w` holds the
/// squared distance.
pub fn epsilon_neighbor_match(alpha_t: &Array2<f64>, alpha_prev: &Array2<f64>, t: usize, epsilon: f64) -> Result<TopicAssignment> {
    if alpha_t.ncols() != alpha_prev.ncols() {
        return Err(Error::Input("embedding sets differ in dimension".into()));
    }
    let (n, m) = (alpha_t.nrows(), alpha_prev.nrows());
    let mut pairs = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let d = &alpha_t.row(i) - &alpha_prev.row(j);
            pairs.push((d.dot(&d), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut src_used, mut dst_used) = (vec![false; n], vec![false; m]);
    let mut matches = Vec::new();
    for (d, i, j) in pairs {
        if d > epsilon {
            break;
        }
        if !src_used[i] && !dst_used[j] {
            src_used[i] = true;
            dst_used[j] = true;
            matches.push(Match { src: i, dst: j, w: d });
        }
    }
    matches.sort_by_key(|m| m.src);
    Ok(TopicAssignment {
        t,
        matches,
        new_topics: (0..n).filter(|&i| !src_used[i]).collect(),
        threshold: Some(epsilon),
    })
}

/// Discrete merge: each target row matched by one or more sources becomes the
/// average of itself and those sources; unmatched targets are kept, new sources
/// are appended in order.
pub fn dot_merge(alpha_t: &Array2<f64>, alpha_prev: &Array2<f64>, assignment: &TopicAssignment) -> Result<Array2<f64>> {
    check_assignment(assignment, alpha_t.nrows(), alpha_prev.nrows())?;
    let mut rows: Vec<ndarray::Array1<f64>> = Vec::new();
    for j in 0..alpha_prev.nrows() {
        let mut acc = alpha_prev.row(j).to_owned();
        let mut n = 1.0;
        for m in assignment.matches.iter().filter(|m| m.dst == j) {
            acc += &alpha_t.row(m.src);
            n += 1.0;
        }
        rows.push(acc / n);
    }
    for &i in &assignment.new_topics {
        rows.push(alpha_t.row(i).to_owned());
    }
    let l = alpha_t.ncols();
    Ok(Array2::from_shape_fn((rows.len(), l), |(i, j)| rows[i][j]))
}

/// Discrete merge that keeps the source row layout: matched source rows become
/// the average with their target, other rows are unchanged.
pub fn dot_merge_sources(alpha_t: &Array2<f64>, alpha_prev: &Array2<f64>, assignment: &TopicAssignment) -> Result<Array2<f64>> {
    check_assignment(assignment, alpha_t.nrows(), alpha_prev.nrows())?;
    let mut out = alpha_t.clone();
    for m in &assignment.matches {
        let avg = (&alpha_t.row(m.src) + &alpha_prev.row(m.dst)) / 2.0;
        out.row_mut(m.src).assign(&avg);
    }
    Ok(out)
}

fn check_assignment(a: &TopicAssignment, n_src: usize, n_dst: usize) -> Result<()> {
    let mut seen = vec![false; n_src];
    for s in a.matches.iter().map(|m| m.src).chain(a.new_topics.iter().copied()) {
        if s >= n_src || std::mem::replace(&mut seen[s], true) {
            return Err(Error::Input(format!("source topic {s} is out of range or classified twice")));
        }
    }
    if a.matches.iter().any(|m| m.dst >= n_dst) {
        return Err(Error::Input("match target out of range".into()));
    }
    Ok(())
}
