//! K-Means SMOTE oversampling.
//!
//! 1. Cluster all rows with Lloyd's k-means (k-means++ seeding).
//! 2. Keep clusters where `(majority + 1) / (minority + 1) < irt` and that
//!    hold at least two minority rows.
//! 3. Give each kept cluster a share of the class deficit proportional to its
//!    sparsity `mean_pairwise_distance^exponent / minority_count`, rounded up.
//! 4. Inside each kept cluster, interpolate between a random minority row and
//!    one of its nearest minority neighbours in that cluster.
//!
//! When no cluster passes the filter the threshold is doubled once; if that
//! still selects nothing, plain SMOTE runs over the whole minority class.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClassCounts, FeatureKind, Matrix, Table};
use crate::rng::rng_from;
use crate::scalar::{sq_dist, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("k-means needs k <= n (k = {k}, n = {n})")]
    DegenerateInput { k: usize, n: usize },
    #[error("input holds a single class")]
    SingleClassInput,
    #[error("no cluster is eligible for oversampling")]
    NoEligibleCluster,
    #[error("invalid oversampling configuration: {0}")]
    InvalidConfig(String),
}

fn default_clusters() -> usize {
    8
}
fn default_irt() -> f64 {
    1.0
}
fn default_neighbors() -> usize {
    5
}
fn default_max_iter() -> usize {
    300
}
fn default_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoteConfig {
    #[serde(default = "default_clusters")]
    pub n_clusters: usize,
    /// Imbalance-ratio threshold for the cluster filter.
    #[serde(default = "default_irt")]
    pub irt: f64,
    #[serde(default = "default_neighbors")]
    pub k_neighbors: usize,
    /// Exponent applied to the mean minority distance; `None` means the
    /// number of features.
    #[serde(default)]
    pub density_exponent: Option<f64>,
    /// Snap binary and ordinal features of synthetic rows to the nearest integer.
    #[serde(default)]
    pub round_discrete: bool,
    /// Min-max scale features for the clustering step only.
    #[serde(default)]
    pub scale_for_clustering: bool,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            n_clusters: 8,
            irt: 1.0,
            k_neighbors: 5,
            density_exponent: None,
            round_discrete: false,
            scale_for_clustering: false,
            max_iter: 300,
            tol: 1e-8,
        }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<(), BalanceError> {
        let bad = |m: &str| Err(BalanceError::InvalidConfig(m.into()));
        if self.n_clusters < 1 {
            return bad("n_clusters must be >= 1");
        }
        if self.k_neighbors < 1 {
            return bad("k_neighbors must be >= 1");
        }
        if !(self.irt > 0.0 && self.irt.is_finite()) {
            return bad("irt must be a finite value > 0");
        }
        if self.density_exponent.is_some_and(|e| !e.is_finite()) {
            return bad("density_exponent must be finite");
        }
        if self.max_iter < 1 {
            return bad("max_iter must be >= 1");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be >= 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "F: Scalar")]
pub struct KMeansModel<F> {
    /// Row-major k × p.
    pub centroids: Vec<F>,
    pub k: usize,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations_run: usize,
}

impl<F: Scalar> KMeansModel<F> {
    pub fn centroid(&self, c: usize) -> &[F] {
        let p = self.centroids.len() / self.k;
        &self.centroids[c * p..(c + 1) * p]
    }
}

/// State after each assignment step, handed to the observer of [`kmeans_fit_observed`].
pub struct KMeansStep<'a, F> {
    /// 0 for the k-means++ seeding, then 1, 2, … for Lloyd iterations.
    pub iteration: usize,
    pub centroids: &'a [F],
    pub assignments: &'a [usize],
    pub inertia: f64,
}

fn nearest<F: Scalar>(row: &[F], centroids: &[F], k: usize) -> (usize, F) {
    let p = row.len();
    let mut best = (0, sq_dist(row, &centroids[..p]));
    for c in 1..k {
        let d = sq_dist(row, &centroids[c * p..(c + 1) * p]);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Assign rows to their nearest centroid (lowest index on ties). Distances are
/// computed in parallel; the inertia is summed sequentially in row order.
fn assign<F: Scalar>(x: Matrix<'_, F>, centroids: &[F], k: usize) -> (Vec<usize>, Vec<F>, f64) {
    let pairs: Vec<(usize, F)> =
        (0..x.n_rows()).into_par_iter().with_min_len(1024).map(|i| nearest(x.row(i), centroids, k)).collect();
    let inertia = pairs.iter().map(|&(_, d)| d.as_f64()).sum();
    let (a, d) = pairs.into_iter().unzip();
    (a, d, inertia)
}

fn kmeans_pp<F: Scalar>(x: Matrix<'_, F>, k: usize, rng: &mut crate::rng::Rng) -> Vec<F> {
    let (n, p) = (x.n_rows(), x.n_cols());
    let mut centroids = Vec::with_capacity(k * p);
    centroids.extend_from_slice(x.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), &centroids[..p]).as_f64()).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.extend_from_slice(x.row(pick));
        let new_c = &centroids[c * p..(c + 1) * p];
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), new_c).as_f64());
        }
    }
    centroids
}

pub fn kmeans_fit<F: Scalar>(
    x: Matrix<'_, F>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel<F>, BalanceError> {
    kmeans_fit_observed(x, k, seed, max_iter, tol, |_| {})
}

/// Lloyd's algorithm from k-means++ seeding. Stops once the largest centroid
/// shift is at most `tol` or after `max_iter` updates. A cluster left empty by
/// an update is reseeded at the row farthest from its assigned centroid.
pub fn kmeans_fit_observed<F: Scalar>(
    x: Matrix<'_, F>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    mut observer: impl FnMut(&KMeansStep<'_, F>),
) -> Result<KMeansModel<F>, BalanceError> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if k == 0 || k > n {
        return Err(BalanceError::DegenerateInput { k, n });
    }
    let mut rng = rng_from(seed, &[0x6b6d]);
    let mut centroids = kmeans_pp(x, k, &mut rng);
    let (mut assignments, mut dists, mut inertia) = assign(x, &centroids, k);
    observer(&KMeansStep { iteration: 0, centroids: &centroids, assignments: &assignments, inertia });

    let mut iterations_run = 0;
    for it in 1..=max_iter.max(1) {
        let mut sums = vec![F::zero(); k * p];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            for (s, &v) in sums[c * p..(c + 1) * p].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut next = sums;
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                let cnt = F::from_usize_lossy(counts[c]);
                next[c * p..(c + 1) * p].iter_mut().for_each(|s| *s /= cnt);
            } else {
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .fold(None::<(usize, F)>, |best, i| match best {
                        Some((_, d)) if dists[i] <= d => best,
                        _ => Some((i, dists[i])),
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                taken.push(far);
                next[c * p..(c + 1) * p].copy_from_slice(x.row(far));
            }
        }
        let shift = (0..k)
            .map(|c| sq_dist(&centroids[c * p..(c + 1) * p], &next[c * p..(c + 1) * p]).as_f64().sqrt())
            .fold(0.0f64, f64::max);
        centroids = next;
        (assignments, dists, inertia) = assign(x, &centroids, k);
        iterations_run = it;
        observer(&KMeansStep { iteration: it, centroids: &centroids, assignments: &assignments, inertia });
        if shift <= tol {
            break;
        }
    }
    Ok(KMeansModel { centroids, k, assignments, inertia, iterations_run })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResamplePlan {
    /// Label being oversampled; `None` when the classes are already equal.
    pub minority_label: Option<u8>,
    pub deficit: usize,
    pub selected_clusters: Vec<usize>,
    pub per_cluster_budget: Vec<usize>,
    pub total_synthetic: usize,
    /// Minority row indices of each selected cluster, ascending.
    pub members: Vec<Vec<usize>>,
}

impl ResamplePlan {
    fn empty(minority_label: Option<u8>) -> Self {
        ResamplePlan {
            minority_label,
            deficit: 0,
            selected_clusters: Vec::new(),
            per_cluster_budget: Vec::new(),
            total_synthetic: 0,
            members: Vec::new(),
        }
    }
}

fn mean_pairwise_distance<F: Scalar>(table: &Table<F>, rows: &[usize]) -> f64 {
    let m = rows.len();
    let partial: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|a| {
            let ra = table.row(rows[a]);
            rows[a + 1..].iter().map(|&b| sq_dist(ra, table.row(b)).as_f64().sqrt()).sum::<f64>()
        })
        .collect();
    let pairs = (m * (m - 1) / 2) as f64;
    partial.iter().sum::<f64>() / pairs
}

/// Apportion `deficit` by normalized sparsity, rounding each share up.
/// Weights are handled in log space: the exponent is typically the feature
/// count and raw powers overflow.
fn apportion(deficit: usize, log_sparsity: &[f64]) -> Vec<usize> {
    let max = log_sparsity.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = if max == f64::NEG_INFINITY {
        vec![1.0; log_sparsity.len()]
    } else {
        log_sparsity.iter().map(|&l| (l - max).exp()).collect()
    };
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| (deficit as f64 * w / total).ceil() as usize).collect()
}

pub fn build_plan<F: Scalar>(
    table: &Table<F>,
    model: &KMeansModel<F>,
    config: &SmoteConfig,
) -> Result<ResamplePlan, BalanceError> {
    let counts = ClassCounts::from_labels(table.labels());
    let Some(minority) = counts.minority_label() else {
        return Ok(ResamplePlan::empty(None));
    };
    let deficit = counts.count_of(1 - minority) - counts.count_of(minority);

    let mut minority_rows = vec![Vec::new(); model.k];
    let mut majority_count = vec![0usize; model.k];
    for (i, (&c, &l)) in model.assignments.iter().zip(table.labels()).enumerate() {
        if l == minority {
            minority_rows[c].push(i);
        } else {
            majority_count[c] += 1;
        }
    }
    let selected: Vec<usize> = (0..model.k)
        .filter(|&c| {
            let ratio = (majority_count[c] + 1) as f64 / (minority_rows[c].len() + 1) as f64;
            ratio < config.irt && minority_rows[c].len() >= 2
        })
        .collect();
    if selected.is_empty() {
        return Err(BalanceError::NoEligibleCluster);
    }

    let exponent = config.density_exponent.unwrap_or(table.n_features() as f64);
    let log_sparsity: Vec<f64> = selected
        .iter()
        .map(|&c| {
            let rows = &minority_rows[c];
            let mean = mean_pairwise_distance(table, rows);
            exponent * mean.ln() - (rows.len() as f64).ln()
        })
        .collect();
    let budget = apportion(deficit, &log_sparsity);
    Ok(ResamplePlan {
        minority_label: Some(minority),
        deficit,
        total_synthetic: budget.iter().sum(),
        per_cluster_budget: budget,
        members: selected.iter().map(|&c| std::mem::take(&mut minority_rows[c])).collect(),
        selected_clusters: selected,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "path", rename_all = "snake_case")]
pub enum BalancePath {
    /// Class counts were already equal; nothing was generated.
    AlreadyBalanced,
    KmeansSmote,
    /// The cluster filter passed only after doubling the threshold.
    RelaxedIrt { irt: f64 },
    /// Plain SMOTE over the whole minority class.
    PlainSmote,
}

#[derive(Clone, Debug)]
pub struct BalanceOutcome<F> {
    /// Original rows in their original order, then the synthetic rows.
    pub table: Table<F>,
    pub n_original: usize,
    pub plan: ResamplePlan,
    pub path: BalancePath,
}

/// Indices (into `members`) of the `k` nearest other members of each member;
/// ties go to the lower index.
fn neighbor_lists<F: Scalar>(table: &Table<F>, members: &[usize], k: usize) -> Vec<Vec<usize>> {
    let k = k.min(members.len().saturating_sub(1));
    (0..members.len())
        .into_par_iter()
        .map(|a| {
            let ra = table.row(members[a]);
            let mut d: Vec<(F, usize)> = members
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(b, &r)| (sq_dist(ra, table.row(r)), b))
                .collect();
            let cmp = |x: &(F, usize), y: &(F, usize)| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1));
            if k < d.len() {
                d.select_nth_unstable_by(k, cmp);
                d.truncate(k);
            }
            d.sort_by(cmp);
            d.into_iter().map(|(_, b)| b).collect()
        })
        .collect()
}

fn synthesize<F: Scalar>(table: &Table<F>, plan: &ResamplePlan, config: &SmoteConfig, seed: u64) -> Vec<F> {
    let p = table.n_features();
    let mut out = Vec::with_capacity(plan.total_synthetic * p);
    let kinds = table.schema().feature_kinds();
    for (ci, (members, &budget)) in plan.members.iter().zip(&plan.per_cluster_budget).enumerate() {
        if budget == 0 {
            continue;
        }
        let neighbors = neighbor_lists(table, members, config.k_neighbors);
        let mut rng = rng_from(seed, &[0x736d, ci as u64]);
        for _ in 0..budget {
            let a = rng.gen_range(0..members.len());
            let b = neighbors[a][rng.gen_range(0..neighbors[a].len())];
            let u = F::from_f64_lossy(rng.gen::<f64>());
            let (xa, xb) = (table.row(members[a]), table.row(members[b]));
            for j in 0..p {
                let mut v = xa[j] + u * (xb[j] - xa[j]);
                if config.round_discrete && kinds[j] != FeatureKind::Continuous {
                    v = v.round();
                }
                out.push(v);
            }
        }
    }
    out
}

fn minmax_scaled<F: Scalar>(table: &Table<F>) -> Vec<F> {
    let p = table.n_features();
    let mut lo = vec![F::infinity(); p];
    let mut hi = vec![F::neg_infinity(); p];
    for i in 0..table.n_rows() {
        for (j, &v) in table.row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let mut out = table.features().to_vec();
    for (idx, v) in out.iter_mut().enumerate() {
        let j = idx % p;
        let range = hi[j] - lo[j];
        *v = if range > F::zero() { (*v - lo[j]) / range } else { F::zero() };
    }
    out
}

fn plain_smote_plan<F: Scalar>(table: &Table<F>) -> Result<ResamplePlan, BalanceError> {
    let counts = ClassCounts::from_labels(table.labels());
    let minority = counts.minority_label().expect("caller checked imbalance");
    let members: Vec<usize> = (0..table.n_rows()).filter(|&i| table.labels()[i] == minority).collect();
    if members.len() < 2 {
        return Err(BalanceError::NoEligibleCluster);
    }
    let deficit = counts.count_of(1 - minority) - counts.count_of(minority);
    Ok(ResamplePlan {
        minority_label: Some(minority),
        deficit,
        selected_clusters: vec![0],
        per_cluster_budget: vec![deficit],
        total_synthetic: deficit,
        members: vec![members],
    })
}

pub fn kmeans_smote<F: Scalar>(
    table: &Table<F>,
    config: &SmoteConfig,
    seed: u64,
) -> Result<BalanceOutcome<F>, BalanceError> {
    config.validate()?;
    let counts = ClassCounts::from_labels(table.labels());
    if counts.n_positive == 0 || counts.n_negative == 0 {
        return Err(BalanceError::SingleClassInput);
    }
    let n = table.n_rows();
    if counts.minority_label().is_none() {
        return Ok(BalanceOutcome {
            table: table.clone(),
            n_original: n,
            plan: ResamplePlan::empty(None),
            path: BalancePath::AlreadyBalanced,
        });
    }

    let k = config.n_clusters.min(n);
    let model = if config.scale_for_clustering {
        let scaled = minmax_scaled(table);
        kmeans_fit(Matrix::new(&scaled, n, table.n_features()), k, seed, config.max_iter, config.tol)?
    } else {
        kmeans_fit(table.matrix(), k, seed, config.max_iter, config.tol)?
    };

    let (plan, path) = match build_plan(table, &model, config) {
        Ok(plan) => (plan, BalancePath::KmeansSmote),
        Err(BalanceError::NoEligibleCluster) => {
            let relaxed = SmoteConfig { irt: config.irt * 2.0, ..config.clone() };
            match build_plan(table, &model, &relaxed) {
                Ok(plan) => (plan, BalancePath::RelaxedIrt { irt: relaxed.irt }),
                Err(BalanceError::NoEligibleCluster) => (plain_smote_plan(table)?, BalancePath::PlainSmote),
                Err(e) => return Err(e),
            }
        }
        Err(e) => return Err(e),
    };

    let synthetic = synthesize(table, &plan, config, seed);
    let label = plan.minority_label.expect("imbalanced input");
    let balanced = table.with_appended(synthetic, vec![label; plan.total_synthetic]);
    Ok(BalanceOutcome { table: balanced, n_original: n, plan, path })
}
