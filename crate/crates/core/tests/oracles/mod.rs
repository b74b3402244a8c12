//! Randomized checks against brute-force oracles. Shared by the core
//! integration tests and the acceptance harness, so each check takes a case
//! count and a seed and reports the first counterexample as text.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tabclass::balance::{kmeans_fit_observed, kmeans_smote, BalancePath, SmoteConfig};
use tabclass::data::{ClassCounts, FeatureKind, Matrix, Schema, Table};
use tabclass::eval::stratified_kfold;
use tabclass::learners::tree::{grow_best, GrowParams, Presorted, TreeNode};
use tabclass::rng::rng_from;

pub type Check = Result<(), String>;

fn two_class_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    loop {
        let rate: f64 = rng.gen_range(0.05..0.95);
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(rate))).collect();
        if labels.contains(&0) && labels.contains(&1) {
            return labels;
        }
    }
}

fn continuous_table(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Table<f64> {
    let p = rows[0].len();
    let schema = Schema::new(
        (0..p).map(|j| format!("x{j}")).collect(),
        vec![FeatureKind::Continuous; p],
        "y",
    )
    .unwrap();
    Table::new(rows, labels, schema).unwrap()
}

/// Every row lands in exactly one fold; per class, fold counts differ by at most one.
pub fn stratified_folds(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let k = [2, 5, 10][rng.gen_range(0..3)];
        let n = rng.gen_range(k..=500);
        let rate: f64 = rng.gen_range(0.0..1.0);
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(rate))).collect();
        let folds = stratified_kfold(&labels, k, rng.gen()).map_err(|e| format!("case {case}: {e}"))?;
        let mut seen = vec![0usize; n];
        let mut per_class = vec![[0usize; 2]; k];
        for f in 0..k {
            for r in folds.test_rows(f) {
                seen[r] += 1;
                per_class[f][labels[r] as usize] += 1;
            }
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(format!("case {case}: not a partition (n={n}, k={k})"));
        }
        for c in 0..2 {
            let counts: Vec<usize> = per_class.iter().map(|f| f[c]).collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            if hi - lo > 1 {
                return Err(format!("case {case}: class {c} fold counts {counts:?}"));
            }
        }
    }
    Ok(())
}

/// Exact `Σ_children (c0² + c1²) / n_child` as (numerator, denominator).
fn purity(left: [u128; 2], right: [u128; 2]) -> (u128, u128) {
    let nl = left[0] + left[1];
    let nr = right[0] + right[1];
    let sl = left[0] * left[0] + left[1] * left[1];
    let sr = right[0] * right[0] + right[1] * right[1];
    (sl * nr + sr * nl, nl * nr)
}

/// Best (feature, largest-left-value) by Gini decrease over every
/// (feature, distinct-value boundary); first found wins ties.
fn exhaustive_root(rows: &[Vec<f64>], labels: &[u8]) -> Option<(usize, f64)> {
    let p = rows[0].len();
    let mut best: Option<((u128, u128), usize, f64)> = None;
    for f in 0..p {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for &cut in &values[..values.len().saturating_sub(1)] {
            let mut left = [0u128; 2];
            let mut right = [0u128; 2];
            for (r, &l) in rows.iter().zip(labels) {
                if r[f] <= cut {
                    left[l as usize] += 1;
                } else {
                    right[l as usize] += 1;
                }
            }
            let q = purity(left, right);
            let better = match best {
                None => true,
                Some((b, _, _)) => q.0 * b.1 > b.0 * q.1,
            };
            if better {
                best = Some((q, f, cut));
            }
        }
    }
    best.map(|(_, f, cut)| (f, cut))
}

/// The root split of a CART tree equals the exhaustive optimum, tie-break included.
pub fn cart_root(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let n = rng.gen_range(2..=50);
        let p = rng.gen_range(1..=4);
        let coarse = rng.gen_bool(0.5);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..p)
                    .map(|_| if coarse { f64::from(rng.gen_range(0..4)) } else { rng.gen_range(-1.0..1.0) })
                    .collect()
            })
            .collect();
        let labels = two_class_labels(&mut rng, n);
        let flat: Vec<f64> = rows.concat();
        let x = Matrix::new(&flat, n, p);
        let sample: Vec<usize> = (0..n).collect();
        let params = GrowParams { max_depth: Some(1), min_samples_split: 2 };
        let tree = grow_best(x, &labels, &Presorted::new(x), &sample, params, None, &mut rng_from(0, &[]));
        match (exhaustive_root(&rows, &labels), tree.root()) {
            (None, TreeNode::Leaf { .. }) => {}
            (Some((f, cut)), TreeNode::Split { feature, threshold, .. }) => {
                let same_side = rows.iter().all(|r| (r[f] <= cut) == (r[*feature] <= *threshold));
                if *feature != f || !same_side {
                    return Err(format!(
                        "case {case}: tree split x{feature} <= {threshold}, oracle x{f} <= {cut}"
                    ));
                }
            }
            (expected, _) => return Err(format!("case {case}: oracle {expected:?}, tree {:?}", tree.root())),
        }
    }
    Ok(())
}

fn nearest(row: &[f64], centroids: &[f64], p: usize) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (c, centroid) in centroids.chunks(p).enumerate() {
        let d: f64 = row.iter().zip(centroid).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Each assignment step agrees with a brute-force nearest-centroid scan, and
/// inertia never increases from one step to the next.
pub fn kmeans_inertia(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let n = rng.gen_range(5..=60);
        let p = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=5.min(n));
        let flat: Vec<f64> = (0..n * p)
            .map(|_| if rng.gen_bool(0.3) { f64::from(rng.gen_range(0..3)) } else { rng.gen_range(0.0..10.0) })
            .collect();
        let x = Matrix::new(&flat, n, p);
        let mut history = Vec::new();
        let mut mismatch = None;
        kmeans_fit_observed(x, k, rng.gen(), 300, 0.0, |step| {
            let mut inertia = 0.0;
            for i in 0..n {
                let (c, d) = nearest(x.row(i), step.centroids, p);
                inertia += d;
                if step.assignments[i] != c && mismatch.is_none() {
                    mismatch = Some(format!("iteration {}: row {i} assigned {} not {c}", step.iteration, step.assignments[i]));
                }
            }
            if (inertia - step.inertia).abs() > 1e-9 * inertia.max(1.0) && mismatch.is_none() {
                mismatch = Some(format!("iteration {}: inertia {} vs scan {inertia}", step.iteration, step.inertia));
            }
            history.push(step.inertia);
        })
        .map_err(|e| format!("case {case}: {e}"))?;
        if let Some(m) = mismatch {
            return Err(format!("case {case}: {m}"));
        }
        for w in history.windows(2) {
            if w[1] > w[0] * (1.0 + 1e-12) + 1e-12 {
                return Err(format!("case {case}: inertia rose {} -> {}", w[0], w[1]));
            }
        }
    }
    Ok(())
}

/// `s = a + u (b − a)` for some u in [0, 1] (within rounding).
fn on_segment(s: &[f64], a: &[f64], b: &[f64]) -> bool {
    let (axis, span) = a
        .iter()
        .zip(b)
        .map(|(x, y)| y - x)
        .enumerate()
        .max_by(|l, r| l.1.abs().total_cmp(&r.1.abs()))
        .unwrap();
    let u = if span == 0.0 { 0.0 } else { (s[axis] - a[axis]) / span };
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return false;
    }
    s.iter().zip(a).zip(b).all(|((&sv, &av), &bv)| {
        let expected = av + u * (bv - av);
        (sv - expected).abs() <= 1e-9 * (1.0 + av.abs().max(bv.abs()))
    })
}

/// Synthetic rows are interpolations of same-cluster minority pairs, original
/// rows come through bit for bit, and the class gap is at most the number of
/// clusters that received a budget.
pub fn smote_geometry(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut synthetic = 0;
    for case in 0..cases {
        let n = rng.gen_range(12..=40);
        let p = rng.gen_range(1..=3);
        let minority = rng.gen_range(3..=n / 3);
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i < minority)).collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..p).map(|_| rng.gen_range(0.0..4.0) + f64::from(l) * rng.gen_range(0.0..3.0)).collect())
            .collect();
        let table = continuous_table(rows, labels);
        let config = SmoteConfig {
            n_clusters: rng.gen_range(1..=4),
            k_neighbors: rng.gen_range(1..=3),
            ..SmoteConfig::default()
        };
        let out = kmeans_smote(&table, &config, rng.gen()).map_err(|e| format!("case {case}: {e}"))?;
        let t = &out.table;
        for i in 0..n {
            let same = table.row(i).iter().zip(t.row(i)).all(|(a, b)| a.to_bits() == b.to_bits());
            if !same || table.labels()[i] != t.labels()[i] {
                return Err(format!("case {case}: original row {i} changed"));
            }
        }
        synthetic += t.n_rows() - n;
        for s in n..t.n_rows() {
            if t.labels()[s] != 1 {
                return Err(format!("case {case}: synthetic row {s} has the majority label"));
            }
            let ok = out.plan.members.iter().any(|members| {
                members.iter().any(|&a| members.iter().any(|&b| a != b && on_segment(t.row(s), t.row(a), t.row(b))))
            });
            if !ok {
                return Err(format!("case {case}: synthetic row {s} {:?} is not between minority pairs", t.row(s)));
            }
        }
        let counts = ClassCounts::from_labels(t.labels());
        let gap = counts.n_positive.abs_diff(counts.n_negative);
        let allowed = match out.path {
            BalancePath::AlreadyBalanced => 0,
            _ => out.plan.selected_clusters.len(),
        };
        if gap > allowed {
            return Err(format!("case {case}: class gap {gap} with {allowed} selected clusters ({:?})", out.path));
        }
    }
    if synthetic == 0 {
        return Err("no synthetic rows were generated".into());
    }
    Ok(())
}
