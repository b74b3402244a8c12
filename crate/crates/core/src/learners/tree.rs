//! Binary classification trees stored as a flat node arena.
//!
//! Three growers share the node type:
//! * [`grow_best`]: CART with Gini impurity over every midpoint of
//!   consecutive distinct values, optionally restricted to a random subset of
//!   candidate features at each node (random forest);
//! * [`grow_random`]: one uniformly drawn threshold per candidate feature
//!   (extra trees);
//! * [`fit_stump`]: a depth-1 split under sample weights (AdaBoost).
//!
//! Splits send a row left iff `value <= threshold`.

use rand::Rng as _;
use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use crate::data::Matrix;
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode<F> {
    Split { feature: usize, threshold: F, left: usize, right: usize },
    Leaf { class_counts: [f64; 2], predicted_label: u8 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree<F> {
    nodes: Vec<TreeNode<F>>,
}

impl<F: Scalar> Tree<F> {
    pub fn leaf(class_counts: [f64; 2]) -> Self {
        Tree { nodes: vec![make_leaf(class_counts)] }
    }

    pub fn nodes(&self) -> &[TreeNode<F>] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode<F> {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, d)) = stack.pop() {
            best = best.max(d);
            if let TreeNode::Split { left, right, .. } = self.nodes[id] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        best
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    fn leaf_for(&self, row: &[F]) -> &TreeNode<F> {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Split { feature, threshold, left, right } => {
                    id = if row[*feature] <= *threshold { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn predict_row(&self, row: &[F]) -> u8 {
        match self.leaf_for(row) {
            TreeNode::Leaf { predicted_label, .. } => *predicted_label,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    /// Share of class 1 in the leaf reached by `row`.
    pub fn positive_share(&self, row: &[F]) -> f64 {
        match self.leaf_for(row) {
            TreeNode::Leaf { class_counts: [c0, c1], .. } => {
                let total = c0 + c1;
                if total > 0.0 {
                    c1 / total
                } else {
                    0.0
                }
            }
            TreeNode::Split { .. } => unreachable!(),
        }
    }
}

fn make_leaf<F>(class_counts: [f64; 2]) -> TreeNode<F> {
    // Equal counts resolve to label 0.
    let predicted_label = u8::from(class_counts[1] > class_counts[0]);
    TreeNode::Leaf { class_counts, predicted_label }
}

struct NodeRef<'a, F> {
    tree: &'a Tree<F>,
    id: usize,
}

impl<F: Scalar> Serialize for NodeRef<'_, F> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match &self.tree.nodes[self.id] {
            TreeNode::Split { feature, threshold, left, right } => {
                let mut st = s.serialize_struct("Split", 4)?;
                st.serialize_field("feature", feature)?;
                st.serialize_field("threshold", threshold)?;
                st.serialize_field("left", &NodeRef { tree: self.tree, id: *left })?;
                st.serialize_field("right", &NodeRef { tree: self.tree, id: *right })?;
                st.end()
            }
            TreeNode::Leaf { class_counts, predicted_label } => {
                let mut st = s.serialize_struct("Leaf", 2)?;
                st.serialize_field("class_counts", class_counts)?;
                st.serialize_field("predicted_label", predicted_label)?;
                st.end()
            }
        }
    }
}

/// Serialized as nested `{feature, threshold, left, right}` / `{class_counts, predicted_label}` objects.
impl<F: Scalar> Serialize for Tree<F> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        NodeRef { tree: self, id: 0 }.serialize(s)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

/// Unsigned key with the same order as the (finite) float; -0 and +0 coincide.
#[inline]
fn sort_key(v: f64) -> u128 {
    let bits = if v == 0.0 { 0 } else { v.to_bits() };
    let ordered = if bits >> 63 == 1 { !bits } else { bits | (1 << 63) };
    u128::from(ordered)
}

/// Per-feature row orders sorted by (value, row index), computed once per fit
/// and shared by every tree grown on the same data.
pub struct Presorted {
    orders: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new<F: Scalar>(x: Matrix<'_, F>) -> Self {
        let orders = (0..x.n_cols())
            .map(|f| {
                let mut keyed: Vec<u128> =
                    (0..x.n_rows()).map(|r| (sort_key(x.get(r, f).as_f64()) << 32) | r as u128).collect();
                keyed.sort_unstable();
                keyed.into_iter().map(|k| k as u32).collect()
            })
            .collect();
        Presorted { orders }
    }
}

/// Split quality `Σ_children (c0² + c1²) / n_child` held as an exact fraction.
/// Maximizing it is equivalent to maximizing the Gini impurity decrease.
#[derive(Clone, Copy, Debug)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn node(c: [u64; 2]) -> Self {
        let (a, b) = (c[0] as u128, c[1] as u128);
        Purity { num: a * a + b * b, den: a + b }
    }

    fn split(l: [u64; 2], r: [u64; 2]) -> Self {
        let (pl, pr) = (Self::node(l), Self::node(r));
        Purity { num: pl.num * pr.den + pr.num * pl.den, den: pl.den * pr.den }
    }

    fn gt(self, other: Purity) -> bool {
        self.num * other.den > other.num * self.den
    }

    fn approx(l: [u64; 2], r: [u64; 2]) -> f64 {
        let side = |c: [u64; 2]| {
            let (a, b) = (c[0] as f64, c[1] as f64);
            (a * a + b * b) / (a + b)
        };
        side(l) + side(r)
    }
}

/// Relative gap below which two floating split scores are re-compared exactly.
const NEAR_TIE: f64 = 1e-9;

/// `Some(exact score)` if the split (l, r) strictly beats `best`.
#[inline]
fn improves<F>(l: [u64; 2], r: [u64; 2], best: &Option<Candidate<F>>) -> Option<(Purity, f64)> {
    let approx = Purity::approx(l, r);
    match best {
        None => Some((Purity::split(l, r), approx)),
        Some(b) if approx > b.approx * (1.0 + NEAR_TIE) => Some((Purity::split(l, r), approx)),
        Some(b) if approx < b.approx * (1.0 - NEAR_TIE) => None,
        Some(b) => {
            let exact = Purity::split(l, r);
            exact.gt(b.purity).then_some((exact, approx))
        }
    }
}

#[inline]
fn midpoint<F: Scalar>(lo: F, hi: F) -> F {
    let mut mid = (lo + hi) * F::HALF;
    if !mid.is_finite() {
        mid = lo * F::HALF + hi * F::HALF;
    }
    // Adjacent floats: the midpoint rounds onto `hi`, which would send it left.
    if mid >= hi || mid < lo {
        mid = lo;
    }
    mid
}

#[derive(Clone, Copy)]
struct Entry<F> {
    row: u32,
    weight: u16,
    label: u8,
    value: F,
}

struct Candidate<F> {
    feature: usize,
    threshold: F,
    purity: Purity,
    approx: f64,
}

/// Grow a CART tree on `sample` (row indices, repeats allowed).
///
/// With `mtry = None` every feature is a candidate at every node; otherwise
/// `mtry` features are drawn without replacement among those that are not
/// constant within the node.
pub fn grow_best<F: Scalar>(
    x: Matrix<'_, F>,
    y: &[u8],
    presorted: &Presorted,
    sample: &[usize],
    params: GrowParams,
    mtry: Option<usize>,
    rng: &mut Rng,
) -> Tree<F> {
    let p = x.n_cols();
    let n_rows = x.n_rows();

    if p == 0 {
        let mut counts = [0.0; 2];
        for &r in sample {
            counts[y[r] as usize] += 1.0;
        }
        return Tree { nodes: vec![make_leaf(counts)] };
    }

    // Repeated draws of a row collapse into one weighted entry per feature.
    let mut multiplicity = vec![0u32; n_rows];
    for &r in sample {
        multiplicity[r] += 1;
    }
    let distinct = multiplicity.iter().filter(|&&k| k > 0).count();
    let mut orders: Vec<Vec<Entry<F>>> = (0..p)
        .map(|f| {
            let mut v = Vec::with_capacity(distinct);
            for &r in &presorted.orders[f] {
                let mut k = multiplicity[r as usize];
                let (value, label) = (x.get(r as usize, f), y[r as usize]);
                while k > 0 {
                    let weight = k.min(u32::from(u16::MAX)) as u16;
                    v.push(Entry { row: r, weight, label, value });
                    k -= u32::from(weight);
                }
            }
            v
        })
        .collect();
    let m = orders[0].len();

    let mut nodes: Vec<TreeNode<F>> = vec![make_leaf([0.0, 0.0])];
    let mut stack = vec![(0usize, 0usize, m, 0usize, vec![false; p])];
    let mut goes_left = vec![false; n_rows];
    let mut scratch: Vec<Entry<F>> = Vec::with_capacity(m);
    let mut perm: Vec<usize> = (0..p).collect();

    while let Some((id, start, end, depth, mut constant)) = stack.pop() {
        let mut counts = [0u64; 2];
        for e in &orders[0][start..end] {
            counts[e.label as usize] += u64::from(e.weight);
        }
        let n_node = end - start;
        let stop = counts[0] == 0
            || counts[1] == 0
            || counts[0] + counts[1] < params.min_samples_split as u64
            || params.max_depth.is_some_and(|d| depth >= d);
        let leaf = [counts[0] as f64, counts[1] as f64];
        if stop {
            nodes[id] = make_leaf(leaf);
            continue;
        }

        // A feature constant here stays constant below, so its order is no
        // longer partitioned (feature 0 always is: it carries the node counts).
        for f in 0..p {
            if !constant[f] && orders[f][start].value == orders[f][end - 1].value {
                constant[f] = true;
            }
        }
        let candidates: Vec<usize> = match mtry {
            None => (0..p).collect(),
            Some(k) => {
                let mut chosen = Vec::with_capacity(k);
                for i in 0..p {
                    if chosen.len() == k {
                        break;
                    }
                    let j = rng.gen_range(i..p);
                    perm.swap(i, j);
                    if !constant[perm[i]] {
                        chosen.push(perm[i]);
                    }
                }
                chosen.sort_unstable();
                chosen
            }
        };

        let mut best: Option<Candidate<F>> = None;
        for &f in &candidates {
            if constant[f] {
                continue;
            }
            let ord = &orders[f][start..end];
            let mut left = [0u64; 2];
            for i in 0..n_node - 1 {
                left[ord[i].label as usize] += u64::from(ord[i].weight);
                let (v, next) = (ord[i].value, ord[i + 1].value);
                if v == next {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                if let Some((purity, approx)) = improves(left, right, &best) {
                    best = Some(Candidate { feature: f, threshold: midpoint(v, next), purity, approx });
                }
            }
        }

        // Concavity of Gini makes every split's decrease >= 0; a zero-decrease
        // split is taken only when nothing better exists (XOR-like nodes).
        let Some(best) = best else {
            nodes[id] = make_leaf(leaf);
            continue;
        };

        let mut n_left = 0;
        for e in &orders[best.feature][start..end] {
            let l = e.value <= best.threshold;
            goes_left[e.row as usize] = l;
            n_left += usize::from(l);
        }
        for (f, ord) in orders.iter_mut().enumerate() {
            if f > 0 && constant[f] {
                continue;
            }
            scratch.clear();
            let slice = &mut ord[start..end];
            let mut w = 0;
            for i in 0..slice.len() {
                let e = slice[i];
                if goes_left[e.row as usize] {
                    slice[w] = e;
                    w += 1;
                } else {
                    scratch.push(e);
                }
            }
            slice[w..].copy_from_slice(&scratch);
        }

        let (l_id, r_id) = (nodes.len(), nodes.len() + 1);
        nodes.push(make_leaf([0.0, 0.0]));
        nodes.push(make_leaf([0.0, 0.0]));
        nodes[id] = TreeNode::Split { feature: best.feature, threshold: best.threshold, left: l_id, right: r_id };
        stack.push((r_id, start + n_left, end, depth + 1, constant.clone()));
        stack.push((l_id, start, start + n_left, depth + 1, constant));
    }

    Tree { nodes }
}

/// Grow an extra-randomized tree: at each node `mtry` non-constant features
/// are drawn and each gets one threshold uniform on `[min, max)` of the node's
/// values; the best of those by Gini decrease is kept.
pub fn grow_random<F: Scalar>(
    x: Matrix<'_, F>,
    y: &[u8],
    sample: &[usize],
    params: GrowParams,
    mtry: usize,
    rng: &mut Rng,
) -> Tree<F> {
    let p = x.n_cols();
    let mut idx: Vec<usize> = sample.to_vec();
    let mut nodes: Vec<TreeNode<F>> = vec![make_leaf([0.0, 0.0])];
    let mut stack = vec![(0usize, 0usize, idx.len(), 0usize)];
    let mut perm: Vec<usize> = (0..p).collect();
    let mut drawn: Vec<(usize, F)> = Vec::with_capacity(mtry);
    let mut scratch: Vec<usize> = Vec::with_capacity(idx.len());

    while let Some((id, start, end, depth)) = stack.pop() {
        let rows = &idx[start..end];
        let mut counts = [0u64; 2];
        for &r in rows {
            counts[y[r] as usize] += 1;
        }
        let leaf = [counts[0] as f64, counts[1] as f64];
        if counts[0] == 0
            || counts[1] == 0
            || rows.len() < params.min_samples_split
            || params.max_depth.is_some_and(|d| depth >= d)
        {
            nodes[id] = make_leaf(leaf);
            continue;
        }

        drawn.clear();
        for i in 0..p {
            if drawn.len() == mtry {
                break;
            }
            let j = rng.gen_range(i..p);
            perm.swap(i, j);
            let f = perm[i];
            let (mut lo, mut hi) = (x.get(rows[0], f), x.get(rows[0], f));
            for &r in &rows[1..] {
                let v = x.get(r, f);
                if v < lo {
                    lo = v;
                }
                if v > hi {
                    hi = v;
                }
            }
            if lo == hi {
                continue;
            }
            let u = F::from_f64_lossy(rng.gen::<f64>());
            let mut t = lo + u * (hi - lo);
            if t >= hi || t < lo {
                t = lo;
            }
            drawn.push((f, t));
        }
        if drawn.is_empty() {
            nodes[id] = make_leaf(leaf);
            continue;
        }
        drawn.sort_unstable_by_key(|&(f, _)| f);

        let mut best: Option<Candidate<F>> = None;
        for &(f, t) in &drawn {
            let mut left = [0u64; 2];
            for &r in rows {
                if x.get(r, f) <= t {
                    left[y[r] as usize] += 1;
                }
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            if let Some((purity, approx)) = improves(left, right, &best) {
                best = Some(Candidate { feature: f, threshold: t, purity, approx });
            }
        }
        let best = best.expect("at least one drawn feature");

        // Stable partition, so child row order follows the parent's.
        let slice = &mut idx[start..end];
        scratch.clear();
        let mut w = 0;
        for i in 0..slice.len() {
            let r = slice[i];
            if x.get(r, best.feature) <= best.threshold {
                slice[w] = r;
                w += 1;
            } else {
                scratch.push(r);
            }
        }
        slice[w..].copy_from_slice(&scratch);

        let (l_id, r_id) = (nodes.len(), nodes.len() + 1);
        nodes.push(make_leaf([0.0, 0.0]));
        nodes.push(make_leaf([0.0, 0.0]));
        nodes[id] = TreeNode::Split { feature: best.feature, threshold: best.threshold, left: l_id, right: r_id };
        stack.push((r_id, start + w, end, depth + 1));
        stack.push((l_id, start, start + w, depth + 1));
    }

    Tree { nodes }
}

/// Depth-1 tree chosen by weighted Gini decrease; ties keep the lower
/// feature index, then the lower threshold. Leaves hold weighted class mass.
pub fn fit_stump<F: Scalar>(x: Matrix<'_, F>, y: &[u8], presorted: &Presorted, weights: &[f64]) -> Tree<F> {
    let mut total = [0.0f64; 2];
    for (&l, &w) in y.iter().zip(weights) {
        total[l as usize] += w;
    }
    let purity = |c: [f64; 2]| {
        let s = c[0] + c[1];
        if s > 0.0 {
            (c[0] * c[0] + c[1] * c[1]) / s
        } else {
            0.0
        }
    };
    let mut best: Option<(usize, F, f64, [f64; 2])> = None;
    for (f, order) in presorted.orders.iter().enumerate() {
        let mut left = [0.0f64; 2];
        for i in 0..order.len().saturating_sub(1) {
            let r = order[i] as usize;
            left[y[r] as usize] += weights[r];
            let (v, next) = (x.get(r, f), x.get(order[i + 1] as usize, f));
            if v == next {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = purity(left) + purity(right);
            if best.map_or(true, |(_, _, s, _)| score > s) {
                best = Some((f, midpoint(v, next), score, left));
            }
        }
    }
    match best {
        Some((feature, threshold, _, left)) => {
            let right = [total[0] - left[0], total[1] - left[1]];
            Tree {
                nodes: vec![
                    TreeNode::Split { feature, threshold, left: 1, right: 2 },
                    make_leaf(left),
                    make_leaf(right),
                ],
            }
        }
        _ => Tree::leaf(total),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn full(params: GrowParams, xs: &[f64], p: usize, y: &[u8]) -> Tree<f64> {
        let x = Matrix::new(xs, y.len(), p);
        let sample: Vec<usize> = (0..y.len()).collect();
        grow_best(x, y, &Presorted::new(x), &sample, params, None, &mut rng_from(0, &[]))
    }

    const UNLIMITED: GrowParams = GrowParams { max_depth: None, min_samples_split: 2 };

    #[test]
    fn pure_labels_give_single_leaf() {
        let t = full(UNLIMITED, &[1.0, 2.0, 3.0], 1, &[1, 1, 1]);
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict_row(&[10.0]), 1);
        assert_eq!(t.positive_share(&[0.0]), 1.0);
    }

    #[test]
    fn xor_is_memorized_at_depth_two() {
        let xs = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let y = [0, 1, 1, 0];
        let t = full(UNLIMITED, &xs, 2, &y);
        assert_eq!(t.depth(), 2);
        for i in 0..4 {
            assert_eq!(t.predict_row(&xs[2 * i..2 * i + 2]), y[i]);
        }
        // Zero-decrease root split: lowest feature, lowest threshold.
        assert!(matches!(t.root(), TreeNode::Split { feature: 0, threshold, .. } if *threshold == 0.5));
    }

    #[test]
    fn equal_leaf_counts_predict_zero() {
        let leaf: TreeNode<f64> = make_leaf([3.0, 3.0]);
        assert!(matches!(leaf, TreeNode::Leaf { predicted_label: 0, .. }));
    }

    #[test]
    fn midpoint_never_reaches_upper_value() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(midpoint(a, b), a);
        assert_eq!(midpoint(1.0, 2.0), 1.5);
        assert_eq!(midpoint(f64::MAX / 2.0 * 1.5, f64::MAX), f64::MAX / 2.0 * 1.5 / 2.0 + f64::MAX / 2.0);
    }

    #[test]
    fn depth_limit_and_min_split() {
        let xs: Vec<f64> = (0..8).map(f64::from).collect();
        let y = [0, 1, 0, 1, 0, 1, 0, 1];
        let t = full(GrowParams { max_depth: Some(1), min_samples_split: 2 }, &xs, 1, &y);
        assert!(t.depth() <= 1);
        let t = full(GrowParams { max_depth: None, min_samples_split: 100 }, &xs, 1, &y);
        assert_eq!(t.nodes().len(), 1);
        let t = full(UNLIMITED, &xs, 1, &y);
        for (i, &l) in y.iter().enumerate() {
            assert_eq!(t.predict_row(&[i as f64]), l);
        }
    }

    #[test]
    fn extra_tree_memorizes_distinct_rows() {
        let xs: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i % 3 == 0)).collect();
        let x = Matrix::new(&xs, 20, 1);
        let sample: Vec<usize> = (0..20).collect();
        let t = grow_random(x, &y, &sample, UNLIMITED, 1, &mut rng_from(3, &[]));
        for i in 0..20 {
            assert_eq!(t.predict_row(x.row(i)), y[i]);
        }
    }

    #[test]
    fn weighted_stump_follows_weights() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let y = [0, 1, 0, 1];
        let x = Matrix::new(&xs, 4, 1);
        let pre = Presorted::new(x);
        let t = fit_stump(x, &y, &pre, &[0.1, 0.1, 0.1, 0.7]);
        assert_eq!(t.predict_row(&[4.0]), 1);
        assert_eq!(t.predict_row(&[1.0]), 0);
    }

    #[test]
    fn nested_json_shape() {
        let t = full(UNLIMITED, &[0.0, 1.0], 1, &[0, 1]);
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["feature"], 0);
        assert_eq!(v["threshold"], 0.5);
        assert_eq!(v["left"]["predicted_label"], 0);
        assert_eq!(v["right"]["class_counts"][1], 1.0);
    }
}
