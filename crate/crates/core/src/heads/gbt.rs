use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{check_input, check_training_data, clamp_unit, mse, HeadError, TrainReport};

/// Splits must improve the regularized objective by more than this.
const MIN_SPLIT_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub max_depth: usize,
    pub n_rounds: usize,
    /// Learning rate applied to every tree, in (0, 1].
    pub shrinkage: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub min_samples_leaf: usize,
    /// Recorded for provenance; split search is exhaustive and uses no
    /// randomness.
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            max_depth: 4,
            n_rounds: 200,
            shrinkage: 0.1,
            lambda: 1.0,
            min_samples_leaf: 2,
            seed: 0,
        }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<(), HeadError> {
        let bad = |m: &str| Err(HeadError::InvalidParams(m.to_string()));
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return bad("shrinkage must lie in (0, 1]");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and >= 0");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be >= 1");
        }
        Ok(())
    }
}

/// Binary regression tree; samples with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NodeRepr", try_from = "NodeRepr")]
pub enum Tree {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Tree>,
        right: Box<Tree>,
    },
}

/// Pre-order wire form: a leaf is its value, a split is
/// `[feature, threshold, left, right]`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRepr {
    Leaf(f64),
    Split(usize, f64, Box<NodeRepr>, Box<NodeRepr>),
}

impl From<Tree> for NodeRepr {
    fn from(t: Tree) -> Self {
        match t {
            Tree::Leaf(v) => NodeRepr::Leaf(v),
            Tree::Split {
                feature,
                threshold,
                left,
                right,
            } => NodeRepr::Split(
                feature,
                threshold,
                Box::new((*left).into()),
                Box::new((*right).into()),
            ),
        }
    }
}

impl TryFrom<NodeRepr> for Tree {
    type Error = String;

    fn try_from(r: NodeRepr) -> Result<Self, Self::Error> {
        Ok(match r {
            NodeRepr::Leaf(v) => Tree::Leaf(v),
            NodeRepr::Split(feature, threshold, l, r) => Tree::Split {
                feature,
                threshold,
                left: Box::new(Tree::try_from(*l)?),
                right: Box::new(Tree::try_from(*r)?),
            },
        })
    }
}

impl Tree {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Tree::Leaf(v) => return *v,
                Tree::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    /// Depth in edges; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Tree::Leaf(_) => 0,
            Tree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    fn check(&self, dimension: usize) -> Result<(), String> {
        match self {
            Tree::Leaf(v) if v.is_finite() => Ok(()),
            Tree::Leaf(_) => Err("non-finite leaf".into()),
            Tree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= dimension {
                    return Err(format!("split feature {feature} >= dimension {dimension}"));
                }
                if !threshold.is_finite() {
                    return Err("non-finite threshold".into());
                }
                left.check(dimension)?;
                right.check(dimension)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    dimension: usize,
    base_score: f64,
    shrinkage: f64,
    params: GbtParams,
    trees: Vec<Tree>,
}

impl GbtModel {
    pub fn new(dimension: usize, base_score: f64, params: GbtParams, trees: Vec<Tree>) -> Self {
        Self {
            dimension,
            base_score,
            shrinkage: params.shrinkage,
            params,
            trees,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn params(&self) -> &GbtParams {
        &self.params
    }

    /// Leaf values already include the shrinkage factor.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64, HeadError> {
        check_input(self.dimension, x)?;
        Ok(self.raw(x))
    }

    fn raw(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.base_score, |acc, t| acc + t.evaluate(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, HeadError> {
        self.predict_raw(x).map(clamp_unit)
    }

    pub(super) fn validate(&self) -> Result<(), HeadError> {
        let corrupt = |m: String| HeadError::CorruptModel(m);
        if !self.base_score.is_finite() {
            return Err(corrupt("non-finite base score".into()));
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.check(self.dimension)
                .map_err(|m| corrupt(format!("tree {i}: {m}")))?;
            if t.depth() > self.params.max_depth {
                return Err(corrupt(format!("tree {i} deeper than max_depth")));
            }
        }
        Ok(())
    }
}

/// Node awaiting a split decision during level-wise growth.
struct Open {
    sum: f64,
    count: usize,
    best: Option<Candidate>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left_sum: f64,
    left_count: usize,
}

/// Arena node used while growing; converted to [`Tree`] at the end.
enum Grown {
    Leaf(f64),
    Split(usize, f64, usize, usize),
    Pending,
}

fn leaf_value(sum: f64, count: usize, params: &GbtParams) -> f64 {
    params.shrinkage * sum / (count as f64 + params.lambda)
}

fn score(sum: f64, count: usize, lambda: f64) -> f64 {
    sum * sum / (count as f64 + lambda)
}

/// Column-major view of the features that vary across samples, each with
/// its sample order sorted by value (ties by sample index).
struct Columns {
    features: Vec<usize>,
    values: Vec<Vec<f64>>,
    order: Vec<Vec<usize>>,
}

impl Columns {
    fn new<X: AsRef<[f64]>>(x: &[X], dim: usize) -> Self {
        let mut features = Vec::new();
        let mut values = Vec::new();
        let mut order = Vec::new();
        for f in 0..dim {
            let col: Vec<f64> = x.iter().map(|r| r.as_ref()[f]).collect();
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                continue;
            }
            let mut idx: Vec<usize> = (0..col.len()).collect();
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            features.push(f);
            values.push(col);
            order.push(idx);
        }
        Self {
            features,
            values,
            order,
        }
    }
}

fn grow_tree(cols: &Columns, residual: &[f64], params: &GbtParams) -> Tree {
    let n = residual.len();
    let mut arena = vec![Grown::Pending];
    // Arena slot of the open node each sample sits in, per level.
    let mut node_of: Vec<Option<usize>> = vec![Some(0); n];
    let mut open_slots = vec![0usize];
    let mut open = vec![Open {
        sum: residual.iter().sum(),
        count: n,
        best: None,
    }];
    // open-index of each arena slot at the current level
    let mut open_index: Vec<usize> = vec![0];

    for _depth in 0..params.max_depth {
        if open.is_empty() {
            break;
        }
        let k = open.len();
        let mut left_sum = vec![0.0; k];
        let mut left_count = vec![0usize; k];
        let mut last = vec![0.0f64; k];
        for (fi, &feature) in cols.features.iter().enumerate() {
            left_sum.iter_mut().for_each(|v| *v = 0.0);
            left_count.iter_mut().for_each(|v| *v = 0);
            let values = &cols.values[fi];
            for &i in &cols.order[fi] {
                let Some(slot) = node_of[i] else { continue };
                let o = open_index[slot];
                let v = values[i];
                let node = &mut open[o];
                let lc = left_count[o];
                if lc > 0 && v > last[o] {
                    let rc = node.count - lc;
                    if lc >= params.min_samples_leaf && rc >= params.min_samples_leaf {
                        let ls = left_sum[o];
                        let gain = score(ls, lc, params.lambda)
                            + score(node.sum - ls, rc, params.lambda)
                            - score(node.sum, node.count, params.lambda);
                        let better = match node.best {
                            Some(b) => gain > b.gain,
                            None => gain > MIN_SPLIT_GAIN,
                        };
                        if better {
                            let prev = last[o];
                            let mut threshold = prev + (v - prev) / 2.0;
                            if threshold <= prev {
                                threshold = v;
                            }
                            node.best = Some(Candidate {
                                gain,
                                feature,
                                threshold,
                                left_sum: ls,
                                left_count: lc,
                            });
                        }
                    }
                }
                left_sum[o] += residual[i];
                left_count[o] += 1;
                last[o] = v;
            }
        }

        let mut next_open = Vec::new();
        let mut next_slots = Vec::new();
        let mut children: Vec<Option<(usize, usize, usize, f64)>> = vec![None; k];
        for (o, node) in open.iter().enumerate() {
            let slot = open_slots[o];
            match node.best {
                Some(c) => {
                    let l = arena.len();
                    arena.push(Grown::Pending);
                    arena.push(Grown::Pending);
                    arena[slot] = Grown::Split(c.feature, c.threshold, l, l + 1);
                    children[o] = Some((l, l + 1, c.feature, c.threshold));
                    next_open.push(Open {
                        sum: c.left_sum,
                        count: c.left_count,
                        best: None,
                    });
                    next_slots.push(l);
                    next_open.push(Open {
                        sum: node.sum - c.left_sum,
                        count: node.count - c.left_count,
                        best: None,
                    });
                    next_slots.push(l + 1);
                }
                None => arena[slot] = Grown::Leaf(leaf_value(node.sum, node.count, params)),
            }
        }
        for (i, slot) in node_of.iter_mut().enumerate() {
            let Some(s) = *slot else { continue };
            *slot = children[open_index[s]].map(|(l, r, f, t)| {
                let col = cols.features.binary_search(&f).expect("active feature");
                if cols.values[col][i] < t {
                    l
                } else {
                    r
                }
            });
        }
        open_index.resize(arena.len(), usize::MAX);
        for (o, &slot) in next_slots.iter().enumerate() {
            open_index[slot] = o;
        }
        open = next_open;
        open_slots = next_slots;
    }
    for (o, node) in open.iter().enumerate() {
        arena[open_slots[o]] = Grown::Leaf(leaf_value(node.sum, node.count, params));
    }
    build(&arena, 0)
}

fn build(arena: &[Grown], slot: usize) -> Tree {
    match arena[slot] {
        Grown::Leaf(v) => Tree::Leaf(v),
        Grown::Split(feature, threshold, l, r) => Tree::Split {
            feature,
            threshold,
            left: Box::new(build(arena, l)),
            right: Box::new(build(arena, r)),
        },
        Grown::Pending => unreachable!("every arena node is resolved"),
    }
}

/// Squared-error gradient boosting with exact greedy split search.
///
/// `base_score` is the label mean. Each round grows a depth-limited tree on
/// the residuals, level by level; a split's gain is
/// `G_L^2/(n_L+lambda) + G_R^2/(n_R+lambda) - G^2/(n+lambda)` where `G` is a
/// residual sum, and leaves hold `shrinkage * G/(n+lambda)`. Candidate splits
/// are scanned by ascending feature index and threshold and only a strictly
/// larger gain replaces the incumbent, so ties go to the lowest feature, then
/// the lowest threshold.
pub fn train_gbt<X: AsRef<[f64]>>(
    x: &[X],
    y: &[f64],
    params: &GbtParams,
) -> Result<(GbtModel, TrainReport), HeadError> {
    let start = Instant::now();
    let dim = check_training_data(x, y)?;
    params.validate()?;
    let n = y.len();
    let degenerate = y.iter().all(|&v| v == y[0]);
    let base = if degenerate {
        y[0]
    } else {
        y.iter().sum::<f64>() / n as f64
    };
    let cols = Columns::new(x, dim);
    let mut pred = vec![base; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut losses = Vec::with_capacity(params.n_rounds);

    for _ in 0..params.n_rounds {
        for ((r, p), t) in residual.iter_mut().zip(&pred).zip(y) {
            *r = t - p;
        }
        let tree = grow_tree(&cols, &residual, params);
        for (p, row) in pred.iter_mut().zip(x) {
            *p += tree.evaluate(row.as_ref());
        }
        trees.push(tree);
        losses.push(mse(&pred, y));
    }
    let final_loss = losses.last().copied().unwrap_or_else(|| mse(&pred, y));
    let model = GbtModel::new(dim, base, params.clone(), trees);
    Ok((
        model,
        TrainReport {
            losses,
            final_loss,
            seconds: start.elapsed().as_secs_f64(),
            degenerate,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::HeadModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x = vec![
            vec![0.1, 0.9],
            vec![0.2, 0.3],
            vec![0.35, 0.6],
            vec![0.4, 0.1],
            vec![0.55, 0.8],
            vec![0.6, 0.2],
            vec![0.8, 0.5],
            vec![0.95, 0.7],
        ];
        let y = vec![0.05, 0.9, 0.3, 0.65, 0.1, 0.8, 0.45, 0.2];
        (x, y)
    }

    fn overfit_params() -> GbtParams {
        GbtParams {
            max_depth: 3,
            n_rounds: 100,
            shrinkage: 0.3,
            lambda: 0.0,
            min_samples_leaf: 1,
            seed: 0,
        }
    }

    #[test]
    fn overfits_small_fixture() {
        let (x, y) = fixture();
        let (model, report) = train_gbt(&x, &y, &overfit_params()).unwrap();
        // Independent evaluation of the training loss.
        let mse: f64 = x
            .iter()
            .zip(&y)
            .map(|(r, t)| (model.predict_raw(r).unwrap() - t).powi(2))
            .sum::<f64>()
            / 8.0;
        assert!(mse < 1e-3, "mse {mse}");
        assert!((report.final_loss - mse).abs() < 1e-12);
        for w in report.losses.windows(2) {
            assert!(w[1] <= w[0], "loss increased: {w:?}");
        }
        assert!(model.trees().iter().all(|t| t.depth() <= 3));
    }

    #[test]
    fn zero_rounds_predicts_mean() {
        let (x, y) = fixture();
        let params = GbtParams {
            n_rounds: 0,
            ..Default::default()
        };
        let (model, report) = train_gbt(&x, &y, &params).unwrap();
        let mean = y.iter().sum::<f64>() / 8.0;
        assert!(model.trees().is_empty());
        assert_eq!(model.predict(&[123.0, -4.0]).unwrap(), mean);
        assert!(report.losses.is_empty());
    }

    #[test]
    fn constant_labels_give_zero_leaves() {
        let (x, _) = fixture();
        let y = vec![0.7; 8];
        let (model, report) = train_gbt(&x, &y, &GbtParams::default()).unwrap();
        assert!(report.degenerate);
        for t in model.trees() {
            assert_eq!(t, &Tree::Leaf(0.0));
        }
        for r in &x {
            assert_eq!(model.predict(r).unwrap(), 0.7);
        }
    }

    #[test]
    fn empty_model_predicts_base() {
        let m = GbtModel::new(3, 0.4, GbtParams::default(), vec![]);
        assert_eq!(m.predict(&[1.0, 2.0, 3.0]).unwrap(), 0.4);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn tie_break_prefers_lowest_feature() {
        // Both features separate the labels identically.
        let x = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let params = GbtParams {
            max_depth: 1,
            n_rounds: 1,
            min_samples_leaf: 1,
            ..Default::default()
        };
        let (model, _) = train_gbt(&x, &y, &params).unwrap();
        match &model.trees()[0] {
            Tree::Split {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn respects_min_samples_leaf_and_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.gen()).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] * 3.0).sin().abs()).collect();
        let params = GbtParams {
            n_rounds: 20,
            ..Default::default()
        };
        let (model, report) = train_gbt(&x, &y, &params).unwrap();
        for t in model.trees() {
            assert!(t.depth() <= params.max_depth);
            assert!(t.leaf_count() <= 1 << params.max_depth);
        }
        for w in report.losses.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn save_load_predicts_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] + r[1] * r[2]) / 2.0).collect();
        let (model, _) = train_gbt(&x, &y, &GbtParams { n_rounds: 30, ..Default::default() }).unwrap();
        let model = HeadModel::Gbt(model);
        let loaded = HeadModel::load(&model.save()).unwrap();
        assert_eq!(loaded, model);
        for _ in 0..100 {
            let probe: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..1.5)).collect();
            assert_eq!(
                loaded.predict(&probe).unwrap().to_bits(),
                model.predict(&probe).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn tree_wire_form_is_preorder_arrays() {
        let t = Tree::Split {
            feature: 1,
            threshold: 0.5,
            left: Box::new(Tree::Leaf(-0.25)),
            right: Box::new(Tree::Leaf(0.125)),
        };
        assert_eq!(serde_json::to_string(&t).unwrap(), "[1,0.5,-0.25,0.125]");
        let back: Tree = serde_json::from_str("[1,0.5,-0.25,[0,0.1,1.0,2.0]]").unwrap();
        assert_eq!(back.depth(), 2);
    }

    #[test]
    fn load_rejects_out_of_range_feature() {
        let m = HeadModel::Gbt(GbtModel::new(
            2,
            0.5,
            GbtParams::default(),
            vec![Tree::Split {
                feature: 5,
                threshold: 0.0,
                left: Box::new(Tree::Leaf(0.0)),
                right: Box::new(Tree::Leaf(0.0)),
            }],
        ));
        assert!(matches!(
            HeadModel::load(&m.save()),
            Err(HeadError::CorruptModel(_))
        ));
    }
}
