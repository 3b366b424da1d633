use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("forecast series is empty")]
    EmptyForecast,
    #[error("horizon of {horizon} steps exceeds the {available} forecast values available")]
    HorizonTooLong { horizon: usize, available: usize },
    #[error("invalid forecast-error model: {0}")]
    InvalidModel(String),
}

/// Forecast-error model: `sigma(l) = sigma_1 * sqrt(l) * res_capacity` at lead
/// time `l`, discretised at `quantiles` on `branching_stages`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastErrorModel {
    pub sigma_1: f64,
    pub quantiles: Vec<f64>,
    pub branching_stages: Vec<usize>,
    /// Installed RES capacity, MW; realizations are clipped to `[0, capacity]`.
    pub res_capacity: f64,
}

impl ForecastErrorModel {
    pub fn new(res_capacity: f64) -> Self {
        Self {
            sigma_1: 0.03,
            quantiles: vec![0.1, 0.5, 0.9],
            branching_stages: vec![1, 5],
            res_capacity,
        }
    }

    /// A model with no forecast error: trees collapse to a single path.
    pub fn deterministic(res_capacity: f64) -> Self {
        Self {
            sigma_1: 0.0,
            ..Self::new(res_capacity)
        }
    }

    pub fn sigma(&self, lead: usize) -> f64 {
        self.sigma_1 * (lead as f64).sqrt() * self.res_capacity
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::InvalidModel(m.into()));
        if !(self.sigma_1 >= 0.0 && self.sigma_1.is_finite()) {
            return bad("sigma_1 must be finite and >= 0");
        }
        if !(self.res_capacity >= 0.0 && self.res_capacity.is_finite()) {
            return bad("res_capacity must be finite and >= 0");
        }
        if self.quantiles.is_empty()
            || self.quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0))
            || self.quantiles.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("quantiles must be strictly increasing in (0, 1)");
        }
        if self.branching_stages.contains(&0)
            || self.branching_stages.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("branching stages must be strictly increasing and >= 1");
        }
        Ok(())
    }

    fn is_deterministic(&self) -> bool {
        self.sigma_1 == 0.0 || self.quantiles.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub stage: usize,
    pub probability: f64,
    /// RES realization at this node, MW.
    pub res: f64,
    /// Standardised forecast error along the path to this node.
    pub z: f64,
}

/// Nodes are stored stage by stage, so a parent always precedes its children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub nodes: Vec<TreeNode>,
    pub stages: Vec<Vec<usize>>,
}

impl ScenarioTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The ancestor `k` stages above `id` (`k = 0` is the node itself).
    pub fn ancestor(&self, id: usize, k: usize) -> Option<usize> {
        let mut cur = id;
        for _ in 0..k {
            cur = self.nodes[cur].parent?;
        }
        Some(cur)
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &TreeNode> + '_ {
        let stage = self.nodes[id].stage + 1;
        self.stages
            .get(stage)
            .into_iter()
            .flatten()
            .map(|&c| &self.nodes[c])
            .filter(move |n| n.parent == Some(id))
    }

    /// Largest deviation of a stage's probability sum from 1.
    pub fn probability_error(&self) -> f64 {
        self.stages
            .iter()
            .map(|s| (s.iter().map(|&i| self.nodes[i].probability).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Indented text dump, one node per line.
    pub fn dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        fn walk<W: Write>(t: &ScenarioTree, id: usize, w: &mut W) -> std::io::Result<()> {
            let n = &t.nodes[id];
            writeln!(
                w,
                "{:indent$}node {} stage {} p={:.6} res={:.3}",
                "",
                n.id,
                n.stage,
                n.probability,
                n.res,
                indent = 2 * n.stage
            )?;
            let kids: Vec<usize> = t.children(id).map(|c| c.id).collect();
            for c in kids {
                walk(t, c, w)?;
            }
            Ok(())
        }
        if self.is_empty() {
            return Ok(());
        }
        walk(self, 0, &mut w)
    }
}

/// Probability mass of each quantile's cell. Cells are bounded by the
/// midpoints, in standard-normal space, between neighbouring quantiles.
pub fn branch_probabilities(quantiles: &[f64]) -> Vec<f64> {
    let n = Normal::standard();
    let z: Vec<f64> = quantiles.iter().map(|&q| n.inverse_cdf(q)).collect();
    let mut edges = vec![0.0];
    for w in z.windows(2) {
        edges.push(n.cdf(0.5 * (w[0] + w[1])));
    }
    edges.push(1.0);
    edges.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Builds a tree over `forecast[0..horizon]`. Stage 0 is the current hour and
/// carries no error. At each branching stage every node splits into one child
/// per quantile; between branchings a node has a single child. The error of a
/// path is a Brownian motion sampled at the branching stages, so marginals at
/// the last branching stage match the quantile discretisation exactly.
pub fn build_tree(
    forecast: &[f64],
    model: &ForecastErrorModel,
    horizon: usize,
) -> Result<ScenarioTree, ScenarioError> {
    if forecast.is_empty() || horizon == 0 {
        return Err(ScenarioError::EmptyForecast);
    }
    if horizon > forecast.len() {
        return Err(ScenarioError::HorizonTooLong {
            horizon,
            available: forecast.len(),
        });
    }
    model.validate()?;
    let normal = Normal::standard();
    let zq: Vec<f64> = model.quantiles.iter().map(|&q| normal.inverse_cdf(q)).collect();
    let probs = branch_probabilities(&model.quantiles);
    let deterministic = model.is_deterministic();
    let cap = model.res_capacity;

    let value = |stage: usize, z: f64| {
        let v = forecast[stage] + model.sigma(stage) * z;
        if deterministic {
            forecast[stage]
        } else {
            v.clamp(0.0, cap.max(forecast[stage]))
        }
    };

    let mut nodes = vec![TreeNode {
        id: 0,
        parent: None,
        stage: 0,
        probability: 1.0,
        res: forecast[0],
        z: 0.0,
    }];
    let mut stages = vec![vec![0usize]];
    // Brownian increments: w(b_k) = w(b_{k-1}) + sqrt(b_k - b_{k-1}) * z_k,
    // the standardised error at stage l >= b is w(b_last <= l) / sqrt(b_last).
    let mut walk: Vec<f64> = vec![0.0];
    let mut last_branch = 0usize;
    for stage in 1..horizon {
        let branching = !deterministic && model.branching_stages.contains(&stage);
        let mut layer = Vec::new();
        let mut next_walk = Vec::new();
        for (k, &pid) in stages[stage - 1].iter().enumerate() {
            let parent = nodes[pid].clone();
            if branching {
                let step = ((stage - last_branch) as f64).sqrt();
                for (&zk, &pk) in zq.iter().zip(&probs) {
                    let w = walk[k] + step * zk;
                    let z = w / (stage as f64).sqrt();
                    let id = nodes.len();
                    nodes.push(TreeNode {
                        id,
                        parent: Some(pid),
                        stage,
                        probability: parent.probability * pk,
                        res: value(stage, z),
                        z,
                    });
                    layer.push(id);
                    next_walk.push(w);
                }
            } else {
                let z = if last_branch == 0 {
                    0.0
                } else {
                    walk[k] / (last_branch as f64).sqrt()
                };
                let id = nodes.len();
                nodes.push(TreeNode {
                    id,
                    parent: Some(pid),
                    stage,
                    probability: parent.probability,
                    res: value(stage, z),
                    z,
                });
                layer.push(id);
                next_walk.push(walk[k]);
            }
        }
        if branching {
            last_branch = stage;
        }
        walk = next_walk;
        stages.push(layer);
    }
    Ok(ScenarioTree { nodes, stages })
}

/// The RES series the rolling run treats as realized: the forecast itself
/// (median path) or, with a seed, the forecast plus seeded one-step errors.
pub fn realized_trace(forecast: &[f64], model: &ForecastErrorModel, seed: Option<u64>) -> Vec<f64> {
    match seed {
        None => forecast.to_vec(),
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma = model.sigma(1);
            forecast
                .iter()
                .map(|&f| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    (f + sigma * e).clamp(0.0, model.res_capacity.max(f))
                })
                .collect()
        }
    }
}
