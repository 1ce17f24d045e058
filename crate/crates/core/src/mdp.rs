//! Markov decision process over the augmented network.
//!
//! Each action of a city state is an attempted move along one outgoing edge
//! (a sale edge for ports). With probability `1 − ε` the move succeeds;
//! otherwise the caravan stays put or takes one of the state's other city
//! edges, uniformly. Sale edges never appear among slip outcomes.
//!
//! With `γ = 1` the model is a stochastic shortest-path problem: every
//! move has strictly positive cost, so a policy that fails to reach a sink
//! has value −∞ and can never be optimal. Policy iteration starts from a
//! proper policy and evaluates only transient states.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{AugmentedNetwork, EdgeCostTable};
use crate::rng::rng_from_seed;

const ROW_SUM_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;
const MAX_POLICY_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Intended destination state.
    pub target: usize,
    pub outcomes: Vec<Outcome>,
}

impl Action {
    fn q(&self, v: &[f64], gamma: f64) -> f64 {
        self.outcomes.iter().map(|o| o.prob * (o.reward + gamma * v[o.next])).sum()
    }
}

/// The tuple (S, A, P, R, γ). Absorbing states have no actions and an
/// implicit zero-reward self-loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpModel {
    pub names: Vec<String>,
    pub absorbing: Vec<bool>,
    pub actions: Vec<Vec<Action>>,
    pub gamma: f64,
}

impl MdpModel {
    pub fn new(names: Vec<String>, absorbing: Vec<bool>, actions: Vec<Vec<Action>>, gamma: f64) -> Result<Self> {
        let m = MdpModel {
            names,
            absorbing,
            actions,
            gamma,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n_states(&self) -> usize {
        self.absorbing.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        if self.names.len() != n || self.actions.len() != n {
            return Err(Error::Model("names, absorbing flags and action lists differ in length".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Model(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        for s in 0..n {
            let acts = &self.actions[s];
            if self.absorbing[s] && !acts.is_empty() {
                return Err(Error::Model(format!("absorbing state `{}` has outgoing actions", self.names[s])));
            }
            if !self.absorbing[s] && acts.is_empty() {
                return Err(Error::Model(format!("state `{}` has no actions", self.names[s])));
            }
            for a in acts {
                let mut total = 0.0;
                for o in &a.outcomes {
                    if o.next >= n || !(o.prob >= 0.0) || !o.reward.is_finite() {
                        return Err(Error::Model(format!(
                            "state `{}`: invalid outcome {o:?}",
                            self.names[s]
                        )));
                    }
                    total += o.prob;
                }
                if (total - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Model(format!(
                        "state `{}`, action to {}: probabilities sum to {total}",
                        self.names[s], a.target
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest absolute one-step reward.
    pub fn max_abs_reward(&self) -> f64 {
        self.actions
            .iter()
            .flatten()
            .flat_map(|a| &a.outcomes)
            .map(|o| o.reward.abs())
            .fold(0.0, f64::max)
    }

    /// Smallest positive transition probability.
    pub fn min_prob(&self) -> f64 {
        self.actions
            .iter()
            .flatten()
            .flat_map(|a| &a.outcomes)
            .map(|o| o.prob)
            .filter(|&p| p > 0.0)
            .fold(1.0, f64::min)
    }

    /// max_a Q(s, a) for each state (0 at absorbing states).
    pub fn bellman(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_states())
            .map(|s| {
                self.actions[s]
                    .iter()
                    .map(|a| a.q(v, self.gamma))
                    .fold(if self.absorbing[s] { 0.0 } else { f64::NEG_INFINITY }, f64::max)
            })
            .collect()
    }

    /// Sup-norm distance between `v` and its Bellman backup.
    pub fn bellman_residual(&self, v: &[f64]) -> f64 {
        self.bellman(v)
            .iter()
            .zip(v)
            .map(|(b, x)| (b - x).abs())
            .fold(0.0, f64::max)
    }

    /// Lowest-index action whose value is within tolerance of the best.
    fn greedy(&self, s: usize, v: &[f64]) -> usize {
        let qs: Vec<f64> = self.actions[s].iter().map(|a| a.q(v, self.gamma)).collect();
        let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = TIE_TOL * (1.0 + best.abs());
        qs.iter().position(|&q| q >= best - tol).unwrap_or(0)
    }
}

/// Chosen action index per state (`None` at absorbing states).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<Option<usize>>,
}

impl Policy {
    /// Intended destination of the chosen action at `s`.
    pub fn target(&self, model: &MdpModel, s: usize) -> Option<usize> {
        self.actions[s].map(|a| model.actions[s][a].target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

/// Model over an augmented network. `sale_rewards[k]` is paid on entering
/// sink `k`.
pub fn build_mdp(
    aug: &AugmentedNetwork,
    costs: &EdgeCostTable,
    sale_rewards: &[f64],
    epsilon: f64,
    gamma: f64,
) -> Result<MdpModel> {
    if sale_rewards.len() != aug.sinks.len() {
        return Err(Error::Model(format!(
            "{} sale rewards for {} sinks",
            sale_rewards.len(),
            aug.sinks.len()
        )));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Domain(format!("slip probability must lie in [0, 1), got {epsilon}")));
    }
    let net = &aug.base;
    let n = net.len();
    let total = aug.n_states();
    let mut actions = vec![Vec::new(); total];
    for (s, acts) in actions.iter_mut().enumerate().take(n) {
        let cities: Vec<usize> = net.neighbors(s).collect();
        let mut targets = cities.clone();
        if let Some(k) = aug.sink_of_city(s) {
            targets.push(aug.sink_state(k));
        }
        for &t in &targets {
            let mut outcomes = Vec::new();
            let arrive = |u: usize| -> f64 {
                if aug.is_sink(u) {
                    sale_rewards[u - n]
                } else {
                    -costs.cost(s, u)
                }
            };
            outcomes.push(Outcome {
                next: t,
                prob: 1.0 - epsilon,
                reward: arrive(t),
            });
            if epsilon > 0.0 {
                let others: Vec<usize> = cities.iter().copied().filter(|&u| u != t).collect();
                let p = epsilon / (1 + others.len()) as f64;
                outcomes.push(Outcome {
                    next: s,
                    prob: p,
                    reward: 0.0,
                });
                outcomes.extend(others.iter().map(|&u| Outcome {
                    next: u,
                    prob: p,
                    reward: arrive(u),
                }));
            }
            acts.push(Action { target: t, outcomes });
        }
    }
    let absorbing = (0..total).map(|s| aug.is_sink(s)).collect();
    MdpModel::new(aug.state_names(), absorbing, actions, gamma)
}

/// A policy that reaches an absorbing state from everywhere with positive
/// probability, built by backward reachability.
fn proper_policy(model: &MdpModel) -> Result<Vec<Option<usize>>> {
    let n = model.n_states();
    let mut reached = model.absorbing.clone();
    let mut policy: Vec<Option<usize>> = vec![None; n];
    loop {
        let mut changed = false;
        for s in 0..n {
            if reached[s] {
                continue;
            }
            let found = model.actions[s]
                .iter()
                .position(|a| a.outcomes.iter().any(|o| o.prob > 0.0 && o.next != s && reached[o.next]));
            if let Some(a) = found {
                policy[s] = Some(a);
                reached[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if let Some(s) = reached.iter().position(|r| !r) {
        if model.gamma >= 1.0 {
            return Err(Error::Solver(format!(
                "no policy reaches an absorbing state from `{}`",
                model.names[s]
            )));
        }
        for (p, acts) in policy.iter_mut().zip(&model.actions) {
            if p.is_none() && !acts.is_empty() {
                *p = Some(0);
            }
        }
    }
    Ok(policy)
}

/// Exact value of `policy`: solves (I − γP_π)v = r_π over non-absorbing
/// states.
pub fn evaluate_policy(model: &MdpModel, policy: &[Option<usize>]) -> Result<Vec<f64>> {
    let n = model.n_states();
    let transient: Vec<usize> = (0..n).filter(|&s| !model.absorbing[s]).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &s) in transient.iter().enumerate() {
        pos[s] = k;
    }
    let m = transient.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (k, &s) in transient.iter().enumerate() {
        let act = policy[s].ok_or_else(|| Error::Model(format!("policy has no action at `{}`", model.names[s])))?;
        for o in &model.actions[s][act].outcomes {
            b[k] += o.prob * o.reward;
            if !model.absorbing[o.next] {
                a[(k, pos[o.next])] -= model.gamma * o.prob;
            }
        }
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("policy evaluation system is singular (improper policy?)".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("policy evaluation produced non-finite values".into()));
    }
    let mut v = vec![0.0; n];
    for (k, &s) in transient.iter().enumerate() {
        v[s] = x[k];
    }
    Ok(v)
}

/// Policy iteration: exact evaluation alternating with greedy improvement
/// (lowest action index on ties) until the policy is stable.
pub fn policy_iteration(model: &MdpModel) -> Result<(Policy, ValueFunction)> {
    model.validate()?;
    let initial = proper_policy(model)?;
    improve_from(model, initial)
}

/// Policy iteration warm-started from `initial`, which must be proper when
/// `γ = 1` (any optimal policy of a model with the same transition
/// structure is).
pub fn policy_iteration_from(model: &MdpModel, initial: &Policy) -> Result<(Policy, ValueFunction)> {
    model.validate()?;
    let fits = initial.actions.len() == model.n_states()
        && initial.actions.iter().enumerate().all(|(s, a)| match a {
            Some(a) => *a < model.actions[s].len(),
            None => model.absorbing[s],
        });
    if !fits {
        return Err(Error::Model("initial policy does not match the model".into()));
    }
    improve_from(model, initial.actions.clone())
}

fn improve_from(model: &MdpModel, mut policy: Vec<Option<usize>>) -> Result<(Policy, ValueFunction)> {
    for _ in 0..MAX_POLICY_ITER {
        let v = evaluate_policy(model, &policy)?;
        let next: Vec<Option<usize>> = (0..model.n_states())
            .map(|s| (!model.absorbing[s]).then(|| model.greedy(s, &v)))
            .collect();
        if next == policy {
            return Ok((Policy { actions: policy }, ValueFunction { values: v }));
        }
        policy = next;
    }
    Err(Error::Solver(format!("policy iteration did not converge in {MAX_POLICY_ITER} iterations")))
}

/// Value iteration to sup-norm change below `tol`. Fails when values leave
/// the bound `max|r| · n / min_prob` (or `max|r| / (1 − γ)` if larger).
pub fn value_iteration(model: &MdpModel, tol: f64) -> Result<ValueFunction> {
    model.validate()?;
    let n = model.n_states();
    let r = model.max_abs_reward();
    let mut bound = r * n as f64 / model.min_prob();
    if model.gamma < 1.0 {
        bound = bound.max(r / (1.0 - model.gamma));
    }
    let bound = bound * (1.0 + 1e-9) + 1e-12;
    let max_iter = 10_000_000 / (n.max(1));
    let mut v = vec![0.0; n];
    for _ in 0..max_iter {
        let next = model.bellman(&v);
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if next.iter().any(|x| !x.is_finite() || x.abs() > bound) {
            return Err(Error::Solver(format!("value iteration diverged (|v| exceeded {bound:.3e})")));
        }
        v = next;
        if delta < tol {
            return Ok(ValueFunction { values: v });
        }
    }
    Err(Error::Solver(format!("value iteration did not reach tolerance {tol} in {max_iter} sweeps")))
}

/// One stochastic trajectory under `policy`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rollout {
    /// Visited states, starting with the start state.
    pub path: Vec<usize>,
    /// Absorbing state reached, or `None` if `max_steps` ran out.
    pub terminal: Option<usize>,
}

pub const DEFAULT_MAX_STEPS: usize = 500;

pub fn rollout(model: &MdpModel, policy: &Policy, start: usize, seed: u64, max_steps: usize) -> Result<Rollout> {
    if start >= model.n_states() || model.absorbing[start] {
        return Err(Error::Domain(format!("rollout must start at a non-absorbing state, got {start}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut s = start;
    let mut path = vec![s];
    for _ in 0..max_steps {
        let a = policy.actions[s].ok_or_else(|| Error::Model(format!("policy has no action at `{}`", model.names[s])))?;
        let outcomes = &model.actions[s][a].outcomes;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = outcomes.last().map_or(s, |o| o.next);
        for o in outcomes {
            acc += o.prob;
            if u < acc {
                next = o.next;
                break;
            }
        }
        s = next;
        path.push(s);
        if model.absorbing[s] {
            return Ok(Rollout { path, terminal: Some(s) });
        }
    }
    Ok(Rollout { path, terminal: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub state: String,
    pub action_target: String,
}

/// JSON form of the decision-arrow layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyExport {
    pub year: i32,
    pub states: Vec<String>,
    pub policy: Vec<PolicyEntry>,
    pub values: Vec<f64>,
}

impl PolicyExport {
    pub fn new(year: i32, model: &MdpModel, policy: &Policy, values: &ValueFunction) -> Self {
        PolicyExport {
            year,
            states: model.names.clone(),
            policy: (0..model.n_states())
                .filter_map(|s| {
                    policy.target(model, s).map(|t| PolicyEntry {
                        state: model.names[s].clone(),
                        action_target: model.names[t].clone(),
                    })
                })
                .collect(),
            values: values.values.clone(),
        }
    }
}
