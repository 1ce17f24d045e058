#![allow(dead_code)]

//! Brute-force MDP oracle: every deterministic policy evaluated with a
//! hand-rolled Gaussian elimination.

use origins_core::mdp::{Action, MdpModel, Outcome};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random model with 2–6 states and 1–3 actions per transient state.
/// `ssp` gives `γ = 1`, strictly negative rewards and at least one
/// absorbing state; otherwise `γ ∈ [0.3, 0.95]`.
pub fn random_mdp<R: Rng>(rng: &mut R, ssp: bool) -> MdpModel {
    loop {
        let n = rng.random_range(2..=6);
        let n_abs = if ssp { rng.random_range(1..=2.min(n - 1)) } else { rng.random_range(0..=1) };
        let absorbing: Vec<bool> = (0..n).map(|s| s >= n - n_abs).collect();
        let states: Vec<usize> = (0..n).collect();
        let actions: Vec<Vec<Action>> = (0..n)
            .map(|s| {
                if absorbing[s] {
                    return Vec::new();
                }
                (0..rng.random_range(1..=3))
                    .map(|_| {
                        let mut next = states.clone();
                        next.shuffle(rng);
                        next.truncate(rng.random_range(1..=3.min(n)));
                        let w: Vec<f64> = next.iter().map(|_| rng.random_range(0.05..1.0)).collect();
                        let total: f64 = w.iter().sum();
                        let mut outcomes: Vec<Outcome> = next
                            .iter()
                            .zip(&w)
                            .map(|(&u, &wi)| Outcome {
                                next: u,
                                prob: wi / total,
                                reward: if ssp { rng.random_range(-10.0..-0.1) } else { rng.random_range(-10.0..10.0) },
                            })
                            .collect();
                        // exact row sums
                        let rest: f64 = outcomes[1..].iter().map(|o| o.prob).sum();
                        outcomes[0].prob = 1.0 - rest;
                        Action {
                            target: outcomes[0].next,
                            outcomes,
                        }
                    })
                    .collect()
            })
            .collect();
        let gamma = if ssp { 1.0 } else { rng.random_range(0.3..0.95) };
        let names = (0..n).map(|s| format!("s{s}")).collect();
        let model = MdpModel::new(names, absorbing, actions, gamma).expect("valid random model");
        if !ssp || enumerate(&model).is_some() {
            return model;
        }
    }
}

/// Dense solve by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            for k in col..m {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let s: f64 = (row + 1..m).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Whether every transient state reaches an absorbing one under `policy`.
fn proper(model: &MdpModel, policy: &[usize]) -> bool {
    let n = model.n_states();
    let mut reach = model.absorbing.clone();
    for _ in 0..n {
        for s in 0..n {
            if !reach[s] && model.actions[s][policy[s]].outcomes.iter().any(|o| o.prob > 0.0 && reach[o.next]) {
                reach[s] = true;
            }
        }
    }
    reach.iter().all(|&r| r)
}

/// Value of a deterministic policy; `None` for improper undiscounted ones.
pub fn policy_value(model: &MdpModel, policy: &[usize]) -> Option<Vec<f64>> {
    if model.gamma >= 1.0 && !proper(model, policy) {
        return None;
    }
    let n = model.n_states();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        a[s][s] = 1.0;
        if model.absorbing[s] {
            continue;
        }
        for o in &model.actions[s][policy[s]].outcomes {
            b[s] += o.prob * o.reward;
            if !model.absorbing[o.next] {
                a[s][o.next] -= model.gamma * o.prob;
            }
        }
    }
    solve(a, b)
}

pub struct Optimum {
    pub values: Vec<f64>,
    /// Greedy action per state under the optimal values (`None` if absorbing).
    pub argmax: Vec<Option<usize>>,
    /// Gap between the best and second-best action values per state.
    pub margin: Vec<f64>,
}

/// Componentwise best value over all deterministic policies, or `None` when
/// no policy is proper.
pub fn enumerate(model: &MdpModel) -> Option<Optimum> {
    let n = model.n_states();
    let counts: Vec<usize> = (0..n).map(|s| model.actions[s].len().max(1)).collect();
    let total: usize = counts.iter().product();
    let mut best: Option<Vec<f64>> = None;
    for mut code in 0..total {
        let policy: Vec<usize> = counts
            .iter()
            .map(|&c| {
                let a = code % c;
                code /= c;
                a
            })
            .collect();
        if let Some(v) = policy_value(model, &policy) {
            best = Some(match best {
                None => v,
                Some(b) => b.iter().zip(&v).map(|(x, y)| x.max(*y)).collect(),
            });
        }
    }
    let values = best?;
    let mut argmax = vec![None; n];
    let mut margin = vec![f64::INFINITY; n];
    for s in 0..n {
        let q: Vec<f64> = model.actions[s]
            .iter()
            .map(|a| a.outcomes.iter().map(|o| o.prob * (o.reward + model.gamma * values[o.next])).sum())
            .collect();
        if q.is_empty() {
            continue;
        }
        let (i, &top) = q.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        argmax[s] = Some(i);
        margin[s] = q
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, &x)| top - x)
            .fold(f64::INFINITY, f64::min);
    }
    Some(Optimum { values, argmax, margin })
}
