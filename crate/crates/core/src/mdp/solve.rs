use super::{MdpError, TabularModel};

/// Absolute band inside which two action values count as tied.
pub const TIE_TOL: f64 = 1e-9;

/// Sweep cap for the iterative solvers.
pub const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularValue(pub Vec<f64>);

impl TabularValue {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn get(&self, s: usize) -> f64 {
        self.0[s]
    }

    /// Expected value under a start distribution.
    pub fn mean_over(&self, dist: &[(usize, f64)]) -> f64 {
        dist.iter().map(|&(s, p)| p * self.0[s]).sum()
    }
}

/// Dense action-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    actions: usize,
    data: Vec<f64>,
}

impl TabularQ {
    pub fn new(states: usize, actions: usize, init: f64) -> Self {
        Self { actions, data: vec![init; states * actions] }
    }

    pub fn num_states(&self) -> usize {
        self.data.len() / self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.data[s * self.actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.data[s * self.actions + a] = v;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.actions..(s + 1) * self.actions]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A total order over action indices; earlier means preferred on ties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionOrder {
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl ActionOrder {
    pub fn identity(n: usize) -> Self {
        Self { order: (0..n).collect(), rank: (0..n).collect() }
    }

    pub fn new(order: Vec<usize>) -> Result<Self, MdpError> {
        let mut rank = vec![usize::MAX; order.len()];
        for (r, &a) in order.iter().enumerate() {
            if a >= order.len() || rank[a] != usize::MAX {
                return Err(MdpError::InvalidOrder(order.clone()));
            }
            rank[a] = r;
        }
        Ok(Self { order, rank })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn rank(&self, a: usize) -> usize {
        self.rank[a]
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied()
    }

    /// Index of the ordered greedy choice among `values`.
    pub fn argmax(&self, values: &[f64]) -> usize {
        ordered_argmax(values.iter().copied().enumerate(), |a| self.rank[a]).expect("empty value list")
    }
}

/// Ordered argmax over `(id, value)` pairs: the best value wins, and among
/// values within [`TIE_TOL`] of the best, the smallest `rank` wins.
pub fn ordered_argmax<I, F>(items: I, rank: F) -> Option<usize>
where
    I: IntoIterator<Item = (usize, f64)>,
    F: Fn(usize) -> usize,
{
    let items: Vec<(usize, f64)> = items.into_iter().collect();
    let best = items.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    items
        .iter()
        .filter(|&&(_, v)| v >= best - TIE_TOL)
        .min_by_key(|&&(id, _)| rank(id))
        .map(|&(id, _)| id)
}

/// A deterministic flat policy; entries at terminal states are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyMap(pub Vec<usize>);

impl PolicyMap {
    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }
}

fn backup(model: &TabularModel, s: usize, a: usize, v: &[f64]) -> f64 {
    let g = model.gamma();
    model.outcomes(s, a).iter().map(|o| o.prob * (o.reward + g * v[o.next])).sum()
}

fn greedy_backup(model: &TabularModel, s: usize, v: &[f64]) -> f64 {
    (0..model.num_actions()).map(|a| backup(model, s, a, v)).fold(f64::NEG_INFINITY, f64::max)
}

/// Max over states of |T v - v| for the optimality operator.
pub fn bellman_residual(model: &TabularModel, v: &TabularValue) -> f64 {
    (0..model.num_states())
        .filter(|&s| !model.is_terminal(s))
        .map(|s| (greedy_backup(model, s, &v.0) - v.0[s]).abs())
        .fold(0.0, f64::max)
}

/// Max over states of |T_pi v - v| for a fixed policy.
pub fn policy_residual(model: &TabularModel, pi: &PolicyMap, v: &TabularValue) -> f64 {
    (0..model.num_states())
        .filter(|&s| !model.is_terminal(s))
        .map(|s| (backup(model, s, pi.action(s), &v.0) - v.0[s]).abs())
        .fold(0.0, f64::max)
}

const DIVERGENCE_BOUND: f64 = 1e12;

fn iterate(
    model: &TabularModel,
    tol: f64,
    step: impl Fn(usize, &[f64]) -> f64,
    residual: impl Fn(&TabularValue) -> f64,
) -> Result<TabularValue, MdpError> {
    if !(tol > 0.0) {
        return Err(MdpError::InvalidTolerance(tol));
    }
    let n = model.num_states();
    let mut v = TabularValue::zeros(n);
    for sweep in 0..MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            if model.is_terminal(s) {
                continue;
            }
            let new = step(s, &v.0);
            delta = delta.max((new - v.0[s]).abs());
            v.0[s] = new;
        }
        if !delta.is_finite() || v.0.iter().any(|x| x.abs() > DIVERGENCE_BOUND) {
            return Err(MdpError::Diverged { sweeps: sweep + 1 });
        }
        if delta <= tol && residual(&v) <= tol {
            return Ok(v);
        }
    }
    Err(MdpError::Diverged { sweeps: MAX_SWEEPS })
}

/// Optimal state values with Bellman residual at most `tol`.
pub fn value_iteration(model: &TabularModel, tol: f64) -> Result<TabularValue, MdpError> {
    iterate(model, tol, |s, v| greedy_backup(model, s, v), |v| bellman_residual(model, v))
}

/// Values of the fixed policy `pi` with residual at most `tol`.
pub fn policy_evaluation(model: &TabularModel, pi: &PolicyMap, tol: f64) -> Result<TabularValue, MdpError> {
    if pi.0.len() != model.num_states() {
        return Err(MdpError::InvalidPolicy(format!(
            "policy covers {} states, model has {}",
            pi.0.len(),
            model.num_states()
        )));
    }
    if let Some(s) = (0..model.num_states()).find(|&s| !model.is_terminal(s) && pi.action(s) >= model.num_actions()) {
        return Err(MdpError::InvalidPolicy(format!("action {} at state {s}", pi.action(s))));
    }
    if model.gamma() == 1.0 {
        if let Some(s) = first_improper_state(model, pi) {
            return Err(MdpError::ImproperPolicy(s));
        }
    }
    iterate(model, tol, |s, v| backup(model, s, pi.action(s), v), |v| policy_residual(model, pi, v))
}

/// A state from which `pi` can never reach a terminal state.
fn first_improper_state(model: &TabularModel, pi: &PolicyMap) -> Option<usize> {
    let n = model.num_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in (0..n).filter(|&s| !model.is_terminal(s)) {
        for o in model.outcomes(s, pi.action(s)) {
            preds[o.next].push(s);
        }
    }
    let mut ok: Vec<bool> = (0..n).map(|s| model.is_terminal(s)).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&s| ok[s]).collect();
    while let Some(s) = stack.pop() {
        for &p in &preds[s] {
            if !ok[p] {
                ok[p] = true;
                stack.push(p);
            }
        }
    }
    ok.iter().position(|&x| !x)
}

/// One-step lookahead action values for `v`.
pub fn q_from_values(model: &TabularModel, v: &TabularValue) -> TabularQ {
    let mut q = TabularQ::new(model.num_states(), model.num_actions(), 0.0);
    for s in 0..model.num_states() {
        for a in 0..model.num_actions() {
            q.set(s, a, backup(model, s, a, &v.0));
        }
    }
    q
}

pub fn ordered_greedy_policy(q: &TabularQ, order: &ActionOrder) -> PolicyMap {
    PolicyMap((0..q.num_states()).map(|s| order.argmax(q.row(s))).collect())
}

pub fn one_step_improved_policy(model: &TabularModel, v: &TabularValue) -> PolicyMap {
    one_step_improved_policy_with(model, v, &ActionOrder::identity(model.num_actions()))
}

pub fn one_step_improved_policy_with(model: &TabularModel, v: &TabularValue, order: &ActionOrder) -> PolicyMap {
    ordered_greedy_policy(&q_from_values(model, v), order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Outcome, StateSpace};

    /// Line of 5 cells, goal at 4; left/right moves cost 1, walls are no-ops.
    fn line(gamma: f64) -> TabularModel {
        let sp = StateSpace::new([("x", 5)]).unwrap();
        TabularModel::build(
            sp,
            vec!["left".into(), "right".into()],
            gamma,
            |s| s == 4,
            |s, a| {
                let next = if a == 0 { s.saturating_sub(1) } else { s + 1 };
                vec![Outcome { next, prob: 1.0, reward: -1.0 }]
            },
            vec![(0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn value_iteration_matches_distance() {
        let m = line(1.0);
        let v = value_iteration(&m, 1e-10).unwrap();
        for s in 0..5 {
            assert!((v.get(s) + (4 - s) as f64).abs() < 1e-9);
        }
        assert!(bellman_residual(&m, &v) <= 1e-10);
    }

    #[test]
    fn discounted_values() {
        let m = line(0.5);
        let v = value_iteration(&m, 1e-12).unwrap();
        // v(3) = -1, v(2) = -1.5, v(1) = -1.75
        assert!((v.get(3) + 1.0).abs() < 1e-9);
        assert!((v.get(2) + 1.5).abs() < 1e-9);
        assert!((v.get(1) + 1.75).abs() < 1e-9);
    }

    #[test]
    fn improper_policy_is_reported() {
        let m = line(1.0);
        let pi = PolicyMap(vec![0; 5]);
        assert!(matches!(policy_evaluation(&m, &pi, 1e-8), Err(MdpError::ImproperPolicy(0))));
    }

    #[test]
    fn greedy_policy_evaluates_to_optimum() {
        let m = line(1.0);
        let v = value_iteration(&m, 1e-10).unwrap();
        let pi = ordered_greedy_policy(&q_from_values(&m, &v), &ActionOrder::identity(2));
        let vp = policy_evaluation(&m, &pi, 1e-10).unwrap();
        for s in 0..5 {
            assert!((vp.get(s) - v.get(s)).abs() <= 2e-10);
        }
        assert_eq!(one_step_improved_policy(&m, &v).0[..4], [1, 1, 1, 1]);
    }

    #[test]
    fn ties_follow_the_order() {
        let mut q = TabularQ::new(1, 3, 0.0);
        q.set(0, 0, 1.0);
        q.set(0, 1, 1.0 + 1e-12);
        q.set(0, 2, 0.5);
        let order = ActionOrder::new(vec![1, 0, 2]).unwrap();
        assert_eq!(ordered_greedy_policy(&q, &order).0, vec![1]);
        let order = ActionOrder::new(vec![0, 1, 2]).unwrap();
        assert_eq!(ordered_greedy_policy(&q, &order).0, vec![0]);
        q.set(0, 2, 3.0);
        assert_eq!(ordered_greedy_policy(&q, &order).0, vec![2]);
        let flat = TabularQ::new(1, 3, 0.0);
        let order = ActionOrder::new(vec![2, 0, 1]).unwrap();
        assert_eq!(ordered_greedy_policy(&flat, &order).0, vec![2]);
        assert!(ActionOrder::new(vec![0, 0]).is_err());
    }
}
