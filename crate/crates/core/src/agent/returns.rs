use crate::agent::{ActionId, AgentError, Experience};

/// Bounds of any reachable return: at most 100 step costs plus a collision,
/// or a success with no cost.
pub const MIN_TARGET: f64 = -2.0;
pub const MAX_TARGET: f64 = 1.0;

/// One agent decision and the per-step rewards it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision<I> {
    pub state: I,
    pub action: ActionId,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<I> {
    pub decisions: Vec<Decision<I>>,
    pub terminal: bool,
}

impl<I> Default for Trajectory<I> {
    fn default() -> Self {
        Self {
            decisions: Vec::new(),
            terminal: false,
        }
    }
}

impl<I> Trajectory<I> {
    pub fn total_steps(&self) -> usize {
        self.decisions.iter().map(|d| d.rewards.len()).sum()
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.decisions.iter().flat_map(|d| &d.rewards).sum()
    }
}

/// Full discounted return from every decision point to the end of the
/// episode, discounting once per simulator step.
pub fn compute_returns<I>(traj: Trajectory<I>, gamma: f64) -> Result<Vec<Experience<I>>, AgentError> {
    if !traj.terminal {
        return Err(AgentError::IncompleteTrajectory);
    }
    let mut g = 0.0;
    let mut targets = vec![0.0; traj.decisions.len()];
    for (t, d) in traj.decisions.iter().enumerate().rev() {
        for r in d.rewards.iter().rev() {
            g = r + gamma * g;
        }
        if !(MIN_TARGET..=MAX_TARGET).contains(&g) {
            return Err(AgentError::TargetOutOfRange(g));
        }
        targets[t] = g;
    }
    Ok(traj
        .decisions
        .into_iter()
        .zip(targets)
        .map(|(d, target)| Experience {
            state: d.state,
            action: d.action,
            target,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(steps: &[&[f64]]) -> Trajectory<()> {
        Trajectory {
            decisions: steps
                .iter()
                .map(|r| Decision {
                    state: (),
                    action: ActionId::Wait1,
                    rewards: r.to_vec(),
                })
                .collect(),
            terminal: true,
        }
    }

    #[test]
    fn rejects_incomplete_and_out_of_range() {
        let mut t = traj(&[&[-0.01]]);
        t.terminal = false;
        assert!(matches!(compute_returns(t, 1.0), Err(AgentError::IncompleteTrajectory)));
        assert!(matches!(
            compute_returns(traj(&[&[-3.0]]), 1.0),
            Err(AgentError::TargetOutOfRange(_))
        ));
    }

    #[test]
    fn macro_action_discounts_internally() {
        let out = compute_returns(traj(&[&[-0.01, -0.01], &[1.0]]), 0.5).unwrap();
        assert!((out[0].target - (-0.01 - 0.005 + 0.25)).abs() < 1e-15);
        assert_eq!(out[1].target, 1.0);
    }
}
