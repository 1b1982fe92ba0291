use std::fmt;

use rand::Rng;

use crate::nn::NUM_ACTIONS;

/// Go, or wait for 1, 2, 4 or 8 simulator steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionId {
    Go,
    Wait1,
    Wait2,
    Wait4,
    Wait8,
}

impl ActionId {
    pub const ALL: [ActionId; NUM_ACTIONS] = [
        ActionId::Go,
        ActionId::Wait1,
        ActionId::Wait2,
        ActionId::Wait4,
        ActionId::Wait8,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Steps spent waiting; `None` for Go.
    pub fn wait_steps(self) -> Option<u32> {
        match self {
            ActionId::Go => None,
            ActionId::Wait1 => Some(1),
            ActionId::Wait2 => Some(2),
            ActionId::Wait4 => Some(4),
            ActionId::Wait8 => Some(8),
        }
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.wait_steps() {
            None => f.write_str("go"),
            Some(k) => write!(f, "wait{k}"),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(q: &[f64; NUM_ACTIONS]) -> usize {
    let mut best = 0;
    for i in 1..NUM_ACTIONS {
        if q[i] > q[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy choice. Draws one uniform number always, and a second one only
/// when exploring.
pub fn select_action<R: Rng + ?Sized>(q: &[f64; NUM_ACTIONS], epsilon: f64, rng: &mut R) -> ActionId {
    if rng.gen::<f64>() < epsilon {
        ActionId::ALL[rng.gen_range(0..NUM_ACTIONS)]
    } else {
        ActionId::ALL[argmax(q)]
    }
}
