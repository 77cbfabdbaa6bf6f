use super::{ActionId, StateId, TabularMdp};

/// States of the five-state discount counterexample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainState {
    Center = 0,
    Left = 1,
    FarLeft = 2,
    Right = 3,
    FarRight = 4,
}

impl ChainState {
    pub fn id(self) -> StateId {
        StateId(self as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainAction {
    Left = 0,
    Right = 1,
}

impl ChainAction {
    pub fn id(self) -> ActionId {
        ActionId(self as usize)
    }
}

/// Five-state chain whose optimal first move flips with the discount.
///
/// From the center, `Left` enters a state worth 4 that leads on to one worth
/// 10; `Right` enters a state worth 10 that leads on to one worth 0. Rewards
/// are paid on entry and both far states are absorbing, so the center is worth
/// `4 + 10 * gamma` going left and `10` going right.
pub fn build_five_state_chain(gamma: f64) -> TabularMdp {
    use ChainState::*;
    const N: usize = 5;
    const NA: usize = 2;
    let mut transition = vec![0.0; N * NA * N];
    let mut reward = vec![0.0; N * NA];
    let mut set = |s: ChainState, a: usize, next: ChainState, r: f64| {
        transition[(s as usize * NA + a) * N + next as usize] = 1.0;
        reward[s as usize * NA + a] = r;
    };
    set(Center, ChainAction::Left as usize, Left, 4.0);
    set(Center, ChainAction::Right as usize, Right, 10.0);
    for a in 0..NA {
        set(Left, a, FarLeft, 10.0);
        set(Right, a, FarRight, 0.0);
        set(FarLeft, a, FarLeft, 0.0);
        set(FarRight, a, FarRight, 0.0);
    }
    TabularMdp::new(
        N,
        NA,
        transition,
        reward,
        gamma,
        Center.id(),
        vec![false, false, true, false, true],
    )
    .expect("chain tables are well-shaped")
}
