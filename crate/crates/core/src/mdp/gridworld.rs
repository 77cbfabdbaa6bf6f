use serde::{Deserialize, Serialize};

use super::{ActionId, MdpError, StateId, TabularMdp};

/// Grid coordinate; `(0, 0)` is the bottom-left cell and `y` grows upward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl From<[usize; 2]> for Cell {
    fn from([x, y]: [usize; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [Self::Up, Self::Down, Self::Left, Self::Right];

    pub fn id(self) -> ActionId {
        ActionId(self as usize)
    }

    pub fn from_id(a: ActionId) -> Option<Self> {
        Self::ALL.get(a.0).copied()
    }
}

/// Declarative lava gridworld. Defaults give the 10x10 benchmark layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub start: Cell,
    pub goal: Cell,
    pub lava: Vec<Cell>,
    pub goal_reward: f64,
    pub lava_reward: f64,
    pub step_reward: f64,
    pub gamma: f64,
}

impl Default for GridworldSpec {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            start: Cell::new(0, 0),
            goal: Cell::new(9, 9),
            lava: vec![Cell::new(4, 4), Cell::new(5, 5), Cell::new(6, 6)],
            goal_reward: 1.0,
            lava_reward: -1.0,
            step_reward: 0.0,
            gamma: 0.95,
        }
    }
}

impl GridworldSpec {
    /// The 3x3 layout with a single lava cell in the middle.
    pub fn three_by_three() -> Self {
        Self {
            width: 3,
            height: 3,
            start: Cell::new(0, 0),
            goal: Cell::new(2, 2),
            lava: vec![Cell::new(1, 1)],
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<(), MdpError> {
        if self.width == 0 || self.height == 0 {
            return Err(MdpError::InvalidGrid("grid must be at least 1x1".into()));
        }
        let inside = |c: &Cell| c.x < self.width && c.y < self.height;
        if !inside(&self.start) {
            return Err(MdpError::InvalidGrid(format!("start {:?} out of bounds", self.start)));
        }
        if !inside(&self.goal) {
            return Err(MdpError::InvalidGrid(format!("goal {:?} out of bounds", self.goal)));
        }
        if let Some(c) = self.lava.iter().find(|c| !inside(c)) {
            return Err(MdpError::InvalidGrid(format!("lava {c:?} out of bounds")));
        }
        if self.lava.contains(&self.start) {
            return Err(MdpError::InvalidGrid("start is a lava cell".into()));
        }
        if self.lava.contains(&self.goal) {
            return Err(MdpError::InvalidGrid("goal is a lava cell".into()));
        }
        for r in [self.goal_reward, self.lava_reward, self.step_reward, self.gamma] {
            if !r.is_finite() {
                return Err(MdpError::InvalidGrid("non-finite reward or discount".into()));
            }
        }
        Ok(())
    }
}

/// A built gridworld: the MDP plus the coordinate mapping used by renderers.
#[derive(Clone, Debug)]
pub struct Gridworld {
    spec: GridworldSpec,
    mdp: TabularMdp,
}

impl Gridworld {
    pub fn new(spec: GridworldSpec) -> Result<Self, MdpError> {
        let mdp = build_gridworld(&spec)?;
        Ok(Self { spec, mdp })
    }

    pub fn spec(&self) -> &GridworldSpec {
        &self.spec
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn into_mdp(self) -> TabularMdp {
        self.mdp
    }

    pub fn state_of(&self, cell: Cell) -> StateId {
        StateId(cell.y * self.spec.width + cell.x)
    }

    pub fn cell_of(&self, s: StateId) -> Cell {
        Cell::new(s.0 % self.spec.width, s.0 / self.spec.width)
    }
}

fn neighbour(spec: &GridworldSpec, c: Cell, a: GridAction) -> Cell {
    match a {
        GridAction::Up if c.y + 1 < spec.height => Cell::new(c.x, c.y + 1),
        GridAction::Down if c.y > 0 => Cell::new(c.x, c.y - 1),
        GridAction::Left if c.x > 0 => Cell::new(c.x - 1, c.y),
        GridAction::Right if c.x + 1 < spec.width => Cell::new(c.x + 1, c.y),
        _ => c,
    }
}

/// Deterministic four-action gridworld. Goal and lava cells are absorbing;
/// entering them pays `goal_reward` / `lava_reward`, every other move
/// (including bumping a wall) pays `step_reward`. States are row-major from
/// the bottom-left cell.
pub fn build_gridworld(spec: &GridworldSpec) -> Result<TabularMdp, MdpError> {
    spec.check()?;
    let n = spec.width * spec.height;
    let na = GridAction::ALL.len();
    let index = |c: Cell| c.y * spec.width + c.x;

    let mut terminal = vec![false; n];
    terminal[index(spec.goal)] = true;
    for &c in &spec.lava {
        terminal[index(c)] = true;
    }

    let mut transition = vec![0.0; n * na * n];
    let mut reward = vec![0.0; n * na];
    for y in 0..spec.height {
        for x in 0..spec.width {
            let c = Cell::new(x, y);
            let s = index(c);
            for a in GridAction::ALL {
                let row = (s * na + a as usize) * n;
                if terminal[s] {
                    transition[row + s] = 1.0;
                    continue;
                }
                let next = neighbour(spec, c, a);
                let j = index(next);
                transition[row + j] = 1.0;
                reward[s * na + a as usize] = if next == spec.goal {
                    spec.goal_reward
                } else if spec.lava.contains(&next) {
                    spec.lava_reward
                } else {
                    spec.step_reward
                };
            }
        }
    }
    TabularMdp::new(
        n,
        na,
        transition,
        reward,
        spec.gamma,
        StateId(index(spec.start)),
        terminal,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn default_ten_by_ten_shape() {
        let mdp = build_gridworld(&GridworldSpec::default()).unwrap();
        assert_eq!(mdp.n_states(), 100);
        assert_eq!(mdp.n_actions(), 4);
        assert_eq!(mdp.terminal_mask().iter().filter(|t| **t).count(), 4);
        assert!(mdp.validate().is_empty());
        assert!(mdp.is_deterministic());
    }

    #[test]
    fn three_by_three_validates() {
        let mdp = build_gridworld(&GridworldSpec::three_by_three()).unwrap();
        assert_eq!(mdp.n_states(), 9);
        assert!(mdp.validate().is_empty());
        assert!(mdp.is_terminal(StateId(4)));
        assert!(mdp.is_terminal(StateId(8)));
    }

    #[test]
    fn single_cell_start_is_goal() {
        let spec = GridworldSpec {
            width: 1,
            height: 1,
            start: Cell::new(0, 0),
            goal: Cell::new(0, 0),
            lava: vec![],
            ..GridworldSpec::default()
        };
        let mdp = build_gridworld(&spec).unwrap();
        assert!(mdp.is_terminal(mdp.start()));
        assert!(mdp.validate().is_empty());
    }

    #[test]
    fn rejects_out_of_bounds_and_lava_overlap() {
        let spec = GridworldSpec {
            goal: Cell::new(10, 3),
            ..GridworldSpec::default()
        };
        assert!(matches!(build_gridworld(&spec), Err(MdpError::InvalidGrid(_))));
        let mut spec = GridworldSpec::default();
        spec.lava.push(Cell::new(0, 12));
        assert!(matches!(build_gridworld(&spec), Err(MdpError::InvalidGrid(_))));
        let mut spec = GridworldSpec::default();
        spec.lava.push(spec.start);
        assert!(matches!(build_gridworld(&spec), Err(MdpError::InvalidGrid(_))));
        let mut spec = GridworldSpec::default();
        spec.lava.push(spec.goal);
        assert!(matches!(build_gridworld(&spec), Err(MdpError::InvalidGrid(_))));
    }

    #[test]
    fn wall_bump_stays_put() {
        let world = Gridworld::new(GridworldSpec::default()).unwrap();
        let out = world
            .mdp()
            .step(world.mdp().start(), GridAction::Left.id(), &mut seeded(1))
            .unwrap();
        assert_eq!(out.next_state, world.state_of(Cell::new(0, 0)));
        assert_eq!(out.reward, 0.0);
        assert!(!out.done);
    }

    #[test]
    fn entering_goal_and_lava_terminates() {
        let world = Gridworld::new(GridworldSpec::default()).unwrap();
        let mdp = world.mdp();
        let out = mdp
            .step(world.state_of(Cell::new(8, 9)), GridAction::Right.id(), &mut seeded(1))
            .unwrap();
        assert_eq!(out.next_state, world.state_of(Cell::new(9, 9)));
        assert_eq!(out.reward, 1.0);
        assert!(out.done);
        let out = mdp
            .step(world.state_of(Cell::new(4, 3)), GridAction::Up.id(), &mut seeded(1))
            .unwrap();
        assert_eq!(out.reward, -1.0);
        assert!(out.done);
    }

    #[test]
    fn row_major_from_bottom_left() {
        let world = Gridworld::new(GridworldSpec::default()).unwrap();
        assert_eq!(world.state_of(Cell::new(3, 2)), StateId(23));
        assert_eq!(world.cell_of(StateId(23)), Cell::new(3, 2));
        let up = world
            .mdp()
            .deterministic_successor(StateId(0), GridAction::Up.id())
            .unwrap();
        assert_eq!(world.cell_of(up), Cell::new(0, 1));
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_gridworld(&GridworldSpec::default()).unwrap();
        let b = build_gridworld(&GridworldSpec::default()).unwrap();
        assert_eq!(a, b);
        let bits = |m: &TabularMdp| -> Vec<u64> {
            m.transition_table()
                .iter()
                .chain(m.reward_table())
                .map(|x| x.to_bits())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }
}
