//! The 2-D grid: source cells, regeneration, movement, gathering and houses.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::config::{LaborCosts, WorldConfig};
use crate::error::ConfigError;
use crate::income::{mint_income, Jitter};
use crate::rng::SimRng;
use crate::units::{AgentId, Coins, Direction, HouseColor, Labor, Multiplier, Pos, Resource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Cell {
    Empty,
    Water,
    Source { resource: Resource, stocked: bool },
    House { color: HouseColor, owner: AgentId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseRecord {
    pub pos: Pos,
    pub color: HouseColor,
    pub owner: AgentId,
    pub builder: AgentId,
    pub built_at: u64,
    pub sellable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldGrid {
    height: usize,
    width: usize,
    cells: Vec<Cell>,
    regen_profile: [f64; 3],
    houses: Vec<HouseRecord>,
    spawned: [u64; 3],
    harvested: [u64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Harvest {
    pub resource: Resource,
    pub pos: Pos,
    pub amount: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoveRejection {
    OutOfBounds,
    Water,
    Occupied,
    ForeignHouse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoveOutcome {
    Moved { from: Pos, to: Pos, harvest: Option<Harvest> },
    Rejected(MoveRejection),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuildRejection {
    BelowThreshold,
    MissingResources,
    SourceCell,
    HouseExists,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Built {
    pub pos: Pos,
    pub color: HouseColor,
    pub income: Coins,
}

/// Inputs to a build that come from the economy rather than the grid.
#[derive(Clone, Copy, Debug)]
pub struct BuildTerms {
    pub threshold: Multiplier,
    pub pay_base: Coins,
    pub labor: Labor,
    pub jitter: Jitter,
}

/// Places source cells and agent start positions.
///
/// Each resource receives `floor(density * height * width)` source cells;
/// sources and starts are disjoint draws from one seeded shuffle of the open
/// cells.
pub fn init_world(rng: &mut SimRng, config: &WorldConfig, n_agents: usize) -> Result<(WorldGrid, Vec<Pos>), ConfigError> {
    let (height, width) = (config.height, config.width);
    let mut cells = vec![Cell::Empty; height * width];
    for &(r, c) in &config.water {
        if r >= height || c >= width {
            return Err(ConfigError::invalid("water", format!("cell ({r}, {c}) outside the grid")));
        }
        cells[r * width + c] = Cell::Water;
    }
    let mut open: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] == Cell::Empty).collect();
    let counts: Vec<usize> = config
        .source_density
        .iter()
        .map(|d| (d * (height * width) as f64).floor() as usize)
        .collect();
    let requested = counts.iter().sum::<usize>() + n_agents;
    if requested > open.len() {
        return Err(ConfigError::Overcrowded {
            height,
            width,
            available: open.len(),
            requested,
        });
    }
    open.shuffle(rng);
    let mut next = open.into_iter();
    let mut spawned = [0u64; 3];
    for (resource, &count) in Resource::ALL.iter().zip(&counts) {
        for idx in next.by_ref().take(count) {
            cells[idx] = Cell::Source {
                resource: *resource,
                stocked: config.initially_stocked,
            };
        }
        if config.initially_stocked {
            spawned[resource.index()] = count as u64;
        }
    }
    let starts = next.take(n_agents).map(|idx| (idx / width, idx % width)).collect();
    let grid = WorldGrid {
        height,
        width,
        cells,
        regen_profile: config.base_regen,
        houses: Vec::new(),
        spawned,
        harvested: [0; 3],
    };
    Ok((grid, starts))
}

impl WorldGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cell(&self, pos: Pos) -> Cell {
        self.cells[pos.0 * self.width + pos.1]
    }

    fn cell_mut(&mut self, pos: Pos) -> &mut Cell {
        &mut self.cells[pos.0 * self.width + pos.1]
    }

    pub fn cells(&self) -> impl Iterator<Item = (Pos, Cell)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, &c)| ((i / self.width, i % self.width), c))
    }

    /// Neighbouring coordinate, or `None` past the map edge.
    pub fn step_from(&self, pos: Pos, direction: Direction) -> Option<Pos> {
        let (dr, dc) = direction.delta();
        let r = pos.0.checked_add_signed(dr)?;
        let c = pos.1.checked_add_signed(dc)?;
        (r < self.height && c < self.width).then_some((r, c))
    }

    pub fn regen_profile(&self) -> [f64; 3] {
        self.regen_profile
    }

    pub fn set_regen_profile(&mut self, profile: [f64; 3]) {
        self.regen_profile = profile;
    }

    pub fn source_count(&self, resource: Resource) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c, Cell::Source { resource: r, .. } if *r == resource))
            .count()
    }

    pub fn stocked_count(&self, resource: Resource) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c, Cell::Source { resource: r, stocked: true } if *r == resource))
            .count()
    }

    /// Units ever made available per resource, including the initial stock.
    pub fn spawned(&self) -> [u64; 3] {
        self.spawned
    }

    pub fn harvested(&self) -> [u64; 3] {
        self.harvested
    }

    pub fn houses(&self) -> &[HouseRecord] {
        &self.houses
    }

    /// Refills each empty source cell with its resource's probability.
    pub fn regen_step(&mut self, rng: &mut SimRng) -> Vec<Pos> {
        let mut refilled = Vec::new();
        let width = self.width;
        for (i, cell) in self.cells.iter_mut().enumerate() {
            if let Cell::Source { resource, stocked } = cell {
                if !*stocked {
                    let p = self.regen_profile[resource.index()];
                    if p > 0.0 && rng.gen_bool(p.min(1.0)) {
                        *stocked = true;
                        self.spawned[resource.index()] += 1;
                        refilled.push((i / width, i % width));
                    }
                }
            }
        }
        refilled
    }

    /// Oldest sellable house of `color`; ties by lowest owner id.
    pub fn sellable_house(&self, color: HouseColor) -> Option<&HouseRecord> {
        self.houses
            .iter()
            .filter(|h| h.color == color && h.sellable)
            .min_by_key(|h| (h.built_at, h.owner))
    }

    /// Hands the house at `pos` to `new_owner`; the house loses its sellable flag.
    pub fn transfer_house(&mut self, pos: Pos, new_owner: AgentId) {
        if let Some(h) = self.houses.iter_mut().find(|h| h.pos == pos) {
            h.owner = new_owner;
            h.sellable = false;
        }
        if let Cell::House { owner, .. } = self.cell_mut(pos) {
            *owner = new_owner;
        }
    }
}

/// Moves `agent` one cell, gathering if the destination holds a unit.
pub fn apply_move(
    grid: &mut WorldGrid,
    agents: &mut [AgentState],
    agent: AgentId,
    direction: Direction,
    labor: &LaborCosts,
    rng: &mut SimRng,
) -> MoveOutcome {
    let from = agents[agent].pos;
    let Some(to) = grid.step_from(from, direction) else {
        return MoveOutcome::Rejected(MoveRejection::OutOfBounds);
    };
    match grid.cell(to) {
        Cell::Water => return MoveOutcome::Rejected(MoveRejection::Water),
        Cell::House { owner, .. } if owner != agent => {
            return MoveOutcome::Rejected(MoveRejection::ForeignHouse)
        }
        _ => {}
    }
    if agents.iter().any(|a| a.id != agent && a.pos == to) {
        return MoveOutcome::Rejected(MoveRejection::Occupied);
    }
    let mover = &mut agents[agent];
    mover.pos = to;
    mover.labor += labor.movement;
    let harvest = gather_resource(grid, mover, to, labor.gather, rng);
    MoveOutcome::Moved { from, to, harvest }
}

/// Collects the unit at `pos` plus a bonus unit with probability equal to
/// the agent's gather skill. Returns `None` if the cell holds no unit.
pub fn gather_resource(grid: &mut WorldGrid, agent: &mut AgentState, pos: Pos, labor: Labor, rng: &mut SimRng) -> Option<Harvest> {
    let Cell::Source { resource, stocked: true } = grid.cell(pos) else {
        return None;
    };
    *grid.cell_mut(pos) = Cell::Source { resource, stocked: false };
    grid.harvested[resource.index()] += 1;
    let bonus = rng.gen_bool(agent.gather_skill.clamp(0.0, 1.0));
    let amount = 1 + u32::from(bonus);
    agent.inventory[resource.index()] += amount;
    agent.labor += labor;
    Some(Harvest { resource, pos, amount })
}

/// Builds a house of `color` at the agent's cell and mints the build income.
pub fn place_house(
    grid: &mut WorldGrid,
    agent: &mut AgentState,
    color: HouseColor,
    step: u64,
    terms: &BuildTerms,
    rng: &mut SimRng,
) -> Result<Built, BuildRejection> {
    if agent.multiplier < terms.threshold {
        return Err(BuildRejection::BelowThreshold);
    }
    if color.components().iter().any(|&r| agent.free_units(r) == 0) {
        return Err(BuildRejection::MissingResources);
    }
    let pos = agent.pos;
    match grid.cell(pos) {
        Cell::Source { .. } => return Err(BuildRejection::SourceCell),
        Cell::House { .. } => return Err(BuildRejection::HouseExists),
        Cell::Empty | Cell::Water => {}
    }
    for r in color.components() {
        agent.inventory[r.index()] -= 1;
    }
    *grid.cell_mut(pos) = Cell::House { color, owner: agent.id };
    grid.houses.push(HouseRecord {
        pos,
        color,
        owner: agent.id,
        builder: agent.id,
        built_at: step,
        sellable: agent.is_expert(),
    });
    let income = mint_income(terms.pay_base, agent.multiplier, 1.0, terms.jitter.draw(rng));
    agent.coin += income;
    agent.labor += terms.labor;
    Ok(Built { pos, color, income })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Role;
    use crate::rng::{substream, Stream};
    use std::collections::HashSet;

    fn open_grid(h: usize, w: usize) -> WorldGrid {
        let cfg = WorldConfig {
            height: h,
            width: w,
            source_density: [0.0; 3],
            ..WorldConfig::default()
        };
        init_world(&mut substream(1, Stream::WorldInit, 0), &cfg, 0).unwrap().0
    }

    fn agent_at(id: AgentId, pos: Pos) -> AgentState {
        AgentState::new(id, Role::Expert, pos, Multiplier::from_milli(1200), 0.0)
    }

    #[test]
    fn seeded_placement_counts_and_disjointness() {
        let cfg = WorldConfig::default();
        let (grid, starts) = init_world(&mut substream(7, Stream::WorldInit, 0), &cfg, 6).unwrap();
        for r in Resource::ALL {
            assert_eq!(grid.source_count(r), 31);
            assert_eq!(grid.stocked_count(r), 31);
        }
        let distinct: HashSet<_> = starts.iter().collect();
        assert_eq!(distinct.len(), 6);
        for &p in &starts {
            assert_eq!(grid.cell(p), Cell::Empty);
        }
        let (again, starts2) = init_world(&mut substream(7, Stream::WorldInit, 0), &cfg, 6).unwrap();
        assert_eq!(grid, again);
        assert_eq!(starts, starts2);
    }

    #[test]
    fn zero_density_has_no_sources() {
        let grid = open_grid(25, 25);
        assert!(Resource::ALL.iter().all(|&r| grid.source_count(r) == 0));
    }

    #[test]
    fn overcrowded_config_is_rejected() {
        let cfg = WorldConfig {
            height: 4,
            width: 4,
            source_density: [0.4; 3],
            ..WorldConfig::default()
        };
        let err = init_world(&mut substream(1, Stream::WorldInit, 0), &cfg, 2).unwrap_err();
        assert!(matches!(err, ConfigError::Overcrowded { .. }));
    }

    #[test]
    fn regen_extremes() {
        let cfg = WorldConfig {
            initially_stocked: false,
            base_regen: [0.0, 1.0, 1.0],
            ..WorldConfig::default()
        };
        let mut rng = substream(3, Stream::WorldInit, 0);
        let (mut grid, _) = init_world(&mut rng, &cfg, 0).unwrap();
        let mut regen = substream(3, Stream::Regen, 0);
        for _ in 0..50 {
            grid.regen_step(&mut regen);
        }
        assert_eq!(grid.stocked_count(Resource::Wood), 0);
        assert_eq!(grid.stocked_count(Resource::Stone), 31);
        assert_eq!(grid.stocked_count(Resource::Iron), 31);
    }

    #[test]
    fn regen_frequency_matches_binomial() {
        // Every source is emptied before each step, so each step is 31
        // independent Bernoulli(p) trials.
        let cfg = WorldConfig {
            initially_stocked: false,
            base_regen: [0.01, 0.0, 0.0],
            ..WorldConfig::default()
        };
        let (mut grid, _) = init_world(&mut substream(5, Stream::WorldInit, 0), &cfg, 0).unwrap();
        let mut regen = substream(5, Stream::Regen, 0);
        let mut refills = 0usize;
        for _ in 0..1000 {
            let got = grid.regen_step(&mut regen);
            refills += got.len();
            for p in got {
                *grid.cell_mut(p) = Cell::Source {
                    resource: Resource::Wood,
                    stocked: false,
                };
            }
        }
        let n: f64 = 31.0 * 1000.0;
        let p = 0.01;
        let mean = n * p;
        let sigma = (n * p * (1.0 - p)).sqrt();
        assert!((refills as f64 - mean).abs() <= 3.0 * sigma, "{refills} vs {mean}±{sigma}");
    }

    #[test]
    fn move_rules_table() {
        let mut grid = open_grid(5, 5);
        *grid.cell_mut((1, 2)) = Cell::Water;
        *grid.cell_mut((2, 3)) = Cell::House {
            color: HouseColor::Red,
            owner: 1,
        };
        *grid.cell_mut((3, 2)) = Cell::House {
            color: HouseColor::Blue,
            owner: 0,
        };
        let labor = LaborCosts::default();
        let mut rng = substream(1, Stream::Gather, 0);
        let base = vec![agent_at(0, (2, 2)), agent_at(1, (0, 0)), agent_at(2, (2, 1))];
        // (direction, expected) from (2, 2): up=water, right=foreign house,
        // down=own house, left=agent 2.
        let table = [
            (Direction::Up, Some(MoveRejection::Water)),
            (Direction::Right, Some(MoveRejection::ForeignHouse)),
            (Direction::Down, None),
            (Direction::Left, Some(MoveRejection::Occupied)),
        ];
        for (dir, expected) in table {
            let mut agents = base.clone();
            let out = apply_move(&mut grid, &mut agents, 0, dir, &labor, &mut rng);
            match expected {
                Some(rej) => {
                    assert_eq!(out, MoveOutcome::Rejected(rej), "{dir:?}");
                    assert_eq!(agents[0].labor, Labor::ZERO);
                }
                None => {
                    assert!(matches!(out, MoveOutcome::Moved { to: (3, 2), harvest: None, .. }));
                    assert_eq!(agents[0].labor, labor.movement);
                }
            }
        }
        let mut agents = base.clone();
        let out = apply_move(&mut grid, &mut agents, 1, Direction::Up, &labor, &mut rng);
        assert_eq!(out, MoveOutcome::Rejected(MoveRejection::OutOfBounds));
    }

    #[test]
    fn moving_onto_stocked_cell_gathers() {
        let mut grid = open_grid(3, 3);
        *grid.cell_mut((0, 1)) = Cell::Source {
            resource: Resource::Wood,
            stocked: true,
        };
        let labor = LaborCosts::default();
        let mut agents = vec![agent_at(0, (0, 0))];
        let out = apply_move(&mut grid, &mut agents, 0, Direction::Right, &labor, &mut substream(1, Stream::Gather, 0));
        let MoveOutcome::Moved { harvest: Some(h), .. } = out else {
            panic!("expected a harvest, got {out:?}");
        };
        assert_eq!(h.amount, 1);
        assert_eq!(agents[0].inventory, [1, 0, 0]);
        assert_eq!(agents[0].labor, labor.movement + labor.gather);
        assert_eq!(grid.cell((0, 1)), Cell::Source { resource: Resource::Wood, stocked: false });
        assert_eq!(grid.harvested(), [1, 0, 0]);
    }

    #[test]
    fn gather_skill_extremes_and_frequency() {
        let mut rng = substream(11, Stream::Gather, 0);
        for (skill, expect) in [(0.0, 1), (1.0, 2)] {
            let mut grid = open_grid(1, 1);
            let mut a = agent_at(0, (0, 0));
            a.gather_skill = skill;
            for _ in 0..100 {
                *grid.cell_mut((0, 0)) = Cell::Source { resource: Resource::Iron, stocked: true };
                let h = gather_resource(&mut grid, &mut a, (0, 0), Labor::ZERO, &mut rng).unwrap();
                assert_eq!(h.amount, expect);
            }
        }
        let mut grid = open_grid(1, 1);
        let mut a = agent_at(0, (0, 0));
        a.gather_skill = 0.3;
        let trials = 10_000;
        let mut bonus = 0;
        for _ in 0..trials {
            *grid.cell_mut((0, 0)) = Cell::Source { resource: Resource::Iron, stocked: true };
            bonus += gather_resource(&mut grid, &mut a, (0, 0), Labor::ZERO, &mut rng).unwrap().amount - 1;
        }
        let sigma = (trials as f64 * 0.3 * 0.7).sqrt();
        assert!((bonus as f64 - 3000.0).abs() <= 3.0 * sigma);
    }

    fn terms() -> BuildTerms {
        BuildTerms {
            threshold: Multiplier::from_milli(1000),
            pay_base: Coins::from_whole(10),
            labor: Labor::from_hundredths(210),
            jitter: Jitter { low: 1.0, high: 1.0 },
        }
    }

    #[test]
    fn expert_builds_red_house() {
        let mut grid = open_grid(3, 3);
        let mut a = agent_at(0, (1, 1));
        a.multiplier = Multiplier::from_milli(1300);
        a.inventory = [1, 1, 0];
        let built = place_house(&mut grid, &mut a, HouseColor::Red, 4, &terms(), &mut substream(1, Stream::Income, 0)).unwrap();
        assert_eq!(built.income, Coins::from_whole(13));
        assert_eq!(a.inventory, [0, 0, 0]);
        assert_eq!(a.coin, Coins::from_whole(13));
        assert_eq!(grid.cell((1, 1)), Cell::House { color: HouseColor::Red, owner: 0 });
        assert!(grid.sellable_house(HouseColor::Red).is_some());
        assert_eq!(
            place_house(&mut grid, &mut a, HouseColor::Red, 5, &terms(), &mut substream(1, Stream::Income, 0)),
            Err(BuildRejection::MissingResources)
        );
        a.inventory = [1, 1, 0];
        assert_eq!(
            place_house(&mut grid, &mut a, HouseColor::Red, 5, &terms(), &mut substream(1, Stream::Income, 0)),
            Err(BuildRejection::HouseExists)
        );
    }

    #[test]
    fn novice_below_threshold_and_source_cells_cannot_build() {
        let mut grid = open_grid(3, 3);
        let mut rng = substream(1, Stream::Income, 0);
        let mut a = agent_at(0, (0, 0));
        a.multiplier = Multiplier::from_milli(700);
        a.inventory = [1, 1, 1];
        assert_eq!(place_house(&mut grid, &mut a, HouseColor::Red, 0, &terms(), &mut rng), Err(BuildRejection::BelowThreshold));
        a.multiplier = Multiplier::from_milli(1000);
        *grid.cell_mut((0, 0)) = Cell::Source { resource: Resource::Wood, stocked: false };
        assert_eq!(place_house(&mut grid, &mut a, HouseColor::Blue, 0, &terms(), &mut rng), Err(BuildRejection::SourceCell));
        assert_eq!(a.inventory, [1, 1, 1]);
    }

    #[test]
    fn oldest_house_sells_first() {
        let mut grid = open_grid(3, 3);
        let mut rng = substream(1, Stream::Income, 0);
        let mut late = agent_at(0, (0, 0));
        late.inventory = [1, 1, 0];
        let mut early = agent_at(1, (2, 2));
        early.inventory = [1, 1, 0];
        place_house(&mut grid, &mut late, HouseColor::Red, 9, &terms(), &mut rng).unwrap();
        place_house(&mut grid, &mut early, HouseColor::Red, 3, &terms(), &mut rng).unwrap();
        assert_eq!(grid.sellable_house(HouseColor::Red).unwrap().owner, 1);
        grid.transfer_house((2, 2), 5);
        assert_eq!(grid.cell((2, 2)), Cell::House { color: HouseColor::Red, owner: 5 });
        assert_eq!(grid.sellable_house(HouseColor::Red).unwrap().owner, 0);
        assert!(grid.sellable_house(HouseColor::Green).is_none());
    }
}
