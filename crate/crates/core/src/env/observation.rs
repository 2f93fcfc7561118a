//! Flat observation vectors with a versioned, named layout.
//!
//! Agent view: an 11x11 egocentric window of spatial channels plus private
//! state, market summaries, tax state and previous-period incomes.
//! Planner view: aggregate map, per-agent inventories, market, tax and vote
//! state. It never sees multipliers or skill levels.

use serde::{Deserialize, Serialize};

use super::Env;
use crate::governance::Ranking;
use crate::market::{Side, PRICE_LEVELS};
use crate::units::{AgentId, HouseColor, Resource};
use crate::world::Cell;

pub const LAYOUT_VERSION: u32 = 1;
pub const VIEW_RADIUS: usize = 5;
pub const VIEW: usize = 2 * VIEW_RADIUS + 1;

pub const SPATIAL_CHANNELS: [&str; 14] = [
    "padding",
    "water",
    "source_wood",
    "source_stone",
    "source_iron",
    "stocked_wood",
    "stocked_stone",
    "stocked_iron",
    "house_red",
    "house_blue",
    "house_green",
    "own_house",
    "other_agent",
    "self",
];

const CH_PADDING: usize = 0;
const CH_WATER: usize = 1;
const CH_SOURCE: usize = 2;
const CH_STOCKED: usize = 5;
const CH_HOUSE: usize = 8;
const CH_OWN_HOUSE: usize = 11;
const CH_OTHER: usize = 12;
const CH_SELF: usize = 13;

const BOOK: usize = 3 * PRICE_LEVELS;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub version: u32,
    pub actor: String,
    pub size: usize,
    pub fields: Vec<Field>,
}

impl ObservationLayout {
    fn build(actor: &str, parts: &[(&str, usize)]) -> Self {
        let mut offset = 0;
        let fields = parts
            .iter()
            .map(|&(name, len)| {
                let f = Field {
                    name: name.to_string(),
                    offset,
                    len,
                };
                offset += len;
                f
            })
            .collect();
        ObservationLayout {
            version: LAYOUT_VERSION,
            actor: actor.to_string(),
            size: offset,
            fields,
        }
    }

    pub fn agent(n_agents: usize) -> Self {
        Self::build(
            "agent",
            &[
                ("spatial", SPATIAL_CHANNELS.len() * VIEW * VIEW),
                ("inventory", 4),
                ("free_inventory", 4),
                ("is_expert", 1),
                ("multiplier", 1),
                ("skill_units", 1),
                ("labor", 1),
                ("own_bids", BOOK),
                ("own_asks", BOOK),
                ("other_bids", BOOK),
                ("other_asks", BOOK),
                ("avg_price", 3),
                ("trade_counts", BOOK),
                ("tax_rates", crate::fiscal::NUM_BRACKETS),
                ("period_progress", 1),
                ("marginal_rate", 1),
                ("prev_incomes_sorted", n_agents),
                ("last_vote", Ranking::ALL.len()),
            ],
        )
    }

    pub fn planner(n_agents: usize) -> Self {
        Self::build(
            "planner",
            &[
                ("map_summary", 9),
                ("inventories", 4 * n_agents),
                ("bids", BOOK),
                ("asks", BOOK),
                ("avg_price", 3),
                ("trade_counts", BOOK),
                ("tax_rates", crate::fiscal::NUM_BRACKETS),
                ("period_progress", 1),
                ("prev_incomes", n_agents),
                ("prev_marginal_rates", n_agents),
                ("votes", Ranking::ALL.len() * n_agents),
                ("planner_vote", Ranking::ALL.len()),
            ],
        )
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// The slice of `obs` holding `name`. Panics on an unknown field.
    pub fn slice<'a>(&self, obs: &'a [f64], name: &str) -> &'a [f64] {
        let f = self.field(name).unwrap_or_else(|| panic!("no field {name} in {} layout", self.actor));
        &obs[f.offset..f.offset + f.len]
    }
}

/// Index into the spatial block for `channel` at window cell `(dy, dx)`.
pub fn spatial_index(channel: usize, dy: usize, dx: usize) -> usize {
    channel * VIEW * VIEW + dy * VIEW + dx
}

struct Writer<'a> {
    layout: &'a ObservationLayout,
    next: usize,
    data: Vec<f64>,
}

impl<'a> Writer<'a> {
    fn new(layout: &'a ObservationLayout) -> Self {
        Writer {
            layout,
            next: 0,
            data: Vec::with_capacity(layout.size),
        }
    }

    fn put(&mut self, name: &str, values: impl IntoIterator<Item = f64>) {
        let field = &self.layout.fields[self.next];
        debug_assert_eq!(field.name, name);
        self.data.extend(values);
        debug_assert_eq!(self.data.len(), field.offset + field.len, "field {name}");
        self.next += 1;
    }

    fn finish(self) -> Vec<f64> {
        assert_eq!(self.data.len(), self.layout.size);
        self.data
    }
}

fn one_hot(ranking: Option<Ranking>) -> [f64; 6] {
    let mut v = [0.0; 6];
    if let Some(r) = ranking {
        v[r.index()] = 1.0;
    }
    v
}

impl Env {
    pub fn agent_layout(&self) -> ObservationLayout {
        ObservationLayout::agent(self.agents.len())
    }

    pub fn planner_layout(&self) -> ObservationLayout {
        ObservationLayout::planner(self.agents.len())
    }

    fn book_depth(&self, side: Side, filter: impl Fn(AgentId) -> bool) -> Vec<f64> {
        let mut out = vec![0.0; BOOK];
        let book = self.market.book();
        for r in Resource::ALL {
            let orders: Box<dyn Iterator<Item = _>> = match side {
                Side::Bid => Box::new(book.bids(r)),
                Side::Ask => Box::new(book.asks(r)),
            };
            for o in orders.filter(|o| filter(o.agent)) {
                out[r.index() * PRICE_LEVELS + o.price as usize] += 1.0;
            }
        }
        out
    }

    fn trade_counts(&self) -> impl Iterator<Item = f64> + '_ {
        self.market.stats().trade_counts.iter().flatten().map(|&c| c as f64)
    }

    fn avg_prices(&self) -> impl Iterator<Item = f64> + '_ {
        Resource::ALL.into_iter().map(|r| self.market.stats().average_price(r))
    }

    fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.schedule.rates().iter().map(|r| r.as_f64())
    }

    pub fn agent_observation(&self, agent: AgentId) -> Vec<f64> {
        let layout = self.agent_layout();
        let a = &self.agents[agent];
        let mut w = Writer::new(&layout);

        let mut spatial = vec![0.0; SPATIAL_CHANNELS.len() * VIEW * VIEW];
        let (row, col) = a.pos;
        for dy in 0..VIEW {
            for dx in 0..VIEW {
                let r = (row + dy).checked_sub(VIEW_RADIUS);
                let c = (col + dx).checked_sub(VIEW_RADIUS);
                let pos = match (r, c) {
                    (Some(r), Some(c)) if r < self.grid.height() && c < self.grid.width() => (r, c),
                    _ => {
                        spatial[spatial_index(CH_PADDING, dy, dx)] = 1.0;
                        continue;
                    }
                };
                match self.grid.cell(pos) {
                    Cell::Empty => {}
                    Cell::Water => spatial[spatial_index(CH_WATER, dy, dx)] = 1.0,
                    Cell::Source { resource, stocked } => {
                        spatial[spatial_index(CH_SOURCE + resource.index(), dy, dx)] = 1.0;
                        if stocked {
                            spatial[spatial_index(CH_STOCKED + resource.index(), dy, dx)] = 1.0;
                        }
                    }
                    Cell::House { color, owner } => {
                        spatial[spatial_index(CH_HOUSE + color.index(), dy, dx)] = 1.0;
                        if owner == agent {
                            spatial[spatial_index(CH_OWN_HOUSE, dy, dx)] = 1.0;
                        }
                    }
                }
                if self.agents.iter().any(|b| b.id != agent && b.pos == pos) {
                    spatial[spatial_index(CH_OTHER, dy, dx)] = 1.0;
                }
            }
        }
        spatial[spatial_index(CH_SELF, VIEW_RADIUS, VIEW_RADIUS)] = 1.0;
        w.put("spatial", spatial);

        w.put(
            "inventory",
            Resource::ALL
                .iter()
                .map(|&r| a.total_units(r) as f64)
                .chain([a.total_coin().as_f64()]),
        );
        w.put(
            "free_inventory",
            Resource::ALL
                .iter()
                .map(|&r| a.free_units(r) as f64)
                .chain([a.coin.as_f64()]),
        );
        w.put("is_expert", [f64::from(u8::from(a.is_expert()))]);
        w.put("multiplier", [a.multiplier.as_f64()]);
        w.put("skill_units", [a.skill_units as f64]);
        w.put("labor", [a.labor.as_f64()]);
        w.put("own_bids", self.book_depth(Side::Bid, |id| id == agent));
        w.put("own_asks", self.book_depth(Side::Ask, |id| id == agent));
        w.put("other_bids", self.book_depth(Side::Bid, |id| id != agent));
        w.put("other_asks", self.book_depth(Side::Ask, |id| id != agent));
        w.put("avg_price", self.avg_prices());
        w.put("trade_counts", self.trade_counts());
        w.put("tax_rates", self.rates());
        w.put("period_progress", [self.period_progress()]);
        let marginal = self.previous.as_ref().map_or(0.0, |p| p.marginal[agent].as_f64());
        w.put("marginal_rate", [marginal]);
        let mut incomes: Vec<f64> = match &self.previous {
            Some(p) => p.income.iter().map(|c| c.as_f64()).collect(),
            None => vec![0.0; self.agents.len()],
        };
        incomes.sort_by(f64::total_cmp);
        w.put("prev_incomes_sorted", incomes);
        w.put("last_vote", one_hot(a.last_vote));
        w.finish()
    }

    pub fn planner_observation(&self) -> Vec<f64> {
        let layout = self.planner_layout();
        let mut w = Writer::new(&layout);
        let houses = HouseColor::ALL
            .iter()
            .map(|&c| self.grid.houses().iter().filter(|h| h.color == c).count() as f64);
        w.put(
            "map_summary",
            Resource::ALL
                .iter()
                .map(|&r| self.grid.source_count(r) as f64)
                .chain(Resource::ALL.iter().map(|&r| self.grid.stocked_count(r) as f64))
                .chain(houses)
                .collect::<Vec<_>>(),
        );
        w.put(
            "inventories",
            self.agents
                .iter()
                .flat_map(|a| {
                    Resource::ALL
                        .iter()
                        .map(|&r| a.total_units(r) as f64)
                        .chain([a.total_coin().as_f64()])
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>(),
        );
        w.put("bids", self.book_depth(Side::Bid, |_| true));
        w.put("asks", self.book_depth(Side::Ask, |_| true));
        w.put("avg_price", self.avg_prices());
        w.put("trade_counts", self.trade_counts());
        w.put("tax_rates", self.rates());
        w.put("period_progress", [self.period_progress()]);
        let n = self.agents.len();
        let (incomes, marginal): (Vec<f64>, Vec<f64>) = match &self.previous {
            Some(p) => (
                p.income.iter().map(|c| c.as_f64()).collect(),
                p.marginal.iter().map(|r| r.as_f64()).collect(),
            ),
            None => (vec![0.0; n], vec![0.0; n]),
        };
        w.put("prev_incomes", incomes);
        w.put("prev_marginal_rates", marginal);
        w.put(
            "votes",
            (0..n)
                .flat_map(|i| one_hot(self.registry.cast(i).map(|v| v.ranking)))
                .collect::<Vec<_>>(),
        );
        let planner_vote = match self.config.governing.system {
            crate::governance::GoverningSystem::FullUtilitarian => Some(self.registry.planner_effective()),
            _ => None,
        };
        w.put("planner_vote", one_hot(planner_vote));
        w.finish()
    }
}
