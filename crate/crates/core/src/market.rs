//! Continuous double auction for raw resources, plus the mediated house and
//! skill trades between experts and novices.
//!
//! Priority for a new order: best opposite price first, then the earliest
//! placement step, then a uniform draw among the orders still tied (ordered
//! by id, one `gen_range(0..k)` draw, only when `k > 1`). A trade executes at
//! the resting order's price.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::config::MarketParams;
use crate::income::{mint_income, Jitter};
use crate::rng::SimRng;
use crate::units::{AgentId, Coins, HouseColor, Labor, Multiplier, Pos, Resource};
use crate::world::WorldGrid;

pub const MAX_PRICE: u8 = 10;
pub const PRICE_LEVELS: usize = MAX_PRICE as usize + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: u64,
    pub agent: AgentId,
    pub resource: Resource,
    pub side: Side,
    pub price: u8,
    pub placed_at: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub resource: Resource,
    pub buyer: AgentId,
    pub seller: AgentId,
    pub price: u8,
    pub bid_id: u64,
    pub ask_id: u64,
    pub step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BookRejection {
    PriceOutOfRange,
    /// The order would cross one of the same agent's resting orders.
    SelfCross,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct ResourceBook {
    bids: BTreeMap<(Reverse<u8>, u64, u64), Order>,
    asks: BTreeMap<(u8, u64, u64), Order>,
}

impl ResourceBook {
    fn insert(&mut self, order: Order) {
        match order.side {
            Side::Bid => {
                self.bids.insert((Reverse(order.price), order.placed_at, order.id), order);
            }
            Side::Ask => {
                self.asks.insert((order.price, order.placed_at, order.id), order);
            }
        }
    }

    fn remove(&mut self, order: &Order) -> Option<Order> {
        match order.side {
            Side::Bid => self.bids.remove(&(Reverse(order.price), order.placed_at, order.id)),
            Side::Ask => self.asks.remove(&(order.price, order.placed_at, order.id)),
        }
    }

    /// Resting orders on the opposite side that cross `order`, best first.
    fn crossing<'a>(&'a self, order: &'a Order) -> Box<dyn Iterator<Item = &'a Order> + 'a> {
        match order.side {
            Side::Bid => Box::new(self.asks.values().take_while(move |a| a.price <= order.price)),
            Side::Ask => Box::new(self.bids.values().take_while(move |b| b.price >= order.price)),
        }
    }
}

/// Open bids and asks for all three resources.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrderBook {
    books: [ResourceBook; 3],
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.books.iter().map(|b| b.bids.len() + b.asks.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bids in priority order.
    pub fn bids(&self, resource: Resource) -> impl Iterator<Item = &Order> {
        self.books[resource.index()].bids.values()
    }

    /// Asks in priority order.
    pub fn asks(&self, resource: Resource) -> impl Iterator<Item = &Order> {
        self.books[resource.index()].asks.values()
    }

    pub fn orders(&self) -> impl Iterator<Item = &Order> {
        self.books.iter().flat_map(|b| b.bids.values().chain(b.asks.values()))
    }

    pub fn open_count(&self, agent: AgentId, resource: Resource) -> usize {
        let b = &self.books[resource.index()];
        b.bids.values().chain(b.asks.values()).filter(|o| o.agent == agent).count()
    }

    /// Whether a new order would cross a resting order of the same agent.
    pub fn would_self_cross(&self, agent: AgentId, resource: Resource, side: Side, price: u8) -> bool {
        let b = &self.books[resource.index()];
        match side {
            Side::Bid => b.asks.values().any(|a| a.agent == agent && a.price <= price),
            Side::Ask => b.bids.values().any(|o| o.agent == agent && o.price >= price),
        }
    }

    pub fn is_crossed(&self, resource: Resource) -> bool {
        let b = &self.books[resource.index()];
        match (b.bids.values().next(), b.asks.values().next()) {
            (Some(bid), Some(ask)) => bid.price >= ask.price,
            _ => false,
        }
    }

    /// Matches `order` against the book or rests it.
    pub fn submit(&mut self, order: Order, rng: &mut SimRng) -> Result<Option<Fill>, BookRejection> {
        if order.price > MAX_PRICE {
            return Err(BookRejection::PriceOutOfRange);
        }
        if self.would_self_cross(order.agent, order.resource, order.side, order.price) {
            return Err(BookRejection::SelfCross);
        }
        let book = &mut self.books[order.resource.index()];
        let tied: Vec<Order> = {
            let mut crossing = book.crossing(&order);
            match crossing.next().copied() {
                None => Vec::new(),
                Some(best) => std::iter::once(best)
                    .chain(
                        crossing
                            .take_while(|o| o.price == best.price && o.placed_at == best.placed_at)
                            .copied(),
                    )
                    .collect(),
            }
        };
        let Some(&best) = tied.first() else {
            book.insert(order);
            return Ok(None);
        };
        let resting = if tied.len() > 1 {
            let mut by_id = tied;
            by_id.sort_by_key(|o| o.id);
            by_id[rng.gen_range(0..by_id.len())]
        } else {
            best
        };
        book.remove(&resting);
        let (bid, ask) = match order.side {
            Side::Bid => (order, resting),
            Side::Ask => (resting, order),
        };
        Ok(Some(Fill {
            resource: order.resource,
            buyer: bid.agent,
            seller: ask.agent,
            price: resting.price,
            bid_id: bid.id,
            ask_id: ask.id,
            step: order.placed_at,
        }))
    }

    /// Removes and returns orders with `step - placed_at >= ttl`.
    pub fn expire(&mut self, step: u64, ttl: u64) -> Vec<Order> {
        let stale: Vec<Order> = self
            .orders()
            .filter(|o| step.saturating_sub(o.placed_at) >= ttl)
            .copied()
            .collect();
        for o in &stale {
            self.books[o.resource.index()].remove(o);
        }
        let mut stale = stale;
        stale.sort_by_key(|o| o.id);
        stale
    }

    pub fn remove(&mut self, order: &Order) -> Option<Order> {
        self.books[order.resource.index()].remove(order)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderRejection {
    PriceOutOfRange,
    CapReached,
    InsufficientCoin,
    InsufficientUnits,
    SelfCross,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placed {
    pub order: Order,
    pub fill: Option<Fill>,
}

/// Historical trade statistics exposed in observations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketStats {
    pub trade_counts: [[u64; PRICE_LEVELS]; 3],
    pub price_sum: [u64; 3],
}

impl MarketStats {
    pub fn record(&mut self, fill: &Fill) {
        let r = fill.resource.index();
        self.trade_counts[r][fill.price as usize] += 1;
        self.price_sum[r] += fill.price as u64;
    }

    pub fn trades(&self, resource: Resource) -> u64 {
        self.trade_counts[resource.index()].iter().sum()
    }

    pub fn average_price(&self, resource: Resource) -> f64 {
        let n = self.trades(resource);
        if n == 0 {
            0.0
        } else {
            self.price_sum[resource.index()] as f64 / n as f64
        }
    }
}

/// Order book plus escrow accounting against agent endowments.
#[derive(Clone, Debug, PartialEq)]
pub struct Market {
    book: OrderBook,
    next_id: u64,
    params: MarketParams,
    stats: MarketStats,
}

impl Market {
    pub fn new(params: MarketParams) -> Self {
        Market {
            book: OrderBook::new(),
            next_id: 0,
            params,
            stats: MarketStats::default(),
        }
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn stats(&self) -> &MarketStats {
        &self.stats
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    /// Validates, escrows and submits one order for `agent`.
    #[allow(clippy::too_many_arguments)]
    pub fn place_order(
        &mut self,
        agents: &mut [AgentState],
        agent: AgentId,
        resource: Resource,
        side: Side,
        price: u8,
        step: u64,
        labor: Labor,
        rng: &mut SimRng,
    ) -> Result<Placed, OrderRejection> {
        if price > MAX_PRICE {
            return Err(OrderRejection::PriceOutOfRange);
        }
        if self.book.open_count(agent, resource) >= self.params.max_open_orders {
            return Err(OrderRejection::CapReached);
        }
        let a = &agents[agent];
        match side {
            Side::Bid if a.coin < Coins::from_price(price) => return Err(OrderRejection::InsufficientCoin),
            Side::Ask if a.free_units(resource) == 0 => return Err(OrderRejection::InsufficientUnits),
            _ => {}
        }
        if self.book.would_self_cross(agent, resource, side, price) {
            return Err(OrderRejection::SelfCross);
        }
        let order = Order {
            id: self.next_id,
            agent,
            resource,
            side,
            price,
            placed_at: step,
        };
        self.next_id += 1;
        let a = &mut agents[agent];
        a.labor += labor;
        match side {
            Side::Bid => {
                a.coin -= Coins::from_price(price);
                a.escrow_coin += Coins::from_price(price);
            }
            Side::Ask => {
                a.inventory[resource.index()] -= 1;
                a.escrow_units[resource.index()] += 1;
            }
        }
        let fill = self
            .book
            .submit(order, rng)
            .expect("order validated against price range and self-crossing");
        if let Some(fill) = &fill {
            self.settle(agents, fill, order);
        }
        Ok(Placed { order, fill })
    }

    fn settle(&mut self, agents: &mut [AgentState], fill: &Fill, incoming: Order) {
        let r = fill.resource.index();
        let bid_price = if incoming.side == Side::Bid { incoming.price } else { fill.price };
        let price = Coins::from_price(fill.price);
        let buyer = &mut agents[fill.buyer];
        buyer.escrow_coin -= Coins::from_price(bid_price);
        buyer.coin += Coins::from_price(bid_price) - price;
        buyer.inventory[r] += 1;
        let seller = &mut agents[fill.seller];
        seller.escrow_units[r] -= 1;
        seller.coin += price;
        self.stats.record(fill);
    }

    fn release(agents: &mut [AgentState], order: &Order) {
        let a = &mut agents[order.agent];
        match order.side {
            Side::Bid => {
                a.escrow_coin -= Coins::from_price(order.price);
                a.coin += Coins::from_price(order.price);
            }
            Side::Ask => {
                a.escrow_units[order.resource.index()] -= 1;
                a.inventory[order.resource.index()] += 1;
            }
        }
    }

    /// Drops orders that reached the time-to-live and returns their escrow.
    pub fn expire(&mut self, agents: &mut [AgentState], step: u64) -> Vec<Order> {
        let expired = self.book.expire(step, self.params.order_ttl);
        for o in &expired {
            Self::release(agents, o);
        }
        expired
    }

    /// Cancels the agent's newest bids until its free coin covers `amount`.
    pub fn cancel_bids_to_cover(&mut self, agents: &mut [AgentState], agent: AgentId, amount: Coins) -> Vec<Order> {
        let mut cancelled = Vec::new();
        while agents[agent].coin < amount {
            let newest = Resource::ALL
                .iter()
                .flat_map(|&r| self.book.bids(r))
                .filter(|o| o.agent == agent)
                .max_by_key(|o| o.id)
                .copied();
            let Some(order) = newest else { break };
            self.book.remove(&order);
            Self::release(agents, &order);
            cancelled.push(order);
        }
        cancelled
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TradeEvent {
    Resource(Fill),
    House {
        buyer: AgentId,
        seller: AgentId,
        color: HouseColor,
        pos: Pos,
        seller_income: Coins,
        buyer_income: Coins,
        step: u64,
    },
    Skill {
        buyer: AgentId,
        seller: AgentId,
        seller_income: Coins,
        buyer_income: Coins,
        buyer_multiplier: Multiplier,
        step: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TradeRejection {
    NotNovice,
    NoSupply,
    NoExpert,
    AtExpertLevel,
}

#[derive(Clone, Copy, Debug)]
pub struct TradeTerms {
    pub pay_base: Coins,
    pub skill_delta: Multiplier,
    pub jitter: Jitter,
    pub house_labor: Labor,
    pub skill_labor: Labor,
}

/// Whether `agent` may still buy skill: a novice strictly below the mean
/// expert multiplier, with at least one expert present.
pub fn skill_trade_available(agents: &[AgentState], agent: AgentId) -> Result<(), TradeRejection> {
    let buyer = &agents[agent];
    if !buyer.is_novice() {
        return Err(TradeRejection::NotNovice);
    }
    let experts: Vec<i64> = agents.iter().filter(|a| a.is_expert()).map(|a| a.multiplier.milli()).collect();
    if experts.is_empty() {
        return Err(TradeRejection::NoExpert);
    }
    if buyer.multiplier.milli() * experts.len() as i64 >= experts.iter().sum::<i64>() {
        return Err(TradeRejection::AtExpertLevel);
    }
    Ok(())
}

/// A novice buys the oldest sellable expert house of `color`. Both parties
/// receive minted income scaled by their own multiplier; no coins change hands.
pub fn execute_house_trade(
    grid: &mut WorldGrid,
    agents: &mut [AgentState],
    buyer: AgentId,
    color: HouseColor,
    terms: &TradeTerms,
    step: u64,
    rng: &mut SimRng,
) -> Result<TradeEvent, TradeRejection> {
    if !agents[buyer].is_novice() {
        return Err(TradeRejection::NotNovice);
    }
    let house = grid.sellable_house(color).ok_or(TradeRejection::NoSupply)?.clone();
    let seller = house.owner;
    let seller_income = mint_income(terms.pay_base, agents[seller].multiplier, 1.0, terms.jitter.draw(rng));
    let buyer_income = mint_income(terms.pay_base, agents[buyer].multiplier, 1.0, terms.jitter.draw(rng));
    grid.transfer_house(house.pos, buyer);
    agents[seller].coin += seller_income;
    agents[buyer].coin += buyer_income;
    agents[buyer].labor += terms.house_labor;
    Ok(TradeEvent::House {
        buyer,
        seller,
        color,
        pos: house.pos,
        seller_income,
        buyer_income,
        step,
    })
}

/// A novice buys one unit of building skill from the highest-multiplier
/// expert. Incomes are half the house-scale draws; only the buyer's
/// multiplier changes.
pub fn execute_skill_trade(
    agents: &mut [AgentState],
    buyer: AgentId,
    terms: &TradeTerms,
    step: u64,
    rng: &mut SimRng,
) -> Result<TradeEvent, TradeRejection> {
    skill_trade_available(agents, buyer)?;
    let seller = agents
        .iter()
        .filter(|a| a.is_expert())
        .min_by_key(|a| (Reverse(a.multiplier), a.id))
        .map(|a| a.id)
        .ok_or(TradeRejection::NoExpert)?;
    let seller_income = mint_income(terms.pay_base, agents[seller].multiplier, 0.5, terms.jitter.draw(rng));
    let buyer_income = mint_income(terms.pay_base, agents[buyer].multiplier, 0.5, terms.jitter.draw(rng));
    agents[seller].coin += seller_income;
    let b = &mut agents[buyer];
    b.coin += buyer_income;
    b.multiplier += terms.skill_delta;
    b.skill_units += 1;
    b.labor += terms.skill_labor;
    Ok(TradeEvent::Skill {
        buyer,
        seller,
        seller_income,
        buyer_income,
        buyer_multiplier: b.multiplier,
        step,
    })
}
