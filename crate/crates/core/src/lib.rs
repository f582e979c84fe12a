//! Multi-round hero drafting engine.
//!
//! A best-of-N series draft is a two-player zero-sum game: each round both
//! camps pick heroes in a fixed order, and a player may never reuse a hero it
//! drafted in an earlier round. This crate provides the rules ([`game`]), a
//! synthetic ground truth and exact solver ([`oracle`], [`solver`]), a small
//! dense-network engine ([`nn`]), the win-rate and policy/value models, PUCT
//! search with round-boundary value propagation ([`search`]), baseline
//! strategies, self-play training and the arena.

pub mod api;
pub mod arena;
pub mod game;
pub mod nn;
pub mod oracle;
pub mod policy_value;
pub mod search;
pub mod selfplay;
pub mod solver;
pub mod stats;
pub mod strategy;
pub mod uct;
pub mod winrate;

pub use game::{Camp, DraftState, GameConfig, GameError, HeroId, HeroSet, Player, WinRate};
