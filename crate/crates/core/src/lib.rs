pub mod affect;
pub mod env;
pub mod explore;
pub mod harness;
pub mod persona;
pub mod tier;
pub mod trace;

pub use tier::Tier;
