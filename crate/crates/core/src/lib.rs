//! Exact computations with Host–Kra cube groups of finite filtered abelian
//! groups: cube membership and counting, sampling measures of functions on
//! F2^n against systems of linear forms, marginals of limit objects,
//! exchangeability tests, non-classical polynomials over F2, consistency
//! subgroups, and morphism/fibration checks between group nilspaces.

pub mod consistency;
pub mod cubes;
pub mod error;
pub mod exch;
pub mod f2;
pub mod fib;
pub mod group2;
pub mod measures;
pub mod poly;

pub use error::{Error, Result};
pub use group2::{FilteredGroup, GroupElement};

/// Default enumeration budget (loop iterations) for exact computations.
pub const DEFAULT_BUDGET: u64 = 1 << 24;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub(crate) fn check_budget(needed: u128, budget: u64) -> Result<()> {
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded {
            needed: needed.to_string(),
            budget,
        });
    }
    Ok(())
}
