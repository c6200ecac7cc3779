//! Triangle-based reserving: runoff triangles, chain ladder with Mack
//! standard errors, multiplicative (ODP) fits, DCL and CRM style models and
//! the likelihood ratio test between aggregate and individual models.

mod chain_ladder;
mod dcl;
mod lrt;
mod multiplicative;
mod triangle;

pub use chain_ladder::{chain_ladder, mack_se, ChainLadder, MackResult};
pub use dcl::{crm_from_triangles, crm_rbns, dcl_from_triangles, dcl_rbns, CrmParams, DclParams};
pub use lrt::{bridge_test, lrt_bridge, BridgeTest, LayerTest, LrtResult};
pub use multiplicative::{fit_multiplicative, fit_multiplicative_with, MultiplicativeFit, ZeroMargins};
pub use triangle::{build_triangle, Triangle};
