//! Analytic K fields, their critical points, critical points at infinity and
//! the assumption checks.

pub mod assumptions;
pub mod cpi;
pub mod critical;
pub mod field;

pub use assumptions::{check_assumptions, AssumptionReport, CheckOptions, Status, Witness};
pub use cpi::{
    cpi_table, enumerate_cpi_pairs, enumerate_cpi_single, pair_level, single_level, CpiRecord,
    CpiTable, Membership,
};
pub use critical::{find_critical_points, CriticalPoint, CriticalSearch};
pub use field::{catalogued_k, KField, Term, CATALOGUE};
