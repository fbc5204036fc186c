//! Spreadsheets as equational theories and models: schemas, instances,
//! chase-based saturation, colimit merges, data exchange, and
//! verification-condition generation.

pub mod driver;
pub mod eqlogic;
pub mod instance;
pub mod integrate;
pub mod literal;
pub mod schema;
pub mod sheetio;
pub mod syntax;
pub mod typeside;
pub mod vcemit;
