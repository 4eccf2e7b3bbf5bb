//! Grid-aware scheduling and flexibility estimation for distribution grids
//! built from a full MV model and sensitivity-coefficient LV models.

pub mod conic;
pub mod coordination;
pub mod flex;
mod formulation;
pub mod grid;
pub mod lv;
pub mod opf;
pub mod scenario;
pub mod synthetic;
