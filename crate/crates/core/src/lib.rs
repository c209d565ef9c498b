pub mod cli;
pub mod data;
pub mod env;
pub mod eval;
pub mod io;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod trainer;
