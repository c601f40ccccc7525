pub mod linalg;
pub mod structured;
pub mod io;
pub mod gamma_domain;
pub mod charfn;
pub mod gamma_fo;
pub mod model;
pub mod tetrablock;
