//! A laboratory for the G-equation `u_t = A|∇u| - V·∇u` in incompressible
//! space-time velocity fields: reachable sets, coercivity statistics,
//! waiting times and numerical checks of volume, flux and perimeter bounds.

pub mod field;
pub mod experiments;
pub mod frontier;
pub mod quadrature;
pub mod stats;
pub mod theory;
