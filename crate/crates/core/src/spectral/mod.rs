//! Discretised trace-space operators, the boundary eigenproblem, invariant densities
//! and the resolvent.

mod additional;
mod assemble;
mod density;
mod eigen;
mod export;
mod grid;
mod operator;
mod phase;
mod resolvent;
mod roundtrip;

pub use additional::{additional_condition, floor_grid_spec, inverse_speed_integral, AdditionalCondition};
pub use assemble::{damping, BoundaryMatrix, Line, Lines, TransferOperator, DENSE_LIMIT, LOST_MASS_TOL};
pub use density::{
    boundary_residual, build_invariant_density, cesaro_defect, footpoint, incoming_density, integration_identity,
    lift_mass, outgoing_integral, outgoing_trace, transported_fraction, CesaroSeries, IdentityCheck, InvariantDensity,
    LiftMass,
};
pub use export::{read_phase_masses, write_phase_csv, write_trace_csv};
pub use eigen::{leading_eigenpair, subdominant_modulus, EigenMethod, EigenResult, PowerOptions};
pub use grid::{DirCell, GridSpec, Patch, Piece, SitePart, SiteSample, SubPoint, TraceGrid};
pub use operator::{write_coo, Composed, SparseMatrix, TraceOperator};
pub use phase::{disk_rect_area, PhaseGrid, PhaseSpec, SpaceBox};
pub use resolvent::{Resolvent, ResolventOptions, ResolventResult};
pub use roundtrip::{circular_w1, round_trip_distance, RoundTrip};
