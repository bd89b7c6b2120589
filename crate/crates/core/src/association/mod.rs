//! Frame-to-frame data association: locality clustering, assignment and the
//! track lifecycle.

mod dbscan;
mod engine;
mod hungarian;

pub use dbscan::dbscan;
pub use engine::{
    associate, build_cost, detection_position, run_tracker, AssignmentProblem, Association, TrackerState,
};
pub use hungarian::{assignment_cost, hungarian};
