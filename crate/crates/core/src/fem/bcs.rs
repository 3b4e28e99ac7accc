use super::FunctionSpace;
use crate::linalg::SaddleSystem;
use crate::mesh::BoundaryMarker;

/// Velocity dofs pinned to zero: both components on the bed, the horizontal
/// component on the (vertical) lateral walls.
pub fn constrained_velocity_dofs(space: &FunctionSpace) -> Vec<usize> {
    let mut dofs: Vec<usize> = space
        .boundary_dofs(BoundaryMarker::Bottom)
        .iter()
        .copied()
        .chain(space.boundary_dofs(BoundaryMarker::Lateral).iter().copied().filter(|d| d % 2 == 0))
        .collect();
    dofs.sort_unstable();
    dofs.dedup();
    dofs
}

/// Imposes `u = 0` on the bed and `u_x = 0` on the walls by symmetric elimination.
/// The surface carries the natural traction-free condition.
pub fn apply_velocity_bcs(sys: &mut SaddleSystem, space: &FunctionSpace) {
    sys.constrain(constrained_velocity_dofs(space));
}
