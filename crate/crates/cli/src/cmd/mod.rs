pub mod analyze;
pub mod optimize;
pub mod schedule;
pub mod simulate;
pub mod verify;

pub(crate) fn f6(x: f64) -> String {
    format!("{x:.6}")
}
