//! Shared fixtures for the kernel benchmarks in `benches/`.

use nls_msol::soliton::soliton_sum;
use nls_msol::{ComplexField, Exponent, Grid, SolitonFamily, SolitonParams};

pub fn two_soliton_state(points: usize) -> ComplexField {
    let grid = Grid::new(24.0 * std::f64::consts::PI, points).expect("valid grid");
    let family = SolitonFamily::new(
        Exponent::new(7.0).expect("p > 5"),
        vec![
            SolitonParams::new(1.0, -1.0, 0.0, -4.5).expect("valid soliton"),
            SolitonParams::new(2.0, 1.0, 0.0, 4.5).expect("valid soliton"),
        ],
    )
    .expect("valid family");
    soliton_sum(1.0, &family, &grid).expect("soliton sum")
}
