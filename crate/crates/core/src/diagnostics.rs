use alloc::vec::Vec;

/// One time-stamped record; columns a method does not produce are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiagnosticRow {
    pub t: f64,
    pub j: f64,
    pub lm_norm: f64,
    pub kl: Option<f64>,
    pub w2_ref: Option<f64>,
    pub dissipation: Option<f64>,
    pub mass: f64,
    pub min_value: f64,
    pub theta: Option<f64>,
}

pub type DiagnosticsSeries = Vec<DiagnosticRow>;

/// True if the J column never rises by more than `slack` between consecutive rows.
pub fn j_non_increasing(rows: &[DiagnosticRow], slack: f64) -> bool {
    rows.windows(2).all(|w| w[1].j <= w[0].j + slack)
}
