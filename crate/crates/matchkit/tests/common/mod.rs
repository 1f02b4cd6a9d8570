//! Fixtures shared by the integration tests: the small benchmark markets,
//! the binary-type logit example, and the published survey tables.
#![allow(dead_code)]

use matchkit::market::{
    Atom, BivariateTable, Cell, ComplementarityPattern, DiscreteMeasure, MarketInstance,
    MatchingMeasure, OutputSpec,
};

pub fn atom(attrs: &[f64], mass: f64) -> Atom {
    Atom { attrs: attrs.to_vec(), mass }
}

pub fn measure(points: &[Vec<f64>], masses: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::new(
        points[0].len(),
        points
            .iter()
            .zip(masses)
            .map(|(p, m)| Atom { attrs: p.clone(), mass: *m })
            .collect(),
    )
}

pub fn pattern(p: &[(usize, usize)], n: &[(usize, usize)]) -> ComplementarityPattern {
    ComplementarityPattern { p: p.to_vec(), n: n.to_vec() }
}

pub fn unit_matching(
    firm_dim: usize,
    worker_dim: usize,
    pairs: &[(&[f64], &[f64])],
) -> MatchingMeasure {
    let cells = pairs
        .iter()
        .map(|(x, y)| Cell { x: x.to_vec(), y: y.to_vec(), mass: 1.0 })
        .collect();
    let mut mm = MatchingMeasure { firm_dim, worker_dim, cells };
    mm.canonicalize();
    mm
}

/// The 10-unit two-attribute market whose optimal counts table is known.
pub fn intro_market() -> MarketInstance {
    MarketInstance {
        firms: DiscreteMeasure::new(
            2,
            vec![
                atom(&[10.0, 10.0], 4.0),
                atom(&[10.0, 20.0], 1.0),
                atom(&[20.0, 10.0], 1.0),
                atom(&[20.0, 20.0], 4.0),
            ],
        ),
        workers: DiscreteMeasure::new(
            2,
            vec![
                atom(&[10.0, 10.0], 1.0),
                atom(&[10.0, 20.0], 4.0),
                atom(&[20.0, 10.0], 4.0),
                atom(&[20.0, 20.0], 1.0),
            ],
        ),
    }
}

pub fn intro_q() -> OutputSpec {
    OutputSpec::quadratic(vec![vec![1.0, 0.0], vec![0.0, 2.0]])
}

pub const INTRO_TYPES: [[f64; 2]; 4] =
    [[10.0, 10.0], [10.0, 20.0], [20.0, 10.0], [20.0, 20.0]];

pub const INTRO_EXPECTED: [[f64; 4]; 4] = [
    [1.0, 0.0, 3.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 3.0, 0.0, 1.0],
];

fn two_type_market(fx: [[f64; 2]; 2], wy: [[f64; 2]; 2]) -> MarketInstance {
    MarketInstance {
        firms: DiscreteMeasure::new(2, vec![atom(&fx[0], 1.0), atom(&fx[1], 1.0)]),
        workers: DiscreteMeasure::new(2, vec![atom(&wy[0], 1.0), atom(&wy[1], 1.0)]),
    }
}

/// Two mirrored types on each side; same-type matching yields 1000, the
/// cross coupling 800, under the separable product output.
pub fn example_2_market() -> MarketInstance {
    two_type_market([[10.0, 20.0], [20.0, 10.0]], [[10.0, 20.0], [20.0, 10.0]])
}

/// Comonotone firms against crossed workers: the two perfect pairings are
/// incomparable in the (1,1),(2,2)-supermodular order.
pub fn example_3_market() -> MarketInstance {
    two_type_market([[10.0, 10.0], [20.0, 20.0]], [[10.0, 20.0], [20.0, 10.0]])
}

pub fn example_3_pairings() -> (MatchingMeasure, MatchingMeasure) {
    let m = unit_matching(
        2,
        2,
        &[(&[10.0, 10.0], &[10.0, 20.0]), (&[20.0, 20.0], &[20.0, 10.0])],
    );
    let mp = unit_matching(
        2,
        2,
        &[(&[10.0, 10.0], &[20.0, 10.0]), (&[20.0, 20.0], &[10.0, 20.0])],
    );
    (m, mp)
}

/// The four corner types used by the three matching schemes.
pub fn scheme_types() -> [Vec<f64>; 4] {
    [
        vec![10.0, 10.0],
        vec![10.0, 20.0],
        vec![20.0, 10.0],
        vec![20.0, 20.0],
    ]
}

/// The cyclic scheme: weakly sorted yet strictly improvable.
pub fn scheme_three() -> MatchingMeasure {
    let f = scheme_types();
    unit_matching(
        2,
        2,
        &[(&f[0], &f[1]), (&f[1], &f[3]), (&f[2], &f[0]), (&f[3], &f[2])],
    )
}

pub fn binary_types() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
}

/// Binary-type logit market: diagonal interaction (5, 1), mirrored
/// marginals, scale parameter 1.
pub fn binary_logit_inputs() -> (OutputSpec, DiscreteMeasure, DiscreteMeasure) {
    let q = OutputSpec::quadratic(vec![vec![5.0, 0.0], vec![0.0, 1.0]]);
    let pf = measure(&binary_types(), &[0.1, 0.4, 0.4, 0.1]);
    let pg = measure(&binary_types(), &[0.4, 0.1, 0.1, 0.4]);
    (q, pf, pg)
}

pub const BINARY_LOGIT_DENSITY: [[f64; 4]; 4] = [
    [0.0848, 0.0097, 0.0013, 0.0042],
    [0.2739, 0.0848, 0.0042, 0.0371],
    [0.0371, 0.0042, 0.0848, 0.2739],
    [0.0042, 0.0013, 0.0097, 0.0848],
];

pub const BINARY_LOGIT_AGGREGATE: [[f64; 2]; 2] = [[0.208, 0.292], [0.292, 0.208]];

/// Published estimates of the four attraction parameters, in
/// (health, education) x (health, education) order.
pub const PUBLISHED_THETA: [[f64; 2]; 2] = [[0.7625, -0.0375], [-0.0226, 0.5572]];

// Published survey shares. Rows are the first-named variable's levels
// 1..5, columns the second's. Health and education are both coded 1..5.

pub const WOMEN_HEALTH_EDUCATION_2010: [[f64; 5]; 5] = [
    [0.0082, 0.0136, 0.008, 0.0026, 0.0015],
    [0.0178, 0.0374, 0.0237, 0.0094, 0.0042],
    [0.0336, 0.1035, 0.0772, 0.0423, 0.0216],
    [0.0227, 0.0968, 0.0964, 0.0754, 0.0411],
    [0.0115, 0.0541, 0.0747, 0.0788, 0.0442],
];

pub const MEN_HEALTH_EDUCATION_2010: [[f64; 5]; 5] = [
    [0.0127, 0.0146, 0.0084, 0.0046, 0.0021],
    [0.0191, 0.0376, 0.0223, 0.0113, 0.0064],
    [0.04, 0.0967, 0.069, 0.0441, 0.0256],
    [0.026, 0.0981, 0.0862, 0.0734, 0.0431],
    [0.0158, 0.061, 0.0637, 0.0693, 0.049],
];

pub const WOMEN_HEALTH_HUSBAND_EDUCATION_2010: [[f64; 5]; 5] = [
    [0.0095, 0.0125, 0.0071, 0.0031, 0.0017],
    [0.0196, 0.0346, 0.0211, 0.0106, 0.0064],
    [0.0415, 0.0993, 0.0692, 0.0435, 0.0246],
    [0.0286, 0.0996, 0.0861, 0.0737, 0.0444],
    [0.0146, 0.062, 0.0661, 0.0717, 0.049],
];

pub const MEN_HEALTH_WIFE_EDUCATION_2010: [[f64; 5]; 5] = [
    [0.0089, 0.0172, 0.0101, 0.004, 0.0021],
    [0.0174, 0.0386, 0.023, 0.0113, 0.0063],
    [0.0325, 0.0983, 0.0783, 0.0438, 0.0226],
    [0.0225, 0.0954, 0.0945, 0.0743, 0.0401],
    [0.0124, 0.0558, 0.074, 0.075, 0.0415],
];

pub const SPOUSE_HEALTH_2010: [[f64; 5]; 5] = [
    [0.0135, 0.0074, 0.0069, 0.0038, 0.0024],
    [0.0096, 0.041, 0.0242, 0.0111, 0.0064],
    [0.0116, 0.0287, 0.1863, 0.0338, 0.0177],
    [0.0049, 0.0125, 0.0402, 0.2493, 0.0254],
    [0.0027, 0.0071, 0.0179, 0.0287, 0.2068],
];

pub const SPOUSE_HEALTH_2017: [[f64; 5]; 5] = [
    [0.0106, 0.0067, 0.0072, 0.0045, 0.0027],
    [0.0074, 0.0426, 0.0021, 0.0105, 0.0063],
    [0.0085, 0.0267, 0.188, 0.0359, 0.016],
    [0.0051, 0.0126, 0.0421, 0.2576, 0.0253],
    [0.0022, 0.0073, 0.0215, 0.027, 0.2035],
];

/// Wraps a 5x5 share table as a contingency table on levels 1..5.
pub fn joint_table(mass: &[[f64; 5]; 5]) -> BivariateTable {
    BivariateTable {
        row_values: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        col_values: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        mass: mass.iter().map(|row| row.to_vec()).collect(),
    }
}

/// Flattens a health-by-education share table into per-type fractions in
/// the health-major type order, normalized to sum to 1.
pub fn type_fractions(joint: &[[f64; 5]; 5]) -> Vec<f64> {
    let mut f: Vec<f64> = (0..25).map(|r0| joint[r0 / 5][r0 % 5]).collect();
    let total: f64 = f.iter().sum();
    for v in f.iter_mut() {
        *v /= total;
    }
    f
}

/// Log-ratio offsets `ln(g_c / g_1)` of a type fraction vector.
pub fn log_ratio_offsets(fractions: &[f64]) -> Vec<f64> {
    fractions.iter().map(|g| (g / fractions[0]).ln()).collect()
}
