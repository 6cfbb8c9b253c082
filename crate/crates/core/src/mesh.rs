//! Time meshes graded toward collision endpoints.

/// Where a mesh concentrates its nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Grading {
    Uniform,
    /// Algebraic clustering `(j/M)^q` toward the first node.
    Start(f64),
    /// Mirror image of `Start`.
    End(f64),
    /// Clustering toward both ends, symmetric about the middle.
    Both(f64),
}

impl Grading {
    pub fn for_endpoints(start_collision: bool, end_collision: bool, q: f64) -> Self {
        match (start_collision, end_collision) {
            (false, false) => Grading::Uniform,
            (true, false) => Grading::Start(q),
            (false, true) => Grading::End(q),
            (true, true) => Grading::Both(q),
        }
    }
}

/// Grading exponent used by action minimization near a collision.
/// The path behaves like `t^(1/(1+k))` there, and this exponent keeps the
/// midpoint rule second order in the number of cells.
pub fn action_grading(kappa: f64) -> f64 {
    3.0 * (1.0 + kappa) / (1.0 - kappa)
}

/// Grading exponent for the three-point Gauss rule on the ejection integrand.
pub fn quadrature_grading(kappa: f64) -> f64 {
    7.0 * (1.0 + kappa) / (1.0 - kappa)
}

fn profile(xi: f64, g: Grading) -> f64 {
    match g {
        Grading::Uniform => xi,
        Grading::Start(q) => xi.powf(q),
        Grading::End(q) => 1.0 - (1.0 - xi).powf(q),
        Grading::Both(q) => {
            if xi <= 0.5 {
                0.5 * (2.0 * xi).powf(q)
            } else {
                1.0 - 0.5 * (2.0 * (1.0 - xi)).powf(q)
            }
        }
    }
}

/// `cells + 1` strictly increasing times from `t0` to `t1`.
pub fn graded_times(t0: f64, t1: f64, cells: usize, g: Grading) -> Vec<f64> {
    assert!(cells >= 1 && t1 > t0);
    let span = t1 - t0;
    let mut t: Vec<f64> = (0..=cells)
        .map(|j| t0 + span * profile(j as f64 / cells as f64, g))
        .collect();
    t[0] = t0;
    t[cells] = t1;
    t
}

/// Cell lengths of a graded mesh of total length `span`. Each length is
/// computed from the end it clusters toward, so cells far below the
/// resolution of absolute times near `span` stay exact.
pub fn graded_steps(span: f64, cells: usize, g: Grading) -> Vec<f64> {
    assert!(cells >= 1 && span > 0.0);
    let xi = |j: usize| j as f64 / cells as f64;
    // distance of node j from the start and from the end, in units of span
    let from_start = |j: usize| -> f64 {
        match g {
            Grading::Uniform => xi(j),
            Grading::Start(q) => xi(j).powf(q),
            Grading::End(q) => 1.0 - (1.0 - xi(j)).powf(q),
            Grading::Both(q) => {
                if 2 * j <= cells {
                    0.5 * (2.0 * xi(j)).powf(q)
                } else {
                    1.0 - 0.5 * (2.0 * (1.0 - xi(j))).powf(q)
                }
            }
        }
    };
    let from_end = |j: usize| -> f64 {
        match g {
            Grading::Uniform => 1.0 - xi(j),
            Grading::Start(q) => 1.0 - xi(j).powf(q),
            Grading::End(q) => (1.0 - xi(j)).powf(q),
            Grading::Both(q) => {
                if 2 * j >= cells {
                    0.5 * (2.0 * (1.0 - xi(j))).powf(q)
                } else {
                    1.0 - 0.5 * (2.0 * xi(j)).powf(q)
                }
            }
        }
    };
    (0..cells)
        .map(|j| {
            let near_start = match g {
                Grading::Uniform | Grading::Start(_) => true,
                Grading::End(_) => false,
                Grading::Both(_) => 2 * (j + 1) <= cells,
            };
            let d = if near_start {
                from_start(j + 1) - from_start(j)
            } else {
                from_end(j) - from_end(j + 1)
            };
            span * d
        })
        .collect()
}

/// Splits every cell in two equal halves.
pub fn refine_steps(dt: &[f64]) -> Vec<f64> {
    dt.iter().flat_map(|h| [0.5 * h, 0.5 * h]).collect()
}

/// Three-point Gauss-Legendre nodes and weights on [-1, 1].
pub const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];
