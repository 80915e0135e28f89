//! Lower-left convex hull of a front and the resulting convexity report.

use std::fmt;

/// Deviation (relative to the objective range) up to which a front counts as convex.
pub const CONVEXITY_TOL: f64 = 0.02;

// Relative slack for calling a point "on" the hull; absorbs rounding for
// points that are collinear with a hull edge.
const ON_HULL_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HullScale {
    Linear,
    LogLog,
}

impl fmt::Display for HullScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HullScale::Linear => "linear",
            HullScale::LogLog => "log-log",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexityReport {
    /// Fewer than three usable points.
    Insufficient { scale: HullScale, usable: usize, dropped: usize },
    Computed {
        scale: HullScale,
        /// Per input point; points dropped by the log transform are `false`.
        on_hull: Vec<bool>,
        /// Largest vertical gap between an off-hull point and the hull,
        /// divided by the range of the second objective.
        max_deviation: f64,
        /// Points with a non-positive coordinate (log-log only).
        dropped: usize,
    },
}

impl ConvexityReport {
    pub fn scale(&self) -> HullScale {
        match self {
            ConvexityReport::Insufficient { scale, .. } | ConvexityReport::Computed { scale, .. } => *scale,
        }
    }

    pub fn on_hull(&self) -> Option<&[bool]> {
        match self {
            ConvexityReport::Computed { on_hull, .. } => Some(on_hull),
            ConvexityReport::Insufficient { .. } => None,
        }
    }

    pub fn max_deviation(&self) -> Option<f64> {
        match self {
            ConvexityReport::Computed { max_deviation, .. } => Some(*max_deviation),
            ConvexityReport::Insufficient { .. } => None,
        }
    }

    /// `Some(deviation <= tol)`, or `None` when there were too few points.
    pub fn is_convex(&self, tol: f64) -> Option<bool> {
        self.max_deviation().map(|d| d <= tol)
    }
}

impl fmt::Display for ConvexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvexityReport::Insufficient { scale, usable, dropped } => {
                write!(f, "{scale}: insufficient points ({usable} usable")?;
                if *dropped > 0 {
                    write!(f, ", {dropped} non-positive dropped")?;
                }
                write!(f, ")")
            }
            ConvexityReport::Computed {
                scale,
                on_hull,
                max_deviation,
                dropped,
            } => {
                let on = on_hull.iter().filter(|&&b| b).count();
                write!(
                    f,
                    "{scale}: {on}/{} points on hull, max off-hull deviation {:.4}% of range",
                    on_hull.len() - dropped,
                    100.0 * max_deviation
                )?;
                if *dropped > 0 {
                    write!(f, ", {dropped} non-positive dropped")?;
                }
                Ok(())
            }
        }
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Vertices of the lower hull from the leftmost point to the lowest point.
fn lower_left_chain(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut chain: Vec<[f64; 2]> = Vec::new();
    for p in sorted {
        while chain.len() >= 2 && cross(chain[chain.len() - 2], chain[chain.len() - 1], p) <= 0.0 {
            chain.pop();
        }
        chain.push(p);
    }
    // Cut at the lowest vertex (leftmost among equals).
    let lowest = chain
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a[1].total_cmp(&b[1]))
        .map(|(i, _)| i)
        .unwrap_or(0);
    chain.truncate(lowest + 1);
    chain
}

fn hull_height(chain: &[[f64; 2]], x: f64) -> f64 {
    if x <= chain[0][0] {
        return chain[0][1];
    }
    let last = chain[chain.len() - 1];
    if x >= last[0] {
        return last[1];
    }
    let k = chain.partition_point(|p| p[0] <= x);
    let (a, b) = (chain[k - 1], chain[k]);
    a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])
}

fn report_on(points: &[Option<[f64; 2]>], scale: HullScale) -> ConvexityReport {
    let usable: Vec<[f64; 2]> = points.iter().flatten().copied().collect();
    let dropped = points.len() - usable.len();
    if usable.len() < 3 {
        return ConvexityReport::Insufficient {
            scale,
            usable: usable.len(),
            dropped,
        };
    }
    let chain = lower_left_chain(&usable);
    let (lo, hi) = usable
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let mut max_deviation: f64 = 0.0;
    let on_hull = points
        .iter()
        .map(|p| match p {
            None => false,
            Some(p) => {
                let gap = (p[1] - hull_height(&chain, p[0])) / range;
                // Points left of the chain share its first x and sit above it.
                if gap <= ON_HULL_RTOL && p[0] >= chain[0][0] {
                    true
                } else {
                    max_deviation = max_deviation.max(gap);
                    false
                }
            }
        })
        .collect();
    ConvexityReport::Computed {
        scale,
        on_hull,
        max_deviation,
        dropped,
    }
}

/// Hull membership and deviation in linear objective space.
pub fn convexity_report(points: &[[f64; 2]]) -> ConvexityReport {
    let pts: Vec<Option<[f64; 2]>> = points.iter().map(|&p| Some(p)).collect();
    report_on(&pts, HullScale::Linear)
}

/// The same report after taking log10 of both objectives. Points with a
/// non-positive coordinate are dropped and counted.
pub fn convexity_report_loglog(points: &[[f64; 2]]) -> ConvexityReport {
    let pts: Vec<Option<[f64; 2]>> = points
        .iter()
        .map(|p| (p[0] > 0.0 && p[1] > 0.0).then(|| [p[0].log10(), p[1].log10()]))
        .collect();
    report_on(&pts, HullScale::LogLog)
}
