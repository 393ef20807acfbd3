//! Max-min aggregation of clipped consequents and exact centroid
//! defuzzification.
//!
//! The aggregated membership `μ(y) = max_k min(h_k, μ_k(y))` is piecewise
//! linear. Its vertices are found explicitly, so the centroid integrals are
//! evaluated in closed form rather than by sampling.

use super::{FuzzyError, MembershipFunction, Universe};

/// Aggregated output membership: every output term clipped at its height.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedOutput {
    universe: Universe,
    clipped: Vec<(MembershipFunction, f64)>,
}

impl AggregatedOutput {
    /// `clipped` pairs each output term with its clip height in `[0, 1]`.
    pub fn new(universe: Universe, clipped: Vec<(MembershipFunction, f64)>) -> Self {
        let clipped = clipped
            .into_iter()
            .map(|(mf, h)| (mf, h.clamp(0.0, 1.0)))
            .collect();
        Self { universe, clipped }
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    /// Clip height per output term, in term order.
    pub fn heights(&self) -> Vec<f64> {
        self.clipped.iter().map(|(_, h)| *h).collect()
    }

    /// Aggregated degree at `y`; zero outside the universe.
    pub fn degree(&self, y: f64) -> f64 {
        if y < self.universe.lo() || y > self.universe.hi() {
            return 0.0;
        }
        self.clipped
            .iter()
            .map(|(mf, h)| mf.degree(y).min(*h))
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.clipped.iter().all(|(_, h)| *h == 0.0)
    }

    /// Vertices `(y, μ)` of the aggregated shape, sorted by `y`, as a list of
    /// linear segments `[(y0, μ0), (y1, μ1)]`. Vertical edges are implicit
    /// between segments.
    pub fn segments(&self) -> Vec<[(f64, f64); 2]> {
        let (lo, hi) = (self.universe.lo(), self.universe.hi());
        let active: Vec<&(MembershipFunction, f64)> =
            self.clipped.iter().filter(|(_, h)| *h > 0.0).collect();

        let mut knots = vec![lo, hi];
        for (mf, _) in &active {
            knots.extend(mf.knots().into_iter().filter(|k| *k > lo && *k < hi));
        }
        knots.sort_by(f64::total_cmp);
        knots.dedup();

        let mut segments = Vec::new();
        for w in knots.windows(2) {
            let (u, v) = (w[0], w[1]);
            // Every term is affine on the open interval (u, v). Recover each
            // line from two interior samples so jumps at the ends don't leak in.
            let (p, q) = (u + (v - u) / 3.0, u + 2.0 * (v - u) / 3.0);
            let lines: Vec<Line> = active
                .iter()
                .flat_map(|(mf, h)| {
                    let slope = (mf.degree(q) - mf.degree(p)) / (q - p);
                    let term = Line {
                        slope,
                        intercept: mf.degree(p) - slope * p,
                    };
                    [term, Line::constant(*h)]
                })
                .collect();

            let mut cuts = vec![u, v];
            for (i, a) in lines.iter().enumerate() {
                for b in &lines[i + 1..] {
                    if let Some(y) = a.intersect(b) {
                        if y > u && y < v {
                            cuts.push(y);
                        }
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();

            let eval = |y: f64| {
                lines
                    .chunks(2)
                    .map(|pair| pair[0].at(y).min(pair[1].at(y)))
                    .fold(0.0, f64::max)
                    .clamp(0.0, 1.0)
            };
            for c in cuts.windows(2) {
                segments.push([(c[0], eval(c[0])), (c[1], eval(c[1]))]);
            }
        }
        segments
    }
}

#[derive(Debug, Clone, Copy)]
struct Line {
    slope: f64,
    intercept: f64,
}

impl Line {
    fn constant(c: f64) -> Self {
        Self {
            slope: 0.0,
            intercept: c,
        }
    }

    fn at(&self, y: f64) -> f64 {
        self.slope * y + self.intercept
    }

    fn intersect(&self, other: &Line) -> Option<f64> {
        let ds = self.slope - other.slope;
        if ds.abs() < 1e-15 {
            None
        } else {
            Some((other.intercept - self.intercept) / ds)
        }
    }
}

/// Centre of gravity `∫ y μ(y) dy / ∫ μ(y) dy` of the aggregated output.
pub fn defuzzify_centroid(out: &AggregatedOutput) -> Result<f64, FuzzyError> {
    let mut area = 0.0;
    let mut moment = 0.0;
    for [(y0, m0), (y1, m1)] in out.segments() {
        let h = y1 - y0;
        area += 0.5 * h * (m0 + m1);
        moment += h * (m0 * (2.0 * y0 + y1) + m1 * (y0 + 2.0 * y1)) / 6.0;
    }
    if area <= 0.0 {
        return Err(FuzzyError::ZeroActivation);
    }
    Ok(out.universe().clamp(moment / area))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(k: f64) -> MembershipFunction {
        MembershipFunction::triangular(k - 1.0, k, k + 1.0).unwrap()
    }

    fn difficulty() -> Universe {
        Universe::new(0.0, 5.0).unwrap()
    }

    /// Plain sampled centroid, independent of the segment construction.
    fn sampled_centroid(out: &AggregatedOutput, n: usize) -> f64 {
        let (num, den) = difficulty()
            .linspace(n)
            .into_iter()
            .map(|y| (y * out.degree(y), out.degree(y)))
            .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
        num / den
    }

    #[test]
    fn symmetric_triangle_centroid_is_its_apex() {
        let out = AggregatedOutput::new(difficulty(), vec![(level(3.0), 1.0)]);
        assert!((defuzzify_centroid(&out).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ramp_clipped_by_universe_edge() {
        // μ(y) = y - 4 on [4, 5]: ∫y(y-4) / ∫(y-4) = (7/3) / (1/2) = 14/3.
        let out = AggregatedOutput::new(difficulty(), vec![(level(5.0), 1.0)]);
        let c = defuzzify_centroid(&out).unwrap();
        assert!((c - 14.0 / 3.0).abs() < 1e-12, "{c}");
        assert!((sampled_centroid(&out, 10_001) - 14.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn all_zero_is_an_error() {
        let out = AggregatedOutput::new(difficulty(), vec![(level(1.0), 0.0), (level(2.0), 0.0)]);
        assert!(out.is_zero());
        assert!(matches!(
            defuzzify_centroid(&out),
            Err(FuzzyError::ZeroActivation)
        ));
    }

    #[test]
    fn clipped_overlap_matches_sampling() {
        let out = AggregatedOutput::new(
            difficulty(),
            vec![
                (level(2.0), 1.0 / 3.0),
                (level(3.0), 0.5),
                (level(4.0), 0.9),
            ],
        );
        let exact = defuzzify_centroid(&out).unwrap();
        let sampled = sampled_centroid(&out, 100_001);
        assert!((exact - sampled).abs() < 1e-4, "{exact} vs {sampled}");
    }

    #[test]
    fn segments_are_continuous_for_continuous_terms() {
        let out = AggregatedOutput::new(
            difficulty(),
            vec![(level(0.0), 0.4), (level(1.0), 0.7), (level(5.0), 0.2)],
        );
        let segs = out.segments();
        for w in segs.windows(2) {
            assert_eq!(w[0][1].0, w[1][0].0);
            assert!((w[0][1].1 - w[1][0].1).abs() < 1e-12);
        }
        for [(y0, m0), (y1, m1)] in segs {
            assert!((out.degree(y0) - m0).abs() < 1e-12);
            assert!((out.degree(y1) - m1).abs() < 1e-12);
            let mid = 0.5 * (y0 + y1);
            assert!((out.degree(mid) - 0.5 * (m0 + m1)).abs() < 1e-12);
        }
    }
}
